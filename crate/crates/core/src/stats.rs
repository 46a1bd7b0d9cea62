//! Small descriptive statistics shared across modules.

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (denominator `n - 1`). Defined as 0 for fewer
/// than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Sample standard deviation over an iterator without collecting.
pub fn sample_sd_iter<I>(values: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n < 2 {
        return 0.0;
    }
    let m = sum / n as f64;
    let ss: f64 = values.map(|v| (v - m) * (v - m)).sum();
    (ss / (n - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sd_of_small_columns() {
        assert_eq!(sample_sd(&[0.0, 1.0, 2.0]), 1.0);
        assert_eq!(sample_sd(&[5.0, 5.0, 5.0]), 0.0);
        assert_eq!(sample_sd(&[4.0]), 0.0);
        // sqrt(1/3) by direct formula: mean 0.5, squared deviations 4 * 0.25 = 1, / 3
        assert!((sample_sd(&[0.0, 0.0, 1.0, 1.0]) - 0.5773502691896257).abs() < 1e-15);
    }

    #[test]
    fn iter_variant_agrees() {
        let v = [1.5, -2.0, 3.25, 8.0];
        assert_eq!(sample_sd(&v), sample_sd_iter(v.iter().copied()));
    }
}
