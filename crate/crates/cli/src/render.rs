//! Output documents. JSON is pretty-printed with a trailing newline; CSV
//! reals use 17 significant digits.

use anyhow::Result;
use ice_impact::comparison::ImpactReport;
use ice_impact::impact::lambda_label;
use ice_impact::numfmt::fmt_g17;
use ice_impact::{CurveSet, FeatureImpactResult};
use serde::Serialize;

use crate::commands::Provenance;

#[derive(Serialize)]
pub struct ComputeDoc {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub features: Vec<FeatureImpactResult>,
}

#[derive(Serialize)]
pub struct CompareDoc {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub report: ImpactReport,
}

#[derive(Serialize)]
pub struct PlotDoc {
    pub schema_version: u32,
    pub provenance: Provenance,
    #[serde(flatten)]
    pub curves: CurveSet,
}

pub fn json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().flexible(true).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{}", e.error()))?;
    Ok(String::from_utf8(bytes)?)
}

pub fn compute_csv(results: &[FeatureImpactResult], lambdas: &[f64]) -> Result<String> {
    let mut w = writer();
    let mut header: Vec<String> = ["feature", "sigma", "n_obs", "n_grid", "fi", "fi_directional"]
        .map(String::from)
        .to_vec();
    header.extend(lambdas.iter().map(|l| format!("idfi_{}", lambda_label(*l))));
    header.extend(["he".to_string(), "nl".to_string()]);
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![
            r.name.clone(),
            fmt_g17(r.sigma),
            r.n_obs.to_string(),
            r.n_grid.to_string(),
            fmt_g17(r.fi),
            fmt_g17(r.fi_directional),
        ];
        for l in lambdas {
            row.push(r.idfi(*l).map(fmt_g17).unwrap_or_default());
        }
        row.push(fmt_g17(r.heterogeneity));
        row.push(fmt_g17(r.non_linearity));
        w.write_record(&row)?;
    }
    finish(w)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_g17).unwrap_or_default()
}

/// Sections introduced by `# name` lines, separated by blank lines.
pub fn compare_csv(report: &ImpactReport) -> Result<String> {
    let mut out = String::new();
    let labels: Vec<&str> = report.metrics.iter().map(|m| m.name.as_str()).collect();
    let features: Vec<&str> = report.features.iter().map(|f| f.name.as_str()).collect();

    for (title, normalized) in [("raw", false), ("normalized", true)] {
        let mut w = writer();
        w.write_record(std::iter::once("feature").chain(labels.iter().copied()))?;
        for f in &features {
            let mut row = vec![f.to_string()];
            for m in &report.metrics {
                let v = if normalized {
                    m.normalized.as_ref().and_then(|v| v.get(f))
                } else {
                    m.raw.get(f)
                };
                row.push(opt(v));
            }
            w.write_record(&row)?;
        }
        out.push_str(&format!("# {title}\n"));
        out.push_str(&finish(w)?);
        out.push('\n');
    }

    let mut w = writer();
    w.write_record(std::iter::once("metric").chain(labels.iter().copied()))?;
    for (label, row) in report.correlations.labels.iter().zip(&report.correlations.values) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| opt(*v)));
        w.write_record(&rec)?;
    }
    out.push_str("# correlations\n");
    out.push_str(&finish(w)?);

    for table in &report.differences {
        let mut w = writer();
        w.write_record(["feature", "fi", table.versus.as_str(), "difference"])?;
        for r in &table.rows {
            w.write_record([
                r.feature.clone(),
                fmt_g17(r.fi),
                fmt_g17(r.other),
                fmt_g17(r.difference),
            ])?;
        }
        out.push_str(&format!("\n# differences fi vs {}\n", table.versus));
        out.push_str(&finish(w)?);
    }

    out.push_str("\n# notes\n");
    for n in &report.notes {
        out.push_str(&format!("# {n}\n"));
    }
    Ok(out)
}
