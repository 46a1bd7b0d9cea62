//! Batch protocol against small python children.

use std::time::Duration;

use ice_impact::phantom::build_grid;
use ice_impact::predictors::{external_predictor, ExternalConfig, ExternalPredictor, FnPredictor};
use ice_impact::{Dataset, Error, Predictor};
use ndarray::array;

/// Answers each data row with the mean of its fields.
const ECHO_MEAN: &str = r#"
import sys
for line in sys.stdin:
    if line.startswith("BATCH"):
        continue
    v = [float(t) for t in line.split(",")]
    s = 0.0
    for t in v:
        s += t
    print(repr(s / len(v)), flush=True)
"#;

fn py(script: &str) -> ExternalConfig {
    let mut cfg = ExternalConfig::new(vec!["python3".into(), "-u".into(), "-c".into(), script.into()]);
    cfg.timeout = Duration::from_secs(10);
    cfg
}

fn sh(script: &str) -> ExternalConfig {
    let mut cfg = ExternalConfig::new(vec!["sh".into(), "-c".into(), script.into()]);
    cfg.timeout = Duration::from_secs(10);
    cfg
}

fn answer_each_row_with(body: &str) -> String {
    format!(
        "import sys\nfor line in sys.stdin:\n    if line.startswith('BATCH'):\n        continue\n    {body}\n    sys.stdout.flush()\n"
    )
}

fn mean_row(r: &[f64]) -> f64 {
    r.iter().sum::<f64>() / r.len() as f64
}

#[test]
fn echo_mean_matches_in_process_predictions() {
    let ext = ExternalPredictor::spawn(&py(ECHO_MEAN)).unwrap();
    let rows: Vec<Vec<f64>> = (0..40)
        .map(|i| vec![i as f64 * 0.1, (i % 7) as f64 / 3.0, -1e-7 * i as f64])
        .collect();
    let ds = Dataset::from_rows(["a", "b", "c"], &rows, None).unwrap();
    let handle = external_predictor(&py(ECHO_MEAN)).unwrap();
    let local = FnPredictor::new(mean_row);
    let remote = build_grid(&ds, &handle, 1, ds.row_ids()).unwrap();
    let direct = build_grid(&ds, &local, 1, ds.row_ids()).unwrap();
    assert_eq!(remote, direct);

    let out = ext
        .predict_batch(array![[1.0, 2.0], [0.1, 0.2]].view())
        .unwrap();
    assert_eq!(out, vec![1.5, mean_row(&[0.1, 0.2])]);
    assert_eq!(ext.batches_sent(), 1);
    ext.finish().unwrap();
}

#[test]
fn short_answer_is_a_count_mismatch() {
    let script = r#"
import sys
left = 0
for line in sys.stdin:
    if line.startswith("BATCH"):
        left = int(line.split()[1]) - 1
    elif left > 0:
        print(0, flush=True)
        left -= 1
    else:
        sys.exit(0)
"#;
    let ext = ExternalPredictor::spawn(&py(script)).unwrap();
    let err = ext
        .predict_batch(array![[1.0], [2.0], [3.0]].view())
        .unwrap_err();
    assert!(
        matches!(err, Error::CountMismatch { batch: 0, expected: 3, got: 2 }),
        "{err:?}"
    );
}

#[test]
fn exit_mid_batch_is_child_failure() {
    let ext = ExternalPredictor::spawn(&sh("read header; read row; echo 1; exit 3")).unwrap();
    let err = ext.predict_batch(array![[1.0], [2.0]].view()).unwrap_err();
    match err {
        Error::ChildFailed { batch, status } => {
            assert_eq!(batch, 0);
            assert!(status.contains('3'), "{status}");
        }
        other => panic!("unexpected {other:?}"),
    }
    // the predictor stays poisoned
    assert!(matches!(
        ext.predict_batch(array![[1.0]].view()),
        Err(Error::ChildFailed { batch: 1, .. })
    ));
}

#[test]
fn garbage_line_is_malformed() {
    let ext = ExternalPredictor::spawn(&py(&answer_each_row_with(r#"print("oops")"#)))
    .unwrap();
    let err = ext.predict_batch(array![[1.0]].view()).unwrap_err();
    assert!(
        matches!(&err, Error::MalformedResponse { batch: 0, line } if line == "oops"),
        "{err:?}"
    );
}

#[test]
fn non_finite_answer_is_malformed() {
    let ext = ExternalPredictor::spawn(&py(&answer_each_row_with(r#"print("inf")"#)))
    .unwrap();
    assert!(matches!(
        ext.predict_batch(array![[1.0]].view()),
        Err(Error::MalformedResponse { .. })
    ));
}

#[test]
fn silent_child_times_out() {
    let mut cfg = sh("exec sleep 30");
    cfg.timeout = Duration::from_millis(300);
    let ext = ExternalPredictor::spawn(&cfg).unwrap();
    let start = std::time::Instant::now();
    let err = ext.predict_batch(array![[1.0]].view()).unwrap_err();
    assert!(matches!(err, Error::Timeout { batch: 0, .. }), "{err:?}");
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn extra_lines_are_caught_at_the_next_batch() {
    let ext = ExternalPredictor::spawn(&py(&answer_each_row_with("print(1); print(2)")))
    .unwrap();
    assert_eq!(ext.predict_batch(array![[1.0]].view()).unwrap(), vec![1.0]);
    std::thread::sleep(Duration::from_millis(200));
    let err = ext.predict_batch(array![[1.0]].view()).unwrap_err();
    assert!(
        matches!(err, Error::CountMismatch { batch: 0, expected: 1, got: 2 }),
        "{err:?}"
    );
}

#[test]
fn missing_program_is_a_spawn_error() {
    let err = ExternalPredictor::spawn(&ExternalConfig::new(vec![
        "/nonexistent/definitely-not-here".into(),
    ]))
    .unwrap_err();
    assert!(matches!(err, Error::Spawn { .. }));
}

#[test]
fn nonzero_exit_after_success_fails_finish() {
    let script = answer_each_row_with("print(0)") + "sys.exit(4)\n";
    let ext = ExternalPredictor::spawn(&py(&script)).unwrap();
    ext.predict_batch(array![[1.0]].view()).unwrap();
    assert!(matches!(ext.finish(), Err(Error::ChildFailed { .. })));
}

#[test]
fn handle_enforces_declared_width() {
    let mut cfg = py(ECHO_MEAN);
    cfg.n_features = Some(2);
    let h = external_predictor(&cfg).unwrap();
    assert!(matches!(
        h.predict(array![[1.0, 2.0, 3.0]].view()),
        Err(Error::DimensionMismatch { expected: 2, got: 3 })
    ));
}
