//! Bridge to a model living in another process.
//!
//! The child is started once and fed batches over stdin:
//!
//! ```text
//! BATCH <k> <p>
//! <k lines of p comma-separated reals, 17 significant digits>
//! ```
//!
//! and must answer each batch with exactly `k` lines on stdout, one real per
//! line. Closing stdin tells the child there are no more batches. Batches are
//! strictly sequential; concurrent callers queue on an internal lock.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;
use crate::predictors::{HandleKind, Model, OutputKind, PredictorHandle};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct ExternalConfig {
    pub command: Vec<String>,
    pub timeout: Duration,
    /// Column count to enforce before anything is sent, if known.
    pub n_features: Option<usize>,
    pub output_kind: OutputKind,
}

impl ExternalConfig {
    pub fn new(command: Vec<String>) -> Self {
        ExternalConfig {
            command,
            timeout: DEFAULT_TIMEOUT,
            n_features: None,
            output_kind: OutputKind::RegressionScore,
        }
    }
}

struct ChildState {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    next_batch: usize,
    last_batch_len: usize,
    dead: Option<String>,
}

pub struct ExternalPredictor {
    command: Vec<String>,
    timeout: Duration,
    n_features: Option<usize>,
    state: Mutex<ChildState>,
}

impl std::fmt::Debug for ExternalPredictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalPredictor")
            .field("command", &self.command)
            .field("timeout", &self.timeout)
            .finish_non_exhaustive()
    }
}

impl ExternalPredictor {
    pub fn spawn(config: &ExternalConfig) -> Result<Self> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| Error::InvalidArgument("external command is empty".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| Error::Spawn {
                command: config.command.join(" "),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");

        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("external-predictor-reader".into())
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let stop = line.is_err();
                    if tx.send(line).is_err() || stop {
                        break;
                    }
                }
            })
            .map_err(|source| Error::Spawn {
                command: config.command.join(" "),
                source,
            })?;

        Ok(ExternalPredictor {
            command: config.command.clone(),
            timeout: config.timeout,
            n_features: config.n_features,
            state: Mutex::new(ChildState {
                child,
                stdin,
                lines: rx,
                next_batch: 0,
                last_batch_len: 0,
                dead: None,
            }),
        })
    }

    pub fn command(&self) -> &[String] {
        &self.command
    }

    pub(crate) fn expected_features(&self) -> Option<usize> {
        self.n_features
    }

    /// Number of batches sent so far.
    pub fn batches_sent(&self) -> usize {
        self.lock().next_batch
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, ChildState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Sends one batch and waits for its answers.
    pub fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        let mut guard = self.lock();
        let state = &mut *guard;
        let batch = state.next_batch;
        state.next_batch += 1;

        if let Some(status) = &state.dead {
            return Err(Error::ChildFailed {
                batch,
                status: format!("predictor already failed ({status})"),
            });
        }

        // Lines left over from the previous batch mean it answered too many.
        let mut stray = 0;
        while let Ok(Ok(_)) = state.lines.try_recv() {
            stray += 1;
        }
        if stray > 0 {
            state.kill("protocol violation");
            return Err(Error::CountMismatch {
                batch: batch.saturating_sub(1),
                expected: state.last_batch_len,
                got: state.last_batch_len + stray,
            });
        }

        let result = state.exchange(batch, rows, self.timeout);
        match &result {
            Ok(_) => state.last_batch_len = rows.nrows(),
            Err(e) => {
                let why = e.to_string();
                state.kill(&why);
            }
        }
        result
    }

    /// Closes stdin and waits for the child to exit. Reports extra output and
    /// a nonzero exit status as errors.
    pub fn finish(mut self) -> Result<()> {
        let state = self.state.get_mut().unwrap_or_else(|p| p.into_inner());
        let batch = state.next_batch.saturating_sub(1);
        if let Some(status) = state.dead.take() {
            return Err(Error::ChildFailed { batch, status });
        }
        drop(state.stdin.take());
        let status = wait_with_grace(&mut state.child, Duration::from_secs(5));
        let mut stray = 0;
        while let Ok(Ok(_)) = state.lines.recv_timeout(Duration::from_millis(50)) {
            stray += 1;
        }
        if stray > 0 {
            return Err(Error::CountMismatch {
                batch,
                expected: state.last_batch_len,
                got: state.last_batch_len + stray,
            });
        }
        match status {
            Some(s) if s.success() => Ok(()),
            Some(s) => Err(Error::ChildFailed {
                batch,
                status: s.to_string(),
            }),
            None => Err(Error::ChildFailed {
                batch,
                status: "did not exit after stdin was closed".into(),
            }),
        }
    }
}

impl ChildState {
    fn kill(&mut self, why: &str) {
        if self.dead.is_none() {
            self.dead = Some(why.to_string());
        }
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn exchange(
        &mut self,
        batch: usize,
        rows: ArrayView2<'_, f64>,
        timeout: Duration,
    ) -> Result<Vec<f64>> {
        let (k, p) = rows.dim();
        let payload = encode_batch(rows);
        let deadline = Instant::now() + timeout;

        let ChildState {
            child,
            stdin,
            lines,
            ..
        } = self;
        let Some(stdin) = stdin.as_mut() else {
            return Err(Error::ChildFailed {
                batch,
                status: "stdin already closed".into(),
            });
        };

        thread::scope(|scope| {
            // Written from a separate thread so a child that answers before it
            // has consumed the whole batch cannot deadlock us on full pipes.
            let writer = scope.spawn(move || {
                stdin.write_all(payload.as_bytes())?;
                stdin.flush()
            });

            let mut out = Vec::with_capacity(k);
            let outcome = loop {
                if out.len() == k {
                    break Ok(());
                }
                let wait = deadline.saturating_duration_since(Instant::now());
                match lines.recv_timeout(wait) {
                    Ok(Ok(line)) => match parse_prediction(&line) {
                        Some(v) => out.push(v),
                        None => break Err(Error::MalformedResponse { batch, line }),
                    },
                    Ok(Err(e)) => {
                        break Err(Error::ChildFailed {
                            batch,
                            status: format!("reading stdout: {e}"),
                        })
                    }
                    Err(RecvTimeoutError::Timeout) => break Err(Error::Timeout { batch, timeout }),
                    Err(RecvTimeoutError::Disconnected) => {
                        let status = wait_with_grace(child, Duration::from_secs(2));
                        break Err(match status {
                            Some(s) if s.success() => Error::CountMismatch {
                                batch,
                                expected: k,
                                got: out.len(),
                            },
                            Some(s) => Error::ChildFailed {
                                batch,
                                status: s.to_string(),
                            },
                            None => Error::ChildFailed {
                                batch,
                                status: "closed stdout".into(),
                            },
                        });
                    }
                }
            };
            if outcome.is_err() {
                // unblocks the writer if the child stopped reading
                let _ = child.kill();
            }
            let written = writer.join().expect("writer thread panicked");
            outcome?;
            written.map_err(|e| Error::ChildFailed {
                batch,
                status: format!("writing batch of {k}x{p}: {e}"),
            })?;
            Ok(out)
        })
    }
}

impl Drop for ExternalPredictor {
    fn drop(&mut self) {
        let state = self.state.get_mut().unwrap_or_else(|p| p.into_inner());
        drop(state.stdin.take());
        if wait_with_grace(&mut state.child, Duration::from_secs(2)).is_none() {
            let _ = state.child.kill();
            let _ = state.child.wait();
        }
    }
}

fn wait_with_grace(child: &mut Child, grace: Duration) -> Option<std::process::ExitStatus> {
    let deadline = Instant::now() + grace;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return Some(status),
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(5)),
            _ => return None,
        }
    }
}

/// Serializes one batch in the wire format, header included.
pub fn encode_batch(rows: ArrayView2<'_, f64>) -> String {
    let (k, p) = rows.dim();
    let mut s = String::with_capacity(16 + k * p * 24);
    let _ = writeln!(s, "BATCH {k} {p}");
    for row in rows.outer_iter() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            s.push_str(&fmt_g17(*v));
        }
        s.push('\n');
    }
    s
}

fn parse_prediction(line: &str) -> Option<f64> {
    line.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Starts `command` and wraps it as a predictor handle.
pub fn external_predictor(config: &ExternalConfig) -> Result<PredictorHandle> {
    let ext = ExternalPredictor::spawn(config)?;
    let mut metadata = std::collections::BTreeMap::new();
    metadata.insert("model".into(), "external".into());
    metadata.insert("command".into(), config.command.join(" "));
    metadata.insert("timeout_secs".into(), fmt_g17(config.timeout.as_secs_f64()));
    Ok(PredictorHandle::new(
        HandleKind::External,
        config.output_kind,
        metadata,
        Model::External(ext),
    ))
}
