//! Minimal external model speaking the batch protocol, for tests and demos.
//!
//! Every data row is answered with the mean of its fields. The optional first
//! argument selects a misbehaviour:
//!
//! * `mean` (default): well-behaved.
//! * `short`: answers one line too few per batch, then exits cleanly.
//! * `extra`: answers one line too many per batch.
//! * `die`: reads the batch header and exits with status 3.
//! * `garbage`: answers every row with text that is not a number.
//! * `sleep`: reads input but never answers.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::time::Duration;

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Mean,
    Short,
    Extra,
    Die,
    Garbage,
    Sleep,
}

fn main() -> ExitCode {
    let mode = match std::env::args().nth(1).as_deref() {
        None | Some("mean") => Mode::Mean,
        Some("short") => Mode::Short,
        Some("extra") => Mode::Extra,
        Some("die") => Mode::Die,
        Some("garbage") => Mode::Garbage,
        Some("sleep") => Mode::Sleep,
        Some(other) => {
            eprintln!("predict-stub: unknown mode `{other}`");
            return ExitCode::from(2);
        }
    };
    match serve(mode) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("predict-stub: {e}");
            ExitCode::FAILURE
        }
    }
}

fn serve(mode: Mode) -> io::Result<ExitCode> {
    let stdin = io::stdin();
    let mut lines = stdin.lock().lines();
    let mut out = io::BufWriter::new(io::stdout().lock());

    while let Some(header) = lines.next() {
        let header = header?;
        let k: usize = header
            .strip_prefix("BATCH ")
            .and_then(|rest| rest.split_whitespace().next())
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad header `{header}`")))?;
        if mode == Mode::Die {
            return Ok(ExitCode::from(3));
        }
        let mut answers = Vec::with_capacity(k);
        for _ in 0..k {
            let row = lines
                .next()
                .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "batch ended early"))??;
            answers.push(mean_of(&row)?);
        }
        match mode {
            Mode::Sleep => loop {
                std::thread::sleep(Duration::from_secs(3600));
            },
            Mode::Garbage => {
                for _ in 0..k {
                    writeln!(out, "not-a-number")?;
                }
            }
            Mode::Short => {
                for a in answers.iter().take(k.saturating_sub(1)) {
                    writeln!(out, "{a:?}")?;
                }
                out.flush()?;
                return Ok(ExitCode::SUCCESS);
            }
            Mode::Extra => {
                for a in &answers {
                    writeln!(out, "{a:?}")?;
                }
                writeln!(out, "0")?;
            }
            Mode::Mean | Mode::Die => {
                for a in &answers {
                    writeln!(out, "{a:?}")?;
                }
            }
        }
        out.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn mean_of(row: &str) -> io::Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for cell in row.split(',') {
        let v: f64 = cell
            .trim()
            .parse()
            .map_err(|_| io::Error::new(io::ErrorKind::InvalidData, format!("bad cell `{cell}`")))?;
        sum += v;
        n += 1;
    }
    Ok(sum / n as f64)
}
