//! Sequential benchmark sweeps with one CSV row per run.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};

use bspmr::{Error, Result};

use crate::report::{reset_peak_rss, RunReport};
use crate::run::run_in_process;
use crate::spec::{BackendKind, RunSpec};

pub const COLUMNS: [&str; 16] = [
    "job",
    "mode",
    "workers",
    "threads",
    "input_size",
    "map_ms",
    "shuffle_ms",
    "sort_ms",
    "reduce_ms",
    "total_ms",
    "pairs_shuffled",
    "peak_rss_bytes",
    "result_digest",
    "status",
    "input",
    "seed",
];

fn ms(x: f64) -> String {
    format!("{x:.3}")
}

fn row(spec: &RunSpec, outcome: &std::result::Result<RunReport, String>) -> Vec<String> {
    let mut r = vec![spec.job.to_string(), spec.mode.to_string(), spec.workers.to_string(), spec.threads.to_string()];
    match outcome {
        Ok(rep) => {
            r.extend([
                rep.input_size.to_string(),
                ms(rep.map_ms),
                ms(rep.shuffle_ms),
                ms(rep.sort_ms),
                ms(rep.reduce_ms),
                ms(rep.total_ms),
                rep.pairs_shuffled.to_string(),
                rep.peak_rss_bytes.map(|b| b.to_string()).unwrap_or_default(),
                rep.result_digest.clone(),
                "ok".into(),
            ]);
        }
        Err(msg) => {
            r.extend(std::iter::repeat_n(String::new(), 9));
            r.push(format!("error: {msg}"));
        }
    }
    r.push(spec.source.to_string());
    r.push(spec.seed.to_string());
    r
}

fn run_one(spec: &RunSpec) -> std::result::Result<RunReport, String> {
    let mut spec = spec.clone();
    spec.backend = BackendKind::Inproc;
    reset_peak_rss();
    match catch_unwind(AssertUnwindSafe(|| run_in_process(&spec))) {
        Ok(Ok(out)) => Ok(out.report),
        Ok(Err(e)) => Err(e.to_string()),
        Err(_) => Err("worker panicked".into()),
    }
}

/// Runs `specs` in order on the in-process backend and writes the CSV.
/// A failing spec becomes a row with its status set; the sweep goes on.
/// Returns the reports, `Err` entries for failed specs.
pub fn bench<W: Write>(specs: &[RunSpec], out: W) -> Result<Vec<std::result::Result<RunReport, String>>> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    csv.write_record(COLUMNS).map_err(csv_err)?;
    let mut reports = Vec::with_capacity(specs.len());
    for spec in specs {
        let outcome = run_one(spec);
        csv.write_record(row(spec, &outcome)).map_err(csv_err)?;
        csv.flush()?;
        reports.push(outcome);
    }
    Ok(reports)
}

/// The single-row CSV a `run` writes with `--csv`.
pub fn write_report_csv<W: Write>(report: &RunReport, out: W) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    csv.write_record(COLUMNS).map_err(csv_err)?;
    csv.write_record(row(&report.spec, &Ok(report.clone()))).map_err(csv_err)?;
    csv.flush()?;
    Ok(())
}
