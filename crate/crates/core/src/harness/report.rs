use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{ExperimentReport, LambdaRun};
use crate::error::{Error, Result};

pub const SUMMARY_FILE: &str = "summary.json";
pub const FAILURE_MARKER: &str = "FAILED";
pub const TABLE_FILES: [&str; 4] = [
    "learning_curve.csv",
    "outer_curve.csv",
    "variance_schedule.csv",
    "mean_field.csv",
];

/// 17 significant digits; exact round trip for finite values.
pub(crate) fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn csv_table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::Contract(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Contract(format!("csv flush failed: {e}")))
}

fn learning_curve(runs: &[LambdaRun]) -> Result<Vec<u8>> {
    csv_table(
        &["lambda_se", "k", "i", "total_iter", "rel_error"],
        runs.iter().flat_map(|r| {
            r.curve.iter().map(move |c| {
                vec![
                    fmt_f64(r.lambda_se),
                    c.k.to_string(),
                    c.i.to_string(),
                    c.total_iter.to_string(),
                    fmt_f64(c.rel_error),
                ]
            })
        }),
    )
}

fn outer_curve(runs: &[LambdaRun]) -> Result<Vec<u8>> {
    csv_table(
        &["lambda_se", "k", "rel_error"],
        runs.iter().flat_map(|r| {
            r.outer
                .iter()
                .map(move |p| vec![fmt_f64(r.lambda_se), p.k.to_string(), fmt_f64(p.rel_error)])
        }),
    )
}

fn variance_schedule(runs: &[LambdaRun]) -> Result<Vec<u8>> {
    csv_table(
        &["lambda_se", "s", "learned_sigma2", "analytic_sigma2"],
        runs.iter().flat_map(|r| {
            r.learned
                .sigma2
                .iter()
                .zip(&r.analytic_sigma2)
                .enumerate()
                .map(move |(s, (l, a))| {
                    vec![
                        fmt_f64(r.lambda_se),
                        s.to_string(),
                        fmt_f64(*l),
                        fmt_f64(*a),
                    ]
                })
        }),
    )
}

fn mean_field(runs: &[LambdaRun]) -> Result<Vec<u8>> {
    csv_table(
        &["lambda_se", "k", "s", "m"],
        runs.iter().flat_map(|r| {
            r.mean_fields.iter().enumerate().flat_map(move |(k, mf)| {
                mf.values().iter().enumerate().map(move |(s, m)| {
                    vec![
                        fmt_f64(r.lambda_se),
                        k.to_string(),
                        s.to_string(),
                        fmt_f64(*m),
                    ]
                })
            })
        }),
    )
}

#[derive(Serialize)]
struct RunSummary<'a> {
    lambda_se: f64,
    seed: u64,
    n_eval_paths: usize,
    learned_m_hat: f64,
    true_m_hat: f64,
    learned_sigma2: &'a [f64],
    analytic_sigma2: &'a [f64],
    final_rel_error: f64,
    outer_rel_errors: Vec<f64>,
    reference_mc: f64,
    reference_stderr: f64,
    closed_form_value: Option<f64>,
    diverged_at: Option<(usize, usize)>,
    runtime_secs: f64,
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'a str,
    seed: u64,
    config: &'a super::ExperimentConfig,
    runs: Vec<RunSummary<'a>>,
    notes: &'a [String],
}

fn summary(report: &ExperimentReport) -> Result<Vec<u8>> {
    let runs = report
        .runs
        .iter()
        .map(|r| RunSummary {
            lambda_se: r.lambda_se,
            seed: r.seed,
            n_eval_paths: r.n_eval_paths,
            learned_m_hat: r.learned.m_hat,
            true_m_hat: r.true_m_hat,
            learned_sigma2: &r.learned.sigma2,
            analytic_sigma2: &r.analytic_sigma2,
            final_rel_error: r.final_error(),
            outer_rel_errors: r.outer.iter().map(|p| p.rel_error).collect(),
            reference_mc: r.reference,
            reference_stderr: r.reference_stderr,
            closed_form_value: r.closed_form_value,
            diverged_at: r.diverged_at,
            runtime_secs: r.runtime_secs,
        })
        .collect();
    let s = Summary {
        version: &report.version,
        seed: report.config.seed,
        config: &report.config,
        runs,
        notes: &report.notes,
    };
    Ok(serde_json::to_vec_pretty(&s)?)
}

/// Writes every table, then `summary.json`. Each file is written to a
/// temporary name and renamed into place. On failure a `FAILED` marker with
/// the error replaces any manifest.
pub fn write_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for stale in [SUMMARY_FILE, FAILURE_MARKER] {
        let p = dir.join(stale);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    let result = write_all(report, dir);
    if let Err(e) = &result {
        let _ = fs::write(dir.join(FAILURE_MARKER), format!("{e}\n"));
    }
    result
}

/// Records a failure that happened before any table could be produced.
pub fn write_failure_marker(dir: &Path, message: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let summary = dir.join(SUMMARY_FILE);
    if summary.exists() {
        fs::remove_file(&summary).map_err(|e| Error::io(&summary, e))?;
    }
    let marker = dir.join(FAILURE_MARKER);
    fs::write(&marker, format!("{message}\n")).map_err(|e| Error::io(&marker, e))
}

type TableBuilder = fn(&[LambdaRun]) -> Result<Vec<u8>>;

fn write_all(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let builders: [TableBuilder; 4] = [learning_curve, outer_curve, variance_schedule, mean_field];
    let mut written = Vec::new();
    for (name, build) in TABLE_FILES.iter().zip(builders) {
        let path = dir.join(name);
        write_atomic(&path, &build(&report.runs)?)?;
        written.push(path);
    }
    let path = dir.join(SUMMARY_FILE);
    write_atomic(&path, &summary(report)?)?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17, "{s}");
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }
}
