//! Compare an empirical Kolmogorov distance run against a bound run.
//!
//! Takes the results CSVs of a `clt` run and a `stein-bound` run over the
//! same functional, matches grid points, and reports whether the empirical
//! distance is dominated by the bound estimate within combined errors.
//! A bound estimate of at least 1 dominates vacuously (a Kolmogorov distance
//! never exceeds 1) and is flagged as such.

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::runner::{read_rows, ResultRow, RunError};

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    Run(#[from] RunError),
    #[error("missing run: {0}")]
    MissingRun(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub functional: String,
    pub n: u64,
    pub empirical_d_k: Option<f64>,
    pub empirical_se: f64,
    pub kol_bound: Option<f64>,
    pub bound_se: f64,
    pub dominated: bool,
    pub vacuous: bool,
    pub note: String,
}

fn find<'a>(rows: &'a [ResultRow], n: u64, metric: &str) -> Option<&'a ResultRow> {
    rows.iter().find(|r| r.n == n && r.metric == metric)
}

/// Match (functional, n) pairs across the two runs; order of the two paths
/// does not matter.
pub fn compare(run_a: &Path, run_b: &Path) -> Result<Vec<CompareRow>, CompareError> {
    let rows_a = read_rows(run_a)?;
    let rows_b = read_rows(run_b)?;
    let has_dk = |rows: &[ResultRow]| {
        rows.iter().any(|r| r.metric == "d_kolmogorov" || r.metric == "degenerate")
    };
    let has_bound = |rows: &[ResultRow]| {
        rows.iter().any(|r| r.metric == "kol_bound" || r.metric == "zero_variance")
    };
    let (clt, stein) = if has_dk(&rows_a) && has_bound(&rows_b) {
        (rows_a, rows_b)
    } else if has_dk(&rows_b) && has_bound(&rows_a) {
        (rows_b, rows_a)
    } else {
        return Err(CompareError::MissingRun(
            "need one clt run (d_kolmogorov) and one stein-bound run (kol_bound)".into(),
        ));
    };

    let functional = stein
        .first()
        .map(|r| r.functional.clone())
        .ok_or_else(|| CompareError::MissingRun("empty bound run".into()))?;
    if !clt.iter().any(|r| r.functional == functional) {
        return Err(CompareError::MissingRun(format!(
            "clt run has no rows for functional {functional}"
        )));
    }

    let mut ns: Vec<u64> = stein
        .iter()
        .filter(|r| r.metric == "kol_bound" || r.metric == "zero_variance")
        .map(|r| r.n)
        .collect();
    ns.sort_unstable();
    ns.dedup();

    let mut out = Vec::new();
    for n in ns {
        if find(&stein, n, "zero_variance").is_some() {
            out.push(CompareRow {
                functional: functional.clone(),
                n,
                empirical_d_k: None,
                empirical_se: 0.0,
                kol_bound: None,
                bound_se: 0.0,
                dominated: false,
                vacuous: false,
                note: "excluded: zero variance".into(),
            });
            continue;
        }
        let bound = find(&stein, n, "kol_bound").expect("n came from bound rows");
        let Some(dk) = find(&clt, n, "d_kolmogorov") else {
            if find(&clt, n, "degenerate").is_some() {
                out.push(CompareRow {
                    functional: functional.clone(),
                    n,
                    empirical_d_k: None,
                    empirical_se: 0.0,
                    kol_bound: Some(bound.value),
                    bound_se: bound.stderr.unwrap_or(0.0),
                    dominated: false,
                    vacuous: false,
                    note: "excluded: degenerate empirical run".into(),
                });
            }
            continue;
        };
        let dk_se = dk.stderr.unwrap_or(0.0);
        let bound_se = bound.stderr.unwrap_or(0.0);
        let combined = (dk_se * dk_se + bound_se * bound_se).sqrt();
        let vacuous = bound.value >= 1.0;
        let dominated = vacuous || dk.value <= bound.value + 3.0 * combined;
        out.push(CompareRow {
            functional: functional.clone(),
            n,
            empirical_d_k: Some(dk.value),
            empirical_se: dk_se,
            kol_bound: Some(bound.value),
            bound_se,
            dominated,
            vacuous,
            note: if vacuous { "vacuous: bound >= 1".into() } else { String::new() },
        });
    }
    if out.is_empty() {
        return Err(CompareError::MissingRun(
            "no overlapping (functional, n) pairs between the runs".into(),
        ));
    }
    Ok(out)
}

/// Write comparison rows as CSV.
pub fn write_report<W: Write>(rows: &[CompareRow], mut w: W) -> Result<(), CompareError> {
    writeln!(
        w,
        "functional,n,empirical_d_k,empirical_stderr,kol_bound,bound_stderr,dominated,vacuous,note"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.functional,
            r.n,
            r.empirical_d_k.map(|v| format!("{v}")).unwrap_or_default(),
            r.empirical_se,
            r.kol_bound.map(|v| format!("{v}")).unwrap_or_default(),
            r.bound_se,
            r.dominated,
            r.vacuous,
            r.note
        )?;
    }
    Ok(())
}
