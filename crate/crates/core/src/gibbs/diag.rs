//! Summaries of chain traces.

use std::io::Read;

use serde::Serialize;

use super::TraceRow;
use crate::error::{Error, Result};

const FIXED_COLUMNS: usize = 10;

/// Reads a trace written by `write_trace`.
pub fn read_trace<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    if header.len() < FIXED_COLUMNS || &header[0] != "iteration" {
        return Err(Error::Checkpoint("not a trace file".into()));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |c: usize| Error::DataRow {
            row: i + 2,
            msg: format!("bad value in column {}", &header[c]),
        };
        let f = |c: usize| rec[c].parse::<f64>().map_err(|_| bad(c));
        let u = |c: usize| rec[c].parse::<u64>().map_err(|_| bad(c));
        rows.push(TraceRow {
            iteration: u(0)? as usize,
            alpha: f(1)?,
            beta: f(2)?,
            n0: u(3)? as usize,
            occupied_households: u(4)? as usize,
            occupied_individuals: u(5)? as usize,
            s1_draws: u(6)?,
            impute_proposals: u(7)?,
            s1_seconds: f(8)?,
            s9_seconds: f(9)?,
            probes: (FIXED_COLUMNS..rec.len()).map(f).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub column: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub ess: f64,
}

/// Effective sample size from the initial positive sequence of
/// autocorrelation pair sums.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |k: usize| {
        xs[..n - k]
            .iter()
            .zip(&xs[k..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut sum = 0.0;
    let mut k = 0;
    while k + 1 < n {
        let pair = rho(k) + rho(k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

fn summarize(column: &str, xs: &[f64]) -> ColumnSummary {
    let n = xs.len().max(1) as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    ColumnSummary {
        column: column.to_string(),
        mean,
        sd,
        min: xs.iter().copied().fold(f64::INFINITY, f64::min),
        max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ess: effective_sample_size(xs),
    }
}

/// Per-column summaries of the rows with iteration > `burn_in`.
pub fn summarize_trace(rows: &[TraceRow], burn_in: usize) -> Vec<ColumnSummary> {
    let kept: Vec<&TraceRow> = rows.iter().filter(|r| r.iteration > burn_in).collect();
    let col = |f: &dyn Fn(&TraceRow) -> f64| kept.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let mut out = vec![
        summarize("alpha", &col(&|r| r.alpha)),
        summarize("beta", &col(&|r| r.beta)),
        summarize("n0", &col(&|r| r.n0 as f64)),
        summarize(
            "occupied_households",
            &col(&|r| r.occupied_households as f64),
        ),
        summarize(
            "occupied_individuals",
            &col(&|r| r.occupied_individuals as f64),
        ),
        summarize("s1_draws", &col(&|r| r.s1_draws as f64)),
        summarize("impute_proposals", &col(&|r| r.impute_proposals as f64)),
        summarize("s1_seconds", &col(&|r| r.s1_seconds)),
        summarize("s9_seconds", &col(&|r| r.s9_seconds)),
    ];
    let probes = kept.first().map_or(0, |r| r.probes.len());
    for i in 0..probes {
        out.push(summarize(&format!("probe_{i}"), &col(&|r| r.probes[i])));
    }
    out
}
