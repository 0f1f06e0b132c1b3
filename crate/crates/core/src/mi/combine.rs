//! Pooling L point estimates and variances.

use serde::{Deserialize, Serialize};

use super::dist::t_quantile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// Multiple imputation: T = (1 + 1/L) b + ū.
    #[default]
    Rubin,
    /// Partially synthetic data: T = ū + b/L.
    PartialSynth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MIResult {
    pub combiner: Combiner,
    /// (q, u) from each dataset.
    pub estimates: Vec<(f64, f64)>,
    pub q_bar: f64,
    /// Between-dataset variance of q.
    pub b: f64,
    pub u_bar: f64,
    /// Total variance of q̄.
    pub t: f64,
    /// Degrees of freedom; infinite when b = 0 (normal reference).
    pub df: f64,
    /// Coverage 1 − γ of `lo..hi`.
    pub level: f64,
    pub lo: f64,
    pub hi: f64,
}

fn moments(results: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    let l = results.len();
    if l < 2 {
        return Err(Error::TooFewDatasets);
    }
    let lf = l as f64;
    let q_bar = results.iter().map(|r| r.0).sum::<f64>() / lf;
    let b = results.iter().map(|r| (r.0 - q_bar).powi(2)).sum::<f64>() / (lf - 1.0);
    let u_bar = results.iter().map(|r| r.1).sum::<f64>() / lf;
    Ok((q_bar, b, u_bar))
}

fn finish(
    combiner: Combiner,
    results: &[(f64, f64)],
    (q_bar, b, u_bar): (f64, f64, f64),
    t: f64,
    df: f64,
    gamma: f64,
) -> Result<MIResult> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Estimand(format!("gamma {gamma} is not in (0, 1)")));
    }
    let half = t_quantile(1.0 - gamma / 2.0, df) * t.sqrt();
    Ok(MIResult {
        combiner,
        estimates: results.to_vec(),
        q_bar,
        b,
        u_bar,
        t,
        df,
        level: 1.0 - gamma,
        lo: q_bar - half,
        hi: q_bar + half,
    })
}

/// Rubin's rules: q̄, b, ū, T = (1 + 1/L) b + ū and
/// ν = (L − 1)(1 + ū / ((1 + 1/L) b))²; the interval is q̄ ± t_ν(1 − γ/2) √T.
pub fn combine_rubin(results: &[(f64, f64)], gamma: f64) -> Result<MIResult> {
    let m = moments(results)?;
    let (_, b, u_bar) = m;
    let lf = results.len() as f64;
    let between = (1.0 + 1.0 / lf) * b;
    let t = between + u_bar;
    let df = if b > 0.0 {
        (lf - 1.0) * (1.0 + u_bar / between).powi(2)
    } else {
        f64::INFINITY
    };
    finish(Combiner::Rubin, results, m, t, df, gamma)
}

/// Partially synthetic rules: T = ū + b/L and ν = (L − 1)(1 + L ū / b)².
pub fn combine_partial_synth(results: &[(f64, f64)], gamma: f64) -> Result<MIResult> {
    let m = moments(results)?;
    let (_, b, u_bar) = m;
    let lf = results.len() as f64;
    let t = u_bar + b / lf;
    let df = if b > 0.0 {
        (lf - 1.0) * (1.0 + lf * u_bar / b).powi(2)
    } else {
        f64::INFINITY
    };
    finish(Combiner::PartialSynth, results, m, t, df, gamma)
}

pub fn combine(results: &[(f64, f64)], gamma: f64, combiner: Combiner) -> Result<MIResult> {
    match combiner {
        Combiner::Rubin => combine_rubin(results, gamma),
        Combiner::PartialSynth => combine_partial_synth(results, gamma),
    }
}
