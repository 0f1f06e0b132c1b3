//! The blocked Gibbs sampler for the truncated model.
//!
//! One iteration runs, in order: augmentation with infeasible households
//! (S1), latent class assignment (S2), stick-breaking updates (S3, S4),
//! Dirichlet updates (S5, S6), concentration updates (S7, S8) and, when
//! items are missing, rejection imputation (S9′). The cap-and-weight
//! variant caps the augmented sample at ⌈n_1h ψ_h⌉ feasible draws and
//! weights augmented counts by 1/ψ_h.

mod chain;
mod diag;
mod impute;
mod stats;
mod steps;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{
    apply_snapshot, resume_chain, run_chain, write_trace, Chain, ChainCheckpoint, ChainOutput,
    IterationReport, ParamRetention, Snapshot, TraceRow,
};
pub use diag::{effective_sample_size, read_trace, summarize_trace, ColumnSummary};
pub use impute::{impute_missing_rejection, init_missing, ImputeStats};
pub use stats::{CountStatistics, Counts, WeightedCounts};
pub use steps::{
    alpha_posterior, assign_latent_classes, augment_rejection, beta_posterior,
    update_concentration_params, update_multinomial_probs, update_stick_weights,
};

/// Default cap on untruncated draws per household size in S1.
pub const DEFAULT_AUGMENT_CAP: u64 = 1_000_000_000;
/// Default cap on proposals per household in S9′.
pub const DEFAULT_IMPUTE_CAP: u64 = 1_000_000;

/// A cap fraction ψ_h = num/den in (0, 1], kept rational so the cap
/// ⌈n ψ⌉ is computed exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Psi {
    pub num: u64,
    pub den: u64,
}

impl Psi {
    pub const ONE: Psi = Psi { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num == 0 || den == 0 || num > den {
            return Err(Error::Config(format!("psi {num}/{den} is not in (0, 1]")));
        }
        Ok(Self { num, den })
    }

    /// ⌈n ψ⌉.
    pub fn target(self, n: usize) -> usize {
        let n = n as u128;
        let (a, b) = (self.num as u128, self.den as u128);
        (n * a).div_ceil(b) as usize
    }

    /// 1/ψ as a float (exact when ψ = 1/k).
    pub fn weight(self) -> f64 {
        self.den as f64 / self.num as f64
    }

    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_one(self) -> bool {
        self.num == self.den
    }
}

impl fmt::Display for Psi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Psi {
    type Err = Error;

    /// Accepts `a/b`, an integer, or a decimal such as `0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("cannot parse psi {s:?}"));
        if let Some((a, b)) = s.split_once('/') {
            let a = a.trim().parse().map_err(|_| bad())?;
            let b = b.trim().parse().map_err(|_| bad())?;
            return Psi::new(a, b);
        }
        match s.split_once('.') {
            None => Psi::new(s.parse().map_err(|_| bad())?, 1),
            Some((int, frac)) => {
                if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
                    return Err(bad());
                }
                let den = 10u64.pow(frac.len() as u32);
                let int: u64 = if int.is_empty() {
                    0
                } else {
                    int.parse().map_err(|_| bad())?
                };
                let frac_v: u64 = if frac.is_empty() {
                    0
                } else {
                    frac.parse().map_err(|_| bad())?
                };
                let num = int
                    .checked_mul(den)
                    .and_then(|x| x.checked_add(frac_v))
                    .ok_or_else(bad)?;
                let g = gcd(num, den);
                Psi::new(num / g.max(1), den / g.max(1))
            }
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Whether S1 and S3–S6 use the cap-and-weight form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StepVariant {
    /// Augment to ⌈n_1h ψ_h⌉ feasible draws, weight augmented counts 1/ψ_h.
    #[default]
    Starred,
    /// Augment to n_1h feasible draws, unweighted integer counts.
    Unstarred,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// ψ_h per household size; sizes not listed use 1.
    pub psi: BTreeMap<usize, Psi>,
    pub seed: u64,
    /// Impute missing items (S9′). Off, masked cells keep their initial values.
    pub impute: bool,
    /// Run S1 on several threads. Faster, but the chain is no longer
    /// reproducible bit for bit.
    pub parallel_augmentation: bool,
    /// Run S2 and S9′ household work items on the rayon pool. Results do not
    /// depend on this setting.
    pub parallel_households: bool,
    pub variant: StepVariant,
    pub augment_cap: u64,
    pub impute_cap: u64,
    /// One pass of S2–S8 before the first augmentation, so S1 starts from
    /// parameters informed by the data rather than from a prior draw.
    pub warm_start: bool,
    /// Number of weighted-average probes tracked in the trace.
    pub probes: usize,
    pub retain_params: ParamRetention,
    /// Time S1 and S9′ in every trace row.
    pub bench: bool,
    pub checkpoint_every: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in: 5_000,
            thin: 5,
            psi: BTreeMap::new(),
            seed: 0,
            impute: true,
            parallel_augmentation: false,
            parallel_households: false,
            variant: StepVariant::Starred,
            augment_cap: DEFAULT_AUGMENT_CAP,
            impute_cap: DEFAULT_IMPUTE_CAP,
            warm_start: true,
            probes: 10,
            retain_params: ParamRetention::None,
            bench: false,
            checkpoint_every: None,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(
                "burn_in must be smaller than iterations".into(),
            ));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        for (h, p) in &self.psi {
            Psi::new(p.num, p.den).map_err(|_| Error::Config(format!("psi for size {h}")))?;
        }
        if self.augment_cap == 0 || self.impute_cap == 0 {
            return Err(Error::Config("attempt caps must be positive".into()));
        }
        Ok(())
    }

    pub fn psi_for(&self, h: usize) -> Psi {
        match self.variant {
            StepVariant::Starred => self.psi.get(&h).copied().unwrap_or(Psi::ONE),
            StepVariant::Unstarred => Psi::ONE,
        }
    }

    /// Whether iteration `t` (1-based) is retained.
    pub fn retains(&self, t: usize) -> bool {
        t > self.burn_in && (t - self.burn_in).is_multiple_of(self.thin)
    }

    pub fn retained_count(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }
}

/// Latent classes of the observed households and their members.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatentState {
    pub g: Vec<usize>,
    pub m: Vec<Vec<usize>>,
}

/// One infeasible household from the augmentation step, with the classes it
/// was generated from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AugmentedHousehold {
    pub size: usize,
    pub household_values: Vec<u16>,
    /// Row-major individual values.
    pub rows: Vec<u16>,
    pub g: usize,
    pub m: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AugmentedSample {
    pub households: Vec<AugmentedHousehold>,
    /// n_0h per size.
    pub n0h: BTreeMap<usize, usize>,
    /// Untruncated draws consumed per size, feasible and infeasible.
    pub draws: BTreeMap<usize, u64>,
}

impl AugmentedSample {
    pub fn n0(&self) -> usize {
        self.n0h.values().sum()
    }
}

#[cfg(test)]
mod tests;
