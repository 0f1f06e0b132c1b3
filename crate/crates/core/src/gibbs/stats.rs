//! Sufficient statistics for the conjugate updates.

use super::{AugmentedSample, LatentState, Psi, StepVariant};
use crate::model::ModelParams;
use crate::schema::Dataset;

/// Integer class and cell counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    /// U_g.
    pub u: Vec<u64>,
    /// V_gm, F×S row-major.
    pub v: Vec<u64>,
    /// Household-variable cells per class, per variable F×d_k.
    pub eta: Vec<Vec<u64>>,
    /// Individual-variable cells per (g, m), per variable (F·S)×d_k.
    pub nu: Vec<Vec<u64>>,
}

impl Counts {
    pub fn zeros(f: usize, s: usize, hh_card: &[usize], ind_card: &[usize]) -> Self {
        Self {
            u: vec![0; f],
            v: vec![0; f * s],
            eta: hh_card.iter().map(|&d| vec![0; f * d]).collect(),
            nu: ind_card.iter().map(|&d| vec![0; f * s * d]).collect(),
        }
    }

    /// Adds one household in class `g` with member classes `m`.
    #[inline]
    pub fn add(&mut self, s: usize, g: usize, m: &[usize], hh: &[u16], rows: &[u16]) {
        self.u[g] += 1;
        for (k, &x) in hh.iter().enumerate() {
            let d = self.eta[k].len() / self.u.len();
            self.eta[k][g * d + x as usize] += 1;
        }
        let p = self.nu.len();
        for (j, &mj) in m.iter().enumerate() {
            let r = g * s + mj;
            self.v[r] += 1;
            for k in 0..p {
                let d = self.nu[k].len() / self.v.len();
                self.nu[k][r * d + rows[j * p + k] as usize] += 1;
            }
        }
    }
}

/// Counts as the reals entering the Beta and Dirichlet parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedCounts {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    pub nu: Vec<Vec<f64>>,
}

/// Observed-data counts plus augmented counts kept per household size.
#[derive(Debug, Clone, PartialEq)]
pub struct CountStatistics {
    pub f: usize,
    pub s: usize,
    pub observed: Counts,
    /// (size, ψ_h, counts of the infeasible households of that size).
    pub augmented: Vec<(usize, Psi, Counts)>,
    pub variant: StepVariant,
}

impl CountStatistics {
    /// Tallies the completed observed data and the augmented sample.
    pub fn assemble(
        data: &Dataset,
        latent: &LatentState,
        aug: &AugmentedSample,
        params: &ModelParams,
        psi: impl Fn(usize) -> Psi,
        variant: StepVariant,
    ) -> Self {
        let (f, s) = (params.f, params.s);
        let zeros = || Counts::zeros(f, s, &params.hh_card, &params.ind_card);
        let mut observed = zeros();
        let mut rows = Vec::new();
        for (i, r) in data.records.iter().enumerate() {
            let h = &r.household;
            rows.clear();
            rows.extend(h.individuals.iter().flatten());
            observed.add(s, latent.g[i], &latent.m[i], &h.household_values, &rows);
        }
        let mut augmented: Vec<(usize, Psi, Counts)> = data
            .schema
            .household_sizes
            .iter()
            .map(|&h| (h, psi(h), zeros()))
            .collect();
        for x in &aug.households {
            let slot = augmented
                .iter_mut()
                .find(|(h, _, _)| *h == x.size)
                .expect("augmented size in the size set");
            slot.2.add(s, x.g, &x.m, &x.household_values, &x.rows);
        }
        Self {
            f,
            s,
            observed,
            augmented,
            variant,
        }
    }

    /// Observed plus augmented counts. The starred form adds each size's
    /// augmented counts times 1/ψ_h; the unstarred form adds integers. With
    /// every ψ_h = 1 both give identical floats, since integer-valued sums
    /// below 2^53 are exact.
    pub fn totals(&self) -> WeightedCounts {
        let combine = |obs: &[u64], pick: &dyn Fn(&Counts) -> &[u64]| -> Vec<f64> {
            match self.variant {
                StepVariant::Unstarred => (0..obs.len())
                    .map(|i| {
                        let aug: u64 = self.augmented.iter().map(|(_, _, c)| pick(c)[i]).sum();
                        (obs[i] + aug) as f64
                    })
                    .collect(),
                StepVariant::Starred => (0..obs.len())
                    .map(|i| {
                        let mut x = obs[i] as f64;
                        for (_, psi, c) in &self.augmented {
                            x += psi.weight() * pick(c)[i] as f64;
                        }
                        x
                    })
                    .collect(),
            }
        };
        WeightedCounts {
            u: combine(&self.observed.u, &|c| &c.u),
            v: combine(&self.observed.v, &|c| &c.v),
            eta: (0..self.observed.eta.len())
                .map(|k| combine(&self.observed.eta[k], &|c| &c.eta[k]))
                .collect(),
            nu: (0..self.observed.nu.len())
                .map(|k| combine(&self.observed.nu[k], &|c| &c.nu[k]))
                .collect(),
        }
    }
}
