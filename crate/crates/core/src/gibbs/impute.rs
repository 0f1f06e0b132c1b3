//! Missing-item initialisation and the rejection imputation step S9′.

use rand::Rng;
use rayon::prelude::*;

use super::LatentState;
use crate::error::{Error, Result};
use crate::model::{GenTables, ModelParams};
use crate::rng::{derive, ChainRng};
use crate::rules::RuleSet;
use crate::schema::{Dataset, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ImputeStats {
    /// Households with at least one masked cell.
    pub households: usize,
    /// Joint proposals drawn, accepted or not.
    pub proposals: u64,
}

/// Draws masked cells from the untruncated conditional given each
/// household's latent classes and accepts the first joint draw that makes
/// the household feasible. Observed cells are never touched.
pub fn impute_missing_rejection(
    d: &mut Dataset,
    latent: &LatentState,
    params: &ModelParams,
    rules: &RuleSet,
    rng: &mut ChainRng,
    cap: u64,
    parallel: bool,
) -> Result<ImputeStats> {
    let seed: u64 = rng.random();
    let tables = GenTables::new(params, &d.schema);
    let p = d.schema.p();
    let one = |(i, rec): (usize, &mut Record)| -> Result<u64> {
        if !rec.mask.any() {
            return Ok(0);
        }
        let mut r = derive(seed, &[i as u64]);
        let g = latent.g[i];
        let ms = &latent.m[i];
        let mut hh = rec.household.household_values.clone();
        let mut rows: Vec<u16> = rec
            .household
            .individuals
            .iter()
            .flatten()
            .copied()
            .collect();
        for attempt in 1..=cap {
            for (k, masked) in rec.mask.household.iter().enumerate() {
                if *masked {
                    hh[k] = tables.draw_household_value(k, g, &mut r);
                }
            }
            for (j, row_mask) in rec.mask.individuals.iter().enumerate() {
                for (k, masked) in row_mask.iter().enumerate() {
                    if *masked {
                        rows[j * p + k] = tables.draw_individual_value(k, g, ms[j], &mut r);
                    }
                }
            }
            if rules.feasible_raw(&hh, &rows) {
                rec.household.household_values = hh;
                for (j, row) in rec.household.individuals.iter_mut().enumerate() {
                    row.copy_from_slice(&rows[j * p..(j + 1) * p]);
                }
                return Ok(attempt);
            }
        }
        Err(Error::AttemptCap {
            cap,
            context: format!(
                "imputing household {}: no feasible completion accepted",
                rec.household.id
            ),
        })
    };
    let attempts: Vec<u64> = if parallel {
        d.records
            .par_iter_mut()
            .enumerate()
            .map(one)
            .collect::<Result<_>>()?
    } else {
        d.records
            .iter_mut()
            .enumerate()
            .map(one)
            .collect::<Result<_>>()?
    };
    Ok(ImputeStats {
        households: d.records.iter().filter(|r| r.mask.any()).count(),
        proposals: attempts.iter().sum(),
    })
}

/// Fills masked cells from the available-case empirical marginal of each
/// variable, redrawing a household's masked cells until it is feasible.
pub fn init_missing(d: &Dataset, rules: &RuleSet, rng: &mut ChainRng, cap: u64) -> Result<Dataset> {
    let schema = &d.schema;
    let mut hh_counts: Vec<Vec<u64>> = schema
        .household_vars
        .iter()
        .map(|v| vec![0; v.cardinality()])
        .collect();
    let mut ind_counts: Vec<Vec<u64>> = schema
        .individual_vars
        .iter()
        .map(|v| vec![0; v.cardinality()])
        .collect();
    let mut hh_needed = vec![false; schema.q()];
    let mut ind_needed = vec![false; schema.p()];
    for r in &d.records {
        let h = &r.household;
        for (k, (&x, &m)) in h.household_values.iter().zip(&r.mask.household).enumerate() {
            if m {
                hh_needed[k] = true;
            } else {
                hh_counts[k][x as usize] += 1;
            }
        }
        for (row, mrow) in h.individuals.iter().zip(&r.mask.individuals) {
            for (k, (&x, &m)) in row.iter().zip(mrow).enumerate() {
                if m {
                    ind_needed[k] = true;
                } else {
                    ind_counts[k][x as usize] += 1;
                }
            }
        }
    }
    let cdf = |counts: &[u64]| -> Vec<f64> {
        let mut acc = 0.0;
        counts
            .iter()
            .map(|&c| {
                acc += c as f64;
                acc
            })
            .collect()
    };
    let check = |needed: &[bool],
                 counts: &[Vec<u64>],
                 specs: &[crate::schema::VariableSpec]|
     -> Result<()> {
        for k in 0..needed.len() {
            if needed[k] && counts[k].iter().all(|&c| c == 0) {
                return Err(Error::NoObservedValues(specs[k].name.clone()));
            }
        }
        Ok(())
    };
    check(&hh_needed, &hh_counts, &schema.household_vars)?;
    check(&ind_needed, &ind_counts, &schema.individual_vars)?;
    let hh_cdf: Vec<Vec<f64>> = hh_counts.iter().map(|c| cdf(c)).collect();
    let ind_cdf: Vec<Vec<f64>> = ind_counts.iter().map(|c| cdf(c)).collect();
    let draw = |c: &[f64], rng: &mut ChainRng| crate::model::draw_cdf(c, rng.random()) as u16;

    let mut out = d.clone();
    let p = schema.p();
    for rec in out.records.iter_mut().filter(|r| r.mask.any()) {
        let mut hh = rec.household.household_values.clone();
        let mut rows: Vec<u16> = rec
            .household
            .individuals
            .iter()
            .flatten()
            .copied()
            .collect();
        let mut accepted = false;
        for _ in 0..cap {
            for (k, &m) in rec.mask.household.iter().enumerate() {
                if m {
                    hh[k] = draw(&hh_cdf[k], rng);
                }
            }
            for (j, mrow) in rec.mask.individuals.iter().enumerate() {
                for (k, &m) in mrow.iter().enumerate() {
                    if m {
                        rows[j * p + k] = draw(&ind_cdf[k], rng);
                    }
                }
            }
            if rules.feasible_raw(&hh, &rows) {
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::AttemptCap {
                cap,
                context: format!(
                    "initialising household {}: no feasible completion found",
                    rec.household.id
                ),
            });
        }
        rec.household.household_values = hh;
        for (j, row) in rec.household.individuals.iter_mut().enumerate() {
            row.copy_from_slice(&rows[j * p..(j + 1) * p]);
        }
    }
    Ok(out)
}
