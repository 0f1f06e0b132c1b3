//! The individual Gibbs steps S1–S8.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;

use super::{AugmentedHousehold, AugmentedSample, LatentState, SamplerConfig, WeightedCounts};
use crate::error::{Error, Result};
use crate::model::{
    beta_draw, dirichlet_into, gamma_draw, sample_log_weights, stick_breaking, GenTables,
    Hyperparams, LogTables, ModelParams,
};
use crate::rng::{derive, ChainRng};
use crate::rules::RuleSet;
use crate::schema::Dataset;

/// Largest u or v used inside log(1 − ·).
const STICK_CLAMP: f64 = 1.0 - 1e-12;

/// S1: for each size h, draws households of size h from the untruncated
/// model until ⌈n_1h ψ_h⌉ of them are feasible, keeping the infeasible ones.
pub fn augment_rejection(
    d: &Dataset,
    params: &ModelParams,
    rules: &RuleSet,
    cfg: &SamplerConfig,
    rng: &mut ChainRng,
) -> Result<AugmentedSample> {
    let tables = GenTables::new(params, &d.schema);
    let mut out = AugmentedSample::default();
    if cfg.parallel_augmentation {
        let seed: u64 = rng.random();
        for (&h, &n1h) in &d.size_counts() {
            let target = cfg.psi_for(h).target(n1h);
            let (households, draws) =
                augment_size_parallel(&tables, rules, h, target, cfg.augment_cap, seed)?;
            out.n0h.insert(h, households.len());
            out.draws.insert(h, draws);
            out.households.extend(households);
        }
        return Ok(out);
    }
    let (mut hh, mut rows, mut ms) = (Vec::new(), Vec::new(), Vec::new());
    for (&h, &n1h) in &d.size_counts() {
        let target = cfg.psi_for(h).target(n1h);
        let (mut t0, mut t1, mut draws) = (0usize, 0usize, 0u64);
        while t1 < target {
            draws += 1;
            if draws > cfg.augment_cap {
                return Err(cap_error(cfg.augment_cap, h, t1, target));
            }
            let g = tables.sample_into(None, h, rng, &mut hh, &mut rows, &mut ms);
            if rules.feasible_raw(&hh, &rows) {
                t1 += 1;
            } else {
                t0 += 1;
                out.households.push(AugmentedHousehold {
                    size: h,
                    household_values: hh.clone(),
                    rows: rows.clone(),
                    g,
                    m: ms.clone(),
                });
            }
        }
        out.n0h.insert(h, t0);
        out.draws.insert(h, draws);
    }
    Ok(out)
}

fn cap_error(cap: u64, h: usize, t1: usize, target: usize) -> Error {
    Error::AttemptCap {
        cap,
        context: format!(
            "while augmenting size {h} ({t1} of {target} feasible draws); \
             the current parameters put almost no mass on feasible households"
        ),
    }
}

/// Workers draw independently; a shared counter tracks the feasible quota.
fn augment_size_parallel(
    tables: &GenTables,
    rules: &RuleSet,
    h: usize,
    target: usize,
    cap: u64,
    seed: u64,
) -> Result<(Vec<AugmentedHousehold>, u64)> {
    if target == 0 {
        return Ok((Vec::new(), 0));
    }
    let feasible = AtomicUsize::new(0);
    let draws = AtomicU64::new(0);
    let done = AtomicBool::new(false);
    let capped = AtomicBool::new(false);
    let collected = Mutex::new(Vec::new());
    let workers = rayon::current_num_threads().max(1);
    (0..workers).into_par_iter().for_each(|w| {
        let mut rng = derive(seed, &[h as u64, w as u64]);
        let (mut hh, mut rows, mut ms) = (Vec::new(), Vec::new(), Vec::new());
        let mut local = Vec::new();
        while !done.load(Ordering::Relaxed) {
            if draws.fetch_add(1, Ordering::Relaxed) >= cap {
                capped.store(true, Ordering::Relaxed);
                done.store(true, Ordering::Relaxed);
                break;
            }
            let g = tables.sample_into(None, h, &mut rng, &mut hh, &mut rows, &mut ms);
            if rules.feasible_raw(&hh, &rows) {
                if feasible.fetch_add(1, Ordering::AcqRel) + 1 >= target {
                    done.store(true, Ordering::Relaxed);
                }
            } else {
                local.push(AugmentedHousehold {
                    size: h,
                    household_values: hh.clone(),
                    rows: rows.clone(),
                    g,
                    m: ms.clone(),
                });
            }
        }
        collected
            .lock()
            .expect("no poisoned workers")
            .push((w, local));
    });
    if capped.load(Ordering::Relaxed) {
        return Err(cap_error(cap, h, feasible.load(Ordering::Relaxed), target));
    }
    let mut parts = collected.into_inner().expect("no poisoned workers");
    parts.sort_by_key(|(w, _)| *w);
    let households = parts.into_iter().flat_map(|(_, v)| v).collect();
    Ok((households, draws.load(Ordering::Relaxed).min(cap)))
}

/// S2: draws each observed household's class from π*_g ∝ π_g p(X_i | g),
/// then each member's class given the household class. Every household
/// uses its own stream derived from one draw of `rng`, so the result does
/// not depend on `parallel`.
pub fn assign_latent_classes(
    d: &Dataset,
    params: &ModelParams,
    rng: &mut ChainRng,
    parallel: bool,
) -> LatentState {
    let seed: u64 = rng.random();
    let lt = LogTables::new(params);
    let p = d.schema.p();
    let one = |i: usize| -> (usize, Vec<usize>) {
        let h = &d.records[i].household;
        let mut r = derive(seed, &[i as u64]);
        let rows: Vec<u16> = h.individuals.iter().flatten().copied().collect();
        let mut w = vec![0.0; lt.f];
        let mut terms = vec![0.0; lt.s];
        lt.class_log_weights(&h.household_values, &rows, &mut w, &mut terms);
        let g = sample_log_weights(&mut w, &mut r);
        let ms = if p == 0 {
            vec![0; h.individuals.len()]
        } else {
            rows.chunks(p)
                .map(|row| {
                    lt.person_log_mass(g, row, &mut terms);
                    sample_log_weights(&mut terms, &mut r)
                })
                .collect()
        };
        (g, ms)
    };
    let pairs: Vec<(usize, Vec<usize>)> = if parallel {
        (0..d.n()).into_par_iter().map(one).collect()
    } else {
        (0..d.n()).map(one).collect()
    };
    let (g, m) = pairs.into_iter().unzip();
    LatentState { g, m }
}

/// S3 and S4: stick-breaking weights from their Beta full conditionals.
/// Returns (u, π, v, ω).
pub fn update_stick_weights(
    totals: &WeightedCounts,
    f: usize,
    s: usize,
    alpha: f64,
    beta: f64,
    rng: &mut ChainRng,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let sticks = |counts: &[f64], conc: f64, rng: &mut ChainRng| -> Vec<f64> {
        let n = counts.len();
        // tail[g] = Σ_{f>g} counts[f]
        let mut tail = vec![0.0; n];
        for g in (0..n.saturating_sub(1)).rev() {
            tail[g] = tail[g + 1] + counts[g + 1];
        }
        (0..n)
            .map(|g| {
                if g + 1 == n {
                    1.0
                } else {
                    beta_draw(1.0 + counts[g], conc + tail[g], rng)
                }
            })
            .collect()
    };
    let u = sticks(&totals.u, alpha, rng);
    let pi = stick_breaking(&u);
    let mut v = Vec::with_capacity(f * s);
    for g in 0..f {
        v.extend(sticks(&totals.v[g * s..(g + 1) * s], beta, rng));
    }
    let omega = v.chunks(s).flat_map(stick_breaking).collect();
    (u, pi, v, omega)
}

/// S5 and S6: every λ and φ row from Dirichlet(1 + counts).
/// Returns (λ, φ).
pub fn update_multinomial_probs(
    totals: &WeightedCounts,
    hh_card: &[usize],
    ind_card: &[usize],
    rng: &mut ChainRng,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let draw = |counts: &[f64], d: usize, rng: &mut ChainRng| -> Vec<f64> {
        let mut out = vec![0.0; counts.len()];
        for (row, c) in out.chunks_mut(d).zip(counts.chunks(d)) {
            dirichlet_into(c.iter().map(|x| 1.0 + x), rng, row);
        }
        out
    };
    let lambda = totals
        .eta
        .iter()
        .zip(hh_card)
        .map(|(c, &d)| draw(c, d, rng))
        .collect();
    let phi = totals
        .nu
        .iter()
        .zip(ind_card)
        .map(|(c, &d)| draw(c, d, rng))
        .collect();
    (lambda, phi)
}

/// Shape and rate of α's Gamma full conditional.
pub fn alpha_posterior(u: &[f64], hp: &Hyperparams) -> (f64, f64) {
    let f = u.len();
    let sum: f64 = u[..f.saturating_sub(1)]
        .iter()
        .map(|&x| (1.0 - x.min(STICK_CLAMP)).ln())
        .sum();
    (hp.a_alpha + (f - 1) as f64, hp.b_alpha - sum)
}

/// Shape and rate of β's Gamma full conditional (β shared by all g).
pub fn beta_posterior(v: &[f64], f: usize, s: usize, hp: &Hyperparams) -> (f64, f64) {
    let mut sum = 0.0;
    for g in 0..f {
        for m in 0..s - 1 {
            sum += (1.0 - v[g * s + m].min(STICK_CLAMP)).ln();
        }
    }
    (hp.a_beta + (f * (s - 1)) as f64, hp.b_beta - sum)
}

/// S7 and S8. Returns (α, β).
pub fn update_concentration_params(
    u: &[f64],
    v: &[f64],
    s: usize,
    hp: &Hyperparams,
    rng: &mut ChainRng,
) -> (f64, f64) {
    let (sa, ra) = alpha_posterior(u, hp);
    let alpha = gamma_draw(sa, ra, rng);
    let (sb, rb) = beta_posterior(v, u.len(), s, hp);
    let beta = gamma_draw(sb, rb, rng);
    (alpha, beta)
}
