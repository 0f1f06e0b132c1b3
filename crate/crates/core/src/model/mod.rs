//! Parameters of the nested latent class model, prior draws, untruncated
//! generative sampling and likelihood kernels.
//!
//! Households belong to one of `F` classes with weights `pi`; within a
//! household class `g`, individuals belong to one of `S` classes with
//! weights `omega[g]`. Household variables are multinomial given `g`
//! (`lambda`), individual variables multinomial given `(g, m)` (`phi`).

mod io;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rules::{count_combinations, walk, RuleSet, ENUMERATION_LIMIT};
use crate::schema::{Dataset, DatasetSchema, Household};

pub use io::{read_params, write_params};

/// Tolerance on simplex sums.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Household-class truncation F.
    pub f: usize,
    /// Individual-class truncation S.
    pub s: usize,
    /// Gamma shape and rate of the prior on alpha.
    pub a_alpha: f64,
    pub b_alpha: f64,
    /// Gamma shape and rate of the prior on beta.
    pub a_beta: f64,
    pub b_beta: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            f: 30,
            s: 15,
            a_alpha: 0.25,
            b_alpha: 0.25,
            a_beta: 0.25,
            b_beta: 0.25,
        }
    }
}

impl Hyperparams {
    pub fn with_classes(f: usize, s: usize) -> Self {
        Self {
            f,
            s,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f == 0 || self.s == 0 {
            return Err(Error::InvalidParams("F and S must be at least 1".into()));
        }
        let gammas = [self.a_alpha, self.b_alpha, self.a_beta, self.b_beta];
        if gammas.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidParams(
                "Gamma parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub f: usize,
    pub s: usize,
    /// Household stick weights, length F, last entry 1.
    pub u: Vec<f64>,
    pub pi: Vec<f64>,
    /// Individual stick weights, F×S row-major, last entry of each row 1.
    pub v: Vec<f64>,
    pub omega: Vec<f64>,
    /// Per household variable, F×d_k row-major.
    pub lambda: Vec<Vec<f64>>,
    /// Per individual variable, (F·S)×d_k row-major, row index g·S + m.
    pub phi: Vec<Vec<f64>>,
    pub hh_card: Vec<usize>,
    pub ind_card: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
}

/// π_g = u_g Π_{f<g} (1 − u_f).
pub fn stick_breaking(u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(u.len());
    let mut rest = 1.0;
    for &ug in u {
        out.push(ug * rest);
        rest *= 1.0 - ug;
    }
    out
}

/// Dirichlet draw via normalised Gamma variates, written into `out`.
pub(crate) fn dirichlet_into<R: Rng + ?Sized>(
    conc: impl Iterator<Item = f64>,
    rng: &mut R,
    out: &mut [f64],
) {
    let mut total = 0.0;
    for (slot, a) in out.iter_mut().zip(conc) {
        let x = Gamma::new(a, 1.0)
            .expect("positive concentration")
            .sample(rng);
        *slot = x;
        total += x;
    }
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    } else {
        // Every variate underflowed; fall back to the uniform point.
        let n = out.len() as f64;
        out.iter_mut().for_each(|x| *x = 1.0 / n);
    }
}

/// Beta draw that tolerates degenerate second parameters.
pub(crate) fn beta_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    Beta::new(a, b.max(f64::MIN_POSITIVE))
        .expect("positive Beta parameters")
        .sample(rng)
}

pub(crate) fn gamma_draw<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("positive Gamma parameters")
        .sample(rng)
        .max(f64::MIN_POSITIVE)
}

impl ModelParams {
    /// Draws every component from the prior.
    pub fn init_from_prior<R: Rng + ?Sized>(
        hp: &Hyperparams,
        schema: &DatasetSchema,
        rng: &mut R,
    ) -> Result<Self> {
        hp.validate()?;
        let (f, s) = (hp.f, hp.s);
        let alpha = gamma_draw(hp.a_alpha, hp.b_alpha, rng);
        let beta = gamma_draw(hp.a_beta, hp.b_beta, rng);
        let mut u: Vec<f64> = (0..f)
            .map(|g| {
                if g + 1 == f {
                    1.0
                } else {
                    beta_draw(1.0, alpha, rng)
                }
            })
            .collect();
        u[f - 1] = 1.0;
        let mut v = vec![1.0; f * s];
        for g in 0..f {
            for m in 0..s - 1 {
                v[g * s + m] = beta_draw(1.0, beta, rng);
            }
        }
        let hh_card = schema.household_cardinalities();
        let ind_card = schema.individual_cardinalities();
        let lambda = hh_card
            .iter()
            .map(|&d| {
                let mut t = vec![0.0; f * d];
                for row in t.chunks_mut(d) {
                    dirichlet_into(std::iter::repeat(1.0), rng, row);
                }
                t
            })
            .collect();
        let phi = ind_card
            .iter()
            .map(|&d| {
                let mut t = vec![0.0; f * s * d];
                for row in t.chunks_mut(d) {
                    dirichlet_into(std::iter::repeat(1.0), rng, row);
                }
                t
            })
            .collect();
        let mut p = Self {
            f,
            s,
            pi: stick_breaking(&u),
            u,
            omega: Vec::new(),
            v,
            lambda,
            phi,
            hh_card,
            ind_card,
            alpha,
            beta,
        };
        p.rebuild_omega();
        Ok(p)
    }

    /// Equal class weights and uniform multinomials: every combination in
    /// C_h gets the same mass.
    pub fn uniform(schema: &DatasetSchema, f: usize, s: usize) -> Self {
        let flat_sticks = |n: usize| -> Vec<f64> { (0..n).map(|g| 1.0 / (n - g) as f64).collect() };
        let u = flat_sticks(f);
        let v: Vec<f64> = (0..f).flat_map(|_| flat_sticks(s)).collect();
        let hh_card = schema.household_cardinalities();
        let ind_card = schema.individual_cardinalities();
        let mut p = Self {
            f,
            s,
            pi: vec![1.0 / f as f64; f],
            u,
            omega: vec![1.0 / s as f64; f * s],
            v,
            lambda: hh_card
                .iter()
                .map(|&d| vec![1.0 / d as f64; f * d])
                .collect(),
            phi: ind_card
                .iter()
                .map(|&d| vec![1.0 / d as f64; f * s * d])
                .collect(),
            hh_card,
            ind_card,
            alpha: 1.0,
            beta: 1.0,
        };
        p.u[f - 1] = 1.0;
        for g in 0..f {
            p.v[g * s + s - 1] = 1.0;
        }
        p
    }

    pub fn rebuild_pi(&mut self) {
        self.pi = stick_breaking(&self.u);
    }

    pub fn rebuild_omega(&mut self) {
        let s = self.s;
        self.omega = self.v.chunks(s).flat_map(stick_breaking).collect();
    }

    #[inline]
    pub fn lambda_row(&self, k: usize, g: usize) -> &[f64] {
        let d = self.hh_card[k];
        &self.lambda[k][g * d..(g + 1) * d]
    }

    #[inline]
    pub fn phi_row(&self, k: usize, g: usize, m: usize) -> &[f64] {
        let d = self.ind_card[k];
        let r = g * self.s + m;
        &self.phi[k][r * d..(r + 1) * d]
    }

    #[inline]
    pub fn omega_row(&self, g: usize) -> &[f64] {
        &self.omega[g * self.s..(g + 1) * self.s]
    }

    /// Checks dimensions, simplex sums and stick consistency.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        let (f, s) = (self.f, self.s);
        if f == 0 || s == 0 {
            return bad("F and S must be at least 1".into());
        }
        if self.u.len() != f
            || self.pi.len() != f
            || self.v.len() != f * s
            || self.omega.len() != f * s
        {
            return bad("class weight dimensions".into());
        }
        if self.lambda.len() != self.hh_card.len() || self.phi.len() != self.ind_card.len() {
            return bad("variable count".into());
        }
        let simplex = |row: &[f64], what: &str| -> Result<()> {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL
            {
                return Err(Error::InvalidParams(format!("{what} row sums to {sum}")));
            }
            Ok(())
        };
        simplex(&self.pi, "pi")?;
        for row in self.omega.chunks(s) {
            simplex(row, "omega")?;
        }
        for (k, (t, &d)) in self.lambda.iter().zip(&self.hh_card).enumerate() {
            if t.len() != f * d {
                return bad(format!("lambda[{k}] dimensions"));
            }
            for row in t.chunks(d) {
                simplex(row, "lambda")?;
            }
        }
        for (k, (t, &d)) in self.phi.iter().zip(&self.ind_card).enumerate() {
            if t.len() != f * s * d {
                return bad(format!("phi[{k}] dimensions"));
            }
            for row in t.chunks(d) {
                simplex(row, "phi")?;
            }
        }
        if self.u[f - 1] != 1.0 || (0..f).any(|g| self.v[g * s + s - 1] != 1.0) {
            return bad("last stick weight must be 1".into());
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return bad("alpha and beta must be positive".into());
        }
        Ok(())
    }

    /// Checks that the parameters fit `schema`'s variable layout.
    pub fn check_schema(&self, schema: &DatasetSchema) -> Result<()> {
        if self.hh_card != schema.household_cardinalities()
            || self.ind_card != schema.individual_cardinalities()
        {
            return Err(Error::InvalidParams(
                "parameters do not match the schema's variables".into(),
            ));
        }
        Ok(())
    }
}

/// Index of the category picked by uniform `x` from cumulative weights.
#[inline]
pub(crate) fn draw_cdf(cdf: &[f64], x: f64) -> usize {
    let target = x * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= target).min(cdf.len() - 1)
}

fn cumulative(row: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    row.iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

/// Cumulative tables for fast generative draws under fixed parameters.
#[derive(Debug, Clone)]
pub struct GenTables {
    f: usize,
    s: usize,
    size_var: usize,
    /// Per size code: cumulative π_g λ^(size)_{g,h} over g.
    pi_size: Vec<Vec<f64>>,
    omega: Vec<Vec<f64>>,
    lambda: Vec<Vec<Vec<f64>>>,
    phi: Vec<Vec<Vec<f64>>>,
    hh_card: Vec<usize>,
    p: usize,
    head_moved: bool,
    sizes: Vec<usize>,
}

impl GenTables {
    pub fn new(params: &ModelParams, schema: &DatasetSchema) -> Self {
        let (f, s) = (params.f, params.s);
        let sv = schema.size_var;
        let pi_size = (0..schema.household_sizes.len())
            .map(|c| {
                let w: Vec<f64> = (0..f)
                    .map(|g| params.pi[g] * params.lambda_row(sv, g)[c])
                    .collect();
                cumulative(&w)
            })
            .collect();
        Self {
            f,
            s,
            size_var: sv,
            pi_size,
            omega: (0..f).map(|g| cumulative(params.omega_row(g))).collect(),
            lambda: (0..params.hh_card.len())
                .map(|k| {
                    (0..f)
                        .map(|g| cumulative(params.lambda_row(k, g)))
                        .collect()
                })
                .collect(),
            phi: (0..params.ind_card.len())
                .map(|k| {
                    (0..f * s)
                        .map(|r| cumulative(params.phi_row(k, r / s, r % s)))
                        .collect()
                })
                .collect(),
            hh_card: params.hh_card.clone(),
            p: params.ind_card.len(),
            head_moved: schema.head_move.is_some(),
            sizes: schema.household_sizes.clone(),
        }
    }

    pub fn f(&self) -> usize {
        self.f
    }

    /// Draws one household of size `h` from the untruncated model into the
    /// buffers. `g` fixes the household class; otherwise it is drawn from
    /// π re-weighted by the size variable. Returns the class.
    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        g: Option<usize>,
        h: usize,
        rng: &mut R,
        hh: &mut Vec<u16>,
        rows: &mut Vec<u16>,
        classes: &mut Vec<usize>,
    ) -> usize {
        let code = self
            .sizes
            .iter()
            .position(|&x| x == h)
            .expect("size in the size set");
        let g = g.unwrap_or_else(|| draw_cdf(&self.pi_size[code], rng.random()));
        hh.clear();
        for k in 0..self.hh_card.len() {
            if k == self.size_var {
                hh.push(code as u16);
            } else {
                hh.push(draw_cdf(&self.lambda[k][g], rng.random()) as u16);
            }
        }
        let n_rows = if self.head_moved { h - 1 } else { h };
        rows.clear();
        classes.clear();
        for _ in 0..n_rows {
            let m = draw_cdf(&self.omega[g], rng.random());
            classes.push(m);
            for k in 0..self.p {
                rows.push(draw_cdf(&self.phi[k][g * self.s + m], rng.random()) as u16);
            }
        }
        g
    }

    /// Draws household variable `k` given class `g`.
    #[inline]
    pub fn draw_household_value<R: Rng + ?Sized>(&self, k: usize, g: usize, rng: &mut R) -> u16 {
        draw_cdf(&self.lambda[k][g], rng.random()) as u16
    }

    /// Draws individual variable `k` given classes `(g, m)`.
    #[inline]
    pub fn draw_individual_value<R: Rng + ?Sized>(
        &self,
        k: usize,
        g: usize,
        m: usize,
        rng: &mut R,
    ) -> u16 {
        draw_cdf(&self.phi[k][g * self.s + m], rng.random()) as u16
    }
}

/// Draws one household from the untruncated model. Returns the household,
/// its class and its members' classes.
pub fn sample_household_untruncated<R: Rng + ?Sized>(
    params: &ModelParams,
    schema: &DatasetSchema,
    g: Option<usize>,
    h: usize,
    rng: &mut R,
) -> Result<(Household, usize, Vec<usize>)> {
    params.check_schema(schema)?;
    if schema.size_code(h).is_none() {
        return Err(Error::InvalidParams(format!(
            "size {h} is not in the size set"
        )));
    }
    if g.is_some_and(|g| g >= params.f) {
        return Err(Error::InvalidParams("class index out of range".into()));
    }
    let tables = GenTables::new(params, schema);
    let (mut hh, mut rows, mut ms) = (Vec::new(), Vec::new(), Vec::new());
    let g = tables.sample_into(g, h, rng, &mut hh, &mut rows, &mut ms);
    let p = schema.p();
    let individuals = if p == 0 {
        vec![Vec::new(); schema.stored_rows(h)]
    } else {
        rows.chunks(p).map(<[u16]>::to_vec).collect()
    };
    Ok((
        Household {
            id: String::new(),
            size: h,
            household_values: hh,
            individuals,
        },
        g,
        ms,
    ))
}

/// Logarithms of every parameter table.
#[derive(Debug, Clone)]
pub struct LogTables {
    pub f: usize,
    pub s: usize,
    pub log_pi: Vec<f64>,
    pub log_omega: Vec<f64>,
    pub log_lambda: Vec<Vec<f64>>,
    pub log_phi: Vec<Vec<f64>>,
    pub hh_card: Vec<usize>,
    pub ind_card: Vec<usize>,
}

impl LogTables {
    pub fn new(p: &ModelParams) -> Self {
        let ln = |v: &Vec<f64>| v.iter().map(|x| x.ln()).collect::<Vec<f64>>();
        Self {
            f: p.f,
            s: p.s,
            log_pi: ln(&p.pi),
            log_omega: ln(&p.omega),
            log_lambda: p.lambda.iter().map(ln).collect(),
            log_phi: p.phi.iter().map(ln).collect(),
            hh_card: p.hh_card.clone(),
            ind_card: p.ind_card.clone(),
        }
    }

    /// log Σ_m ω_gm Π_k φ_gmk(row_k), with the per-m terms left in `terms`.
    #[inline]
    pub fn person_log_mass(&self, g: usize, row: &[u16], terms: &mut [f64]) -> f64 {
        for (m, t) in terms.iter_mut().enumerate() {
            let r = g * self.s + m;
            let mut acc = self.log_omega[r];
            for (k, &x) in row.iter().enumerate() {
                acc += self.log_phi[k][r * self.ind_card[k] + x as usize];
            }
            *t = acc;
        }
        log_sum_exp(terms)
    }

    /// Per-class log weights log π_g + log p(household | g), into `out`.
    pub fn class_log_weights(
        &self,
        hh: &[u16],
        rows: &[u16],
        out: &mut [f64],
        scratch: &mut [f64],
    ) {
        let p = self.ind_card.len();
        for (g, w) in out.iter_mut().enumerate() {
            let mut acc = self.log_pi[g];
            for (k, &x) in hh.iter().enumerate() {
                acc += self.log_lambda[k][g * self.hh_card[k] + x as usize];
            }
            if p > 0 {
                for row in rows.chunks(p) {
                    acc += self.person_log_mass(g, row, scratch);
                }
            }
            *w = acc;
        }
    }
}

/// Numerically stable log Σ exp.
#[inline]
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Samples an index from unnormalised log weights.
#[inline]
pub(crate) fn sample_log_weights<R: Rng + ?Sized>(logw: &mut [f64], rng: &mut R) -> usize {
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut acc = 0.0;
    for w in logw.iter_mut() {
        acc += (*w - max).exp();
        *w = acc;
    }
    draw_cdf(logw, rng.random())
}

/// Log of the model kernel over a completed dataset: the truncated-model
/// likelihood up to its normalising constants. Any infeasible household
/// gives −∞.
pub fn loglik_kernel(d: &Dataset, params: &ModelParams, rules: &RuleSet) -> Result<f64> {
    params.check_schema(&d.schema)?;
    let lt = LogTables::new(params);
    let mut out = vec![0.0; params.f];
    let mut scratch = vec![0.0; params.s];
    let mut total = 0.0;
    for h in d.households() {
        if !rules.is_feasible(h)? {
            return Ok(f64::NEG_INFINITY);
        }
        lt.class_log_weights(
            &h.household_values,
            &h.flat_individuals(),
            &mut out,
            &mut scratch,
        );
        total += log_sum_exp(&out);
    }
    Ok(total)
}

/// Exact Pr(X ∈ S_h | θ, size h) by summing the untruncated mass over
/// every combination in C_h.
pub fn pi0h_bruteforce(
    params: &ModelParams,
    schema: &DatasetSchema,
    rules: &RuleSet,
    h: usize,
) -> Result<f64> {
    params.check_schema(schema)?;
    let Some(code) = schema.size_code(h) else {
        return Err(Error::InvalidParams(format!(
            "size {h} is not in the size set"
        )));
    };
    let total = count_combinations(schema, h)?;
    if total > ENUMERATION_LIMIT {
        return Err(Error::SpaceTooLarge {
            size: total,
            limit: ENUMERATION_LIMIT,
        });
    }
    let sv = schema.size_var;
    let weights: Vec<f64> = (0..params.f)
        .map(|g| params.pi[g] * params.lambda_row(sv, g)[code as usize])
        .collect();
    let wsum: f64 = weights.iter().sum();
    let p = schema.p();
    let (mut bad, mut all) = (0.0, 0.0);
    walk(schema, h, |hh, rows| {
        let mut mass = 0.0;
        for (g, &wg) in weights.iter().enumerate() {
            let mut x = wg / wsum;
            for (k, &c) in hh.iter().enumerate() {
                if k != sv {
                    x *= params.lambda_row(k, g)[c as usize];
                }
            }
            if p > 0 {
                for row in rows.chunks(p) {
                    let mut person = 0.0;
                    for m in 0..params.s {
                        let mut y = params.omega_row(g)[m];
                        for (k, &c) in row.iter().enumerate() {
                            y *= params.phi_row(k, g, m)[c as usize];
                        }
                        person += y;
                    }
                    x *= person;
                }
            }
            mass += x;
        }
        all += mass;
        if !rules.feasible_raw(hh, rows) {
            bad += mass;
        }
    });
    Ok(if all > 0.0 { bad / all } else { 0.0 })
}
