//! The chain driver: initialisation, iteration, retention, traces and
//! checkpoints.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    assign_latent_classes, augment_rejection, impute_missing_rejection, init_missing,
    update_concentration_params, update_multinomial_probs, update_stick_weights, AugmentedSample,
    CountStatistics, LatentState, SamplerConfig,
};
use crate::error::{Error, Result};
use crate::model::{Hyperparams, ModelParams};
use crate::rng::{derive, seeded, ChainRng};
use crate::rules::RuleSet;
use crate::schema::Dataset;

/// Which retained iterations keep a copy of the parameters.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ParamRetention {
    #[default]
    None,
    All,
    Iterations(BTreeSet<usize>),
}

impl ParamRetention {
    fn keeps(&self, t: usize) -> bool {
        match self {
            ParamRetention::None => false,
            ParamRetention::All => true,
            ParamRetention::Iterations(set) => set.contains(&t),
        }
    }
}

/// A retained iterate: the imputed values of every masked cell, in record
/// order (household cells, then each row's cells), and optionally θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub iteration: usize,
    pub imputed: Vec<u16>,
    pub params: Option<ModelParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub alpha: f64,
    pub beta: f64,
    pub n0: usize,
    pub occupied_households: usize,
    /// Largest number of occupied individual classes within one household
    /// class.
    pub occupied_individuals: usize,
    pub s1_draws: u64,
    pub impute_proposals: u64,
    pub s1_seconds: f64,
    pub s9_seconds: f64,
    /// π-weighted averages of the probed multinomial probabilities; these
    /// do not change when class labels are permuted.
    pub probes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    pub retained: bool,
    pub trace: TraceRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Probe {
    household: bool,
    k: usize,
    c: usize,
}

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub iteration: usize,
    pub params: ModelParams,
    pub latent: LatentState,
    pub imputed: Vec<u16>,
    rng: ChainRng,
    probes: Vec<Probe>,
    /// Snapshots retained before the checkpoint (filled by the runners).
    #[serde(default)]
    pub snapshots: Vec<Snapshot>,
    /// Trace rows before the checkpoint (filled by the runners).
    #[serde(default)]
    pub trace: Vec<TraceRow>,
}

impl ChainCheckpoint {
    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        serde_json::from_reader(r).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub struct Chain<'a> {
    cfg: SamplerConfig,
    hp: Hyperparams,
    rules: &'a RuleSet,
    data: Dataset,
    params: ModelParams,
    latent: LatentState,
    aug: AugmentedSample,
    stats: Option<CountStatistics>,
    rng: ChainRng,
    iteration: usize,
    probes: Vec<Probe>,
    has_missing: bool,
}

impl<'a> Chain<'a> {
    /// Fills masked cells from empirical marginals, draws θ from the prior
    /// and, with `warm_start`, runs S2–S8 once without augmentation.
    pub fn new(
        d: &Dataset,
        rules: &'a RuleSet,
        hp: Hyperparams,
        cfg: SamplerConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        hp.validate()?;
        check_observed_feasible(d, rules)?;
        let mut rng = seeded(cfg.seed);
        let has_missing = d.missing_cells() > 0;
        let data = if has_missing {
            init_missing(d, rules, &mut rng, cfg.impute_cap)?
        } else {
            d.clone()
        };
        let params = ModelParams::init_from_prior(&hp, &d.schema, &mut rng)?;
        let probes = choose_probes(&params, cfg.probes, cfg.seed);
        let mut chain = Self {
            cfg,
            hp,
            rules,
            data,
            params,
            latent: LatentState::default(),
            aug: AugmentedSample::default(),
            stats: None,
            rng,
            iteration: 0,
            probes,
            has_missing,
        };
        if chain.cfg.warm_start {
            chain.latent = assign_latent_classes(
                &chain.data,
                &chain.params,
                &mut chain.rng,
                chain.cfg.parallel_households,
            );
            chain.conjugate_updates();
        }
        Ok(chain)
    }

    /// Rebuilds a chain from a checkpoint taken on the same data and config.
    pub fn resume(
        d: &Dataset,
        rules: &'a RuleSet,
        hp: Hyperparams,
        cfg: SamplerConfig,
        ckpt: ChainCheckpoint,
    ) -> Result<Self> {
        cfg.validate()?;
        ckpt.params.check_schema(&d.schema)?;
        if ckpt.latent.g.len() != d.n() {
            return Err(Error::Checkpoint(
                "checkpoint was taken on other data".into(),
            ));
        }
        let data = fill_cells(d, &ckpt.imputed)?;
        hp.validate()?;
        Ok(Self {
            cfg,
            hp,
            rules,
            data,
            params: ckpt.params,
            latent: ckpt.latent,
            aug: AugmentedSample::default(),
            stats: None,
            rng: ckpt.rng,
            iteration: ckpt.iteration,
            probes: ckpt.probes,
            has_missing: d.missing_cells() > 0,
        })
    }

    pub fn checkpoint(&self) -> ChainCheckpoint {
        ChainCheckpoint {
            iteration: self.iteration,
            params: self.params.clone(),
            latent: self.latent.clone(),
            imputed: self.imputed_cells(),
            rng: self.rng.clone(),
            probes: self.probes.clone(),
            snapshots: Vec::new(),
            trace: Vec::new(),
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn latent(&self) -> &LatentState {
        &self.latent
    }

    pub fn augmented(&self) -> &AugmentedSample {
        &self.aug
    }

    /// Count statistics behind the latest conjugate updates.
    pub fn stats(&self) -> Option<&CountStatistics> {
        self.stats.as_ref()
    }

    /// The current completed data.
    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    /// Current values of the masked cells.
    pub fn imputed_cells(&self) -> Vec<u16> {
        let mut out = Vec::new();
        for r in &self.data.records {
            for (&x, &m) in r.household.household_values.iter().zip(&r.mask.household) {
                if m {
                    out.push(x);
                }
            }
            for (row, mrow) in r.household.individuals.iter().zip(&r.mask.individuals) {
                for (&x, &m) in row.iter().zip(mrow) {
                    if m {
                        out.push(x);
                    }
                }
            }
        }
        out
    }

    fn conjugate_updates(&mut self) {
        let stats = CountStatistics::assemble(
            &self.data,
            &self.latent,
            &self.aug,
            &self.params,
            |h| self.cfg.psi_for(h),
            self.cfg.variant,
        );
        let totals = stats.totals();
        let (f, s) = (self.params.f, self.params.s);
        let (u, pi, v, omega) = update_stick_weights(
            &totals,
            f,
            s,
            self.params.alpha,
            self.params.beta,
            &mut self.rng,
        );
        let (lambda, phi) = update_multinomial_probs(
            &totals,
            &self.params.hh_card,
            &self.params.ind_card,
            &mut self.rng,
        );
        let (alpha, beta) = update_concentration_params(&u, &v, s, &self.hp, &mut self.rng);
        self.params = ModelParams {
            u,
            pi,
            v,
            omega,
            lambda,
            phi,
            alpha,
            beta,
            ..std::mem::replace(
                &mut self.params,
                ModelParams::uniform(&self.data.schema, 1, 1),
            )
        };
        self.stats = Some(stats);
    }

    /// Seconds since `clock`, or 0 outside bench mode so traces stay
    /// reproducible.
    fn timed(&self, clock: Instant) -> f64 {
        if self.cfg.bench {
            clock.elapsed().as_secs_f64()
        } else {
            0.0
        }
    }

    /// Runs one full iteration S1–S8, then S9′.
    pub fn step(&mut self) -> Result<IterationReport> {
        let t = self.iteration + 1;
        let clock = Instant::now();
        self.aug = augment_rejection(
            &self.data,
            &self.params,
            self.rules,
            &self.cfg,
            &mut self.rng,
        )?;
        let s1_seconds = self.timed(clock);
        self.latent = assign_latent_classes(
            &self.data,
            &self.params,
            &mut self.rng,
            self.cfg.parallel_households,
        );
        self.conjugate_updates();
        let clock = Instant::now();
        let mut impute_proposals = 0;
        if self.cfg.impute && self.has_missing {
            let st = impute_missing_rejection(
                &mut self.data,
                &self.latent,
                &self.params,
                self.rules,
                &mut self.rng,
                self.cfg.impute_cap,
                self.cfg.parallel_households,
            )?;
            impute_proposals = st.proposals;
        }
        let s9_seconds = self.timed(clock);
        self.iteration = t;
        let (occupied_households, occupied_individuals) =
            occupancy(&self.latent, self.params.f, self.params.s);
        Ok(IterationReport {
            retained: self.cfg.retains(t),
            trace: TraceRow {
                iteration: t,
                alpha: self.params.alpha,
                beta: self.params.beta,
                n0: self.aug.n0(),
                occupied_households,
                occupied_individuals,
                s1_draws: self.aug.draws.values().sum(),
                impute_proposals,
                s1_seconds,
                s9_seconds,
                probes: self
                    .probes
                    .iter()
                    .map(|p| probe_value(&self.params, p))
                    .collect(),
            },
        })
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            iteration: self.iteration,
            imputed: self.imputed_cells(),
            params: self
                .cfg
                .retain_params
                .keeps(self.iteration)
                .then(|| self.params.clone()),
        }
    }
}

fn check_observed_feasible(d: &Dataset, rules: &RuleSet) -> Result<()> {
    for r in &d.records {
        if !r.mask.any() && !rules.is_feasible(&r.household)? {
            return Err(Error::Household {
                id: r.household.id.clone(),
                msg: format!(
                    "fully observed household violates rules {:?}",
                    rules.violations(&r.household)?
                ),
            });
        }
    }
    Ok(())
}

fn occupancy(latent: &LatentState, f: usize, s: usize) -> (usize, usize) {
    let mut hh = vec![false; f];
    let mut ind = vec![false; f * s];
    for (g, ms) in latent.g.iter().zip(&latent.m) {
        hh[*g] = true;
        for m in ms {
            ind[g * s + m] = true;
        }
    }
    let per_class = (0..f)
        .map(|g| ind[g * s..(g + 1) * s].iter().filter(|&&b| b).count())
        .max()
        .unwrap_or(0);
    (hh.iter().filter(|&&b| b).count(), per_class)
}

fn choose_probes(params: &ModelParams, n: usize, seed: u64) -> Vec<Probe> {
    let mut rng = derive(seed, &[u64::MAX]);
    let mut cells = Vec::new();
    for (k, &d) in params.hh_card.iter().enumerate() {
        cells.extend((0..d).map(|c| Probe {
            household: true,
            k,
            c,
        }));
    }
    for (k, &d) in params.ind_card.iter().enumerate() {
        cells.extend((0..d).map(|c| Probe {
            household: false,
            k,
            c,
        }));
    }
    let mut out = Vec::new();
    while out.len() < n && !cells.is_empty() {
        let i = rng.random_range(0..cells.len());
        out.push(cells.swap_remove(i));
    }
    out
}

fn probe_value(p: &ModelParams, probe: &Probe) -> f64 {
    (0..p.f)
        .map(|g| {
            let inner = if probe.household {
                p.lambda_row(probe.k, g)[probe.c]
            } else {
                (0..p.s)
                    .map(|m| p.omega_row(g)[m] * p.phi_row(probe.k, g, m)[probe.c])
                    .sum()
            };
            p.pi[g] * inner
        })
        .sum()
}

/// Writes `values` into the masked cells of `d`, in snapshot order.
fn fill_cells(d: &Dataset, values: &[u16]) -> Result<Dataset> {
    let mut out = d.clone();
    let mut it = values.iter();
    let mut next = || {
        it.next()
            .copied()
            .ok_or_else(|| Error::Checkpoint("too few imputed values".into()))
    };
    for r in &mut out.records {
        for (x, &m) in r
            .household
            .household_values
            .iter_mut()
            .zip(&r.mask.household)
        {
            if m {
                *x = next()?;
            }
        }
        for (row, mrow) in r.household.individuals.iter_mut().zip(&r.mask.individuals) {
            for (x, &m) in row.iter_mut().zip(mrow) {
                if m {
                    *x = next()?;
                }
            }
        }
    }
    if it.next().is_some() {
        return Err(Error::Checkpoint("too many imputed values".into()));
    }
    Ok(out)
}

/// The completed dataset a snapshot describes, in the layout of `d`.
pub fn apply_snapshot(d: &Dataset, snap: &Snapshot) -> Result<Dataset> {
    fill_cells(d, &snap.imputed)
}

#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub snapshots: Vec<Snapshot>,
    pub trace: Vec<TraceRow>,
    pub final_params: ModelParams,
}

/// Runs a chain from scratch. `on_checkpoint` is called every
/// `cfg.checkpoint_every` iterations.
pub fn run_chain(
    d: &Dataset,
    rules: &RuleSet,
    hp: Hyperparams,
    cfg: SamplerConfig,
    on_checkpoint: &mut dyn FnMut(&ChainCheckpoint) -> Result<()>,
) -> Result<ChainOutput> {
    let chain = Chain::new(d, rules, hp, cfg)?;
    drive(chain, Vec::new(), Vec::new(), on_checkpoint)
}

/// Continues a checkpointed chain to `cfg.iterations`. The output includes
/// the snapshots and trace rows stored in the checkpoint, so it equals the
/// output of an uninterrupted run.
pub fn resume_chain(
    d: &Dataset,
    rules: &RuleSet,
    hp: Hyperparams,
    cfg: SamplerConfig,
    mut ckpt: ChainCheckpoint,
    on_checkpoint: &mut dyn FnMut(&ChainCheckpoint) -> Result<()>,
) -> Result<ChainOutput> {
    let snapshots = std::mem::take(&mut ckpt.snapshots);
    let trace = std::mem::take(&mut ckpt.trace);
    let chain = Chain::resume(d, rules, hp, cfg, ckpt)?;
    drive(chain, snapshots, trace, on_checkpoint)
}

/// Continues a chain to `cfg.iterations`.
pub(crate) fn drive(
    mut chain: Chain<'_>,
    mut snapshots: Vec<Snapshot>,
    mut trace: Vec<TraceRow>,
    on_checkpoint: &mut dyn FnMut(&ChainCheckpoint) -> Result<()>,
) -> Result<ChainOutput> {
    let total = chain.cfg.iterations;
    while chain.iteration < total {
        let report = chain.step()?;
        let t = chain.iteration;
        if report.retained {
            snapshots.push(chain.snapshot());
        }
        if t.is_multiple_of(100) || t == total {
            log::info!(
                "iteration {t}/{total}: alpha {:.3}, beta {:.3}, n0 {}, classes {}/{}",
                report.trace.alpha,
                report.trace.beta,
                report.trace.n0,
                report.trace.occupied_households,
                report.trace.occupied_individuals
            );
        }
        trace.push(report.trace);
        if let Some(k) = chain.cfg.checkpoint_every {
            if k > 0 && t.is_multiple_of(k) {
                let mut ckpt = chain.checkpoint();
                ckpt.snapshots = snapshots.clone();
                ckpt.trace = trace.clone();
                on_checkpoint(&ckpt)?;
            }
        }
    }
    Ok(ChainOutput {
        snapshots,
        trace,
        final_params: chain.params.clone(),
    })
}

/// Writes trace rows as comma-separated text with a header.
pub fn write_trace<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let probes = rows.first().map_or(0, |r| r.probes.len());
    let mut header: Vec<String> = [
        "iteration",
        "alpha",
        "beta",
        "n0",
        "occupied_households",
        "occupied_individuals",
        "s1_draws",
        "impute_proposals",
        "s1_seconds",
        "s9_seconds",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((0..probes).map(|i| format!("probe_{i}")));
    out.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.iteration.to_string(),
            r.alpha.to_string(),
            r.beta.to_string(),
            r.n0.to_string(),
            r.occupied_households.to_string(),
            r.occupied_individuals.to_string(),
            r.s1_draws.to_string(),
            r.impute_proposals.to_string(),
            r.s1_seconds.to_string(),
            r.s9_seconds.to_string(),
        ];
        rec.extend(r.probes.iter().map(|p| p.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
