//! Run configuration: a TOML file with one table per concern.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use nested_impute::gibbs::{Psi, SamplerConfig, StepVariant};
use nested_impute::impute::Selection;
use nested_impute::mi::Combiner;
use nested_impute::model::Hyperparams;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub schema: Option<SchemaSection>,
    pub data: Option<DataSection>,
    pub rules: Option<RulesSection>,
    pub model: Option<ModelSection>,
    pub sampler: Option<SamplerSection>,
    pub output: Option<OutputSection>,
    pub evaluate: Option<EvaluateSection>,
    pub simulate: Option<SimulateSection>,
    pub diagnose: Option<DiagnoseSection>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaSection {
    pub path: Option<PathBuf>,
    /// `census` or `synthetic`.
    pub builtin: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RulesSection {
    pub path: Option<PathBuf>,
    /// `imputation`, `synthetic` or `none`.
    pub builtin: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_f")]
    pub f: usize,
    #[serde(default = "default_s")]
    pub s: usize,
    #[serde(default = "default_gamma_param")]
    pub a_alpha: f64,
    #[serde(default = "default_gamma_param")]
    pub b_alpha: f64,
    #[serde(default = "default_gamma_param")]
    pub a_beta: f64,
    #[serde(default = "default_gamma_param")]
    pub b_beta: f64,
}

fn default_f() -> usize {
    30
}
fn default_s() -> usize {
    15
}
fn default_gamma_param() -> f64 {
    0.25
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            f: default_f(),
            s: default_s(),
            a_alpha: 0.25,
            b_alpha: 0.25,
            a_beta: 0.25,
            b_beta: 0.25,
        }
    }
}

impl ModelSection {
    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            f: self.f,
            s: self.s,
            a_alpha: self.a_alpha,
            b_alpha: self.b_alpha,
            a_beta: self.a_beta,
            b_beta: self.b_beta,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// Move the head's variables to the household level before sampling.
    #[serde(default = "yes")]
    pub head_move: bool,
    /// ψ_h as fractions, keyed by household size, e.g. `{ 2 = "1/2" }`.
    #[serde(default)]
    pub psi: BTreeMap<String, String>,
    #[serde(default = "yes")]
    pub impute: bool,
    /// `starred` (cap-and-weight) or `unstarred`.
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub parallel_augmentation: bool,
    #[serde(default = "yes")]
    pub parallel_households: bool,
    pub augment_cap: Option<u64>,
    pub impute_cap: Option<u64>,
    #[serde(default = "yes")]
    pub warm_start: bool,
    #[serde(default = "default_probes")]
    pub probes: usize,
    #[serde(default)]
    pub bench: bool,
    pub checkpoint_every: Option<usize>,
    /// Checkpoint file to continue from.
    pub resume: Option<PathBuf>,
}

fn default_iterations() -> usize {
    10_000
}
fn default_burn_in() -> usize {
    5_000
}
fn default_thin() -> usize {
    5
}
fn default_probes() -> usize {
    10
}
fn yes() -> bool {
    true
}

impl SamplerSection {
    pub fn sampler_config(&self, seed: u64) -> Result<SamplerConfig, CliError> {
        let mut psi = BTreeMap::new();
        for (h, v) in &self.psi {
            let size: usize = h.parse().map_err(|_| {
                CliError::Config(format!("sampler.psi key {h:?} is not a household size"))
            })?;
            let value: Psi = v.parse()?;
            psi.insert(size, value);
        }
        let variant = match self.variant.as_deref() {
            None | Some("starred") => StepVariant::Starred,
            Some("unstarred") => StepVariant::Unstarred,
            Some(other) => {
                return Err(CliError::Config(format!(
                    "sampler.variant {other:?} is not starred or unstarred"
                )))
            }
        };
        let defaults = SamplerConfig::default();
        Ok(SamplerConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            psi,
            seed,
            impute: self.impute,
            parallel_augmentation: self.parallel_augmentation,
            parallel_households: self.parallel_households,
            variant,
            augment_cap: self.augment_cap.unwrap_or(defaults.augment_cap),
            impute_cap: self.impute_cap.unwrap_or(defaults.impute_cap),
            warm_start: self.warm_start,
            probes: self.probes,
            retain_params: defaults.retain_params,
            bench: self.bench,
            checkpoint_every: self.checkpoint_every,
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    #[serde(default = "default_stem")]
    pub stem: String,
    /// Number of completed or synthetic datasets L.
    #[serde(default = "default_datasets")]
    pub datasets: usize,
    /// `even` or `random`; imputation defaults to even, synthesis to random.
    pub selection: Option<Selection>,
}

fn default_stem() -> String {
    "run".into()
}
fn default_datasets() -> usize {
    50
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    /// A manifest written by `impute` or `synthesize`.
    pub manifest: Option<PathBuf>,
    /// Explicit dataset files (used when no manifest is given).
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    /// Estimand file with `cell` and `household` lines.
    pub estimands: Option<PathBuf>,
    /// Add the built-in census household predicates.
    #[serde(default)]
    pub census_predicates: bool,
    /// Add every marginal, pair and triple cell.
    #[serde(default)]
    pub suite: bool,
    #[serde(default = "yes")]
    pub pairs: bool,
    #[serde(default = "yes")]
    pub triples: bool,
    pub max_per_order: Option<usize>,
    #[serde(default)]
    pub combiner: Combiner,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Complete dataset holding the values the intervals should cover.
    pub truth: Option<PathBuf>,
    pub output: PathBuf,
}

fn default_gamma() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    /// `census` (built-in household simulator) or `model` (draws from the
    /// truncated model with parameters from the prior).
    pub kind: String,
    /// Census population size.
    pub households: Option<usize>,
    /// Households per size for `model`, e.g. `{ 2 = 1000, 3 = 500 }`.
    #[serde(default)]
    pub sizes: BTreeMap<String, usize>,
    /// Simulate on the head-moved layout (`model` only).
    #[serde(default)]
    pub head_move: bool,
    /// Subsample this many households from the population.
    pub sample: Option<usize>,
    /// `none`, `mcar` or `stress`.
    #[serde(default = "default_mechanism")]
    pub mechanism: String,
    #[serde(default = "default_complete_frac")]
    pub complete_frac: f64,
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Masked (or complete, with mechanism `none`) sample.
    pub output: PathBuf,
    /// Complete sample before masking.
    pub truth: Option<PathBuf>,
    /// Full population.
    pub population: Option<PathBuf>,
    /// Generating parameters (`model` only).
    pub params: Option<PathBuf>,
}

fn default_mechanism() -> String {
    "none".into()
}
fn default_complete_frac() -> f64 {
    0.8
}
fn default_rate() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    pub trace: Option<PathBuf>,
    /// Trace rows up to this iteration are left out of the summary.
    #[serde(default)]
    pub burn_in: usize,
    /// Datasets to check against the rules.
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    pub output: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        let text = String::from_utf8(bytes.clone())
            .map_err(|_| CliError::Config(format!("{} is not UTF-8", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, bytes))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text)
            .map_err(|e| CliError::Config(e.message().to_string() + &span_note(text, e.span())))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
        s.as_ref()
            .ok_or_else(|| CliError::Config(format!("missing section [{name}]")))
    }
}

/// Names the table the error occurred in, when the span points inside one.
fn span_note(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    let Some(span) = span else {
        return String::new();
    };
    let before = &text[..span.end.min(text.len())];
    before
        .lines()
        .rev()
        .find_map(|l| {
            let l = l.trim();
            (l.starts_with('[') && l.ends_with(']')).then(|| format!(" in {l}"))
        })
        .unwrap_or_default()
}
