//! Completed and synthetic datasets from retained chain snapshots.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{apply_snapshot, SamplerConfig, Snapshot};
use crate::model::ModelParams;
use crate::rng::{seeded, ChainRng};
use crate::rules::RuleSet;
use crate::schema::{inverse_transform, write_dataset, Dataset};
use crate::simtools::draw_truncated;

/// How L snapshots are picked from the retained iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Every (n/L)-th retained iterate, ending with the last one.
    #[default]
    Even,
    /// L distinct iterates uniformly at random, in chain order.
    Random,
}

/// Picks `l` of `n` retained iterates. Returns 0-based positions in
/// ascending order; with `Even`, L = 50 of 1000 gives the 20th, 40th, …,
/// 1000th iterate.
pub fn select_snapshots(
    n: usize,
    l: usize,
    mode: Selection,
    rng: &mut ChainRng,
) -> Result<Vec<usize>> {
    if l == 0 || l > n {
        return Err(Error::NotEnoughSnapshots {
            needed: l,
            found: n,
        });
    }
    Ok(match mode {
        Selection::Even => (1..=l).map(|k| k * n / l - 1).collect(),
        Selection::Random => {
            let mut idx = sample(rng, n, l).into_vec();
            idx.sort_unstable();
            idx
        }
    })
}

/// Iteration number of the `pos`-th (0-based) retained iterate.
pub fn retained_iteration(cfg: &SamplerConfig, pos: usize) -> usize {
    cfg.burn_in + (pos + 1) * cfg.thin
}

/// L completed datasets in the original layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletedDatasetSet {
    pub datasets: Vec<Dataset>,
    /// Chain iteration behind each dataset.
    pub iterations: Vec<usize>,
    pub seed: u64,
    pub selection: Selection,
}

/// Checks feasibility of every household of `d` in its current layout.
fn check_all_feasible(d: &Dataset, rules: &RuleSet) -> Result<()> {
    for h in d.households() {
        if !rules.is_feasible(h)? {
            return Err(Error::Household {
                id: h.id.clone(),
                msg: format!(
                    "emitted household violates rules {:?}",
                    rules.violations(h)?
                ),
            });
        }
    }
    Ok(())
}

fn to_original_layout(d: Dataset) -> Result<Dataset> {
    if d.schema.head_move.is_some() {
        inverse_transform(&d)
    } else {
        Ok(d)
    }
}

/// Fills the masked cells of `d` from `l` selected snapshots, checks every
/// household against `rules` (compiled for the layout of `d`) and returns
/// the datasets in the original layout. `seed` drives random selection.
pub fn emit_completed_datasets(
    d: &Dataset,
    snapshots: &[Snapshot],
    l: usize,
    mode: Selection,
    rules: &RuleSet,
    seed: u64,
) -> Result<CompletedDatasetSet> {
    let picks = select_snapshots(snapshots.len(), l, mode, &mut seeded(seed))?;
    let mut datasets = Vec::with_capacity(l);
    let mut iterations = Vec::with_capacity(l);
    for &i in &picks {
        let z = apply_snapshot(d, &snapshots[i])?;
        check_all_feasible(&z, rules)?;
        datasets.push(to_original_layout(z)?);
        iterations.push(snapshots[i].iteration);
    }
    Ok(CompletedDatasetSet {
        datasets,
        iterations,
        seed,
        selection: mode,
    })
}

/// Draws a fully synthetic dataset from the truncated model with the same
/// number of households of each size as `d`, in the original layout (a moved
/// head is restored as the first person).
pub fn generate_synthetic(
    params: &ModelParams,
    d: &Dataset,
    rules: &RuleSet,
    rng: &mut ChainRng,
    cap: u64,
) -> Result<Dataset> {
    draw_truncated(params, &d.schema, rules, &d.size_counts(), rng, cap, "syn")
}

/// L synthetic datasets, one per selected snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDatasetSet {
    pub datasets: Vec<Dataset>,
    pub iterations: Vec<usize>,
    pub seed: u64,
    pub selection: Selection,
}

/// Draws one synthetic dataset from each selected snapshot. The snapshots
/// must carry parameters (see `ParamRetention`).
pub fn synthesize_datasets(
    d: &Dataset,
    snapshots: &[Snapshot],
    l: usize,
    mode: Selection,
    rules: &RuleSet,
    seed: u64,
    cap: u64,
) -> Result<SyntheticDatasetSet> {
    let mut rng = seeded(seed);
    let with_params: Vec<&Snapshot> = snapshots.iter().filter(|s| s.params.is_some()).collect();
    let picks = select_snapshots(with_params.len(), l, mode, &mut rng)?;
    let mut datasets = Vec::with_capacity(l);
    let mut iterations = Vec::with_capacity(l);
    for &i in &picks {
        let snap = with_params[i];
        let params = snap.params.as_ref().expect("filtered on params");
        let z = generate_synthetic(params, d, rules, &mut rng, cap)?;
        datasets.push(z);
        iterations.push(snap.iteration);
    }
    Ok(SyntheticDatasetSet {
        datasets,
        iterations,
        seed,
        selection: mode,
    })
}

/// What a set of written datasets came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputManifest {
    pub kind: String,
    pub seed: u64,
    pub selection: Selection,
    pub iterations: Vec<usize>,
    pub files: Vec<String>,
}

/// Writes `<stem>.<tag><l>.csv` for l = 1..L into `dir`, plus
/// `<stem>.<tag>.manifest.json`. Returns the data file paths.
pub fn write_datasets(
    datasets: &[Dataset],
    iterations: &[usize],
    seed: u64,
    selection: Selection,
    dir: &Path,
    stem: &str,
    tag: &str,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(datasets.len());
    for (l, z) in datasets.iter().enumerate() {
        let path = dir.join(format!("{stem}.{tag}{}.csv", l + 1));
        write_dataset(z, BufWriter::new(File::create(&path)?))?;
        paths.push(path);
    }
    let manifest = OutputManifest {
        kind: tag.to_string(),
        seed,
        selection,
        iterations: iterations.to_vec(),
        files: paths
            .iter()
            .map(|p| {
                p.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
    };
    let mpath = dir.join(format!("{stem}.{tag}.manifest.json"));
    serde_json::to_writer_pretty(BufWriter::new(File::create(mpath)?), &manifest)
        .map_err(|e| Error::Io(e.into()))?;
    Ok(paths)
}

impl CompletedDatasetSet {
    /// Writes `<stem>.imp<l>.csv` files and a manifest.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        write_datasets(
            &self.datasets,
            &self.iterations,
            self.seed,
            self.selection,
            dir,
            stem,
            "imp",
        )
    }
}

impl SyntheticDatasetSet {
    /// Writes `<stem>.syn<l>.csv` files and a manifest.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        write_datasets(
            &self.datasets,
            &self.iterations,
            self.seed,
            self.selection,
            dir,
            stem,
            "syn",
        )
    }
}
