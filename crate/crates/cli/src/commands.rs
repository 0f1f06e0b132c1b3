//! Subcommand implementations.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use nested_impute::gibbs::{
    read_trace, resume_chain, run_chain, summarize_trace, write_trace, ChainCheckpoint,
    ChainOutput, ColumnSummary, ParamRetention, SamplerConfig,
};
use nested_impute::impute::{
    emit_completed_datasets, generate_synthetic, retained_iteration, select_snapshots,
    write_datasets, OutputManifest, Selection,
};
use nested_impute::mi::{
    census_predicates, estimand_suite, estimate_on_dataset, evaluate, parse_estimands,
    write_results, Estimand, MIResult, SuiteOptions,
};
use nested_impute::model::{write_params, ModelParams};
use nested_impute::rng::{derive, seeded};
use nested_impute::rules::RuleSet;
use nested_impute::schema::{
    head_moved_schema, head_to_household_transform, parse_schema, read_dataset, write_dataset,
    Dataset, DatasetSchema,
};
use nested_impute::simtools::{
    apply_mcar, apply_stress_mechanism, census_population, sample_households, sample_population,
    CENSUS_SCHEMA, IMPUTATION_RULES, SYNTHETIC_RULES, SYNTHETIC_SCHEMA,
};

use crate::config::{Config, ModelSection};
use crate::error::CliError;
use crate::manifest::{hash_all, sha256_bytes, RunManifest};

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Flags {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub bench: bool,
    pub checkpoint_every: Option<usize>,
}

/// One invocation: its configuration and the files it reads and writes.
pub struct Run {
    pub command: String,
    pub cfg: Config,
    pub config_path: PathBuf,
    pub config_bytes: Vec<u8>,
    pub flags: Flags,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Run {
    pub fn new(command: &str, config_path: &Path, flags: Flags) -> Result<Self, CliError> {
        let (cfg, config_bytes) = Config::load(config_path)?;
        Ok(Self {
            command: command.to_string(),
            cfg,
            config_path: config_path.to_path_buf(),
            config_bytes,
            flags,
            inputs: vec![config_path.to_path_buf()],
            outputs: Vec::new(),
        })
    }

    pub fn seed(&self) -> u64 {
        self.flags.seed.or(self.cfg.seed).unwrap_or(0)
    }

    fn input(&mut self, p: &Path) -> Result<File, CliError> {
        let f = File::open(p).map_err(|e| CliError::io(p, e))?;
        self.inputs.push(p.to_path_buf());
        Ok(f)
    }

    /// Registers an output path, refusing to overwrite an input.
    fn output(&mut self, p: &Path) -> Result<PathBuf, CliError> {
        let target = normalize(p);
        if self.inputs.iter().any(|i| normalize(i) == target) {
            return Err(CliError::Usage(format!(
                "refusing to overwrite input file {}",
                p.display()
            )));
        }
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        self.outputs.push(p.to_path_buf());
        Ok(p.to_path_buf())
    }

    fn create(&mut self, p: &Path) -> Result<BufWriter<File>, CliError> {
        let p = self.output(p)?;
        Ok(BufWriter::new(
            File::create(&p).map_err(|e| CliError::io(&p, e))?,
        ))
    }

    fn finish(self, manifest_path: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed(),
            threads: self.flags.threads,
            bench: self.flags.bench,
            config: self.config_path.display().to_string(),
            config_sha256: sha256_bytes(&self.config_bytes),
            inputs: hash_all(&self.inputs)?,
            outputs: hash_all(&self.outputs)?,
        };
        manifest.write(manifest_path)?;
        log::info!("wrote {}", manifest_path.display());
        Ok(())
    }

    fn schema(&mut self) -> Result<Arc<DatasetSchema>, CliError> {
        let sec = self.cfg.section(&self.cfg.schema, "schema")?.clone();
        let text = match (&sec.path, sec.builtin.as_deref()) {
            (Some(p), None) => {
                let p = self.cfg.resolve(p);
                self.inputs.push(p.clone());
                std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?
            }
            (None, Some("census")) => CENSUS_SCHEMA.to_string(),
            (None, Some("synthetic")) => SYNTHETIC_SCHEMA.to_string(),
            (None, Some(other)) => {
                return Err(CliError::Config(format!(
                    "unknown built-in schema {other:?}"
                )))
            }
            _ => {
                return Err(CliError::Config(
                    "[schema] needs exactly one of `path` or `builtin`".into(),
                ))
            }
        };
        Ok(Arc::new(parse_schema(&text)?))
    }

    fn rules_text(&mut self) -> Result<String, CliError> {
        let sec = self.cfg.section(&self.cfg.rules, "rules")?.clone();
        match (&sec.path, sec.builtin.as_deref()) {
            (Some(p), None) => {
                let p = self.cfg.resolve(p);
                self.inputs.push(p.clone());
                std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))
            }
            (None, Some("imputation")) => Ok(IMPUTATION_RULES.to_string()),
            (None, Some("synthetic")) => Ok(SYNTHETIC_RULES.to_string()),
            (None, Some("none")) => Ok(String::new()),
            (None, Some(other)) => Err(CliError::Config(format!(
                "unknown built-in rule set {other:?}"
            ))),
            _ => Err(CliError::Config(
                "[rules] needs exactly one of `path` or `builtin`".into(),
            )),
        }
    }

    fn read_data(&mut self, schema: &Arc<DatasetSchema>, p: &Path) -> Result<Dataset, CliError> {
        let f = self.input(p)?;
        Ok(read_dataset(Arc::clone(schema), BufReader::new(f))?)
    }

    fn model(&self) -> ModelSection {
        self.cfg.model.clone().unwrap_or_default()
    }

    fn sampler_config(&self) -> Result<SamplerConfig, CliError> {
        let sec = self.cfg.section(&self.cfg.sampler, "sampler")?;
        let mut c = sec.sampler_config(self.seed())?;
        if self.flags.bench {
            c.bench = true;
        }
        if let Some(k) = self.flags.checkpoint_every {
            c.checkpoint_every = Some(k);
        }
        if self.flags.threads == Some(1) {
            c.parallel_augmentation = false;
            c.parallel_households = false;
        }
        Ok(c)
    }
}

fn normalize(p: &Path) -> PathBuf {
    if let Ok(c) = p.canonicalize() {
        return c;
    }
    match (p.parent(), p.file_name()) {
        (Some(dir), Some(name)) if !dir.as_os_str().is_empty() => dir
            .canonicalize()
            .map(|d| d.join(name))
            .unwrap_or_else(|_| p.to_path_buf()),
        _ => p.to_path_buf(),
    }
}

/// Data, rules and sampler state shared by `impute` and `synthesize`.
struct Prepared {
    work: Dataset,
    rules: RuleSet,
    sampler: SamplerConfig,
    dir: PathBuf,
    stem: String,
}

fn prepare(run: &mut Run) -> Result<Prepared, CliError> {
    let schema = run.schema()?;
    let data_sec = run.cfg.section(&run.cfg.data, "data")?.clone();
    let out = run.cfg.section(&run.cfg.output, "output")?.clone();
    let sampler = run.sampler_config()?;
    let head_move = run.cfg.section(&run.cfg.sampler, "sampler")?.head_move;
    let rules_text = run.rules_text()?;
    let d = run.read_data(&schema, &run.cfg.resolve(&data_sec.path))?;
    let work = if head_move {
        head_to_household_transform(&d)?
    } else {
        d
    };
    let rules = RuleSet::from_text(&rules_text, &work.schema)?;
    log::info!(
        "{} households, {} individuals, {} missing cells, {} active rules",
        work.n(),
        work.total_individuals(),
        work.missing_cells(),
        rules.len() - rules.eliminated().len()
    );
    Ok(Prepared {
        work,
        rules,
        sampler,
        dir: run.cfg.resolve(&out.dir),
        stem: out.stem,
    })
}

fn run_sampler(run: &mut Run, p: &Prepared) -> Result<ChainOutput, CliError> {
    let hp = run.model().hyperparams();
    let ckpt_path = p.dir.join(format!("{}.checkpoint.json", p.stem));
    std::fs::create_dir_all(&p.dir).map_err(|e| CliError::io(&p.dir, e))?;
    let mut save = |c: &ChainCheckpoint| -> nested_impute::Result<()> {
        let tmp = ckpt_path.with_extension("json.tmp");
        c.write(BufWriter::new(File::create(&tmp)?))?;
        std::fs::rename(&tmp, &ckpt_path)?;
        log::info!("checkpoint at iteration {}", c.iteration);
        Ok(())
    };
    let resume = run.cfg.section(&run.cfg.sampler, "sampler")?.resume.clone();
    let out = match resume {
        Some(r) => {
            let r = run.cfg.resolve(&r);
            let ckpt = ChainCheckpoint::read(BufReader::new(run.input(&r)?))?;
            log::info!("resuming from iteration {}", ckpt.iteration);
            resume_chain(&p.work, &p.rules, hp, p.sampler.clone(), ckpt, &mut save)?
        }
        None => run_chain(&p.work, &p.rules, hp, p.sampler.clone(), &mut save)?,
    };
    let trace = run.create(&p.dir.join(format!("{}.trace.csv", p.stem)))?;
    write_trace(&out.trace, trace)?;
    let params = run.create(&p.dir.join(format!("{}.params.txt", p.stem)))?;
    write_params(&out.final_params, &hp, params)?;
    if p.sampler.bench {
        let s1: f64 = out.trace.iter().map(|r| r.s1_seconds).sum();
        let s9: f64 = out.trace.iter().map(|r| r.s9_seconds).sum();
        println!(
            "bench: S1 {s1:.3} s, S9 {s9:.3} s over {} iterations",
            out.trace.len()
        );
    }
    Ok(out)
}

fn register_written(
    run: &mut Run,
    dir: &Path,
    stem: &str,
    tag: &str,
    files: &[PathBuf],
) -> Result<(), CliError> {
    for f in files {
        run.output(f)?;
    }
    run.output(&dir.join(format!("{stem}.{tag}.manifest.json")))?;
    Ok(())
}

pub fn cmd_impute(mut run: Run) -> Result<(), CliError> {
    let p = prepare(&mut run)?;
    let out_sec = run.cfg.section(&run.cfg.output, "output")?.clone();
    let out = run_sampler(&mut run, &p)?;
    let set = emit_completed_datasets(
        &p.work,
        &out.snapshots,
        out_sec.datasets,
        out_sec.selection.unwrap_or(Selection::Even),
        &p.rules,
        run.seed(),
    )?;
    let files = set.write(&p.dir, &p.stem)?;
    register_written(&mut run, &p.dir, &p.stem, "imp", &files)?;
    println!(
        "wrote {} completed datasets to {}",
        files.len(),
        p.dir.display()
    );
    let manifest = p.dir.join(format!("{}.impute.run.json", p.stem));
    run.finish(&manifest)
}

pub fn cmd_synthesize(mut run: Run) -> Result<(), CliError> {
    let mut p = prepare(&mut run)?;
    if p.work.missing_cells() > 0 && !p.sampler.impute {
        return Err(CliError::Usage(
            "synthesis needs complete data; the input has missing values and sampler.impute is false".into(),
        ));
    }
    let out_sec = run.cfg.section(&run.cfg.output, "output")?.clone();
    let mode = out_sec.selection.unwrap_or(Selection::Random);
    let l = out_sec.datasets;
    let picks = select_snapshots(
        p.sampler.retained_count(),
        l,
        mode,
        &mut derive(run.seed(), &[0x5e1ec7]),
    )?;
    let keep: BTreeSet<usize> = picks
        .iter()
        .map(|&i| retained_iteration(&p.sampler, i))
        .collect();
    p.sampler.retain_params = ParamRetention::Iterations(keep);
    let out = run_sampler(&mut run, &p)?;
    let cap = p.sampler.augment_cap;
    let mut datasets = Vec::with_capacity(l);
    let mut iterations = Vec::with_capacity(l);
    for snap in out.snapshots.iter().filter(|s| s.params.is_some()) {
        let params = snap.params.as_ref().expect("filtered on params");
        let mut rng = derive(run.seed(), &[snap.iteration as u64]);
        datasets.push(generate_synthetic(
            params, &p.work, &p.rules, &mut rng, cap,
        )?);
        iterations.push(snap.iteration);
    }
    let files = write_datasets(
        &datasets,
        &iterations,
        run.seed(),
        mode,
        &p.dir,
        &p.stem,
        "syn",
    )?;
    register_written(&mut run, &p.dir, &p.stem, "syn", &files)?;
    println!(
        "wrote {} synthetic datasets to {}",
        files.len(),
        p.dir.display()
    );
    let manifest = p.dir.join(format!("{}.synthesize.run.json", p.stem));
    run.finish(&manifest)
}

fn dataset_paths(
    run: &mut Run,
    manifest: &Option<PathBuf>,
    listed: &[PathBuf],
) -> Result<Vec<PathBuf>, CliError> {
    if let Some(m) = manifest {
        let m = run.cfg.resolve(m);
        let f = run.input(&m)?;
        let man: OutputManifest = serde_json::from_reader(BufReader::new(f))
            .map_err(|e| CliError::Config(format!("{}: {e}", m.display())))?;
        let dir = m.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(man.files.iter().map(|f| dir.join(f)).collect())
    } else {
        Ok(listed.iter().map(|p| run.cfg.resolve(p)).collect())
    }
}

#[derive(Serialize)]
struct CoverageRow<'a> {
    estimand: &'a str,
    q_bar: f64,
    b: f64,
    u_bar: f64,
    t: f64,
    df: f64,
    lo: f64,
    hi: f64,
    truth: f64,
    covered: bool,
}

fn write_with_truth(
    rows: &[(String, MIResult)],
    truth: &[f64],
    w: impl Write,
) -> Result<usize, CliError> {
    let mut out = csv::Writer::from_writer(w);
    let mut covered = 0;
    for ((name, r), &q) in rows.iter().zip(truth) {
        let c = r.lo <= q && q <= r.hi;
        covered += c as usize;
        out.serialize(CoverageRow {
            estimand: name,
            q_bar: r.q_bar,
            b: r.b,
            u_bar: r.u_bar,
            t: r.t,
            df: r.df,
            lo: r.lo,
            hi: r.hi,
            truth: q,
            covered: c,
        })
        .map_err(nested_impute::Error::from)?;
    }
    out.flush().map_err(nested_impute::Error::from)?;
    Ok(covered)
}

pub fn cmd_evaluate(mut run: Run) -> Result<(), CliError> {
    let schema = run.schema()?;
    let sec = run.cfg.section(&run.cfg.evaluate, "evaluate")?.clone();
    let paths = dataset_paths(&mut run, &sec.manifest, &sec.datasets)?;
    if paths.is_empty() {
        return Err(CliError::Config(
            "[evaluate] needs `manifest` or `datasets`".into(),
        ));
    }
    let datasets = paths
        .iter()
        .map(|p| run.read_data(&schema, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut predicates: Vec<Estimand> = Vec::new();
    if let Some(e) = &sec.estimands {
        let e = run.cfg.resolve(e);
        let text = std::fs::read_to_string(&e).map_err(|err| CliError::io(&e, err))?;
        run.inputs.push(e);
        predicates.extend(parse_estimands(&text, &schema)?);
    }
    if sec.census_predicates {
        predicates.extend(census_predicates(&schema)?);
    }
    let estimands = if sec.suite {
        let opts = SuiteOptions {
            marginals: true,
            pairs: sec.pairs,
            triples: sec.triples,
            max_per_order: sec.max_per_order,
            seed: run.seed(),
        };
        estimand_suite(&schema, &opts, &predicates)?
    } else {
        predicates
    };
    if estimands.is_empty() {
        return Err(CliError::Config(
            "[evaluate] defines no estimands; set `estimands`, `census_predicates` or `suite`"
                .into(),
        ));
    }
    let rows = evaluate(&datasets, &estimands, sec.gamma, sec.combiner)?;
    let out_path = run.cfg.resolve(&sec.output);
    if let Some(t) = &sec.truth {
        let t = run.cfg.resolve(t);
        let truth = run.read_data(&schema, &t)?;
        let values = estimands
            .iter()
            .map(|e| estimate_on_dataset(&truth, e).map(|x| x.0))
            .collect::<Result<Vec<_>, _>>()?;
        let w = run.create(&out_path)?;
        let covered = write_with_truth(&rows, &values, w)?;
        println!(
            "{} estimands, {} intervals cover the true value ({:.1}%)",
            rows.len(),
            covered,
            100.0 * covered as f64 / rows.len() as f64
        );
    } else {
        let w = run.create(&out_path)?;
        write_results(&rows, w)?;
        println!(
            "{} estimands pooled over {} datasets",
            rows.len(),
            datasets.len()
        );
    }
    let manifest = out_path.with_extension("run.json");
    run.finish(&manifest)
}

pub fn cmd_simulate(mut run: Run) -> Result<(), CliError> {
    let sec = run.cfg.section(&run.cfg.simulate, "simulate")?.clone();
    let mut rng = seeded(run.seed());
    let pop = match sec.kind.as_str() {
        "census" => {
            let n = sec.households.ok_or_else(|| {
                CliError::Config("[simulate] kind census needs `households`".into())
            })?;
            census_population(n, &mut rng)?
        }
        "model" => {
            let schema = run.schema()?;
            let text = run.rules_text()?;
            let work = if sec.head_move {
                Arc::new(head_moved_schema(&schema)?)
            } else {
                schema
            };
            let rules = RuleSet::from_text(&text, &work)?;
            let hp = run.model().hyperparams();
            let params = ModelParams::init_from_prior(&hp, &work, &mut rng)?;
            let mut counts = BTreeMap::new();
            for (h, &c) in &sec.sizes {
                let h: usize = h.parse().map_err(|_| {
                    CliError::Config(format!("simulate.sizes key {h:?} is not a household size"))
                })?;
                counts.insert(h, c);
            }
            if counts.is_empty() {
                return Err(CliError::Config(
                    "[simulate] kind model needs `sizes`".into(),
                ));
            }
            if let Some(pp) = &sec.params {
                let w = run.create(&run.cfg.resolve(pp))?;
                write_params(&params, &hp, w)?;
            }
            let cap = run
                .cfg
                .sampler
                .as_ref()
                .and_then(|s| s.augment_cap)
                .unwrap_or(nested_impute::gibbs::DEFAULT_AUGMENT_CAP);
            sample_population(&params, &work, &rules, &counts, &mut rng, cap)?
        }
        other => return Err(CliError::Config(format!("unknown simulate.kind {other:?}"))),
    };
    if let Some(pp) = &sec.population {
        let w = run.create(&run.cfg.resolve(pp))?;
        write_dataset(&pop, w)?;
    }
    let truth = match sec.sample {
        Some(n) => sample_households(&pop, n, &mut rng)?,
        None => pop,
    };
    let masked = match sec.mechanism.as_str() {
        "none" => truth.clone(),
        "mcar" => apply_mcar(&truth, sec.complete_frac, sec.rate, &mut rng)?,
        "stress" => apply_stress_mechanism(&truth, &mut rng)?,
        other => {
            return Err(CliError::Config(format!(
                "unknown simulate.mechanism {other:?}"
            )))
        }
    };
    if let Some(t) = &sec.truth {
        let w = run.create(&run.cfg.resolve(t))?;
        write_dataset(&truth, w)?;
    }
    let out_path = run.cfg.resolve(&sec.output);
    let w = run.create(&out_path)?;
    write_dataset(&masked, w)?;
    println!(
        "simulated {} households ({} missing cells) into {}",
        masked.n(),
        masked.missing_cells(),
        out_path.display()
    );
    let manifest = out_path.with_extension("run.json");
    run.finish(&manifest)
}

#[derive(Serialize)]
struct FeasibilityRow {
    file: String,
    households: usize,
    infeasible: usize,
}

#[derive(Serialize)]
struct DiagnoseReport {
    trace: Vec<ColumnSummary>,
    feasibility: Vec<FeasibilityRow>,
}

pub fn cmd_diagnose(mut run: Run) -> Result<(), CliError> {
    let sec = run.cfg.section(&run.cfg.diagnose, "diagnose")?.clone();
    let mut report = DiagnoseReport {
        trace: Vec::new(),
        feasibility: Vec::new(),
    };
    if let Some(t) = &sec.trace {
        let t = run.cfg.resolve(t);
        let rows = read_trace(BufReader::new(run.input(&t)?))?;
        report.trace = summarize_trace(&rows, sec.burn_in);
        println!(
            "{:<22} {:>12} {:>12} {:>12} {:>12} {:>9}",
            "column", "mean", "sd", "min", "max", "ess"
        );
        for c in &report.trace {
            println!(
                "{:<22} {:>12.5} {:>12.5} {:>12.5} {:>12.5} {:>9.1}",
                c.column, c.mean, c.sd, c.min, c.max, c.ess
            );
        }
    }
    let paths = dataset_paths(&mut run, &sec.manifest, &sec.datasets)?;
    if !paths.is_empty() {
        let schema = run.schema()?;
        let text = run.rules_text()?;
        let rules = RuleSet::from_text(&text, &schema)?;
        for p in &paths {
            let d = run.read_data(&schema, p)?;
            let mut bad = 0;
            for h in d.households() {
                if h.is_complete() && !rules.is_feasible(h)? {
                    bad += 1;
                }
            }
            println!(
                "{}: {} households, {} violate the rules",
                p.display(),
                d.n(),
                bad
            );
            report.feasibility.push(FeasibilityRow {
                file: p.display().to_string(),
                households: d.n(),
                infeasible: bad,
            });
        }
    }
    if report.trace.is_empty() && report.feasibility.is_empty() {
        return Err(CliError::Config(
            "[diagnose] needs `trace`, `manifest` or `datasets`".into(),
        ));
    }
    let out_path = run.cfg.resolve(&sec.output);
    let w = run.create(&out_path)?;
    serde_json::to_writer_pretty(w, &report)
        .map_err(|e| CliError::io(&out_path, std::io::Error::other(e)))?;
    let infeasible: usize = report.feasibility.iter().map(|r| r.infeasible).sum();
    let manifest = out_path.with_extension("run.json");
    run.finish(&manifest)?;
    if infeasible > 0 {
        return Err(CliError::Usage(format!(
            "{infeasible} households violate the rules"
        )));
    }
    Ok(())
}
