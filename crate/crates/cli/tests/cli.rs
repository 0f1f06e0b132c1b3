use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nested-impute"))
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    out
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates a census-like sample with stress-mechanism gaps.
fn simulate(dir: &Path, n: usize, mechanism: &str) -> PathBuf {
    let cfg = write(
        dir,
        "sim.toml",
        &format!(
            "seed = 3\n[simulate]\nkind = \"census\"\nhouseholds = {n}\nmechanism = \"{mechanism}\"\n\
             output = \"sample.csv\"\ntruth = \"truth.csv\"\n"
        ),
    );
    ok(&["simulate", "--config", s(&cfg)]);
    dir.join("sample.csv")
}

fn impute_config(dir: &Path, out: &str, extra: &str) -> PathBuf {
    write(
        dir,
        &format!("{out}.toml"),
        &format!(
            "[schema]\nbuiltin = \"census\"\n[data]\npath = \"sample.csv\"\n[rules]\nbuiltin = \"imputation\"\n\
             [model]\nf = 4\ns = 2\n[sampler]\niterations = 40\nburn_in = 20\nthin = 2\n\
             psi = {{ 2 = \"1/2\", 3 = \"1/2\", 4 = \"1/3\" }}\nprobes = 3\n{extra}\n\
             [output]\ndir = \"{out}\"\nstem = \"run\"\ndatasets = 5\n"
        ),
    )
}

#[test]
fn simulate_writes_data_and_a_manifest() {
    let dir = TempDir::new().unwrap();
    let sample = simulate(dir.path(), 150, "stress");
    let text = fs::read_to_string(&sample).unwrap();
    assert!(text.starts_with("hh_id,person_idx,"));
    assert!(text.contains("NA"));
    let truth = fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    assert!(!truth.contains("NA"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sample.run.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);
}

#[test]
fn impute_end_to_end_and_feasible() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), 120, "stress");
    let cfg = impute_config(dir.path(), "out", "");
    let stdout = ok(&[
        "impute",
        "--config",
        s(&cfg),
        "--seed",
        "7",
        "--threads",
        "1",
    ]);
    assert!(stdout.contains("wrote 5 completed datasets"));
    let out = dir.path().join("out");
    for l in 1..=5 {
        let f = fs::read_to_string(out.join(format!("run.imp{l}.csv"))).unwrap();
        assert!(!f.contains("NA"));
    }
    assert!(out.join("run.imp.manifest.json").exists());
    assert!(out.join("run.trace.csv").exists());
    assert!(out.join("run.params.txt").exists());
    let run: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("run.impute.run.json")).unwrap())
            .unwrap();
    assert_eq!(run["seed"], 7);
    assert_eq!(run["threads"], 1);
    let diag = write(
        dir.path(),
        "diag.toml",
        "[schema]\nbuiltin = \"census\"\n[rules]\nbuiltin = \"imputation\"\n\
         [diagnose]\ntrace = \"out/run.trace.csv\"\nburn_in = 20\nmanifest = \"out/run.imp.manifest.json\"\n\
         output = \"diag.json\"\n",
    );
    let stdout = ok(&["diagnose", "--config", s(&diag)]);
    assert!(stdout.contains("alpha"));
    assert_eq!(stdout.matches("0 violate the rules").count(), 5);
}

#[test]
fn fixed_seed_single_thread_runs_are_identical() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), 80, "stress");
    let a = impute_config(dir.path(), "a", "");
    let b = impute_config(dir.path(), "b", "");
    ok(&["impute", "--config", s(&a), "--seed", "7", "--threads", "1"]);
    ok(&["impute", "--config", s(&b), "--seed", "7", "--threads", "1"]);
    let names = [
        "run.imp1.csv",
        "run.imp5.csv",
        "run.trace.csv",
        "run.params.txt",
        "run.imp.manifest.json",
    ];
    for name in names {
        let x = fs::read(dir.path().join("a").join(name)).unwrap();
        let y = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn checkpoint_resume_matches_an_uninterrupted_run() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), 60, "stress");
    let full = impute_config(dir.path(), "full", "");
    ok(&[
        "impute",
        "--config",
        s(&full),
        "--seed",
        "5",
        "--threads",
        "1",
        "--checkpoint-every",
        "30",
    ]);
    let ckpt = dir.path().join("full").join("run.checkpoint.json");
    assert!(ckpt.exists());
    // The last checkpoint is at iteration 30; continue from it.
    let resumed = impute_config(
        dir.path(),
        "resumed",
        "resume = \"full/run.checkpoint.json\"",
    );
    ok(&[
        "impute",
        "--config",
        s(&resumed),
        "--seed",
        "5",
        "--threads",
        "1",
    ]);
    for name in ["run.imp1.csv", "run.imp5.csv", "run.params.txt"] {
        let x = fs::read(dir.path().join("full").join(name)).unwrap();
        let y = fs::read(dir.path().join("resumed").join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
}

#[test]
fn missing_config_key_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "[schema]\nbuiltin = \"census\"\n[data]\n[output]\ndir = \"o\"\n",
    );
    let out = run(&["impute", "--config", s(&cfg)]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("missing field `path`") && err.contains("[data]"),
        "{err}"
    );
    let cfg = write(
        dir.path(),
        "nosampler.toml",
        "[schema]\nbuiltin = \"census\"\n",
    );
    let out = run(&["impute", "--config", s(&cfg)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing section [data]"));
}

#[test]
fn inputs_are_never_overwritten() {
    let dir = TempDir::new().unwrap();
    let sample = simulate(dir.path(), 30, "none");
    let before = fs::read(&sample).unwrap();
    let cfg = write(
        dir.path(),
        "over.toml",
        "[schema]\nbuiltin = \"census\"\n[evaluate]\ndatasets = [\"sample.csv\", \"sample.csv\"]\n\
         census_predicates = true\noutput = \"sample.csv\"\n",
    );
    let out = run(&["evaluate", "--config", s(&cfg)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing to overwrite"));
    assert_eq!(fs::read(&sample).unwrap(), before);
}

#[test]
fn evaluate_identical_copies_and_combiners() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), 200, "none");
    write(
        dir.path(),
        "est.txt",
        "household SP present: count relationship {spouse} min=1\ncell own=owned\n",
    );
    let cfg = |name: &str, combiner: &str| {
        write(
            dir.path(),
            &format!("{name}.toml"),
            &format!(
                "[schema]\nbuiltin = \"census\"\n[evaluate]\ndatasets = [\"truth.csv\", \"truth.csv\", \"truth.csv\"]\n\
                 estimands = \"est.txt\"\ncombiner = \"{combiner}\"\ntruth = \"truth.csv\"\noutput = \"{name}.csv\"\n"
            ),
        )
    };
    let stdout = ok(&["evaluate", "--config", s(&cfg("rubin", "rubin"))]);
    assert!(stdout.contains("2 intervals cover"));
    let table = fs::read_to_string(dir.path().join("rubin.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("estimand,q_bar,b,u_bar,t,df,lo,hi,truth,covered"));
    // b = 0: the interval is the single-dataset Wald interval.
    let f: Vec<&str> = lines[1].split(',').collect();
    let (q, u, lo): (f64, f64, f64) = (
        f[1].parse().unwrap(),
        f[3].parse().unwrap(),
        f[6].parse().unwrap(),
    );
    assert_eq!(f[2].parse::<f64>().unwrap(), 0.0);
    assert!((lo - (q - 1.959_963_984_540_054 * u.sqrt())).abs() < 1e-12);

    // Different estimates per dataset: the combiners give different T.
    let sim2 = write(
        dir.path(),
        "sim2.toml",
        "seed = 4\n[simulate]\nkind = \"census\"\nhouseholds = 200\noutput = \"other.csv\"\n",
    );
    ok(&["simulate", "--config", s(&sim2)]);
    let two = |name: &str, combiner: &str| {
        write(
            dir.path(),
            &format!("{name}.toml"),
            &format!(
                "[schema]\nbuiltin = \"census\"\n[evaluate]\ndatasets = [\"truth.csv\", \"other.csv\"]\n\
                 estimands = \"est.txt\"\ncombiner = \"{combiner}\"\noutput = \"{name}.csv\"\n"
            ),
        )
    };
    ok(&["evaluate", "--config", s(&two("r2", "rubin"))]);
    ok(&["evaluate", "--config", s(&two("p2", "partial_synth"))]);
    let t = |name: &str| -> f64 {
        let text = fs::read_to_string(dir.path().join(format!("{name}.csv"))).unwrap();
        text.lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(4)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert_ne!(t("r2"), t("p2"));
}

#[test]
fn synthesize_keeps_size_counts_and_needs_complete_data() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), 80, "none");
    let cfg = impute_config(dir.path(), "syn", "");
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, text.replace("datasets = 5", "datasets = 3")).unwrap();
    let stdout = ok(&[
        "synthesize",
        "--config",
        s(&cfg),
        "--seed",
        "2",
        "--threads",
        "1",
    ]);
    assert!(stdout.contains("wrote 3 synthetic datasets"));
    let size_counts = |p: &Path| {
        let text = fs::read_to_string(p).unwrap();
        let mut m = std::collections::BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for line in text.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            if seen.insert(f[0].to_string()) {
                *m.entry(f[2].to_string()).or_insert(0) += 1;
            }
        }
        m
    };
    let want = size_counts(&dir.path().join("sample.csv"));
    for l in 1..=3 {
        assert_eq!(
            size_counts(&dir.path().join(format!("syn/run.syn{l}.csv"))),
            want
        );
    }
    let man: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("syn/run.syn.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(man["selection"], "random");

    simulate(dir.path(), 80, "stress");
    let masked = impute_config(dir.path(), "nosyn", "impute = false");
    let out = run(&["synthesize", "--config", s(&masked), "--seed", "2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("needs complete data"));
}

#[test]
fn study_style_configs_are_accepted() {
    let dir = TempDir::new().unwrap();
    simulate(dir.path(), 60, "stress");
    // The imputation study: F = 30, S = 15, 10000/5000/5, L = 50, psi 1/2, 1/2, 1/3,
    // scaled down in iterations only.
    let cfg = write(
        dir.path(),
        "study.toml",
        "[schema]\nbuiltin = \"census\"\n[data]\npath = \"sample.csv\"\n[rules]\nbuiltin = \"imputation\"\n\
         [model]\nf = 30\ns = 15\n[sampler]\niterations = 110\nburn_in = 10\nthin = 2\n\
         psi = { 2 = \"1/2\", 3 = \"1/2\", 4 = \"1/3\" }\n[output]\ndir = \"study\"\ndatasets = 50\n",
    );
    ok(&["impute", "--config", s(&cfg), "--seed", "1", "--bench"]);
    assert!(dir.path().join("study/run.imp50.csv").exists());
    // The synthesis study: F = 40, S = 15, random selection.
    let syn = write(
        dir.path(),
        "synstudy.toml",
        "[schema]\nbuiltin = \"census\"\n[data]\npath = \"truth.csv\"\n[rules]\nbuiltin = \"imputation\"\n\
         [model]\nf = 40\ns = 15\n[sampler]\niterations = 30\nburn_in = 10\nthin = 5\n\
         [output]\ndir = \"synstudy\"\ndatasets = 2\nselection = \"random\"\n",
    );
    ok(&["synthesize", "--config", s(&syn), "--seed", "1"]);
    assert!(dir.path().join("synstudy/run.syn2.csv").exists());
}
