use std::collections::HashMap;
use std::sync::Arc;

use super::*;
use crate::model::{Hyperparams, ModelParams};
use crate::rng::seeded;
use crate::rules::RuleSet;
use crate::schema::{
    parse_schema, Dataset, DatasetSchema, Household, MissingnessMask, Record, MISSING,
};

// Index 0 is the generated size variable (levels 1, 2), index 1 is own.
const TINY: &str = "var own scope=household levels=o,r\n\
    var a scope=individual levels=x,y\nvar b scope=individual levels=x,y\nsizes=1,2\n";

/// Forbids anyone with a = y and b = y.
const NO_YY: &str = "valuepair each.a each.b forbid={(y,y)}\n";

fn tiny() -> Arc<DatasetSchema> {
    Arc::new(parse_schema(TINY).unwrap())
}

fn record(id: &str, size: usize, own: u16, rows: &[[u16; 2]]) -> Record {
    let h = Household {
        id: id.into(),
        size,
        household_values: vec![(size - 1) as u16, own],
        individuals: rows.iter().map(|r| r.to_vec()).collect(),
    };
    let mask = MissingnessMask::of(&h);
    Record { household: h, mask }
}

/// Thirty feasible households, a few with masked cells.
fn small_data(masked: bool) -> Dataset {
    let mut recs = Vec::new();
    for i in 0..30 {
        let size = 1 + i % 2;
        let own = (i % 3 == 0) as u16;
        let rows: Vec<[u16; 2]> = (0..size)
            .map(|j| match (i + j) % 3 {
                0 => [0, 0],
                1 => [0, 1],
                _ => [1, 0],
            })
            .collect();
        let mut r = record(&format!("h{i}"), size, own, &rows);
        if masked && i % 4 == 0 {
            r.household.individuals[0][1] = MISSING;
            if i % 8 == 0 {
                r.household.household_values[1] = MISSING;
            }
            r.mask = MissingnessMask::of(&r.household);
        }
        recs.push(r);
    }
    Dataset::new(tiny(), recs).unwrap()
}

fn two_class(schema: &DatasetSchema) -> ModelParams {
    let mut p = ModelParams::uniform(schema, 2, 2);
    p.u = vec![0.3, 1.0];
    p.rebuild_pi();
    p.v = vec![0.6, 1.0, 0.25, 1.0];
    p.rebuild_omega();
    p.lambda[1] = vec![0.8, 0.2, 0.35, 0.65];
    p.lambda[0] = vec![0.4, 0.6, 0.7, 0.3];
    p.phi[0] = vec![0.9, 0.1, 0.2, 0.8, 0.5, 0.5, 0.3, 0.7];
    p.phi[1] = vec![0.15, 0.85, 0.6, 0.4, 0.75, 0.25, 0.45, 0.55];
    p.validate().unwrap();
    p
}

fn short_cfg(seed: u64) -> SamplerConfig {
    SamplerConfig {
        iterations: 30,
        burn_in: 10,
        thin: 2,
        seed,
        ..SamplerConfig::default()
    }
}

fn hp() -> Hyperparams {
    Hyperparams::with_classes(4, 3)
}

#[test]
fn psi_parsing_and_targets() {
    assert_eq!("0.5".parse::<Psi>().unwrap(), Psi::new(1, 2).unwrap());
    assert_eq!("2/3".parse::<Psi>().unwrap(), Psi { num: 2, den: 3 });
    assert_eq!("1".parse::<Psi>().unwrap(), Psi::ONE);
    assert_eq!("0.25".parse::<Psi>().unwrap(), Psi { num: 1, den: 4 });
    assert!("1.5".parse::<Psi>().is_err());
    assert!("0".parse::<Psi>().is_err());
    assert!("x".parse::<Psi>().is_err());
    let half = Psi::new(1, 2).unwrap();
    assert_eq!(half.target(7), 4);
    assert_eq!(half.target(8), 4);
    assert_eq!(Psi::new(1, 3).unwrap().target(3), 1);
    assert_eq!(Psi::new(1, 3).unwrap().target(4), 2);
    assert_eq!(Psi::ONE.target(9), 9);
    assert_eq!(half.weight(), 2.0);
    assert_eq!(half.to_string(), "1/2");
}

#[test]
fn retention_schedule() {
    let cfg = SamplerConfig {
        iterations: 10_000,
        burn_in: 5_000,
        thin: 5,
        ..SamplerConfig::default()
    };
    let kept: Vec<usize> = (1..=cfg.iterations).filter(|&t| cfg.retains(t)).collect();
    assert_eq!(kept.len(), 1000);
    assert_eq!(cfg.retained_count(), 1000);
    assert_eq!(kept[0], 5005);
    assert_eq!(*kept.last().unwrap(), 10_000);
}

#[test]
fn config_validation() {
    assert!(SamplerConfig::default().validate().is_ok());
    let bad = SamplerConfig {
        burn_in: 10_000,
        ..SamplerConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = SamplerConfig {
        thin: 0,
        ..SamplerConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn no_rules_means_no_augmentation() {
    let d = small_data(false);
    let p = two_class(&d.schema);
    let rules = RuleSet::empty(&d.schema);
    let cfg = short_cfg(1);
    let aug = augment_rejection(&d, &p, &rules, &cfg, &mut seeded(2)).unwrap();
    assert_eq!(aug.n0(), 0);
    assert!(aug.households.is_empty());
    for (h, n) in d.size_counts() {
        assert_eq!(aug.draws[&h], n as u64);
    }
}

#[test]
fn augmented_households_are_all_infeasible() {
    let d = small_data(false);
    let p = two_class(&d.schema);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let cfg = short_cfg(1);
    let aug = augment_rejection(&d, &p, &rules, &cfg, &mut seeded(4)).unwrap();
    assert!(aug.n0() > 0);
    for x in &aug.households {
        assert!(!rules.feasible_raw(&x.household_values, &x.rows));
        assert_eq!(x.rows.len(), 2 * x.size);
        assert_eq!(x.m.len(), x.size);
    }
    for (h, n1) in d.size_counts() {
        assert_eq!(aug.draws[&h], (n1 + aug.n0h[&h]) as u64);
    }
}

#[test]
fn capped_augmentation_stops_at_the_ceiling() {
    let d = small_data(false);
    let p = two_class(&d.schema);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let mut cfg = short_cfg(1);
    cfg.psi.insert(1, Psi::new(1, 4).unwrap());
    cfg.psi.insert(2, Psi::new(1, 3).unwrap());
    let aug = augment_rejection(&d, &p, &rules, &cfg, &mut seeded(5)).unwrap();
    // 15 households of each size: ⌈15/4⌉ = 4, ⌈15/3⌉ = 5 feasible draws.
    assert_eq!(aug.draws[&1], 4 + aug.n0h[&1] as u64);
    assert_eq!(aug.draws[&2], 5 + aug.n0h[&2] as u64);
}

#[test]
fn augmentation_cap_is_reported() {
    let d = small_data(false);
    let mut p = two_class(&d.schema);
    // Every person is (y, y): nothing is feasible.
    p.phi[0] = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    p.phi[1] = vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let mut cfg = short_cfg(1);
    cfg.augment_cap = 1000;
    let err = augment_rejection(&d, &p, &rules, &cfg, &mut seeded(5)).unwrap_err();
    assert!(matches!(err, crate::Error::AttemptCap { cap: 1000, .. }));
    cfg.parallel_augmentation = true;
    let err = augment_rejection(&d, &p, &rules, &cfg, &mut seeded(5)).unwrap_err();
    assert!(matches!(err, crate::Error::AttemptCap { cap: 1000, .. }));
}

#[test]
fn parallel_augmentation_meets_the_quota() {
    let d = small_data(false);
    let p = two_class(&d.schema);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let mut cfg = short_cfg(1);
    cfg.parallel_augmentation = true;
    let aug = augment_rejection(&d, &p, &rules, &cfg, &mut seeded(6)).unwrap();
    for x in &aug.households {
        assert!(!rules.feasible_raw(&x.household_values, &x.rows));
    }
    for (h, n1) in d.size_counts() {
        // Workers may overshoot the quota a little but never fall short.
        assert!(aug.draws[&h] >= (n1 + aug.n0h[&h]) as u64);
    }
}

/// Pr(G = g | X) computed with plain products.
fn class_posterior(p: &ModelParams, hh: &[u16], rows: &[[u16; 2]]) -> Vec<f64> {
    let mut w: Vec<f64> = (0..p.f)
        .map(|g| {
            let mut x = p.pi[g];
            for (k, &c) in hh.iter().enumerate() {
                x *= p.lambda_row(k, g)[c as usize];
            }
            for r in rows {
                let mut person = 0.0;
                for m in 0..p.s {
                    person += p.omega_row(g)[m]
                        * p.phi_row(0, g, m)[r[0] as usize]
                        * p.phi_row(1, g, m)[r[1] as usize];
                }
                x *= person;
            }
            x
        })
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

#[test]
fn class_assignment_matches_hand_posterior() {
    let s = tiny();
    let rec = record("a", 2, 1, &[[0, 1], [1, 1]]);
    let d = Dataset::new(s.clone(), vec![rec]).unwrap();
    let p = two_class(&s);
    let exact = class_posterior(&p, &[1, 1], &[[0, 1], [1, 1]]);
    let mut rng = seeded(9);
    let n = 200_000;
    let mut hits = 0usize;
    for _ in 0..n {
        hits += (assign_latent_classes(&d, &p, &mut rng, false).g[0] == 0) as usize;
    }
    let freq = hits as f64 / n as f64;
    let se = (exact[0] * (1.0 - exact[0]) / n as f64).sqrt();
    assert!((freq - exact[0]).abs() < 4.0 * se, "{freq} vs {}", exact[0]);
}

#[test]
fn member_classes_follow_their_conditional() {
    let s = tiny();
    let mut p = two_class(&s);
    // Force G = 0 so only the member step is random.
    p.u = vec![1.0, 1.0];
    p.rebuild_pi();
    let rec = record("a", 1, 0, &[[1, 0]]);
    let d = Dataset::new(s.clone(), vec![rec]).unwrap();
    let w: Vec<f64> = (0..2)
        .map(|m| p.omega_row(0)[m] * p.phi_row(0, 0, m)[1] * p.phi_row(1, 0, m)[0])
        .collect();
    let exact = w[0] / (w[0] + w[1]);
    let mut rng = seeded(10);
    let n = 100_000;
    let hits = (0..n)
        .filter(|_| assign_latent_classes(&d, &p, &mut rng, false).m[0][0] == 0)
        .count();
    let freq = hits as f64 / n as f64;
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((freq - exact).abs() < 4.0 * se, "{freq} vs {exact}");
}

#[test]
fn class_assignment_does_not_depend_on_threading() {
    let d = small_data(false);
    let p = two_class(&d.schema);
    let a = assign_latent_classes(&d, &p, &mut seeded(3), false);
    let b = assign_latent_classes(&d, &p, &mut seeded(3), true);
    assert_eq!(a, b);
}

fn one_household_stats(psi: Psi, variant: StepVariant) -> CountStatistics {
    let s = tiny();
    let d = Dataset::new(s.clone(), vec![record("a", 2, 1, &[[0, 1], [1, 0]])]).unwrap();
    let latent = LatentState {
        g: vec![0],
        m: vec![vec![1, 0]],
    };
    let aug = AugmentedSample {
        households: vec![
            AugmentedHousehold {
                size: 2,
                household_values: vec![1, 0],
                rows: vec![1, 1, 0, 0],
                g: 0,
                m: vec![1, 1],
            },
            AugmentedHousehold {
                size: 1,
                household_values: vec![0, 0],
                rows: vec![1, 1],
                g: 1,
                m: vec![0],
            },
        ],
        ..AugmentedSample::default()
    };
    let p = ModelParams::uniform(&s, 2, 2);
    CountStatistics::assemble(
        &d,
        &latent,
        &aug,
        &p,
        |h| if h == 2 { psi } else { Psi::ONE },
        variant,
    )
}

#[test]
fn weighted_counts_scale_augmented_households() {
    let psi = Psi::new(2, 3).unwrap();
    let t = one_household_stats(psi, StepVariant::Starred).totals();
    // Class 0 holds the observed household and one size-2 augmented one.
    assert_eq!(t.u, vec![1.0 + 1.5, 1.0]);
    // (g=0, m=1): observed person 1 plus two augmented members.
    assert_eq!(t.v, vec![1.0, 1.0 + 3.0, 1.0, 0.0]);
    // own (index 1): observed r in class 0, augmented o in class 0 and 1.
    assert_eq!(t.eta[1], vec![1.5, 1.0, 1.0, 0.0]);
    let u = one_household_stats(psi, StepVariant::Unstarred).totals();
    assert_eq!(u.u, vec![2.0, 1.0]);
    assert_eq!(u.v, vec![1.0, 3.0, 1.0, 0.0]);
}

#[test]
fn unit_psi_makes_both_variants_identical() {
    let a = one_household_stats(Psi::ONE, StepVariant::Starred).totals();
    let b = one_household_stats(Psi::ONE, StepVariant::Unstarred).totals();
    assert_eq!(a, b);
}

#[test]
fn concentration_posterior_shapes() {
    let hp = Hyperparams::default();
    let u: Vec<f64> = (0..30).map(|g| if g == 29 { 1.0 } else { 0.2 }).collect();
    let (shape, rate) = alpha_posterior(&u, &hp);
    assert_eq!(shape, 29.25);
    assert!((rate - (0.25 - 29.0 * 0.8f64.ln())).abs() < 1e-12);
    let v: Vec<f64> = (0..30 * 15)
        .map(|i| if i % 15 == 14 { 1.0 } else { 0.5 })
        .collect();
    let (shape, rate) = beta_posterior(&v, 30, 15, &hp);
    assert_eq!(shape, 420.25);
    assert!((rate - (0.25 + 420.0 * 2f64.ln())).abs() < 1e-9);
}

#[test]
fn stick_updates_have_beta_means() {
    // u_0 ~ Beta(1 + 5, α + 3), with α = 2: mean 6/11.
    let totals = WeightedCounts {
        u: vec![5.0, 3.0],
        v: vec![0.0; 2],
        eta: vec![],
        nu: vec![],
    };
    let mut rng = seeded(12);
    let n = 50_000;
    let mut mean = 0.0;
    for _ in 0..n {
        let (u, pi, v, omega) = update_stick_weights(&totals, 2, 1, 2.0, 1.0, &mut rng);
        assert_eq!(u[1], 1.0);
        assert!((pi[0] + pi[1] - 1.0).abs() < 1e-15);
        assert_eq!(v, vec![1.0, 1.0]);
        assert_eq!(omega, vec![1.0, 1.0]);
        mean += u[0];
    }
    mean /= n as f64;
    let exact = 6.0 / 11.0;
    let sd = (6.0 * 5.0 / (11.0f64 * 11.0 * 12.0)).sqrt();
    assert!(
        (mean - exact).abs() < 4.0 * sd / (n as f64).sqrt(),
        "{mean}"
    );
}

#[test]
fn dirichlet_updates_match_moments() {
    let counts = vec![3.0, 0.0, 6.0, 1.0, 1.0, 1.0];
    let totals = WeightedCounts {
        u: vec![0.0; 2],
        v: vec![],
        eta: vec![counts.clone()],
        nu: vec![],
    };
    let mut rng = seeded(13);
    let n = 40_000;
    let mut sum = [0.0; 6];
    let mut sq = [0.0; 6];
    for _ in 0..n {
        let (lambda, _) = update_multinomial_probs(&totals, &[3], &[], &mut rng);
        for g in 0..2 {
            let row = &lambda[0][g * 3..g * 3 + 3];
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        for i in 0..6 {
            sum[i] += lambda[0][i];
            sq[i] += lambda[0][i] * lambda[0][i];
        }
    }
    for g in 0..2 {
        let a: Vec<f64> = counts[g * 3..g * 3 + 3].iter().map(|c| 1.0 + c).collect();
        let a0: f64 = a.iter().sum();
        for c in 0..3 {
            let i = g * 3 + c;
            let mean = a[c] / a0;
            let var = mean * (1.0 - mean) / (a0 + 1.0);
            let m = sum[i] / n as f64;
            let v = sq[i] / n as f64 - m * m;
            assert!((m - mean).abs() < 4.0 * (var / n as f64).sqrt(), "mean {i}");
            assert!((v - var).abs() < 0.05 * var, "var {i}: {v} vs {var}");
        }
    }
}

#[test]
fn rejection_imputation_matches_exact_conditional() {
    // Person 1 has both items masked, person 2 is observed (x, y). Given
    // the classes, the accepted completion has the untruncated conditional
    // restricted to feasible cells.
    let s = tiny();
    let mut r = record("a", 2, 0, &[[MISSING, MISSING], [0, 1]]);
    r.mask = MissingnessMask::of(&r.household);
    let d0 = Dataset::new(s.clone(), vec![r]).unwrap();
    let p = two_class(&s);
    let rules = RuleSet::from_text(NO_YY, &s).unwrap();
    let latent = LatentState {
        g: vec![1],
        m: vec![vec![0, 1]],
    };
    let mut exact = HashMap::new();
    let mut z = 0.0;
    for a in 0..2u16 {
        for b in 0..2u16 {
            if a == 1 && b == 1 {
                continue;
            }
            let w = p.phi_row(0, 1, 0)[a as usize] * p.phi_row(1, 1, 0)[b as usize];
            exact.insert((a, b), w);
            z += w;
        }
    }
    let mut rng = seeded(14);
    let n = 60_000;
    let mut freq: HashMap<(u16, u16), f64> = HashMap::new();
    for _ in 0..n {
        let mut d = d0.clone();
        impute_missing_rejection(&mut d, &latent, &p, &rules, &mut rng, 1000, false).unwrap();
        let row = &d.records[0].household.individuals;
        assert_eq!(row[1], vec![0, 1]);
        *freq.entry((row[0][0], row[0][1])).or_default() += 1.0 / n as f64;
    }
    assert!(!freq.contains_key(&(1, 1)));
    let tv: f64 = exact
        .iter()
        .map(|(k, w)| (w / z - freq.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.01, "total variation {tv}");
}

#[test]
fn imputation_does_not_depend_on_threading() {
    let d = small_data(true);
    let p = two_class(&d.schema);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let start = init_missing(&d, &rules, &mut seeded(1), 1000).unwrap();
    let latent = assign_latent_classes(&start, &p, &mut seeded(2), false);
    let mut a = start.clone();
    let mut b = start.clone();
    let sa =
        impute_missing_rejection(&mut a, &latent, &p, &rules, &mut seeded(3), 1000, false).unwrap();
    let sb =
        impute_missing_rejection(&mut b, &latent, &p, &rules, &mut seeded(3), 1000, true).unwrap();
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    assert_eq!(sa.households, 8);
}

#[test]
fn initial_fill_is_feasible_and_keeps_observed_cells() {
    let d = small_data(true);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let filled = init_missing(&d, &rules, &mut seeded(7), 1000).unwrap();
    for (before, after) in d.records.iter().zip(&filled.records) {
        assert!(after.household.is_complete());
        assert!(rules.is_feasible(&after.household).unwrap());
        assert_eq!(before.mask, after.mask);
        for (x, y) in before
            .household
            .flat_individuals()
            .iter()
            .zip(after.household.flat_individuals())
        {
            if *x != MISSING {
                assert_eq!(*x, y);
            }
        }
    }
}

#[test]
fn initial_fill_needs_some_observed_values() {
    let s = tiny();
    let mut r = record("a", 1, 0, &[[MISSING, 0]]);
    r.mask = MissingnessMask::of(&r.household);
    let d = Dataset::new(s, vec![r]).unwrap();
    let err = init_missing(&d, &RuleSet::empty(&d.schema), &mut seeded(1), 10).unwrap_err();
    assert!(matches!(err, crate::Error::NoObservedValues(ref v) if v == "a"));
}

#[test]
fn chain_retains_the_scheduled_snapshots() {
    let d = small_data(true);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let out = run_chain(&d, &rules, hp(), short_cfg(21), &mut |_| Ok(())).unwrap();
    assert_eq!(out.snapshots.len(), 10);
    assert_eq!(out.trace.len(), 30);
    let its: Vec<usize> = out.snapshots.iter().map(|s| s.iteration).collect();
    assert_eq!(its, (12..=30).step_by(2).collect::<Vec<_>>());
    for snap in &out.snapshots {
        assert_eq!(snap.imputed.len(), d.missing_cells());
        assert!(snap.params.is_none());
        let done = apply_snapshot(&d, snap).unwrap();
        for r in &done.records {
            assert!(rules.is_feasible(&r.household).unwrap());
        }
    }
    out.final_params.validate().unwrap();
}

#[test]
fn chain_is_reproducible() {
    let d = small_data(true);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let strip = |o: ChainOutput| {
        let trace: Vec<(f64, f64, usize)> =
            o.trace.iter().map(|t| (t.alpha, t.beta, t.n0)).collect();
        (o.snapshots, trace, o.final_params)
    };
    let a = strip(run_chain(&d, &rules, hp(), short_cfg(5), &mut |_| Ok(())).unwrap());
    let b = strip(run_chain(&d, &rules, hp(), short_cfg(5), &mut |_| Ok(())).unwrap());
    let mut cfg = short_cfg(5);
    cfg.parallel_households = true;
    let c = strip(run_chain(&d, &rules, hp(), cfg, &mut |_| Ok(())).unwrap());
    assert_eq!(a, b);
    assert_eq!(a, c);
    let e = strip(run_chain(&d, &rules, hp(), short_cfg(6), &mut |_| Ok(())).unwrap());
    assert_ne!(a.2, e.2);
}

#[test]
fn unit_psi_chains_are_bitwise_identical() {
    let d = small_data(true);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let mut starred = short_cfg(8);
    starred.psi.insert(1, Psi::ONE);
    starred.psi.insert(2, Psi::ONE);
    let mut unstarred = short_cfg(8);
    unstarred.variant = StepVariant::Unstarred;
    let mut a = Chain::new(&d, &rules, hp(), starred).unwrap();
    let mut b = Chain::new(&d, &rules, hp(), unstarred).unwrap();
    for _ in 0..15 {
        a.step().unwrap();
        b.step().unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(a.stats().unwrap().totals(), b.stats().unwrap().totals());
        assert_eq!(a.imputed_cells(), b.imputed_cells());
    }
}

#[test]
fn checkpoint_resume_continues_exactly() {
    let d = small_data(true);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let mut cfg = short_cfg(17);
    cfg.checkpoint_every = Some(12);
    let mut saved = Vec::new();
    let full = run_chain(&d, &rules, hp(), cfg.clone(), &mut |c| {
        let mut buf = Vec::new();
        c.write(&mut buf)?;
        saved.push(buf);
        Ok(())
    })
    .unwrap();
    assert_eq!(saved.len(), 2);
    let ckpt = ChainCheckpoint::read(saved[0].as_slice()).unwrap();
    assert_eq!(ckpt.iteration, 12);
    let early: Vec<Snapshot> = full
        .snapshots
        .iter()
        .filter(|s| s.iteration <= 12)
        .cloned()
        .collect();
    assert_eq!(ckpt.snapshots, early);
    assert_eq!(ckpt.trace.len(), 12);
    let chain = Chain::resume(&d, &rules, hp(), cfg.clone(), ckpt.clone()).unwrap();
    let rest = chain::drive(chain, Vec::new(), Vec::new(), &mut |_| Ok(())).unwrap();
    assert_eq!(rest.final_params, full.final_params);
    let tail: Vec<&Snapshot> = full.snapshots.iter().filter(|s| s.iteration > 12).collect();
    assert_eq!(rest.snapshots.iter().collect::<Vec<_>>(), tail);
    let resumed = resume_chain(&d, &rules, hp(), cfg, ckpt, &mut |_| Ok(())).unwrap();
    assert_eq!(resumed.snapshots, full.snapshots);
    assert_eq!(resumed.trace.len(), full.trace.len());
    for (a, b) in resumed.trace.iter().zip(&full.trace) {
        assert_eq!(
            (a.iteration, a.alpha, a.beta, a.n0),
            (b.iteration, b.alpha, b.beta, b.n0)
        );
    }
}

#[test]
fn parameters_are_retained_on_request() {
    let d = small_data(true);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let mut cfg = short_cfg(2);
    cfg.retain_params = ParamRetention::Iterations([14, 20].into_iter().collect());
    let out = run_chain(&d, &rules, hp(), cfg, &mut |_| Ok(())).unwrap();
    let with: Vec<usize> = out
        .snapshots
        .iter()
        .filter(|s| s.params.is_some())
        .map(|s| s.iteration)
        .collect();
    assert_eq!(with, vec![14, 20]);
}

#[test]
fn infeasible_observed_households_are_rejected() {
    let s = tiny();
    let d = Dataset::new(s.clone(), vec![record("bad", 1, 0, &[[1, 1]])]).unwrap();
    let rules = RuleSet::from_text(NO_YY, &s).unwrap();
    let err = Chain::new(&d, &rules, hp(), short_cfg(1)).err().unwrap();
    assert!(matches!(err, crate::Error::Household { ref id, .. } if id == "bad"));
}

#[test]
fn trace_is_written_with_a_header() {
    let d = small_data(false);
    let rules = RuleSet::from_text(NO_YY, &d.schema).unwrap();
    let mut cfg = short_cfg(3);
    cfg.probes = 3;
    let out = run_chain(&d, &rules, hp(), cfg, &mut |_| Ok(())).unwrap();
    let mut buf = Vec::new();
    write_trace(&out.trace, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("iteration,alpha,beta,n0,"));
    assert!(header.ends_with("probe_0,probe_1,probe_2"));
    assert_eq!(lines.count(), 30);
    for row in &out.trace {
        for &x in &row.probes {
            assert!((0.0..=1.0).contains(&x));
        }
    }
}
