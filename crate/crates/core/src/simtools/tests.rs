use std::collections::HashMap;

use super::*;
use crate::model::{pi0h_bruteforce, sample_household_untruncated};
use crate::rng::seeded;
use crate::schema::head_to_household_transform;

const TINY: &str =
    "var a scope=individual levels=x,y\nvar b scope=individual levels=x,y\nsizes=2\n";
const TINY_RULES: &str = "valuepair each.a each.b forbid={(y,y)}\n";

fn tiny() -> (Arc<DatasetSchema>, RuleSet, ModelParams) {
    let s = Arc::new(parse_schema(TINY).unwrap());
    let r = RuleSet::from_text(TINY_RULES, &s).unwrap();
    let p = ModelParams::uniform(&s, 1, 1);
    (s, r, p)
}

fn counts(pairs: &[(usize, usize)]) -> BTreeMap<usize, usize> {
    pairs.iter().copied().collect()
}

#[test]
fn population_has_exact_counts() {
    let (s, _, p) = tiny();
    let d = sample_population(
        &p,
        &s,
        &RuleSet::empty(&s),
        &counts(&[(2, 100)]),
        &mut seeded(1),
        1000,
    )
    .unwrap();
    assert_eq!(d.n(), 100);
    assert!(d.households().all(|h| h.size == 2 && h.is_complete()));
    assert_eq!(d.size_counts()[&2], 100);
}

#[test]
fn population_is_reproducible() {
    let (s, r, p) = tiny();
    let c = counts(&[(2, 50)]);
    let a = sample_population(&p, &s, &r, &c, &mut seeded(9), 1000).unwrap();
    let b = sample_population(&p, &s, &r, &c, &mut seeded(9), 1000).unwrap();
    assert_eq!(a, b);
}

#[test]
fn infeasible_mass_matches_enumeration() {
    let (s, r, p) = tiny();
    // Each person avoids (y, y) with probability 3/4.
    let exact = 1.0 - 0.75f64.powi(2);
    assert!((pi0h_bruteforce(&p, &s, &r, 2).unwrap() - exact).abs() < 1e-12);
    let mut rng = seeded(3);
    let n = 40_000;
    let mut bad = 0;
    for _ in 0..n {
        let (h, _, _) = sample_household_untruncated(&p, &s, None, 2, &mut rng).unwrap();
        bad += !r.is_feasible(&h).unwrap() as usize;
    }
    let se = (exact * (1.0 - exact) / n as f64).sqrt();
    assert!((bad as f64 / n as f64 - exact).abs() < 3.0 * se);
}

#[test]
fn population_follows_the_truncated_model() {
    let (s, r, p) = tiny();
    let n = 20_000;
    let d = sample_population(&p, &s, &r, &counts(&[(2, n)]), &mut seeded(4), 1000).unwrap();
    let mut hist: HashMap<Vec<u16>, usize> = HashMap::new();
    for h in d.households() {
        assert!(r.is_feasible(h).unwrap());
        *hist.entry(h.flat_individuals()).or_default() += 1;
    }
    // Uniform parameters: the 9 feasible households are equally likely.
    assert_eq!(hist.len(), 9);
    let tv: f64 = hist
        .values()
        .map(|&c| (c as f64 / n as f64 - 1.0 / 9.0).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv < 0.02, "tv {tv}");
}

#[test]
fn population_errors() {
    let (s, r, p) = tiny();
    assert!(sample_population(&p, &s, &r, &counts(&[(3, 1)]), &mut seeded(1), 10).is_err());
    let never = RuleSet::from_text(
        "valuepair each.a each.b forbid={(x,x),(x,y),(y,x),(y,y)}\n",
        &s,
    )
    .unwrap();
    assert!(matches!(
        sample_population(&p, &s, &never, &counts(&[(2, 1)]), &mut seeded(1), 50),
        Err(Error::AttemptCap { cap: 50, .. })
    ));
}

#[test]
fn moved_layout_population_returns_original_layout() {
    let pop = census_population(200, &mut seeded(5)).unwrap();
    let moved = head_to_household_transform(&pop).unwrap();
    let rules = RuleSet::from_text(IMPUTATION_RULES, &moved.schema).unwrap();
    let params = ModelParams::uniform(&moved.schema, 2, 2);
    let d = sample_population(
        &params,
        &moved.schema,
        &rules,
        &counts(&[(2, 5), (3, 5)]),
        &mut seeded(6),
        10_000_000,
    )
    .unwrap();
    assert!(d.schema.head_move.is_none());
    let original = RuleSet::from_text(IMPUTATION_RULES, &d.schema).unwrap();
    let rel = d.schema.relationship_index().unwrap();
    for h in d.households() {
        assert!(original.is_feasible(h).unwrap());
        assert_eq!(h.individuals[0][rel], 0);
    }
}

#[test]
fn census_population_is_feasible_and_reproducible() {
    let a = census_population(2000, &mut seeded(8)).unwrap();
    let b = census_population(2000, &mut seeded(8)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n(), 2000);
    let rules = RuleSet::from_text(IMPUTATION_RULES, &a.schema).unwrap();
    assert!(a.households().all(|h| rules.is_feasible(h).unwrap()));
    let sizes = a.size_counts();
    assert!(sizes.keys().all(|h| (2..=4).contains(h)));
    assert!(sizes.values().all(|&c| c > 0));
}

#[test]
fn households_are_subsampled_without_replacement() {
    let pop = census_population(300, &mut seeded(2)).unwrap();
    let s = sample_households(&pop, 100, &mut seeded(3)).unwrap();
    assert_eq!(s.n(), 100);
    let ids: std::collections::HashSet<&str> = pop.households().map(|h| h.id.as_str()).collect();
    assert!(s.households().all(|h| ids.contains(h.id.as_str())));
    assert!(sample_households(&pop, 301, &mut seeded(3)).is_err());
}

#[test]
fn mcar_with_zero_rate_masks_nothing() {
    let pop = census_population(200, &mut seeded(1)).unwrap();
    let m = apply_mcar(&pop, 0.8, 0.0, &mut seeded(2)).unwrap();
    assert_eq!(m.missing_cells(), 0);
    assert!(apply_mcar(&pop, 1.2, 0.1, &mut seeded(2)).is_err());
    assert!(apply_mcar(&pop, 0.8, -0.1, &mut seeded(2)).is_err());
}

#[test]
fn mcar_rates_are_near_ten_percent() {
    let pop = census_population(5000, &mut seeded(11)).unwrap();
    let m = apply_mcar(&pop, 0.8, 0.5, &mut seeded(12)).unwrap();
    let s = &pop.schema;
    let rel = s.relationship_index().unwrap();
    let touched = m.records.iter().filter(|r| r.mask.any()).count();
    assert!(touched <= 1000);
    for r in &m.records {
        assert!(!r.mask.household[s.size_var]);
        assert!(
            !r.mask.individuals[0][rel],
            "head relationship stays observed"
        );
    }
    for k in 0..s.p() {
        let cells = pop.total_individuals() - if k == rel { pop.n() } else { 0 };
        let miss = m
            .records
            .iter()
            .flat_map(|r| &r.mask.individuals)
            .filter(|row| row[k])
            .count();
        let rate = miss as f64 / cells as f64;
        // 20% of households at 50%.
        let se = (0.1 * 0.9 / cells as f64).sqrt() * 2.0;
        assert!((rate - 0.1).abs() < 3.0 * se, "variable {k}: {rate}");
    }
}

#[test]
fn stress_rates_hit_targets() {
    let pop = census_population(5000, &mut seeded(21)).unwrap();
    let m = apply_stress_mechanism(&pop, &mut seeded(22)).unwrap();
    let r = stress_rates(&pop, &m).unwrap();
    assert!((r.age - 0.30).abs() <= 0.02, "{r:?}");
    assert!((r.relationship - 0.30).abs() <= 0.02, "{r:?}");
    assert!((r.age_and_relationship - 0.08).abs() <= 0.01, "{r:?}");
    assert!((r.gender_age_relationship - 0.02).abs() <= 0.01, "{r:?}");
}

#[test]
fn stress_mechanism_follows_its_strata() {
    let pop = census_population(20_000, &mut seeded(31)).unwrap();
    let m = apply_stress_mechanism(&pop, &mut seeded(32)).unwrap();
    let s = &pop.schema;
    let (age, rel) = (
        s.individual_index("age").unwrap(),
        s.relationship_index().unwrap(),
    );
    let own = s.household_index("own").unwrap();
    // (observed, masked) counts.
    let mut by_rel = [(0usize, 0usize); 13];
    let mut by_band = [(0usize, 0usize); 4];
    let mut own_miss = 0;
    for (t, r) in pop.records.iter().zip(&m.records) {
        assert!(!r.mask.household[s.size_var]);
        own_miss += r.mask.household[own] as usize;
        for (row, miss) in t.household.individuals.iter().zip(&r.mask.individuals) {
            if row[rel] == 0 {
                assert!(!miss[age] && !miss[rel]);
                continue;
            }
            let e = &mut by_rel[row[rel] as usize];
            e.0 += 1;
            e.1 += miss[age] as usize;
            let band = match row[age] {
                0..=20 => 0,
                21..=50 => 1,
                51..=70 => 2,
                _ => 3,
            };
            by_band[band].0 += 1;
            by_band[band].1 += miss[rel] as usize;
        }
    }
    let close = |(n, k): (usize, usize), p: f64| {
        n == 0 || (k as f64 / n as f64 - p).abs() <= 3.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12
    };
    let age_rates = [
        0.0, 0.0, 0.5, 0.2, 0.2, 0.2, 0.3, 0.4, 0.3, 0.4, 0.2, 0.3, 0.3,
    ];
    for (c, &p) in age_rates.iter().enumerate().skip(1) {
        assert!(close(by_rel[c], p), "relationship {c}: {:?}", by_rel[c]);
    }
    assert_eq!(by_rel[1].1, 0, "spouse age is not in any set");
    for (b, &p) in [0.4, 0.25, 0.1, 0.55].iter().enumerate() {
        assert!(close(by_band[b], p), "band {b}: {:?}", by_band[b]);
    }
    assert!(close((pop.n(), own_miss), 0.3));
}

#[test]
fn stress_mechanism_rejects_other_layouts() {
    let (s, r, p) = tiny();
    let d = sample_population(&p, &s, &r, &counts(&[(2, 5)]), &mut seeded(1), 100).unwrap();
    assert!(matches!(
        apply_stress_mechanism(&d, &mut seeded(1)),
        Err(Error::Simulation(_))
    ));
    let pop = census_population(20, &mut seeded(1)).unwrap();
    let moved = head_to_household_transform(&pop).unwrap();
    assert!(apply_stress_mechanism(&moved, &mut seeded(1)).is_err());
    let masked = apply_stress_mechanism(&pop, &mut seeded(1)).unwrap();
    assert!(apply_stress_mechanism(&masked, &mut seeded(1)).is_err());
}
