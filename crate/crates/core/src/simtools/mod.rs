//! Ground-truth generators: populations from known parameters, a census-like
//! household simulator, and the missingness mechanisms of the studies.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{GenTables, ModelParams};
use crate::rng::ChainRng;
use crate::rules::RuleSet;
use crate::schema::{
    inverse_transform, parse_schema, Dataset, DatasetSchema, Household, MissingnessMask, Record,
    TransformProvenance, MISSING,
};

/// Layout of the imputation study (household sizes 2 to 4).
pub const CENSUS_SCHEMA: &str = include_str!("../../data/census.schema");
/// Structural zeros of the imputation study.
pub const IMPUTATION_RULES: &str = include_str!("../../data/imputation.rules");
/// Layout of the synthesis study (household sizes 2 to 6).
pub const SYNTHETIC_SCHEMA: &str = include_str!("../../data/synthetic.schema");
/// Structural zeros of the synthesis study.
pub const SYNTHETIC_RULES: &str = include_str!("../../data/synthetic.rules");

/// Feasible households from the truncated model, `counts[h]` of each size,
/// returned in the original layout. `rules` must be compiled for `schema`.
pub fn sample_population(
    params: &ModelParams,
    schema: &Arc<DatasetSchema>,
    rules: &RuleSet,
    counts: &BTreeMap<usize, usize>,
    rng: &mut ChainRng,
    cap: u64,
) -> Result<Dataset> {
    draw_truncated(params, schema, rules, counts, rng, cap, "h")
}

pub(crate) fn draw_truncated(
    params: &ModelParams,
    schema: &Arc<DatasetSchema>,
    rules: &RuleSet,
    counts: &BTreeMap<usize, usize>,
    rng: &mut ChainRng,
    cap: u64,
    prefix: &str,
) -> Result<Dataset> {
    params.check_schema(schema)?;
    for &h in counts.keys() {
        if schema.size_code(h).is_none() {
            return Err(Error::Simulation(format!(
                "size {h} is not in the schema's size set"
            )));
        }
    }
    let tables = GenTables::new(params, schema);
    let p = schema.p();
    let (mut hh, mut rows, mut ms) = (Vec::new(), Vec::new(), Vec::new());
    let mut records = Vec::with_capacity(counts.values().sum());
    for (&h, &count) in counts {
        for _ in 0..count {
            let mut draws = 0u64;
            loop {
                draws += 1;
                if draws > cap {
                    return Err(Error::AttemptCap {
                        cap,
                        context: format!("drawing a feasible household of size {h}"),
                    });
                }
                tables.sample_into(None, h, rng, &mut hh, &mut rows, &mut ms);
                if rules.feasible_raw(&hh, &rows) {
                    break;
                }
            }
            let individuals: Vec<Vec<u16>> = if p == 0 {
                vec![Vec::new(); schema.stored_rows(h)]
            } else {
                rows.chunks(p).map(<[u16]>::to_vec).collect()
            };
            let household = Household {
                id: format!("{prefix}{}", records.len() + 1),
                size: h,
                household_values: hh.clone(),
                individuals,
            };
            let mask = MissingnessMask::empty(schema.q(), p, household.individuals.len());
            records.push(Record { household, mask });
        }
    }
    let mut out = Dataset::new(Arc::clone(schema), records)?;
    if schema.head_move.is_some() {
        out.provenance = Some(TransformProvenance {
            head_positions: vec![0; out.n()],
        });
        out = inverse_transform(&out)?;
    }
    Ok(out)
}

/// Simple random sample of `n` households without replacement, in
/// population order.
pub fn sample_households(pop: &Dataset, n: usize, rng: &mut ChainRng) -> Result<Dataset> {
    if n > pop.n() {
        return Err(Error::Simulation(format!(
            "cannot sample {n} households from {}",
            pop.n()
        )));
    }
    let mut idx = sample(rng, pop.n(), n).into_vec();
    idx.sort_unstable();
    let records = idx.into_iter().map(|i| pop.records[i].clone()).collect();
    let mut out = Dataset::new(Arc::clone(&pop.schema), records)?;
    if let Some(prov) = &pop.provenance {
        let mut pos: Vec<usize> = Vec::with_capacity(n);
        let ids: std::collections::HashMap<&str, usize> = pop
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.household.id.as_str(), i))
            .collect();
        for r in &out.records {
            pos.push(prov.head_positions[ids[r.household.id.as_str()]]);
        }
        out.provenance = Some(TransformProvenance {
            head_positions: pos,
        });
    }
    Ok(out)
}

fn check_rate(name: &str, r: f64) -> Result<()> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(Error::Simulation(format!("{name} {r} is not in [0, 1]")))
    }
}

fn blank(rec: &mut Record, hh: Option<usize>, row: Option<(usize, usize)>) {
    match (hh, row) {
        (Some(k), _) => {
            rec.household.household_values[k] = MISSING;
            rec.mask.household[k] = true;
        }
        (None, Some((j, k))) => {
            rec.household.individuals[j][k] = MISSING;
            rec.mask.individuals[j][k] = true;
        }
        (None, None) => {}
    }
}

/// Row of the head in a household whose head is stored as an individual.
fn head_row(h: &Household, rel: usize, head: u16) -> Option<usize> {
    h.individuals.iter().position(|r| r[rel] == head)
}

/// Keeps round(`household_complete_frac` · n) randomly chosen households
/// complete; in the rest, every cell except household size (and a stored
/// head's relationship, which fixes who the head is) is blanked
/// independently with probability `per_var_rate`.
pub fn apply_mcar(
    d: &Dataset,
    household_complete_frac: f64,
    per_var_rate: f64,
    rng: &mut ChainRng,
) -> Result<Dataset> {
    check_rate("complete-household fraction", household_complete_frac)?;
    check_rate("per-variable rate", per_var_rate)?;
    let schema = &d.schema;
    let n = d.n();
    let keep = (household_complete_frac * n as f64).round() as usize;
    let mut complete = vec![false; n];
    for i in sample(rng, n, keep.min(n)) {
        complete[i] = true;
    }
    let rel_head = schema.relationship_index().zip(schema.head_code());
    let mut out = d.clone();
    for (i, rec) in out.records.iter_mut().enumerate() {
        if complete[i] {
            continue;
        }
        for k in 0..schema.q() {
            if k != schema.size_var && rng.random::<f64>() < per_var_rate {
                blank(rec, Some(k), None);
            }
        }
        let head =
            rel_head.and_then(|(rel, code)| head_row(&rec.household, rel, code).map(|j| (rel, j)));
        for j in 0..rec.household.individuals.len() {
            for k in 0..schema.p() {
                if head == Some((k, j)) {
                    continue;
                }
                if rng.random::<f64>() < per_var_rate {
                    blank(rec, None, Some((j, k)));
                }
            }
        }
    }
    Ok(out)
}

/// Age blanking rate by relationship code. Codes follow the 12-level
/// relationship coding (1 = spouse, …, 12 = other non-relative) with the
/// head stored as code 0; spouse belongs to none of the four sets.
const AGE_RATE_BY_RELATIONSHIP: [f64; 13] = [
    0.0, // head
    0.0, // spouse
    0.5, // biological child
    0.2, // adopted child
    0.2, // stepchild
    0.2, // sibling
    0.3, // parent
    0.4, // grandchild
    0.3, // parent-in-law
    0.4, // child-in-law
    0.2, // other relative
    0.3, // boarder, roommate or partner
    0.3, // other non-relative
];

/// Relationship blanking rate by age band: ≤20, (20, 50], (50, 70], >70.
fn relationship_rate(age: u32) -> f64 {
    match age {
        0..=20 => 0.4,
        21..=50 => 0.25,
        51..=70 => 0.1,
        _ => 0.55,
    }
}

const BLANK_RATE: f64 = 0.3;

/// Variable positions the stress mechanism works on.
struct StressLayout {
    rel: usize,
    head: u16,
    age: usize,
    ages: Vec<u32>,
    demographic: Vec<usize>,
}

fn stress_layout(schema: &DatasetSchema) -> Result<StressLayout> {
    let mismatch = |m: &str| Error::Simulation(format!("stress mechanism: {m}"));
    if schema.head_move.is_some() {
        return Err(mismatch("expects the head stored as an individual row"));
    }
    let rel = schema
        .relationship_index()
        .ok_or_else(|| mismatch("no relationship variable"))?;
    let head = schema
        .head_code()
        .ok_or_else(|| mismatch("no head level"))?;
    if head != 0 || schema.individual_vars[rel].cardinality() != AGE_RATE_BY_RELATIONSHIP.len() {
        return Err(mismatch(
            "relationship must have 13 levels with the head first",
        ));
    }
    let age = schema
        .individual_index("age")
        .ok_or_else(|| mismatch("no individual variable named age"))?;
    let ages = schema.individual_vars[age]
        .levels
        .iter()
        .map(|l| l.parse::<u32>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| mismatch("age levels must be whole numbers"))?;
    let mut demographic = Vec::new();
    for name in ["gender", "race", "hisp"] {
        demographic.push(
            schema
                .individual_index(name)
                .ok_or_else(|| mismatch(&format!("no individual variable named {name}")))?,
        );
    }
    Ok(StressLayout {
        rel,
        head,
        age,
        ages,
        demographic,
    })
}

/// The stress-test mechanism. Household size and the head's age and
/// relationship stay observed; other household variables and everyone's
/// gender, race and Hispanic origin are blanked at 30%; non-head age is
/// blanked at a rate set by relationship and non-head relationship at a rate
/// set by age, using the true values. Expects a complete dataset in the
/// original layout.
pub fn apply_stress_mechanism(d: &Dataset, rng: &mut ChainRng) -> Result<Dataset> {
    let schema = &d.schema;
    let lay = stress_layout(schema)?;
    let mut out = d.clone();
    for rec in &mut out.records {
        if !rec.household.is_complete() {
            return Err(Error::Simulation(format!(
                "household {} already has missing values",
                rec.household.id
            )));
        }
        for k in 0..schema.q() {
            if k != schema.size_var && rng.random::<f64>() < BLANK_RATE {
                blank(rec, Some(k), None);
            }
        }
        for j in 0..rec.household.individuals.len() {
            let row = rec.household.individuals[j].clone();
            for &k in &lay.demographic {
                if rng.random::<f64>() < BLANK_RATE {
                    blank(rec, None, Some((j, k)));
                }
            }
            if row[lay.rel] == lay.head {
                continue;
            }
            if rng.random::<f64>() < AGE_RATE_BY_RELATIONSHIP[row[lay.rel] as usize] {
                blank(rec, None, Some((j, lay.age)));
            }
            if rng.random::<f64>() < relationship_rate(lay.ages[row[lay.age] as usize]) {
                blank(rec, None, Some((j, lay.rel)));
            }
        }
    }
    Ok(out)
}

/// Realised missingness among non-head individuals (the individual-level
/// records once the head is moved to the household level).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StressRates {
    pub individuals: usize,
    pub age: f64,
    pub relationship: f64,
    pub age_and_relationship: f64,
    pub gender_age_relationship: f64,
}

/// Measures the rates in `masked`, using `truth` to identify heads.
pub fn stress_rates(truth: &Dataset, masked: &Dataset) -> Result<StressRates> {
    let lay = stress_layout(&truth.schema)?;
    let gender = lay.demographic[0];
    let (mut n, mut age, mut rel, mut both, mut three) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (t, m) in truth.records.iter().zip(&masked.records) {
        for (row, miss) in t.household.individuals.iter().zip(&m.mask.individuals) {
            if row[lay.rel] == lay.head {
                continue;
            }
            n += 1;
            let (a, r) = (miss[lay.age], miss[lay.rel]);
            age += a as usize;
            rel += r as usize;
            both += (a && r) as usize;
            three += (a && r && miss[gender]) as usize;
        }
    }
    let nf = n.max(1) as f64;
    Ok(StressRates {
        individuals: n,
        age: age as f64 / nf,
        relationship: rel as f64 / nf,
        age_and_relationship: both as f64 / nf,
        gender_age_relationship: three as f64 / nf,
    })
}

fn pick<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

const SIZE_WEIGHTS: [(usize, f64); 3] = [(2, 0.55), (3, 0.26), (4, 0.19)];
const RACE_WEIGHTS: [f64; 9] = [0.75, 0.12, 0.01, 0.015, 0.005, 0.03, 0.04, 0.025, 0.005];
const HISP_WEIGHTS: [f64; 5] = [0.85, 0.09, 0.02, 0.01, 0.03];
/// Relationship of members after the first, by code (head and spouse excluded).
const MEMBER_WEIGHTS: [f64; 13] = [
    0.0, 0.0, 0.63, 0.02, 0.03, 0.03, 0.08, 0.03, 0.03, 0.06, 0.03, 0.04, 0.02,
];
const SPOUSE_PROB: f64 = 0.44;

/// Age range for a member with relationship `rel` under a head aged `a`,
/// or None when no age satisfies the study rules.
fn member_age_range(rel: usize, a: i32) -> Option<(i32, i32)> {
    let (lo, hi) = match rel {
        1 => (a - 12, a + 6),
        2 => (21, (a - 18).min(50)),
        3 => (0, (a - 11).min(40)),
        4 => (0, (a - 9).min(40)),
        5 => (a - 12, a + 12),
        6 | 8 => (a + 18, a + 35),
        7 => (0, (a - 40).min(25)),
        9 => (a - 35, a - 15),
        10 => (0, 95),
        11 => (18, 80),
        _ => (0, 85),
    };
    let lo = lo.max(if rel == 1 || rel == 9 { 17 } else { 0 });
    let hi = hi.min(95);
    (lo <= hi).then_some((lo, hi))
}

/// A census-like population of `n` households on the imputation-study
/// layout, all feasible under the imputation-study rules. Household sizes,
/// relationships and ages follow fixed survey-like frequencies.
pub fn census_population(n: usize, rng: &mut ChainRng) -> Result<Dataset> {
    let schema = Arc::new(parse_schema(CENSUS_SCHEMA)?);
    let rules = RuleSet::from_text(IMPUTATION_RULES, &schema)?;
    let iv = |name: &str| schema.individual_index(name).expect("census variable");
    let (gender, race, hisp, age, rel) = (
        iv("gender"),
        iv("race"),
        iv("hisp"),
        iv("age"),
        iv("relationship"),
    );
    let own = schema.household_index("own").expect("census variable");
    let size_weights: Vec<f64> = SIZE_WEIGHTS.iter().map(|w| w.1).collect();
    let mut records = Vec::with_capacity(n);
    while records.len() < n {
        let size = SIZE_WEIGHTS[pick(rng, &size_weights)].0;
        let head_age =
            18 + pick(rng, &[0.12, 0.22, 0.24, 0.42]) as i32 * 18 + rng.random_range(0..18);
        let head_age = head_age.min(95);
        let head_race = pick(rng, &RACE_WEIGHTS) as u16;
        let head_hisp = pick(rng, &HISP_WEIGHTS) as u16;
        let head_gender = rng.random_range(0..2u16);
        let mut rows = vec![vec![0u16; schema.p()]; size];
        rows[0][gender] = head_gender;
        rows[0][race] = head_race;
        rows[0][hisp] = head_hisp;
        rows[0][age] = head_age as u16;
        rows[0][rel] = 0;
        let mut ok = true;
        for (j, row) in rows.iter_mut().enumerate().skip(1) {
            let r = if j == 1 && rng.random::<f64>() < SPOUSE_PROB {
                1
            } else {
                pick(rng, &MEMBER_WEIGHTS)
            };
            let Some((lo, hi)) = member_age_range(r, head_age) else {
                ok = false;
                break;
            };
            row[rel] = r as u16;
            row[age] = rng.random_range(lo..=hi) as u16;
            row[gender] = if r == 1 {
                1 - head_gender
            } else {
                rng.random_range(0..2)
            };
            let shared = rng.random::<f64>() < 0.9;
            row[race] = if shared {
                head_race
            } else {
                pick(rng, &RACE_WEIGHTS) as u16
            };
            row[hisp] = if shared {
                head_hisp
            } else {
                pick(rng, &HISP_WEIGHTS) as u16
            };
        }
        if !ok {
            continue;
        }
        let mut household_values = vec![0u16; schema.q()];
        household_values[schema.size_var] = schema.size_code(size).expect("census size");
        household_values[own] = (rng.random::<f64>() >= 0.65) as u16;
        let household = Household {
            id: format!("h{}", records.len() + 1),
            size,
            household_values,
            individuals: rows,
        };
        if !rules.is_feasible(&household)? {
            continue;
        }
        let mask = MissingnessMask::empty(schema.q(), schema.p(), size);
        records.push(Record { household, mask });
    }
    Dataset::new(schema, records)
}

#[cfg(test)]
mod tests;
