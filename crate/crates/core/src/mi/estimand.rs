//! Estimands: cell probabilities and household predicates, their estimates
//! on a completed dataset, and the standard suite.
//!
//! Estimand files hold one query per line, `#` comments:
//!
//! ```text
//! cell gender=female race=white
//! household SP present: count relationship {spouse} min=1
//! household size=2 All same race: valuepair all.race == all.race
//! household White-nonwhite CP: bound head.race in {white} ; bound sel(relationship in {spouse}).race in {black} | ...
//! ```
//!
//! A household predicate is a disjunction (`|`) of conjunctions (`;`) of
//! rule lines; a household satisfies a conjunction when it satisfies every
//! rule in it.

use std::fmt;

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::rules::{parse_rules, RuleSet, RuleTemplate};
use crate::schema::{Dataset, DatasetSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimandKind {
    Marginal,
    Bivariate,
    Trivariate,
    HouseholdPredicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Denominator {
    Households,
    Individuals,
    HouseholdsOfSize(usize),
}

impl fmt::Display for Denominator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Denominator::Households => write!(f, "households"),
            Denominator::Individuals => write!(f, "individuals"),
            Denominator::HouseholdsOfSize(h) => write!(f, "households of size {h}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    /// (variable, level) pairs that must all hold.
    Cell(Vec<(String, String)>),
    /// Disjunction of conjunctions of rules.
    Predicate(Vec<Vec<RuleTemplate>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Estimand {
    pub name: String,
    pub kind: EstimandKind,
    pub query: Query,
    pub denominator: Denominator,
}

impl Estimand {
    /// A cell probability. Cells over household variables only are
    /// proportions of households, others are proportions of individuals.
    pub fn cell(schema: &DatasetSchema, cells: Vec<(String, String)>) -> Result<Self> {
        let kind = match cells.len() {
            1 => EstimandKind::Marginal,
            2 => EstimandKind::Bivariate,
            3 => EstimandKind::Trivariate,
            n => {
                return Err(Error::Estimand(format!(
                    "a cell needs 1 to 3 variables, got {n}"
                )))
            }
        };
        let mut household_only = true;
        for (var, level) in &cells {
            if let Some(k) = schema.household_index(var) {
                schema.household_vars[k].code_or_err(level)?;
            } else if let Some(k) = schema.individual_index(var) {
                schema.individual_vars[k].code_or_err(level)?;
                household_only = false;
            } else {
                return Err(Error::UnknownVariable(var.clone()));
            }
        }
        let name = cells
            .iter()
            .map(|(v, l)| format!("{v}={l}"))
            .collect::<Vec<_>>()
            .join(", ");
        Ok(Self {
            name,
            kind,
            query: Query::Cell(cells),
            denominator: if household_only {
                Denominator::Households
            } else {
                Denominator::Individuals
            },
        })
    }

    /// A household predicate; with `size`, a proportion of the households of
    /// that size.
    pub fn household(
        schema: &DatasetSchema,
        name: impl Into<String>,
        alternatives: Vec<Vec<RuleTemplate>>,
        size: Option<usize>,
    ) -> Result<Self> {
        if alternatives.is_empty() || alternatives.iter().any(Vec::is_empty) {
            return Err(Error::Estimand("empty household predicate".into()));
        }
        for alt in &alternatives {
            RuleSet::compile(alt.clone(), schema)?;
        }
        if let Some(h) = size {
            if schema.size_code(h).is_none() {
                return Err(Error::Estimand(format!("size {h} is not in the size set")));
            }
        }
        Ok(Self {
            name: name.into(),
            kind: EstimandKind::HouseholdPredicate,
            query: Query::Predicate(alternatives),
            denominator: size.map_or(Denominator::Households, Denominator::HouseholdsOfSize),
        })
    }
}

/// Parses an estimand file against `schema`.
pub fn parse_estimands(text: &str, schema: &DatasetSchema) -> Result<Vec<Estimand>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |e: Error| Error::Estimand(format!("line {}: {e}", i + 1));
        let (kind, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let rest = rest.trim();
        let e = match kind {
            "cell" => {
                let cells = rest
                    .split_whitespace()
                    .map(|tok| {
                        tok.split_once('=')
                            .map(|(v, l)| (v.to_string(), l.to_string()))
                            .ok_or_else(|| {
                                Error::Estimand(format!("expected var=level, got {tok:?}"))
                            })
                    })
                    .collect::<Result<Vec<_>>>()
                    .map_err(at)?;
                Estimand::cell(schema, cells).map_err(at)?
            }
            "household" => {
                let (head, body) = rest
                    .split_once(':')
                    .ok_or_else(|| at(Error::Estimand("expected `name: predicate`".into())))?;
                let mut head = head.trim();
                let mut size = None;
                if let Some(after) = head.strip_prefix("size=") {
                    let (num, name) = after.split_once(char::is_whitespace).unwrap_or((after, ""));
                    size = Some(
                        num.parse::<usize>()
                            .map_err(|_| at(Error::Estimand(format!("bad size {num:?}"))))?,
                    );
                    head = name.trim();
                }
                if head.is_empty() {
                    return Err(at(Error::Estimand(
                        "household predicate needs a name".into(),
                    )));
                }
                let alternatives = body
                    .split('|')
                    .map(|alt| parse_rules(&alt.split(';').collect::<Vec<_>>().join("\n")))
                    .collect::<Result<Vec<_>>>()
                    .map_err(at)?;
                Estimand::household(schema, head, alternatives, size).map_err(at)?
            }
            other => {
                return Err(at(Error::Estimand(format!(
                    "unknown estimand kind {other:?}"
                ))))
            }
        };
        out.push(e);
    }
    Ok(out)
}

/// An estimand resolved against one schema, ready to evaluate repeatedly.
pub struct PreparedEstimand<'a> {
    estimand: &'a Estimand,
    eval: Eval,
}

enum Eval {
    Cell {
        household: Vec<(usize, u16)>,
        individual: Vec<(usize, u16)>,
    },
    Predicate(Vec<RuleSet>),
}

impl<'a> PreparedEstimand<'a> {
    pub fn new(e: &'a Estimand, schema: &DatasetSchema) -> Result<Self> {
        let eval = match &e.query {
            Query::Cell(cells) => {
                let (mut household, mut individual) = (Vec::new(), Vec::new());
                for (var, level) in cells {
                    if let Some(k) = schema.household_index(var) {
                        household.push((k, schema.household_vars[k].code_or_err(level)?));
                    } else if let Some(k) = schema.individual_index(var) {
                        individual.push((k, schema.individual_vars[k].code_or_err(level)?));
                    } else {
                        return Err(Error::UnknownVariable(var.clone()));
                    }
                }
                Eval::Cell {
                    household,
                    individual,
                }
            }
            Query::Predicate(alts) => Eval::Predicate(
                alts.iter()
                    .map(|a| RuleSet::compile(a.clone(), schema))
                    .collect::<Result<_>>()?,
            ),
        };
        Ok(Self { estimand: e, eval })
    }

    /// (q, u): the sample proportion and its Wald variance q(1 − q)/n.
    pub fn estimate(&self, z: &Dataset) -> Result<(f64, f64)> {
        let size = match self.estimand.denominator {
            Denominator::HouseholdsOfSize(h) => Some(h),
            _ => None,
        };
        let (mut hits, mut n) = (0u64, 0u64);
        for r in &z.records {
            let h = &r.household;
            if size.is_some_and(|s| s != h.size) {
                continue;
            }
            if !h.is_complete() {
                return Err(Error::Estimand(format!(
                    "household {} has missing values",
                    h.id
                )));
            }
            match &self.eval {
                Eval::Cell {
                    household,
                    individual,
                } => {
                    let hh_ok = household.iter().all(|&(k, c)| h.household_values[k] == c);
                    if self.estimand.denominator == Denominator::Individuals {
                        n += h.individuals.len() as u64;
                        if hh_ok {
                            hits += h
                                .individuals
                                .iter()
                                .filter(|row| individual.iter().all(|&(k, c)| row[k] == c))
                                .count() as u64;
                        }
                    } else {
                        n += 1;
                        hits += hh_ok as u64;
                    }
                }
                Eval::Predicate(alts) => {
                    n += 1;
                    let mut any = false;
                    for rs in alts {
                        if rs.is_feasible(h)? {
                            any = true;
                            break;
                        }
                    }
                    hits += any as u64;
                }
            }
        }
        if n == 0 {
            return Err(Error::Estimand(format!(
                "{}: no {} to divide by",
                self.estimand.name, self.estimand.denominator
            )));
        }
        let q = hits as f64 / n as f64;
        Ok((q, q * (1.0 - q) / n as f64))
    }
}

/// (q, u) for one estimand on one fully observed dataset.
pub fn estimate_on_dataset(z: &Dataset, e: &Estimand) -> Result<(f64, f64)> {
    PreparedEstimand::new(e, &z.schema)?.estimate(z)
}

/// Which cell estimands [`estimand_suite`] enumerates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteOptions {
    pub marginals: bool,
    pub pairs: bool,
    pub triples: bool,
    /// Keep at most this many estimands of each order, chosen with `seed`.
    pub max_per_order: Option<usize>,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            marginals: true,
            pairs: true,
            triples: true,
            max_per_order: None,
            seed: 0,
        }
    }
}

/// Every marginal, pair and triple cell over the schema's variables (the
/// size variable excluded), followed by `predicates`.
pub fn estimand_suite(
    schema: &DatasetSchema,
    opts: &SuiteOptions,
    predicates: &[Estimand],
) -> Result<Vec<Estimand>> {
    let vars: Vec<(&str, &[String])> = schema
        .household_vars
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != schema.size_var)
        .map(|(_, v)| (v.name.as_str(), v.levels.as_slice()))
        .chain(
            schema
                .individual_vars
                .iter()
                .map(|v| (v.name.as_str(), v.levels.as_slice())),
        )
        .collect();
    let mut out = Vec::new();
    let mut rng = seeded(opts.seed);
    for (order, on) in [(1, opts.marginals), (2, opts.pairs), (3, opts.triples)] {
        if !on {
            continue;
        }
        let mut cells: Vec<Vec<(String, String)>> = Vec::new();
        for combo in combinations(vars.len(), order) {
            let mut acc: Vec<Vec<(String, String)>> = vec![Vec::new()];
            for &v in &combo {
                let (name, levels) = vars[v];
                acc = acc
                    .into_iter()
                    .flat_map(|prefix| {
                        levels.iter().map(move |l| {
                            let mut next = prefix.clone();
                            next.push((name.to_string(), l.clone()));
                            next
                        })
                    })
                    .collect();
            }
            cells.extend(acc);
        }
        if let Some(max) = opts.max_per_order {
            if cells.len() > max {
                let mut keep = sample(&mut rng, cells.len(), max).into_vec();
                keep.sort_unstable();
                cells = keep
                    .into_iter()
                    .map(|i| std::mem::take(&mut cells[i]))
                    .collect();
            }
        }
        for c in cells {
            out.push(Estimand::cell(schema, c)?);
        }
    }
    out.extend(predicates.iter().cloned());
    Ok(out)
}

/// All increasing index tuples of length `k` from 0..n.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Household predicates on the census layout (relationship to the head,
/// race, Hispanic origin, age, gender and ownership).
pub const CENSUS_ESTIMANDS: &str = include_str!("../../data/census.estimands");

pub fn census_predicates(schema: &DatasetSchema) -> Result<Vec<Estimand>> {
    parse_estimands(CENSUS_ESTIMANDS, schema)
}
