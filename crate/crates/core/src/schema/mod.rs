//! Nested categorical data model: households carrying household-level
//! variables and a list of individuals carrying individual-level variables.
//!
//! Level codes are stored 0-based (`0..d_k`); an ordinal variable's numeric
//! value is its code, so level 1 of an age variable ("less than one year")
//! is age 0. Unobserved cells hold [`MISSING`] until they are imputed.

mod io;
mod parse;
mod transform;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Error, Result};

pub use io::{load_dataset, read_dataset, write_dataset};
pub use parse::parse_schema;
pub use transform::{head_moved_schema, head_to_household_transform, inverse_transform};

/// Placeholder code for an unobserved, not yet imputed cell.
pub const MISSING: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Household,
    Individual,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSpec {
    pub name: String,
    pub scope: Scope,
    pub levels: Vec<String>,
    /// Ordinal variables (age) may appear in ordering and difference rules.
    pub ordinal: bool,
}

impl VariableSpec {
    pub fn new(name: impl Into<String>, scope: Scope, levels: Vec<String>) -> Self {
        Self {
            name: name.into(),
            scope,
            levels,
            ordinal: false,
        }
    }

    pub fn ordinal(mut self) -> Self {
        self.ordinal = true;
        self
    }

    pub fn cardinality(&self) -> usize {
        self.levels.len()
    }

    pub fn code_of(&self, label: &str) -> Option<u16> {
        self.levels
            .iter()
            .position(|l| l == label)
            .map(|i| i as u16)
    }

    pub fn code_or_err(&self, label: &str) -> Result<u16> {
        self.code_of(label).ok_or_else(|| Error::UnknownLevel {
            var: self.name.clone(),
            label: label.to_string(),
        })
    }
}

/// Record of how a head-moved schema relates to the layout it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadMove {
    pub original: Box<DatasetSchema>,
    /// Index of the relationship variable among the individual variables.
    pub relationship: usize,
    /// Code of the head level in the original relationship coding.
    pub head_code: u16,
    /// For each individual variable, the household variable holding the
    /// head's value (`None` for the relationship variable).
    pub head_vars: Vec<Option<usize>>,
}

impl HeadMove {
    /// Maps a stored relationship code of a non-head row back to the
    /// original coding.
    #[inline]
    pub fn original_relationship(&self, stored: u16) -> u16 {
        if stored != MISSING && stored >= self.head_code {
            stored + 1
        } else {
            stored
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSchema {
    pub household_vars: Vec<VariableSpec>,
    pub individual_vars: Vec<VariableSpec>,
    /// Allowed household sizes, ascending.
    pub household_sizes: Vec<usize>,
    /// Index of the household-size variable among the household variables.
    pub size_var: usize,
    pub relationship_var: Option<String>,
    pub head_level: Option<String>,
    /// Set when the schema was produced by the head-move transform.
    pub head_move: Option<HeadMove>,
}

impl DatasetSchema {
    pub fn new(
        household_vars: Vec<VariableSpec>,
        individual_vars: Vec<VariableSpec>,
        size_var: &str,
    ) -> Result<Self> {
        let size_idx = household_vars
            .iter()
            .position(|v| v.name == size_var)
            .ok_or_else(|| Error::UnknownVariable(size_var.to_string()))?;
        let mut sizes = Vec::new();
        for label in &household_vars[size_idx].levels {
            let h: usize = label.parse().map_err(|_| {
                Error::InvalidSchema(format!("size level {label:?} is not an integer"))
            })?;
            sizes.push(h);
        }
        let schema = Self {
            household_vars,
            individual_vars,
            household_sizes: sizes,
            size_var: size_idx,
            relationship_var: None,
            head_level: None,
            head_move: None,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn with_relationship(mut self, var: &str, head: &str) -> Result<Self> {
        self.relationship_var = Some(var.to_string());
        self.head_level = Some(head.to_string());
        self.validate()?;
        Ok(self)
    }

    /// Number of household-level variables (q).
    pub fn q(&self) -> usize {
        self.household_vars.len()
    }

    /// Number of individual-level variables (p).
    pub fn p(&self) -> usize {
        self.individual_vars.len()
    }

    pub fn size_code(&self, h: usize) -> Option<u16> {
        self.household_sizes
            .iter()
            .position(|&s| s == h)
            .map(|i| i as u16)
    }

    pub fn size_of_code(&self, code: u16) -> usize {
        self.household_sizes[code as usize]
    }

    /// Number of individual rows stored for a household of size `h`.
    pub fn stored_rows(&self, h: usize) -> usize {
        if self.head_move.is_some() {
            h - 1
        } else {
            h
        }
    }

    pub fn household_index(&self, name: &str) -> Option<usize> {
        self.household_vars.iter().position(|v| v.name == name)
    }

    pub fn individual_index(&self, name: &str) -> Option<usize> {
        self.individual_vars.iter().position(|v| v.name == name)
    }

    pub fn relationship_index(&self) -> Option<usize> {
        self.relationship_var
            .as_deref()
            .and_then(|n| self.individual_index(n))
    }

    /// Code of the head level in the relationship variable, when the head is
    /// stored as an individual row.
    pub fn head_code(&self) -> Option<u16> {
        if self.head_move.is_some() {
            return None;
        }
        let rel = self.relationship_index()?;
        self.individual_vars[rel].code_of(self.head_level.as_deref()?)
    }

    /// The schema rules and estimands are written against: the original
    /// layout for head-moved schemas, `self` otherwise.
    pub fn original(&self) -> &DatasetSchema {
        match &self.head_move {
            Some(hm) => &hm.original,
            None => self,
        }
    }

    pub fn household_cardinalities(&self) -> Vec<usize> {
        self.household_vars
            .iter()
            .map(|v| v.cardinality())
            .collect()
    }

    pub fn individual_cardinalities(&self) -> Vec<usize> {
        self.individual_vars
            .iter()
            .map(|v| v.cardinality())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidSchema(m));
        if self.household_sizes.is_empty() {
            return invalid("the size set is empty".into());
        }
        if self.household_sizes.contains(&0) {
            return invalid("household sizes must be at least 1".into());
        }
        if self.household_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("size levels must be strictly increasing".into());
        }
        if self.head_move.is_some() && self.household_sizes[0] < 1 {
            return invalid("head-moved households need at least one member".into());
        }
        let mut seen = std::collections::HashSet::new();
        for (i, v) in self
            .household_vars
            .iter()
            .chain(self.individual_vars.iter())
            .enumerate()
        {
            if !seen.insert(v.name.as_str()) {
                return invalid(format!("variable {} declared twice", v.name));
            }
            let is_size = v.scope == Scope::Household && i == self.size_var;
            if !is_size && v.cardinality() < 2 {
                return invalid(format!("variable {} needs at least two levels", v.name));
            }
            if v.cardinality() >= MISSING as usize {
                return invalid(format!("variable {} has too many levels", v.name));
            }
            let mut labels = std::collections::HashSet::new();
            if !v.levels.iter().all(|l| labels.insert(l.as_str())) {
                return invalid(format!("variable {} repeats a level label", v.name));
            }
        }
        if self
            .household_vars
            .iter()
            .any(|v| v.scope != Scope::Household)
            || self
                .individual_vars
                .iter()
                .any(|v| v.scope != Scope::Individual)
        {
            return invalid("variable scope does not match its list".into());
        }
        if self.relationship_var.is_some() != self.head_level.is_some() {
            return invalid("relationship and head must be declared together".into());
        }
        if let Some(rel) = &self.relationship_var {
            let Some(k) = self.individual_index(rel) else {
                return invalid(format!(
                    "relationship variable {rel} is not an individual variable"
                ));
            };
            let head = self.head_level.as_deref().unwrap_or_default();
            if self.head_move.is_none() && self.individual_vars[k].code_of(head).is_none() {
                return invalid(format!("head level {head:?} is not a level of {rel}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Household {
    pub id: String,
    /// Number of people in the household (n_i), including a moved head.
    pub size: usize,
    pub household_values: Vec<u16>,
    pub individuals: Vec<Vec<u16>>,
}

impl Household {
    pub fn is_complete(&self) -> bool {
        self.household_values.iter().all(|&v| v != MISSING)
            && self.individuals.iter().flatten().all(|&v| v != MISSING)
    }

    /// Individual values flattened row-major.
    pub fn flat_individuals(&self) -> Vec<u16> {
        self.individuals.iter().flatten().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MissingnessMask {
    pub household: Vec<bool>,
    pub individuals: Vec<Vec<bool>>,
}

impl MissingnessMask {
    pub fn empty(q: usize, p: usize, rows: usize) -> Self {
        Self {
            household: vec![false; q],
            individuals: vec![vec![false; p]; rows],
        }
    }

    pub fn of(h: &Household) -> Self {
        Self {
            household: h.household_values.iter().map(|&v| v == MISSING).collect(),
            individuals: h
                .individuals
                .iter()
                .map(|r| r.iter().map(|&v| v == MISSING).collect())
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.household.iter().filter(|&&b| b).count()
            + self.individuals.iter().flatten().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.count() > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub household: Household,
    pub mask: MissingnessMask,
}

/// Provenance attached by the head-move transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransformProvenance {
    /// Position of the head among each household's original rows.
    pub head_positions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Arc<DatasetSchema>,
    pub records: Vec<Record>,
    pub provenance: Option<TransformProvenance>,
}

impl Dataset {
    /// Builds a dataset, checking every household against the schema.
    pub fn new(schema: Arc<DatasetSchema>, records: Vec<Record>) -> Result<Self> {
        let mut ids = std::collections::HashSet::new();
        for r in &records {
            if !ids.insert(r.household.id.as_str()) {
                return Err(Error::DuplicateHousehold(r.household.id.clone()));
            }
            check_household(&schema, &r.household, &r.mask)?;
        }
        Ok(Self {
            schema,
            records,
            provenance: None,
        })
    }

    /// Number of households (n).
    pub fn n(&self) -> usize {
        self.records.len()
    }

    /// Number of individuals (N = Σ n_i).
    pub fn total_individuals(&self) -> usize {
        self.records.iter().map(|r| r.household.size).sum()
    }

    /// Household counts per size (n_1h), over every size in H.
    pub fn size_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts: BTreeMap<usize, usize> = self
            .schema
            .household_sizes
            .iter()
            .map(|&h| (h, 0))
            .collect();
        for r in &self.records {
            *counts.entry(r.household.size).or_default() += 1;
        }
        counts
    }

    pub fn missing_cells(&self) -> usize {
        self.records.iter().map(|r| r.mask.count()).sum()
    }

    pub fn households(&self) -> impl Iterator<Item = &Household> {
        self.records.iter().map(|r| &r.household)
    }
}

fn check_household(schema: &DatasetSchema, h: &Household, mask: &MissingnessMask) -> Result<()> {
    let fail = |msg: String| {
        Err(Error::Household {
            id: h.id.clone(),
            msg,
        })
    };
    let Some(size_code) = schema.size_code(h.size) else {
        return Err(Error::SizeOutOfRange {
            id: h.id.clone(),
            size: h.size,
        });
    };
    if h.household_values.len() != schema.q() {
        return fail(format!("expected {} household values", schema.q()));
    }
    match h.household_values[schema.size_var] {
        MISSING => return Err(Error::MissingSize(h.id.clone())),
        c if c != size_code => return fail("size variable disagrees with member count".into()),
        _ => {}
    }
    if h.individuals.len() != schema.stored_rows(h.size) {
        return fail(format!(
            "size {} needs {} individual rows, found {}",
            h.size,
            schema.stored_rows(h.size),
            h.individuals.len()
        ));
    }
    for (v, spec) in h.household_values.iter().zip(&schema.household_vars) {
        if *v != MISSING && *v as usize >= spec.cardinality() {
            return fail(format!("code {v} out of range for {}", spec.name));
        }
    }
    for row in &h.individuals {
        if row.len() != schema.p() {
            return fail(format!("expected {} individual values", schema.p()));
        }
        for (v, spec) in row.iter().zip(&schema.individual_vars) {
            if *v != MISSING && *v as usize >= spec.cardinality() {
                return fail(format!("code {v} out of range for {}", spec.name));
            }
        }
    }
    if mask.household.len() != schema.q()
        || mask.individuals.len() != h.individuals.len()
        || mask.individuals.iter().any(|m| m.len() != schema.p())
    {
        return fail("mask dimensions do not match the schema".into());
    }
    if mask.household[schema.size_var] {
        return Err(Error::MissingSize(h.id.clone()));
    }
    Ok(())
}
