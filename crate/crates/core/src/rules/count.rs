//! Sizes of the combination space C_h and of the structural-zero set S_h.
//!
//! Combinations are counted conditional on household size: the size
//! variable is fixed by `h` and does not contribute a factor.

use std::collections::HashMap;

use super::RuleSet;
use crate::error::{Error, Result};
use crate::schema::{DatasetSchema, Household};

/// Largest space `count_structural_zeros` will enumerate.
pub const ENUMERATION_LIMIT: u128 = 100_000_000;
/// Largest space `enumerate_feasible` will walk.
pub const ORACLE_LIMIT: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMethod {
    /// Closed form when every rule is a count rule, enumeration otherwise.
    #[default]
    Auto,
    ClosedForm,
    Enumerate,
}

/// |C_h|: all value combinations of a size-`h` household in `schema`'s layout.
pub fn count_combinations(schema: &DatasetSchema, h: usize) -> Result<u128> {
    let mut total: u128 = 1;
    for (k, v) in schema.household_vars.iter().enumerate() {
        if k != schema.size_var {
            total = total
                .checked_mul(v.cardinality() as u128)
                .ok_or(Error::CountOverflow)?;
        }
    }
    let per_person = schema
        .individual_vars
        .iter()
        .try_fold(1u128, |acc, v| acc.checked_mul(v.cardinality() as u128))
        .ok_or(Error::CountOverflow)?;
    for _ in 0..schema.stored_rows(h) {
        total = total.checked_mul(per_person).ok_or(Error::CountOverflow)?;
    }
    Ok(total)
}

/// |S_h|, the number of combinations violating at least one rule.
pub fn count_structural_zeros(
    schema: &DatasetSchema,
    rules: &RuleSet,
    h: usize,
    method: CountMethod,
) -> Result<u128> {
    let total = count_combinations(schema, h)?;
    Ok(total - count_feasible(schema, rules, h, method)?)
}

/// |C_h − S_h|.
pub fn count_feasible(
    schema: &DatasetSchema,
    rules: &RuleSet,
    h: usize,
    method: CountMethod,
) -> Result<u128> {
    if schema.size_code(h).is_none() {
        return Err(Error::InvalidParams(format!(
            "size {h} is not in the size set"
        )));
    }
    let closed = rules.compiled_count_only();
    match (method, closed) {
        (CountMethod::Auto | CountMethod::ClosedForm, Some(counts)) => {
            closed_form(schema, &counts, h)
        }
        (CountMethod::ClosedForm, None) => Err(Error::InvalidParams(
            "closed-form counting needs a rule set of count rules only".into(),
        )),
        _ => {
            let total = count_combinations(schema, h)?;
            if total > ENUMERATION_LIMIT {
                return Err(Error::SpaceTooLarge {
                    size: total,
                    limit: ENUMERATION_LIMIT,
                });
            }
            let mut n = 0u128;
            walk(schema, h, |hh, rows| {
                if rules.feasible_raw(hh, rows) {
                    n += 1;
                }
            });
            Ok(n)
        }
    }
}

/// Counts person tuples in the original layout by dynamic programming over
/// per-rule tallies. In a head-moved layout person 0 is the head.
fn closed_form(
    schema: &DatasetSchema,
    counts: &[(usize, Vec<bool>, usize, usize)],
    h: usize,
) -> Result<u128> {
    let original = schema.original();
    let moved = schema
        .head_move
        .as_ref()
        .map(|m| (m.relationship, m.head_code));

    let mut hh_factor: u128 = 1;
    for (k, v) in original.household_vars.iter().enumerate() {
        if k != original.size_var {
            hh_factor = hh_factor
                .checked_mul(v.cardinality() as u128)
                .ok_or(Error::CountOverflow)?;
        }
    }

    // Per-person histogram of rule-membership signatures (bit r set when the
    // person's value falls in rule r's level set).
    let signatures = |head: Option<bool>| -> Result<HashMap<u64, u128>> {
        let mut hist: HashMap<u64, u128> = HashMap::from([(0, 1)]);
        for (k, spec) in original.individual_vars.iter().enumerate() {
            let mut by_bits: HashMap<u64, u128> = HashMap::new();
            for c in 0..spec.cardinality() as u16 {
                if let (Some((rel, code)), Some(is_head)) = (moved, head) {
                    if k == rel && (c == code) != is_head {
                        continue;
                    }
                }
                let mut bits = 0u64;
                for (r, (var, set, _, _)) in counts.iter().enumerate() {
                    if *var == k && set[c as usize] {
                        bits |= 1 << r;
                    }
                }
                *by_bits.entry(bits).or_default() += 1;
            }
            let mut next: HashMap<u64, u128> = HashMap::new();
            for (m, n) in &hist {
                for (b, w) in &by_bits {
                    let add = n.checked_mul(*w).ok_or(Error::CountOverflow)?;
                    let slot = next.entry(m | b).or_default();
                    *slot = slot.checked_add(add).ok_or(Error::CountOverflow)?;
                }
            }
            hist = next;
        }
        Ok(hist)
    };
    if counts.len() > 64 {
        return Err(Error::InvalidParams(
            "closed form supports at most 64 count rules".into(),
        ));
    }

    let caps: Vec<usize> = counts
        .iter()
        .map(|(_, _, _, max)| (*max).min(h) + 1)
        .collect();
    let mut states: HashMap<Vec<usize>, u128> = HashMap::from([(vec![0; counts.len()], 1)]);
    let (head_hist, other_hist) = match moved {
        Some(_) => (Some(signatures(Some(true))?), signatures(Some(false))?),
        None => (None, signatures(None)?),
    };
    for person in 0..h {
        let hist = match (&head_hist, person) {
            (Some(hh), 0) => hh,
            _ => &other_hist,
        };
        let mut next: HashMap<Vec<usize>, u128> = HashMap::new();
        for (state, n) in &states {
            for (bits, w) in hist {
                let s: Vec<usize> = state
                    .iter()
                    .enumerate()
                    .map(|(r, &c)| (c + ((bits >> r) & 1) as usize).min(caps[r]))
                    .collect();
                let add = n.checked_mul(*w).ok_or(Error::CountOverflow)?;
                let slot = next.entry(s).or_default();
                *slot = slot.checked_add(add).ok_or(Error::CountOverflow)?;
            }
        }
        states = next;
    }
    let mut feasible: u128 = 0;
    for (state, n) in states {
        let ok = state
            .iter()
            .zip(counts)
            .all(|(&c, (_, _, min, max))| *min <= c && c <= *max);
        if ok {
            feasible = feasible.checked_add(n).ok_or(Error::CountOverflow)?;
        }
    }
    feasible.checked_mul(hh_factor).ok_or(Error::CountOverflow)
}

/// Visits every combination of a size-`h` household, household values and
/// row-major individual values in `schema`'s layout.
pub(crate) fn walk(schema: &DatasetSchema, h: usize, mut f: impl FnMut(&[u16], &[u16])) {
    let size_code = schema.size_code(h).expect("size checked by caller");
    let hh_card: Vec<u16> = schema
        .household_vars
        .iter()
        .enumerate()
        .map(|(k, v)| {
            if k == schema.size_var {
                1
            } else {
                v.cardinality() as u16
            }
        })
        .collect();
    let rows = schema.stored_rows(h);
    let ind_card: Vec<u16> = (0..rows)
        .flat_map(|_| {
            schema
                .individual_vars
                .iter()
                .map(|v| v.cardinality() as u16)
        })
        .collect();
    let mut hh = vec![0u16; hh_card.len()];
    let mut ind = vec![0u16; ind_card.len()];
    loop {
        hh[schema.size_var] = size_code;
        f(&hh, &ind);
        hh[schema.size_var] = 0;
        if !advance(&mut ind, &ind_card) && !advance(&mut hh, &hh_card) {
            return;
        }
    }
}

/// Odometer step; false once every digit has wrapped.
fn advance(digits: &mut [u16], card: &[u16]) -> bool {
    for i in (0..digits.len()).rev() {
        digits[i] += 1;
        if digits[i] < card[i] {
            return true;
        }
        digits[i] = 0;
    }
    false
}

/// Every feasible size-`h` household, each exactly once.
pub fn enumerate_feasible(
    schema: &DatasetSchema,
    rules: &RuleSet,
    h: usize,
) -> Result<impl Iterator<Item = Household>> {
    if schema.size_code(h).is_none() {
        return Err(Error::InvalidParams(format!(
            "size {h} is not in the size set"
        )));
    }
    let total = count_combinations(schema, h)?;
    if total > ORACLE_LIMIT {
        return Err(Error::SpaceTooLarge {
            size: total,
            limit: ORACLE_LIMIT,
        });
    }
    let p = schema.p();
    let mut out = Vec::new();
    walk(schema, h, |hh, rows| {
        if rules.feasible_raw(hh, rows) {
            out.push(Household {
                id: format!("e{}", out.len()),
                size: h,
                household_values: hh.to_vec(),
                individuals: if p == 0 {
                    vec![Vec::new(); schema.stored_rows(h)]
                } else {
                    rows.chunks(p).map(<[u16]>::to_vec).collect()
                },
            });
        }
    });
    Ok(out.into_iter())
}
