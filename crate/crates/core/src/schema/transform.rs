//! Moving the household head's individual variables to the household level.
//!
//! The head's row is removed and each of its variables except the
//! relationship becomes a household variable `<var>_of_HH`. Remaining rows
//! carry the relationship on `d - 1` levels (head level removed). The size
//! variable keeps counting the head.

use std::sync::Arc;

use super::{
    Dataset, DatasetSchema, HeadMove, Household, MissingnessMask, Record, Scope,
    TransformProvenance, VariableSpec, MISSING,
};
use crate::error::{Error, Result};

/// Builds the head-moved schema for `schema`.
pub fn head_moved_schema(schema: &DatasetSchema) -> Result<DatasetSchema> {
    if schema.head_move.is_some() {
        return Err(Error::Transform("schema is already head-moved".into()));
    }
    let (Some(rel), Some(head_code)) = (schema.relationship_index(), schema.head_code()) else {
        return Err(Error::Transform(
            "relationship variable and head level must be configured".into(),
        ));
    };
    if schema.household_sizes[0] < 1 {
        return Err(Error::Transform("households must have a head".into()));
    }
    let mut household_vars = schema.household_vars.clone();
    let mut head_vars = Vec::with_capacity(schema.p());
    for (k, spec) in schema.individual_vars.iter().enumerate() {
        if k == rel {
            head_vars.push(None);
            continue;
        }
        head_vars.push(Some(household_vars.len()));
        household_vars.push(VariableSpec {
            name: format!("{}_of_HH", spec.name),
            scope: Scope::Household,
            levels: spec.levels.clone(),
            ordinal: spec.ordinal,
        });
    }
    let mut individual_vars = schema.individual_vars.clone();
    individual_vars[rel].levels.remove(head_code as usize);
    if individual_vars[rel].levels.len() < 2 {
        return Err(Error::Transform(
            "relationship needs at least two non-head levels".into(),
        ));
    }
    let moved = DatasetSchema {
        household_vars,
        individual_vars,
        household_sizes: schema.household_sizes.clone(),
        size_var: schema.size_var,
        relationship_var: schema.relationship_var.clone(),
        head_level: schema.head_level.clone(),
        head_move: Some(HeadMove {
            original: Box::new(schema.clone()),
            relationship: rel,
            head_code,
            head_vars,
        }),
    };
    moved.validate()?;
    Ok(moved)
}

pub fn head_to_household_transform(d: &Dataset) -> Result<Dataset> {
    let schema = Arc::new(head_moved_schema(&d.schema)?);
    let hm = schema.head_move.as_ref().expect("head-moved schema");
    let (rel, head_code) = (hm.relationship, hm.head_code);

    let mut records = Vec::with_capacity(d.records.len());
    let mut positions = Vec::with_capacity(d.records.len());
    for r in &d.records {
        let h = &r.household;
        let heads: Vec<usize> = (0..h.individuals.len())
            .filter(|&j| h.individuals[j][rel] == head_code)
            .collect();
        let pos = match heads.as_slice() {
            [pos] => *pos,
            [] if h.individuals.iter().any(|row| row[rel] == MISSING) => {
                return Err(Error::Transform(format!(
                    "household {}: head cannot be identified (relationship missing)",
                    h.id
                )))
            }
            [] => {
                return Err(Error::Transform(format!("household {}: no head", h.id)));
            }
            _ => {
                return Err(Error::Transform(format!(
                    "household {}: {} heads",
                    h.id,
                    heads.len()
                )))
            }
        };
        let head_row = &h.individuals[pos];
        let head_mask = &r.mask.individuals[pos];

        let mut hh_values = h.household_values.clone();
        let mut hh_mask = r.mask.household.clone();
        for (k, slot) in hm.head_vars.iter().enumerate() {
            if slot.is_some() {
                hh_values.push(head_row[k]);
                hh_mask.push(head_mask[k]);
            }
        }
        let mut rows = Vec::with_capacity(h.individuals.len() - 1);
        let mut masks = Vec::with_capacity(h.individuals.len() - 1);
        for (j, (row, m)) in h.individuals.iter().zip(&r.mask.individuals).enumerate() {
            if j == pos {
                continue;
            }
            let mut row = row.clone();
            if row[rel] != MISSING && row[rel] > head_code {
                row[rel] -= 1;
            }
            rows.push(row);
            masks.push(m.clone());
        }
        positions.push(pos);
        records.push(Record {
            household: Household {
                id: h.id.clone(),
                size: h.size,
                household_values: hh_values,
                individuals: rows,
            },
            mask: MissingnessMask {
                household: hh_mask,
                individuals: masks,
            },
        });
    }
    let mut out = Dataset::new(schema, records)?;
    out.provenance = Some(TransformProvenance {
        head_positions: positions,
    });
    Ok(out)
}

pub fn inverse_transform(d: &Dataset) -> Result<Dataset> {
    let (Some(hm), Some(prov)) = (&d.schema.head_move, &d.provenance) else {
        return Err(Error::Transform(
            "dataset was not produced by the head-move transform".into(),
        ));
    };
    if prov.head_positions.len() != d.records.len() {
        return Err(Error::Transform(
            "provenance does not match the dataset".into(),
        ));
    }
    let original = Arc::new((*hm.original).clone());
    let q0 = original.q();
    let rel = hm.relationship;
    let mut records = Vec::with_capacity(d.records.len());
    for (r, &pos) in d.records.iter().zip(&prov.head_positions) {
        let h = &r.household;
        let mut head_row = vec![0u16; original.p()];
        let mut head_mask = vec![false; original.p()];
        for (k, slot) in hm.head_vars.iter().enumerate() {
            match slot {
                Some(idx) => {
                    head_row[k] = h.household_values[*idx];
                    head_mask[k] = r.mask.household[*idx];
                }
                None => head_row[k] = hm.head_code,
            }
        }
        let mut rows: Vec<Vec<u16>> = h
            .individuals
            .iter()
            .map(|row| {
                let mut row = row.clone();
                row[rel] = hm.original_relationship(row[rel]);
                row
            })
            .collect();
        let mut masks = r.mask.individuals.clone();
        let pos = pos.min(rows.len());
        rows.insert(pos, head_row);
        masks.insert(pos, head_mask);
        records.push(Record {
            household: Household {
                id: h.id.clone(),
                size: h.size,
                household_values: h.household_values[..q0].to_vec(),
                individuals: rows,
            },
            mask: MissingnessMask {
                household: r.mask.household[..q0].to_vec(),
                individuals: masks,
            },
        });
    }
    Dataset::new(original, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{load_dataset, parse_schema};

    const SCHEMA: &str = "var age scope=individual levels=0..99 ordinal\n\
        var rel scope=individual levels=head,spouse,child,r3,r4,r5,r6,r7,r8,r9,r10,r11,r12\n\
        sizes=2\nrelationship=rel\nhead=head\n";

    #[test]
    fn working_example_layout() {
        let s = parse_schema(SCHEMA).unwrap();
        let t = head_moved_schema(&s).unwrap();
        let names: Vec<_> = t.household_vars.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, vec!["size", "age_of_HH"]);
        assert_eq!(t.household_vars[1].cardinality(), 100);
        assert_eq!(t.individual_vars[1].cardinality(), 12);
        assert_eq!(t.stored_rows(2), 1);
    }

    #[test]
    fn round_trip_and_head_position() {
        let data = "hh_id,person_idx,size,age,rel\n\
                    a,1,2,30,spouse\na,2,2,33,head\n\
                    b,1,2,40,head\nb,2,2,NA,child\n";
        let d = load_dataset(SCHEMA, data.as_bytes()).unwrap();
        let t = head_to_household_transform(&d).unwrap();
        assert_eq!(t.records[0].household.household_values, vec![0, 33]);
        assert_eq!(t.records[0].household.individuals, vec![vec![30, 0]]);
        assert_eq!(t.missing_cells(), d.missing_cells());
        assert_eq!(inverse_transform(&t).unwrap(), d);
    }

    #[test]
    fn imputed_head_age_lands_on_head_row() {
        let data = "hh_id,person_idx,size,age,rel\na,1,2,NA,head\na,2,2,5,child\n";
        let d = load_dataset(SCHEMA, data.as_bytes()).unwrap();
        let mut t = head_to_household_transform(&d).unwrap();
        t.records[0].household.household_values[1] = 41;
        let back = inverse_transform(&t).unwrap();
        assert_eq!(back.records[0].household.individuals[0], vec![41, 0]);
        assert!(back.records[0].mask.individuals[0][0]);
    }

    #[test]
    fn head_errors() {
        let two = "hh_id,person_idx,size,age,rel\na,1,2,30,head\na,2,2,33,head\n";
        let d = load_dataset(SCHEMA, two.as_bytes()).unwrap();
        assert!(head_to_household_transform(&d).is_err());
        let none = "hh_id,person_idx,size,age,rel\na,1,2,30,spouse\na,2,2,33,child\n";
        let d = load_dataset(SCHEMA, none.as_bytes()).unwrap();
        assert!(head_to_household_transform(&d).is_err());
        let hidden = "hh_id,person_idx,size,age,rel\na,1,2,30,NA\na,2,2,33,child\n";
        let d = load_dataset(SCHEMA, hidden.as_bytes()).unwrap();
        let err = head_to_household_transform(&d).unwrap_err();
        assert!(err.to_string().contains("cannot be identified"));
    }

    #[test]
    fn inverse_needs_provenance() {
        let data = "hh_id,person_idx,size,age,rel\na,1,2,30,head\na,2,2,3,child\n";
        let d = load_dataset(SCHEMA, data.as_bytes()).unwrap();
        assert!(inverse_transform(&d).is_err());
    }
}
