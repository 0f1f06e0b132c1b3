//! Long-format delimited data: one row per stored individual, household
//! columns repeated on every row, `NA` for unobserved cells.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::sync::Arc;

use super::{parse_schema, Dataset, DatasetSchema, Household, MissingnessMask, Record, MISSING};
use crate::error::{Error, Result};

const NA: &str = "NA";

/// Parses a schema and reads the data stream against it.
pub fn load_dataset<R: Read>(schema_source: &str, data: R) -> Result<Dataset> {
    let schema = Arc::new(parse_schema(schema_source)?);
    read_dataset(schema, data)
}

struct Pending {
    id: String,
    first_row: usize,
    hh_tokens: Vec<String>,
    rows: Vec<(i64, Vec<u16>)>,
}

pub fn read_dataset<R: Read>(schema: Arc<DatasetSchema>, data: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(data);
    let header = reader.headers()?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::DataRow {
                row: 1,
                msg: format!("missing column {name}"),
            })
    };
    let id_col = column("hh_id")?;
    let person_col = column("person_idx")?;
    let hh_cols = schema
        .household_vars
        .iter()
        .map(|v| column(&v.name))
        .collect::<Result<Vec<_>>>()?;
    let ind_cols = schema
        .individual_vars
        .iter()
        .map(|v| column(&v.name))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    let mut current: Option<Pending> = None;

    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let row_no = i + 2;
        let id = row.get(id_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(Error::DataRow {
                row: row_no,
                msg: "empty hh_id".into(),
            });
        }
        let hh_tokens: Vec<String> = hh_cols
            .iter()
            .map(|&c| row.get(c).unwrap_or("").to_string())
            .collect();
        let person: i64 =
            row.get(person_col)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::DataRow {
                    row: row_no,
                    msg: "person_idx is not an integer".into(),
                })?;
        let mut values = Vec::with_capacity(ind_cols.len());
        for (&c, spec) in ind_cols.iter().zip(&schema.individual_vars) {
            values.push(decode(spec, row.get(c).unwrap_or(""))?);
        }

        let same = current.as_ref().is_some_and(|p| p.id == id);
        if !same {
            if let Some(done) = current.take() {
                finished.insert(done.id.clone());
                records.push(finish(&schema, done)?);
            }
            if finished.contains(&id) {
                return Err(Error::DuplicateHousehold(id));
            }
            current = Some(Pending {
                id: id.clone(),
                first_row: row_no,
                hh_tokens: hh_tokens.clone(),
                rows: Vec::new(),
            });
        }
        let pending = current.as_mut().expect("pending household");
        if pending.hh_tokens != hh_tokens {
            return Err(Error::DataRow {
                row: row_no,
                msg: format!("household {id} has inconsistent household-level values"),
            });
        }
        if pending.rows.iter().any(|(p, _)| *p == person) {
            return Err(Error::DataRow {
                row: row_no,
                msg: format!("household {id} repeats person_idx {person}"),
            });
        }
        pending.rows.push((person, values));
    }
    if let Some(done) = current.take() {
        records.push(finish(&schema, done)?);
    }
    Dataset::new(schema, records)
}

fn decode(spec: &super::VariableSpec, token: &str) -> Result<u16> {
    if token == NA {
        Ok(MISSING)
    } else {
        spec.code_or_err(token)
    }
}

fn finish(schema: &DatasetSchema, mut p: Pending) -> Result<Record> {
    let mut hh_values = Vec::with_capacity(schema.q());
    for (tok, spec) in p.hh_tokens.iter().zip(&schema.household_vars) {
        hh_values.push(decode(spec, tok)?);
    }
    let size_code = hh_values[schema.size_var];
    if size_code == MISSING {
        return Err(Error::MissingSize(p.id));
    }
    let size = schema.size_of_code(size_code);
    if p.rows.len() != schema.stored_rows(size) {
        return Err(Error::DataRow {
            row: p.first_row,
            msg: format!(
                "household {} declares size {size} but has {} rows",
                p.id,
                p.rows.len()
            ),
        });
    }
    p.rows.sort_by_key(|(idx, _)| *idx);
    let household = Household {
        id: p.id,
        size,
        household_values: hh_values,
        individuals: p.rows.into_iter().map(|(_, v)| v).collect(),
    };
    let mask = MissingnessMask::of(&household);
    Ok(Record { household, mask })
}

/// Writes the current values of every household. Cells still holding
/// [`MISSING`] are written as `NA`.
pub fn write_dataset<W: Write>(d: &Dataset, out: W) -> Result<()> {
    let schema = &d.schema;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["hh_id".to_string(), "person_idx".to_string()];
    header.extend(schema.household_vars.iter().map(|v| v.name.clone()));
    header.extend(schema.individual_vars.iter().map(|v| v.name.clone()));
    w.write_record(&header)?;
    let label = |spec: &super::VariableSpec, code: u16| -> String {
        if code == MISSING {
            NA.to_string()
        } else {
            spec.levels[code as usize].clone()
        }
    };
    for r in &d.records {
        let h = &r.household;
        let hh: Vec<String> = h
            .household_values
            .iter()
            .zip(&schema.household_vars)
            .map(|(&c, s)| label(s, c))
            .collect();
        for (j, row) in h.individuals.iter().enumerate() {
            let mut fields = vec![h.id.clone(), (j + 1).to_string()];
            fields.extend(hh.iter().cloned());
            fields.extend(
                row.iter()
                    .zip(&schema.individual_vars)
                    .map(|(&c, s)| label(s, c)),
            );
            w.write_record(&fields)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCHEMA: &str =
        "var a scope=individual levels=x,y\nvar b scope=individual levels=x,y\nsizes=2\n";

    #[test]
    fn loads_single_complete_household() {
        let data = "hh_id,person_idx,size,a,b\n1,1,2,x,y\n1,2,2,y,y\n";
        let d = load_dataset(SCHEMA, data.as_bytes()).unwrap();
        assert_eq!(d.n(), 1);
        assert_eq!(d.total_individuals(), 2);
        assert_eq!(d.missing_cells(), 0);
        assert_eq!(
            d.records[0].household.individuals,
            vec![vec![0, 1], vec![1, 1]]
        );
    }

    #[test]
    fn unknown_level_is_reported() {
        let data = "hh_id,person_idx,size,a,b\n1,1,2,x,z\n1,2,2,y,y\n";
        let err = load_dataset(SCHEMA, data.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("unknown level"), "{err}");
    }

    #[test]
    fn non_contiguous_household_is_duplicate() {
        let data =
            "hh_id,person_idx,size,a,b\n1,1,2,x,x\n1,2,2,x,x\n2,1,2,x,x\n2,2,2,x,x\n1,3,2,x,x\n";
        assert!(matches!(
            load_dataset(SCHEMA, data.as_bytes()),
            Err(Error::DuplicateHousehold(id)) if id == "1"
        ));
    }

    #[test]
    fn size_errors() {
        let outside = "hh_id,person_idx,size,a,b\n1,1,3,x,x\n";
        assert!(load_dataset(SCHEMA, outside.as_bytes()).is_err());
        let missing = "hh_id,person_idx,size,a,b\n1,1,NA,x,x\n1,2,NA,x,x\n";
        assert!(matches!(
            load_dataset(SCHEMA, missing.as_bytes()),
            Err(Error::MissingSize(_))
        ));
    }

    #[test]
    fn na_cells_become_masks_and_write_back() {
        let data = "hh_id,person_idx,size,a,b\n7,1,2,NA,y\n7,2,2,y,y\n";
        let d = load_dataset(SCHEMA, data.as_bytes()).unwrap();
        assert!(d.records[0].mask.individuals[0][0]);
        assert_eq!(d.missing_cells(), 1);
        let mut out = Vec::new();
        write_dataset(&d, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), data);
    }
}
