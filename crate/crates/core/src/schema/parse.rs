//! Line-oriented schema files.
//!
//! ```text
//! # comment
//! var ownership scope=household levels=owned,rented
//! var size scope=household levels=2,3,4
//! var age scope=individual levels=0..95 ordinal
//! sizes=2,3,4
//! size=size
//! relationship=relationship
//! head=head
//! ```
//!
//! `a..b` inside a level list expands to the integer labels `a` through `b`.
//! When no `size=` line is present a household variable called `size` is
//! used, or one is created from `sizes=`.

use super::{DatasetSchema, Scope, VariableSpec};
use crate::error::{Error, Result};

pub fn parse_schema(text: &str) -> Result<DatasetSchema> {
    let mut household = Vec::new();
    let mut individual = Vec::new();
    let mut sizes: Option<Vec<usize>> = None;
    let mut size_name: Option<String> = None;
    let mut relationship = None;
    let mut head = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::SchemaSyntax { line: line_no, msg };
        if let Some(rest) = line.strip_prefix("var ") {
            let spec = parse_var(rest).map_err(err)?;
            match spec.scope {
                Scope::Household => household.push(spec),
                Scope::Individual => individual.push(spec),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(format!("cannot parse {line:?}")));
        };
        let value = value.trim();
        match key.trim() {
            "sizes" => {
                let list = expand_levels(value)
                    .map_err(&err)?
                    .iter()
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| err(format!("sizes must be integers: {value}")))?;
                sizes = Some(list);
            }
            "size" => size_name = Some(value.to_string()),
            "relationship" => relationship = Some(value.to_string()),
            "head" => head = Some(value.to_string()),
            other => return Err(err(format!("unknown key {other:?}"))),
        }
    }

    let size_name = match size_name {
        Some(n) => n,
        None if household.iter().any(|v| v.name == "size") => "size".to_string(),
        None => {
            let Some(list) = &sizes else {
                return Err(Error::InvalidSchema(
                    "no household size variable and no sizes= line".into(),
                ));
            };
            household.insert(
                0,
                VariableSpec::new(
                    "size",
                    Scope::Household,
                    list.iter().map(|h| h.to_string()).collect(),
                ),
            );
            "size".to_string()
        }
    };

    let mut schema = DatasetSchema::new(household, individual, &size_name)?;
    if let Some(list) = sizes {
        if list != schema.household_sizes {
            return Err(Error::InvalidSchema(format!(
                "sizes={list:?} disagrees with the levels of {size_name}"
            )));
        }
    }
    match (relationship, head) {
        (Some(r), Some(h)) => schema = schema.with_relationship(&r, &h)?,
        (None, None) => {}
        _ => {
            return Err(Error::InvalidSchema(
                "relationship= and head= must be given together".into(),
            ))
        }
    }
    Ok(schema)
}

fn parse_var(rest: &str) -> std::result::Result<VariableSpec, String> {
    let mut tokens = rest.split_whitespace();
    let name = tokens.next().ok_or("missing variable name")?.to_string();
    let mut scope = None;
    let mut levels = None;
    let mut ordinal = false;
    for tok in tokens {
        if tok == "ordinal" {
            ordinal = true;
        } else if let Some(s) = tok.strip_prefix("scope=") {
            scope = Some(match s {
                "household" => Scope::Household,
                "individual" => Scope::Individual,
                _ => return Err(format!("unknown scope {s:?}")),
            });
        } else if let Some(l) = tok.strip_prefix("levels=") {
            levels = Some(expand_levels(l)?);
        } else {
            return Err(format!("unexpected token {tok:?}"));
        }
    }
    Ok(VariableSpec {
        name,
        scope: scope.ok_or("missing scope=")?,
        levels: levels.ok_or("missing levels=")?,
        ordinal,
    })
}

fn expand_levels(list: &str) -> std::result::Result<Vec<String>, String> {
    let mut out = Vec::new();
    for item in list.split(',').map(str::trim) {
        if item.is_empty() {
            return Err("empty level label".into());
        }
        match item.split_once("..") {
            Some((a, b)) => {
                let a: i64 = a.parse().map_err(|_| format!("bad range {item:?}"))?;
                let b: i64 = b.parse().map_err(|_| format!("bad range {item:?}"))?;
                if a > b {
                    return Err(format!("empty range {item:?}"));
                }
                out.extend((a..=b).map(|x| x.to_string()));
            }
            None => out.push(item.to_string()),
        }
    }
    Ok(out)
}
