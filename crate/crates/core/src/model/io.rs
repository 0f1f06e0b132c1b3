//! Parameter checkpoints as line-oriented text. Every float is written in
//! its shortest round-trip form, so reading restores bit-identical values.

use std::io::{BufRead, BufReader, Read, Write};

use super::{Hyperparams, ModelParams};
use crate::error::{Error, Result};

const MAGIC: &str = "nested-impute-params 1";

pub fn write_params<W: Write>(p: &ModelParams, hp: &Hyperparams, mut w: W) -> Result<()> {
    let join = |xs: &[f64]| {
        xs.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let joinu = |xs: &[usize]| {
        xs.iter()
            .map(|x| x.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    writeln!(w, "{MAGIC}")?;
    writeln!(
        w,
        "hyper {} {} {} {} {} {}",
        hp.f, hp.s, hp.a_alpha, hp.b_alpha, hp.a_beta, hp.b_beta
    )?;
    writeln!(w, "classes {} {}", p.f, p.s)?;
    writeln!(w, "hh_card {}", joinu(&p.hh_card))?;
    writeln!(w, "ind_card {}", joinu(&p.ind_card))?;
    writeln!(w, "alpha {}", p.alpha)?;
    writeln!(w, "beta {}", p.beta)?;
    writeln!(w, "u {}", join(&p.u))?;
    writeln!(w, "pi {}", join(&p.pi))?;
    writeln!(w, "v {}", join(&p.v))?;
    writeln!(w, "omega {}", join(&p.omega))?;
    for t in &p.lambda {
        writeln!(w, "lambda {}", join(t))?;
    }
    for t in &p.phi {
        writeln!(w, "phi {}", join(t))?;
    }
    Ok(())
}

pub fn read_params<R: Read>(r: R) -> Result<(ModelParams, Hyperparams)> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| bad("empty file"))??;
    if first.trim() != MAGIC {
        return Err(bad("not a parameter file"));
    }
    let mut fields: Vec<(String, Vec<String>)> = Vec::new();
    for line in lines {
        let line = line?;
        let mut it = line.split_whitespace().map(str::to_string);
        if let Some(key) = it.next() {
            fields.push((key, it.collect()));
        }
    }
    let floats = |v: &[String]| -> Result<Vec<f64>> {
        v.iter()
            .map(|x| x.parse::<f64>().map_err(|_| bad("bad number")))
            .collect()
    };
    let ints = |v: &[String]| -> Result<Vec<usize>> {
        v.iter()
            .map(|x| x.parse::<usize>().map_err(|_| bad("bad integer")))
            .collect()
    };
    let one = |key: &str| -> Result<&Vec<String>> {
        fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Checkpoint(format!("missing {key}")))
    };
    let hyper = one("hyper")?;
    if hyper.len() != 6 {
        return Err(bad("hyper needs six values"));
    }
    let hi = ints(&hyper[..2])?;
    let hf = floats(&hyper[2..])?;
    let hp = Hyperparams {
        f: hi[0],
        s: hi[1],
        a_alpha: hf[0],
        b_alpha: hf[1],
        a_beta: hf[2],
        b_beta: hf[3],
    };
    let classes = ints(one("classes")?)?;
    if classes.len() != 2 {
        return Err(bad("classes needs two values"));
    }
    let scalar = |key: &str| -> Result<f64> {
        floats(one(key)?)?
            .first()
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("{key} is empty")))
    };
    let tables = |key: &str| -> Result<Vec<Vec<f64>>> {
        fields
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| floats(v))
            .collect()
    };
    let p = ModelParams {
        f: classes[0],
        s: classes[1],
        hh_card: ints(one("hh_card")?)?,
        ind_card: ints(one("ind_card")?)?,
        alpha: scalar("alpha")?,
        beta: scalar("beta")?,
        u: floats(one("u")?)?,
        pi: floats(one("pi")?)?,
        v: floats(one("v")?)?,
        omega: floats(one("omega")?)?,
        lambda: tables("lambda")?,
        phi: tables("phi")?,
    };
    p.validate()?;
    Ok((p, hp))
}
