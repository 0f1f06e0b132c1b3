//! Estimands on completed or synthetic datasets and pooled inference.

mod combine;
pub mod dist;
mod estimand;

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::schema::Dataset;

pub use combine::{combine, combine_partial_synth, combine_rubin, Combiner, MIResult};
pub use dist::{normal_quantile, t_quantile};
pub use estimand::{
    census_predicates, estimand_suite, estimate_on_dataset, parse_estimands, Denominator, Estimand,
    EstimandKind, PreparedEstimand, Query, SuiteOptions, CENSUS_ESTIMANDS,
};

/// Evaluates every estimand on every dataset and pools the results.
/// All datasets must share one schema.
pub fn evaluate(
    datasets: &[Dataset],
    estimands: &[Estimand],
    gamma: f64,
    combiner: Combiner,
) -> Result<Vec<(String, MIResult)>> {
    let Some(first) = datasets.first() else {
        return Err(Error::TooFewDatasets);
    };
    if datasets.iter().any(|d| *d.schema != *first.schema) {
        return Err(Error::Estimand("datasets do not share one schema".into()));
    }
    estimands
        .par_iter()
        .map(|e| {
            let prepared = PreparedEstimand::new(e, &first.schema)?;
            let results = datasets
                .iter()
                .map(|z| prepared.estimate(z))
                .collect::<Result<Vec<_>>>()?;
            Ok((e.name.clone(), combine(&results, gamma, combiner)?))
        })
        .collect()
}

/// Writes `estimand,q_bar,b,u_bar,t,df,lo,hi` rows.
pub fn write_results<W: Write>(rows: &[(String, MIResult)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["estimand", "q_bar", "b", "u_bar", "t", "df", "lo", "hi"])?;
    for (name, r) in rows {
        out.write_record([
            name.clone(),
            r.q_bar.to_string(),
            r.b.to_string(),
            r.u_bar.to_string(),
            r.t.to_string(),
            r.df.to_string(),
            r.lo.to_string(),
            r.hi.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
