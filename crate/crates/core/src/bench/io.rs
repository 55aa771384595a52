//! Result serialization: a long-format CSV with one row per metric value,
//! and a JSON summary carrying aggregates, ranking tables, and failures.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

use super::{metric_values, ExperimentResult, RankingTables};

/// Writes `algorithm,lambda,replicate,metric,component,value` rows for
/// every metric of every cell. The component column is empty for global
/// metrics; floats use the shortest representation that round-trips.
pub fn write_long_csv<W: Write>(result: &ExperimentResult, writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["algorithm", "lambda", "replicate", "metric", "component", "value"])
        .map_err(csv_err)?;
    for cell in &result.cells {
        for (metric, component, value) in metric_values(cell) {
            out.write_record([
                cell.algorithm.label(),
                &cell.lambda.to_string(),
                &cell.replicate.to_string(),
                &metric,
                &component.map(|c| c.to_string()).unwrap_or_default(),
                &value.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()
        .map_err(|e| Error::InvalidInput(format!("csv flush failed: {e}")))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidInput(format!("csv write failed: {e}"))
}

#[derive(Debug, Serialize)]
struct FailureNote {
    algorithm: &'static str,
    lambda: f64,
    replicate: usize,
    error: String,
}

/// Aggregates plus ranking tables and per-cell failures.
#[derive(Debug, Serialize)]
pub struct ExperimentSummary<'a> {
    pub aggregates: &'a [super::AggregateRow],
    pub ranking: Option<&'a RankingTables>,
    failures: Vec<FailureNote>,
}

impl<'a> ExperimentSummary<'a> {
    pub fn new(result: &'a ExperimentResult, ranking: Option<&'a RankingTables>) -> Self {
        let failures = result
            .cells
            .iter()
            .filter_map(|c| {
                c.error.as_ref().map(|e| FailureNote {
                    algorithm: c.algorithm.label(),
                    lambda: c.lambda,
                    replicate: c.replicate,
                    error: e.clone(),
                })
            })
            .collect();
        Self {
            aggregates: &result.aggregates,
            ranking,
            failures,
        }
    }
}

pub fn write_summary_json<W: Write>(
    result: &ExperimentResult,
    ranking: Option<&RankingTables>,
    writer: W,
) -> Result<()> {
    let summary = ExperimentSummary::new(result, ranking);
    serde_json::to_writer_pretty(writer, &summary)
        .map_err(|e| Error::InvalidInput(format!("json write failed: {e}")))
}
