//! Ranking analysis of the explained-variance definitions: how often one
//! pev dominates another across cells, and how consistently pairs of
//! definitions rank two algorithms once their pev difference is
//! ε-distinguishable.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::variance::Definition;

use super::{Algorithm, CellResult, ExperimentResult};

/// Floating-point slack when counting pev_i ≥ pev_j: mathematically tied
/// definitions (e.g. at λ = 0) differ only by rounding.
const DOMINANCE_TOL: f64 = 1e-12;

/// Agreement percentages at one ε level. `percent[i][j]` is the share of
/// ε-distinguishable couples ranked identically by definitions i and j
/// (in [`Definition::ALL`] order); absent when no couple qualifies.
#[derive(Debug, Clone, Serialize)]
pub struct EpsilonAgreement {
    pub epsilon: f64,
    pub distinguishable: usize,
    pub percent: Vec<Vec<Option<f64>>>,
}

/// The two comparison tables.
///
/// `dominance[i][j]` is the percentage of cells whose report satisfies
/// pev_i ≥ pev_j. `agreement` holds one matrix per requested ε: over all
/// couples of cells sharing (λ, replicate) but produced by different
/// algorithms, and whose five pev values all differ by at least ε, the
/// share ranked the same way by definitions i and j.
#[derive(Debug, Clone, Serialize)]
pub struct RankingTables {
    pub definitions: Vec<&'static str>,
    pub cells_with_reports: usize,
    pub dominance: Vec<Vec<Option<f64>>>,
    pub agreement: Vec<EpsilonAgreement>,
}

fn pev_vector(cell: &CellResult) -> Option<[f64; 5]> {
    let report = cell.metrics.as_ref()?.variance.as_ref()?;
    let mut out = [0.0; 5];
    for (k, d) in Definition::ALL.iter().enumerate() {
        out[k] = report.pev(*d);
    }
    Some(out)
}

pub fn ranking_tables(result: &ExperimentResult, eps_grid: &[f64]) -> Result<RankingTables> {
    let mut algorithms: Vec<Algorithm> = Vec::new();
    for cell in &result.cells {
        if !algorithms.contains(&cell.algorithm) {
            algorithms.push(cell.algorithm);
        }
    }
    if algorithms.len() < 2 {
        return Err(Error::InvalidInput(
            "ranking needs results from at least two algorithms".into(),
        ));
    }
    if eps_grid.iter().any(|&e| e < 0.0) {
        return Err(Error::InvalidInput("epsilon must be >= 0".into()));
    }

    // dominance table over single cells
    let reports: Vec<[f64; 5]> = result.cells.iter().filter_map(pev_vector).collect();
    let n_reports = reports.len();
    let dominance: Vec<Vec<Option<f64>>> = (0..5)
        .map(|i| {
            (0..5)
                .map(|j| {
                    if n_reports == 0 {
                        return None;
                    }
                    let hits = reports
                        .iter()
                        .filter(|pev| pev[i] >= pev[j] - DOMINANCE_TOL)
                        .count();
                    Some(100.0 * hits as f64 / n_reports as f64)
                })
                .collect()
        })
        .collect();

    // couples: same (λ, replicate), different algorithms
    let mut diffs: Vec<[f64; 5]> = Vec::new();
    for (ai, &alg_a) in algorithms.iter().enumerate() {
        for &alg_b in &algorithms[ai + 1..] {
            for cell in result
                .cells
                .iter()
                .filter(|c| c.algorithm == alg_a)
            {
                let Some(pev_a) = pev_vector(cell) else {
                    continue;
                };
                let partner = result.cells.iter().find(|c| {
                    c.algorithm == alg_b
                        && c.replicate == cell.replicate
                        && c.lambda == cell.lambda
                });
                let Some(pev_b) = partner.and_then(pev_vector) else {
                    continue;
                };
                let mut d = [0.0; 5];
                for k in 0..5 {
                    d[k] = pev_a[k] - pev_b[k];
                }
                diffs.push(d);
            }
        }
    }

    let agreement = eps_grid
        .iter()
        .map(|&epsilon| {
            let eligible: Vec<&[f64; 5]> = diffs
                .iter()
                .filter(|d| d.iter().all(|v| v.abs() >= epsilon))
                .collect();
            let total = eligible.len();
            let percent: Vec<Vec<Option<f64>>> = (0..5)
                .map(|i| {
                    (0..5)
                        .map(|j| {
                            if total == 0 {
                                return None;
                            }
                            let same = eligible
                                .iter()
                                .filter(|d| (d[i] >= 0.0) == (d[j] >= 0.0))
                                .count();
                            Some(100.0 * same as f64 / total as f64)
                        })
                        .collect()
                })
                .collect();
            EpsilonAgreement {
                epsilon,
                distinguishable: total,
                percent,
            }
        })
        .collect();

    Ok(RankingTables {
        definitions: Definition::ALL.iter().map(|d| d.label()).collect(),
        cells_with_reports: n_reports,
        dominance,
        agreement,
    })
}
