//! Synthetic benchmark harness: data generation from a planted
//! group-sparse model, recovery metrics, and a replicated
//! sparsity-parameter sweep comparing the deflation and block algorithms.
//!
//! Data matrices are drawn row-wise from N(0, C) with
//! C = V·diag(Σ²)·V^T, where the first columns of V are the planted
//! loadings and the rest is a random rotation. Every cell of the sweep is
//! seeded from (experiment seed, replicate index), so reruns of the same
//! spec are bitwise identical, replicates are independent, and any single
//! replicate can be reproduced in isolation.

mod io;
mod ranking;

pub use io::{write_long_csv, write_summary_json, ExperimentSummary};
pub use ranking::{ranking_tables, EpsilonAgreement, RankingTables};

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouped::{sparsity_pattern, GroupStructure, GroupedMatrix, LoadingBlock};
use crate::linalg;
use crate::solver::{
    block_solve, deflation_solve, nominal_gammas, GspcaResult, SolverConfig, SparsityParams,
    Weights, DEFAULT_MAX_ITERATIONS, DEFAULT_REL_TOL,
};
use crate::variance::{variance_report, VarianceReport};

/// The three algorithms compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Deflation,
    BlockDifferentMu,
    BlockSameMu,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [
        Algorithm::Deflation,
        Algorithm::BlockDifferentMu,
        Algorithm::BlockSameMu,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Deflation => "deflation",
            Algorithm::BlockDifferentMu => "block_different_mu",
            Algorithm::BlockSameMu => "block_same_mu",
        }
    }
}

/// The planted model: orthonormal group-sparse loadings and the
/// eigenvalue profile of the population covariance.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    z_true: LoadingBlock,
    sigma_sq: Vec<f64>,
}

/// Fixed seed for the values of the default planted loadings.
const DEFAULT_MODEL_SEED: u64 = 0x6773_7063;

impl GroundTruth {
    pub fn new(z_true: LoadingBlock, sigma_sq: Vec<f64>) -> Result<Self> {
        let p = z_true.matrix().nrows();
        let m = z_true.m();
        if sigma_sq.len() != p {
            return Err(Error::ShapeMismatch(format!(
                "{} eigenvalues for {p} variables",
                sigma_sq.len()
            )));
        }
        if sigma_sq.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidInput("eigenvalues must be positive".into()));
        }
        if sigma_sq[..m].windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidInput(
                "leading eigenvalues must be nonincreasing".into(),
            ));
        }
        let gram = z_true.matrix().transpose() * z_true.matrix();
        if (&gram - DMatrix::identity(m, m)).norm() > 1e-8 {
            return Err(Error::InvalidInput(
                "planted loadings must be orthonormal".into(),
            ));
        }
        Ok(Self { z_true, sigma_sq })
    }

    /// The default planted model: 5 groups of 4 variables, eigenvalue
    /// profile (200, 180, 150, 130, 1, …, 1), and 4 orthonormal loadings
    /// supported on the group pairs {1,2}, {2,3}, {3,4}, {4,5}.
    pub fn default_model() -> Self {
        Self::chain_model((0.92, 0.39), 0.6, DEFAULT_MODEL_SEED)
    }

    /// Planted chain model over 5 groups of 4 variables: loading j puts
    /// weight `weights.0` on its first support group and `weights.1` on
    /// the second, so part of every loading dies before the rest as the
    /// sparsity parameter grows. Within a group each unit vector has one
    /// dominant coordinate with the remaining entries scaled by `taper`;
    /// vectors sharing a group are Gram–Schmidt orthogonalized, which
    /// keeps the loadings orthonormal without leaking support. Values are
    /// deterministic for a given seed.
    pub fn chain_model(weights: (f64, f64), taper: f64, seed: u64) -> Self {
        assert!(
            (weights.0 * weights.0 + weights.1 * weights.1 - 1.0).abs() < 0.05,
            "support weights should be close to a unit split"
        );
        let groups = GroupStructure::new(vec![4, 4, 4, 4, 4]).expect("static sizes");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        // unit 4-vector with a dominant coordinate and seeded signs,
        // optionally orthogonalized against the group's other occupant
        let mut tapered = |dominant: usize, avoid: Option<&DVector<f64>>| -> DVector<f64> {
            let mut v = DVector::from_fn(4, |i, _| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                if i == dominant {
                    1.0
                } else {
                    taper * sign
                }
            });
            if let Some(prev) = avoid {
                let proj = prev.dot(&v);
                v -= prev * proj;
            }
            let norm = v.norm();
            v / norm
        };

        // one vector per (group, occupant); shared groups hold an
        // orthogonal pair
        let g0_a = tapered(0, None);
        let g1_a = tapered(0, None);
        let g1_b = tapered(1, Some(&g1_a));
        let g2_a = tapered(0, None);
        let g2_b = tapered(1, Some(&g2_a));
        let g3_a = tapered(0, None);
        let g3_b = tapered(1, Some(&g3_a));
        let g4_a = tapered(0, None);

        // renormalize the split so each loading is exactly unit
        let scale = (weights.0 * weights.0 + weights.1 * weights.1).sqrt();
        let (ws, ww) = (weights.0 / scale, weights.1 / scale);
        let mut z = DMatrix::zeros(20, 4);
        let mut put = |col: usize, group: usize, w: f64, v: &DVector<f64>| {
            for i in 0..4 {
                z[(group * 4 + i, col)] = w * v[i];
            }
        };
        // loading j: strong weight on group j, weak weight on group j+1
        put(0, 0, ws, &g0_a);
        put(0, 1, ww, &g1_a);
        put(1, 1, ws, &g1_b);
        put(1, 2, ww, &g2_a);
        put(2, 2, ws, &g2_b);
        put(2, 3, ww, &g3_a);
        put(3, 3, ws, &g3_b);
        put(3, 4, ww, &g4_a);

        let mut sigma_sq = vec![1.0; 20];
        sigma_sq[0] = 200.0;
        sigma_sq[1] = 180.0;
        sigma_sq[2] = 150.0;
        sigma_sq[3] = 130.0;

        let z_true = LoadingBlock::new(z, groups).expect("static shapes");
        Self::new(z_true, sigma_sq).expect("construction is orthonormal")
    }

    pub fn z_true(&self) -> &LoadingBlock {
        &self.z_true
    }

    pub fn sigma_sq(&self) -> &[f64] {
        &self.sigma_sq
    }

    pub fn groups(&self) -> &GroupStructure {
        self.z_true.groups()
    }

    /// Number of planted loadings.
    pub fn m(&self) -> usize {
        self.z_true.m()
    }

    pub fn total_vars(&self) -> usize {
        self.z_true.matrix().nrows()
    }
}

/// The full rotation V whose first columns coincide with the planted
/// loadings: QR of [Z_true | U_rand] with the R diagonal made positive.
pub(crate) fn truth_rotation(gt: &GroundTruth, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let p = gt.total_vars();
    let m = gt.m();
    for _attempt in 0..4 {
        let mut stacked = DMatrix::zeros(p, p);
        stacked.columns_mut(0, m).copy_from(gt.z_true.matrix());
        for j in m..p {
            for i in 0..p {
                stacked[(i, j)] = rng.random::<f64>();
            }
        }
        let qr = stacked.qr();
        let mut q = qr.q();
        let r = qr.r();
        let min_diag = (0..p).map(|j| r[(j, j)].abs()).fold(f64::INFINITY, f64::min);
        if min_diag <= 1e-10 {
            continue; // degenerate draw, take a fresh one
        }
        for j in 0..p {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        return Ok(q);
    }
    Err(Error::RankDeficient(
        "could not complete the planted loadings to a rotation".into(),
    ))
}

/// Draws n samples from N(0, V·diag(Σ²)·V^T) as the rows of a grouped
/// matrix. Deterministic for a given seed.
pub fn generate_data(gt: &GroundTruth, n: usize, seed: u64) -> Result<GroupedMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = truth_rotation(gt, &mut rng)?;
    let p = gt.total_vars();
    let mut w = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    for (j, &l) in gt.sigma_sq.iter().enumerate() {
        w.column_mut(j).scale_mut(l.sqrt());
    }
    GroupedMatrix::new(w * v.transpose(), gt.groups().clone())
}

/// SplitMix64 step, used to derive independent replicate seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn replicate_seed(seed: u64, replicate: usize) -> u64 {
    splitmix64(seed ^ splitmix64(replicate as u64 + 1))
}

/// True/false positive rates of a recovered zero pattern against the
/// planted one, at group level. The positive class is "zero group entry":
/// tpr is the fraction of planted-zero groups recovered as zero, fpr the
/// fraction of planted-nonzero groups wrongly zeroed. A rate whose
/// reference class is empty is reported as absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRates {
    pub per_component_tpr: Vec<Option<f64>>,
    pub per_component_fpr: Vec<Option<f64>>,
    pub global_tpr: Option<f64>,
    pub global_fpr: Option<f64>,
}

pub fn tpr_fpr(z: &LoadingBlock, z_true: &LoadingBlock, zero_tol: f64) -> Result<RecoveryRates> {
    if z.groups() != z_true.groups() || z.m() != z_true.m() {
        return Err(Error::ShapeMismatch(
            "recovered and planted loadings have different layouts".into(),
        ));
    }
    if zero_tol < 0.0 {
        return Err(Error::InvalidInput("zero tolerance must be >= 0".into()));
    }
    let detected = sparsity_pattern(z, zero_tol);
    let truth = sparsity_pattern(z_true, 0.0);
    let p = z.groups().count();
    let m = z.m();

    let rate = |hits: usize, total: usize| -> Option<f64> {
        (total > 0).then(|| hits as f64 / total as f64)
    };

    let mut per_component_tpr = Vec::with_capacity(m);
    let mut per_component_fpr = Vec::with_capacity(m);
    let (mut zeros, mut zero_hits, mut nonzeros, mut nonzero_hits) = (0, 0, 0, 0);
    for j in 0..m {
        let (mut z_j, mut zh_j, mut nz_j, mut nzh_j) = (0, 0, 0, 0);
        for i in 0..p {
            if truth[(i, j)] {
                z_j += 1;
                zh_j += usize::from(detected[(i, j)]);
            } else {
                nz_j += 1;
                nzh_j += usize::from(detected[(i, j)]);
            }
        }
        per_component_tpr.push(rate(zh_j, z_j));
        per_component_fpr.push(rate(nzh_j, nz_j));
        zeros += z_j;
        zero_hits += zh_j;
        nonzeros += nz_j;
        nonzero_hits += nzh_j;
    }
    Ok(RecoveryRates {
        per_component_tpr,
        per_component_fpr,
        global_tpr: rate(zero_hits, zeros),
        global_fpr: rate(nonzero_hits, nonzeros),
    })
}

/// How recovered columns are matched to planted columns before measuring
/// recovery rates. `Direct` relies on the singular-vector initialization
/// preserving the order; `BestCorrelation` searches the assignment
/// maximizing total |correlation| and is a deliberate deviation for
/// robustness studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ComponentAlignment {
    #[default]
    Direct,
    BestCorrelation,
}

/// Assignment `perm[k] = j` meaning recovered column j plays the role of
/// planted column k. Exhaustive search for m ≤ 8, greedy beyond.
pub fn align_components(z: &DMatrix<f64>, z_true: &DMatrix<f64>) -> Vec<usize> {
    let m = z_true.ncols();
    let score = DMatrix::from_fn(m, m, |k, j| {
        z_true.column(k).dot(&z.column(j)).abs()
    });
    if m <= 8 {
        let mut best = (f64::NEG_INFINITY, (0..m).collect::<Vec<_>>());
        let mut current = Vec::with_capacity(m);
        let mut used = vec![false; m];
        fn recurse(
            k: usize,
            m: usize,
            score: &DMatrix<f64>,
            used: &mut Vec<bool>,
            current: &mut Vec<usize>,
            acc: f64,
            best: &mut (f64, Vec<usize>),
        ) {
            if k == m {
                if acc > best.0 {
                    *best = (acc, current.clone());
                }
                return;
            }
            for j in 0..m {
                if !used[j] {
                    used[j] = true;
                    current.push(j);
                    recurse(k + 1, m, score, used, current, acc + score[(k, j)], best);
                    current.pop();
                    used[j] = false;
                }
            }
        }
        recurse(0, m, &score, &mut used, &mut current, 0.0, &mut best);
        best.1
    } else {
        let mut used = vec![false; m];
        (0..m)
            .map(|k| {
                let j = (0..m)
                    .filter(|&j| !used[j])
                    .max_by(|&a, &b| score[(k, a)].partial_cmp(&score[(k, b)]).unwrap())
                    .unwrap();
                used[j] = true;
                j
            })
            .collect()
    }
}

/// Ground truth as it appears in a spec file: either the built-in default
/// model or explicit groups, eigenvalues, and loading columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruthSpec {
    Preset(String),
    Explicit {
        groups: Vec<usize>,
        eigenvalues: Vec<f64>,
        /// Loading columns, each of length |p|.
        loadings: Vec<Vec<f64>>,
    },
}

impl Default for GroundTruthSpec {
    fn default() -> Self {
        GroundTruthSpec::Preset("default".into())
    }
}

impl GroundTruthSpec {
    pub fn resolve(&self) -> Result<GroundTruth> {
        match self {
            GroundTruthSpec::Preset(name) if name == "default" => Ok(GroundTruth::default_model()),
            GroundTruthSpec::Preset(name) => Err(Error::InvalidInput(format!(
                "unknown ground-truth preset '{name}'"
            ))),
            GroundTruthSpec::Explicit {
                groups,
                eigenvalues,
                loadings,
            } => {
                let groups = GroupStructure::new(groups.clone())?;
                let p = groups.total();
                let m = loadings.len();
                if m == 0 || loadings.iter().any(|c| c.len() != p) {
                    return Err(Error::ShapeMismatch(
                        "each loading column must have |p| entries".into(),
                    ));
                }
                let z = DMatrix::from_fn(p, m, |i, j| loadings[j][i]);
                GroundTruth::new(LoadingBlock::new(z, groups)?, eigenvalues.clone())
            }
        }
    }
}

fn default_solver_settings() -> SolverSettings {
    SolverSettings {
        max_iterations: DEFAULT_MAX_ITERATIONS,
        rel_tol: DEFAULT_REL_TOL,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub rel_tol: f64,
}

/// Benchmark configuration; reads from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default)]
    pub ground_truth: GroundTruthSpec,
    pub n_samples: usize,
    pub n_replicates: usize,
    pub lambda_grid: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub seed: u64,
    #[serde(default)]
    pub zero_tol: f64,
    #[serde(default)]
    pub alignment: ComponentAlignment,
    #[serde(default = "default_solver_settings")]
    pub solver: SolverSettings,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates == 0 {
            return Err(Error::InvalidInput("need at least one replicate".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidInput("need at least one sample".into()));
        }
        if self.lambda_grid.is_empty()
            || self
                .lambda_grid
                .iter()
                .any(|&l| !(0.0..=1.0).contains(&l))
        {
            return Err(Error::InvalidInput(
                "lambda grid must be nonempty with values in [0, 1]".into(),
            ));
        }
        if self.lambda_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "lambda grid must be strictly ascending".into(),
            ));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidInput("no algorithms selected".into()));
        }
        if self.zero_tol < 0.0 {
            return Err(Error::InvalidInput("zero_tol must be >= 0".into()));
        }
        Ok(())
    }
}

/// Everything measured on one successful solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub rates: RecoveryRates,
    pub rv_to_truth: Option<f64>,
    pub component_volume: Option<f64>,
    pub variance: Option<VarianceReport>,
    pub nonzero_loadings: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

/// One (algorithm, λ, replicate) cell. `error` records a failed solve;
/// failures never abort the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub replicate: usize,
    pub metrics: Option<CellMetrics>,
    pub error: Option<String>,
}

/// Mean, five-number summary, and sample count of one metric over the
/// replicates of an (algorithm, λ) cell group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub algorithm: Algorithm,
    pub lambda: f64,
    pub metric: String,
    pub component: Option<usize>,
    pub count: usize,
    pub mean: Option<f64>,
    /// min, first quartile, median, third quartile, max
    pub quantiles: Option<[f64; 5]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<AggregateRow>,
}

impl ExperimentResult {
    /// Mean of a global metric at one (algorithm, λ) grid point.
    pub fn mean_of(&self, algorithm: Algorithm, lambda: f64, metric: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|row| {
                row.algorithm == algorithm
                    && row.lambda == lambda
                    && row.metric == metric
                    && row.component.is_none()
            })
            .and_then(|row| row.mean)
    }

    /// Per-replicate values of a global metric at one (algorithm, λ)
    /// point, in replicate order; absent values are skipped.
    pub fn values_of(&self, algorithm: Algorithm, lambda: f64, metric: &str) -> Vec<f64> {
        let mut cells: Vec<&CellResult> = self
            .cells
            .iter()
            .filter(|c| c.algorithm == algorithm && c.lambda == lambda)
            .collect();
        cells.sort_by_key(|c| c.replicate);
        cells
            .iter()
            .flat_map(|c| {
                metric_values(c)
                    .into_iter()
                    .filter(|(name, comp, _)| name == metric && comp.is_none())
                    .map(|(_, _, v)| v)
            })
            .collect()
    }
}

/// Flattens one cell into (metric, component, value) rows — the long
/// format used by both the CSV writer and the aggregator.
pub(crate) fn metric_values(cell: &CellResult) -> Vec<(String, Option<usize>, f64)> {
    let mut rows = Vec::new();
    let Some(m) = &cell.metrics else {
        return rows;
    };
    let mut push = |name: &str, comp: Option<usize>, v: f64| {
        rows.push((name.to_string(), comp, v));
    };
    if let Some(v) = m.rates.global_tpr {
        push("tpr", None, v);
    }
    if let Some(v) = m.rates.global_fpr {
        push("fpr", None, v);
    }
    for (j, v) in m.rates.per_component_tpr.iter().enumerate() {
        if let Some(v) = v {
            push("tpr", Some(j + 1), *v);
        }
    }
    for (j, v) in m.rates.per_component_fpr.iter().enumerate() {
        if let Some(v) = v {
            push("fpr", Some(j + 1), *v);
        }
    }
    if let Some(v) = m.rv_to_truth {
        push("rv", None, v);
    }
    if let Some(v) = m.component_volume {
        push("vol", None, v);
    }
    if let Some(rep) = &m.variance {
        push("pev_subspVar", None, rep.pev_subspace);
        push("pev_optVar", None, rep.pev_optimal);
        push("pev_adjVar", None, rep.pev_adjusted);
        push("pev_QRnormVar", None, rep.pev_qr_normalized);
        push("pev_UPnormVar", None, rep.pev_up_normalized);
        let theta_sets = [
            ("theta_optVar", &rep.theta.optimal),
            ("theta_adjVar", &rep.theta.adjusted),
            ("theta_QRnormVar", &rep.theta.qr_normalized),
            ("theta_UPnormVar", &rep.theta.up_normalized),
        ];
        for (name, theta) in theta_sets {
            for (j, v) in theta.iter().enumerate() {
                push(name, Some(j + 1), *v);
            }
        }
    }
    push("objective", None, m.objective);
    push("iterations", None, m.iterations as f64);
    push("converged", None, f64::from(u8::from(m.converged)));
    push("nonzero_loadings", None, m.nonzero_loadings as f64);
    rows
}

fn quantiles(sorted: &[f64]) -> [f64; 5] {
    let q = |frac: f64| -> f64 {
        let pos = frac * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let w = pos - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    };
    [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)]
}

fn aggregate(spec: &ExperimentSpec, cells: &[CellResult]) -> Vec<AggregateRow> {
    use std::collections::BTreeMap;
    let mut rows = Vec::new();
    for &alg in &spec.algorithms {
        for &lambda in &spec.lambda_grid {
            // key: (metric, component); ordered for deterministic output
            let mut buckets: BTreeMap<(String, Option<usize>), Vec<f64>> = BTreeMap::new();
            let mut order: Vec<(String, Option<usize>)> = Vec::new();
            for cell in cells
                .iter()
                .filter(|c| c.algorithm == alg && c.lambda == lambda)
            {
                for (metric, component, value) in metric_values(cell) {
                    let key = (metric, component);
                    if !buckets.contains_key(&key) {
                        order.push(key.clone());
                    }
                    buckets.entry(key).or_default().push(value);
                }
            }
            for key in order {
                let mut values = buckets.remove(&key).unwrap();
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let count = values.len();
                let mean = values.iter().sum::<f64>() / count as f64;
                rows.push(AggregateRow {
                    algorithm: alg,
                    lambda,
                    metric: key.0,
                    component: key.1,
                    count,
                    mean: Some(mean),
                    quantiles: Some(quantiles(&values)),
                });
            }
        }
    }
    rows
}

fn solve_one(
    algorithm: Algorithm,
    data: &GroupedMatrix,
    m: usize,
    sparsity: SparsityParams,
    settings: &SolverSettings,
) -> Result<GspcaResult> {
    let weights = match algorithm {
        Algorithm::BlockSameMu => Weights::uniform(m),
        _ => Weights::inverse_index(m),
    };
    let cfg = SolverConfig::new(weights, sparsity)
        .with_max_iterations(settings.max_iterations)
        .with_rel_tol(settings.rel_tol);
    match algorithm {
        Algorithm::Deflation => deflation_solve(data, m, &cfg),
        _ => block_solve(data, m, &cfg),
    }
}

fn measure_cell(
    spec: &ExperimentSpec,
    data: &GroupedMatrix,
    z_true: &LoadingBlock,
    result: &GspcaResult,
) -> CellMetrics {
    let z = match spec.alignment {
        ComponentAlignment::Direct => result.z.clone(),
        ComponentAlignment::BestCorrelation => {
            let perm = align_components(result.z.matrix(), z_true.matrix());
            let mut reordered = DMatrix::zeros(result.z.matrix().nrows(), result.z.m());
            for (k, &j) in perm.iter().enumerate() {
                reordered.set_column(k, &result.z.matrix().column(j));
            }
            LoadingBlock::new(reordered, result.z.groups().clone())
                .expect("reordering preserves shape")
        }
    };
    let rates = tpr_fpr(&z, z_true, spec.zero_tol).expect("layouts match by construction");
    let rv_to_truth = linalg::rv_coefficient(z.matrix(), z_true.matrix()).ok();
    let y = data.data() * z.matrix();
    let component_volume = linalg::orthogonality_volume(&y).ok();
    let variance = variance_report(data, &z).ok();
    CellMetrics {
        rates,
        rv_to_truth,
        component_volume,
        variance,
        nonzero_loadings: result.nonzero_loadings(),
        iterations: result.iterations,
        converged: result.converged,
        objective: result.objective(),
    }
}

fn run_replicate(
    spec: &ExperimentSpec,
    gt: &GroundTruth,
    override_groups: Option<&GroupStructure>,
    replicate: usize,
) -> Result<Vec<CellResult>> {
    let seed = replicate_seed(spec.seed, replicate);
    let generated = generate_data(gt, spec.n_samples, seed)?;
    let (data, z_true) = match override_groups {
        None => (generated, gt.z_true().clone()),
        Some(g) => (
            GroupedMatrix::new(generated.data().clone(), g.clone())?,
            LoadingBlock::new(gt.z_true().matrix().clone(), g.clone())?,
        ),
    };
    let m = gt.m();
    let gammas = nominal_gammas(&data, m);

    let mut out = Vec::with_capacity(spec.algorithms.len() * spec.lambda_grid.len());
    for &algorithm in &spec.algorithms {
        for &lambda in &spec.lambda_grid {
            let solved = gammas
                .as_ref()
                .map_err(|e| e.clone())
                .and_then(|g| SparsityParams::from_reduced(lambda, g))
                .and_then(|sparsity| solve_one(algorithm, &data, m, sparsity, &spec.solver));
            let (metrics, error) = match solved {
                Ok(result) => (Some(measure_cell(spec, &data, &z_true, &result)), None),
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(CellResult {
                algorithm,
                lambda,
                replicate,
                metrics,
                error,
            });
        }
    }
    Ok(out)
}

fn run_with_groups(
    spec: &ExperimentSpec,
    gt: &GroundTruth,
    override_groups: Option<&GroupStructure>,
) -> Result<ExperimentResult> {
    spec.validate()?;
    // replicates are independent; results are reduced in replicate order
    // so parallelism never changes the output
    let per_replicate: Result<Vec<Vec<CellResult>>> = (0..spec.n_replicates)
        .into_par_iter()
        .map(|rep| run_replicate(spec, gt, override_groups, rep))
        .collect();
    let cells: Vec<CellResult> = per_replicate?.into_iter().flatten().collect();
    let aggregates = aggregate(spec, &cells);
    Ok(ExperimentResult { cells, aggregates })
}

/// Runs the full sweep: for every replicate, algorithm, and λ, generate
/// data, solve with γ_j = λ·γ_{j,max}, and collect recovery and variance
/// metrics plus aggregates.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let gt = spec.ground_truth.resolve()?;
    run_with_groups(spec, &gt, None)
}

/// The same sweep run twice: once with the planted group structure, once
/// with all-singleton groups (scalar variables).
#[derive(Debug, Clone, Serialize)]
pub struct GroupComparison {
    pub group: ExperimentResult,
    pub scalar: ExperimentResult,
}

pub fn scalar_vs_group(spec: &ExperimentSpec) -> Result<GroupComparison> {
    let gt = spec.ground_truth.resolve()?;
    let group = run_with_groups(spec, &gt, None)?;
    let singles = GroupStructure::singletons(gt.total_vars());
    let scalar = run_with_groups(spec, &gt, Some(&singles))?;
    Ok(GroupComparison { group, scalar })
}
