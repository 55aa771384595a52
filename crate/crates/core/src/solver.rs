//! Optimization core: group-sparse block PCA via a polar fixed-point
//! iteration on the Stiefel manifold, a deflation variant, the plain PCA
//! baseline, and the sparsity-parameter strategy.
//!
//! The block solver maximizes
//!
//! ```text
//! F(X) = Σ_j μ_j² Σ_i [‖a_i^T x_j‖ − γ_j]_+²
//! ```
//!
//! over n×m matrices X with orthonormal columns by iterating
//! `X ← polar(2·A·T·N²)`, where T is the group-thresholded image of
//! A^T X and N² = diag(μ_j²). F is convex, so each step maximizes the
//! linearization of F and the objective never decreases. On convergence
//! the loadings are read off the threshold vectors: z_j = t_j/‖t_j‖, or 0
//! when the whole column was thresholded away.

use nalgebra::{Const, DMatrix, DVector, Dyn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grouped::{GroupedMatrix, LoadingBlock};
use crate::linalg::{self, OrthonormalBlock, SvdResult};

pub const DEFAULT_MAX_ITERATIONS: usize = 2000;
pub const DEFAULT_REL_TOL: f64 = 1e-9;

/// Scale floor in the relative stopping test, so that a flat objective at
/// zero still counts as stalled.
const OBJECTIVE_FLOOR: f64 = 1e-300;

/// The iterate must satisfy the fixed-point equation to
/// `FIXED_POINT_FACTOR · rel_tol` in Frobenius norm before the solver
/// reports convergence.
const FIXED_POINT_FACTOR: f64 = 10.0;

/// If the objective has been stalled for this many iterations while the
/// iterate keeps moving, the solver gives up and reports `converged =
/// false` (distinct maximizers of equal objective value).
const STALL_WINDOW: usize = 100;
const STALL_SHRINK: f64 = 0.9;

/// Component weights μ_j > 0.
#[derive(Debug, Clone)]
pub struct Weights {
    mu: Vec<f64>,
}

impl Weights {
    /// μ_j = 1/j — strictly decreasing, the default for selecting singular
    /// vectors in order.
    pub fn inverse_index(m: usize) -> Self {
        Self {
            mu: (1..=m).map(|j| 1.0 / j as f64).collect(),
        }
    }

    /// μ_j = 1 for all j.
    pub fn uniform(m: usize) -> Self {
        Self { mu: vec![1.0; m] }
    }

    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput(
                "weights must be positive and finite".into(),
            ));
        }
        Ok(Self { mu })
    }

    /// Validates μ_1 > μ_2 > … > μ_m > 0 on top of [`Weights::new`].
    pub fn strictly_decreasing(mu: Vec<f64>) -> Result<Self> {
        let w = Self::new(mu)?;
        if w.mu.windows(2).any(|p| p[0] <= p[1]) {
            return Err(Error::InvalidInput(
                "weights must be strictly decreasing".into(),
            ));
        }
        Ok(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    fn squared(&self) -> Vec<f64> {
        self.mu.iter().map(|w| w * w).collect()
    }
}

/// Sparsity parameters γ_j ≥ 0, either explicit or derived from a single
/// reduced parameter λ ∈ [0, 1] against the nominal scales γ_{j,max}.
#[derive(Debug, Clone)]
pub struct SparsityParams {
    gamma: Vec<f64>,
}

impl SparsityParams {
    pub fn zero(m: usize) -> Self {
        Self {
            gamma: vec![0.0; m],
        }
    }

    pub fn explicit(gamma: Vec<f64>) -> Result<Self> {
        if gamma.is_empty() || gamma.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput(
                "sparsity parameters must be nonnegative and finite".into(),
            ));
        }
        Ok(Self { gamma })
    }

    /// γ_j = λ · γ_{j,max} for the nominal parameters of [`nominal_gammas`].
    pub fn from_reduced(lambda: f64, gamma_max: &[f64]) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidInput(format!(
                "reduced sparsity parameter must lie in [0, 1], got {lambda}"
            )));
        }
        Self::explicit(gamma_max.iter().map(|g| lambda * g).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gamma
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }
}

/// Initial point for the fixed-point iteration.
#[derive(Debug, Clone)]
pub enum Init {
    /// The m first left singular vectors of the data (the default).
    LeftSingularVectors,
    /// A caller-supplied orthonormal block.
    Provided(OrthonormalBlock),
    /// A seeded random orthonormal block, for robustness studies.
    Seeded(u64),
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub weights: Weights,
    pub sparsity: SparsityParams,
    pub max_iterations: usize,
    pub rel_tol: f64,
    pub init: Init,
}

impl SolverConfig {
    pub fn new(weights: Weights, sparsity: SparsityParams) -> Self {
        Self {
            weights,
            sparsity,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            rel_tol: DEFAULT_REL_TOL,
            init: Init::LeftSingularVectors,
        }
    }

    pub fn with_max_iterations(mut self, it: usize) -> Self {
        self.max_iterations = it;
        self
    }

    pub fn with_rel_tol(mut self, tol: f64) -> Self {
        self.rel_tol = tol;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }
}

/// Image of an orthonormal block under the group soft-threshold map.
///
/// For each group i and component j, `alpha[(i, j)]` is ‖a_i^T x_j‖, the
/// corresponding block of `directions` is the unit vector along a_i^T x_j
/// (the first canonical basis vector when the norm vanishes), and the
/// block of `t` is `direction · [α − γ_j]_+`.
#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub t: DMatrix<f64>,
    pub alpha: DMatrix<f64>,
    pub directions: DMatrix<f64>,
}

/// Nominal sparsity parameters γ_{j,max} = (σ_j/σ_1) · max_i ‖a_i‖_2 for
/// j = 1…m, the scales against which a reduced parameter λ is expressed.
pub fn nominal_gammas(a: &GroupedMatrix, m: usize) -> Result<Vec<f64>> {
    let svd = linalg::svd(a.data())?;
    nominal_gammas_from_svd(a, &svd, m)
}

fn nominal_gammas_from_svd(a: &GroupedMatrix, svd: &SvdResult, m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    if m > svd.rank() {
        return Err(Error::RankDeficient(format!(
            "m = {m} exceeds the data rank {}",
            svd.rank()
        )));
    }
    let gamma_max = group_norm_max(a)?.0;
    let s1 = svd.singular_values[0];
    Ok(svd.singular_values[..m]
        .iter()
        .map(|s| s / s1 * gamma_max)
        .collect())
}

/// (max_i ‖a_i‖_2, argmax) over the group blocks.
fn group_norm_max(a: &GroupedMatrix) -> Result<(f64, usize)> {
    let mut best = (f64::NEG_INFINITY, 0);
    for i in 0..a.groups().count() {
        let norm = linalg::spectral_norm(&a.group_slice(i)?.into_owned())?;
        if norm > best.0 {
            best = (norm, i);
        }
    }
    Ok(best)
}

/// Group soft-threshold map (the analytic solution of the inner loading
/// maximization for a fixed orthonormal X).
pub fn threshold_map(
    a: &GroupedMatrix,
    x: &OrthonormalBlock,
    sparsity: &SparsityParams,
) -> Result<ThresholdResult> {
    check_block_shapes(a, x.matrix(), sparsity.len())?;
    Ok(threshold_raw(a, x.matrix(), sparsity.as_slice()))
}

fn check_block_shapes(a: &GroupedMatrix, x: &DMatrix<f64>, m: usize) -> Result<()> {
    if x.nrows() != a.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "X has {} rows but the data has {} samples",
            x.nrows(),
            a.nrows()
        )));
    }
    if x.ncols() != m {
        return Err(Error::ShapeMismatch(format!(
            "X has {} columns but {} parameters were given",
            x.ncols(),
            m
        )));
    }
    Ok(())
}

fn threshold_raw(a: &GroupedMatrix, x: &DMatrix<f64>, gamma: &[f64]) -> ThresholdResult {
    let w = a.data().transpose() * x;
    let p = a.groups().count();
    let m = x.ncols();
    let mut t = DMatrix::zeros(a.ncols(), m);
    let mut alpha = DMatrix::zeros(p, m);
    let mut directions = DMatrix::zeros(a.ncols(), m);
    for (i, range) in a.groups().ranges().enumerate() {
        for j in 0..m {
            let block = w.generic_view((range.start, j), (Dyn(range.len()), Const::<1>));
            let norm = block.norm();
            alpha[(i, j)] = norm;
            if norm > 0.0 {
                directions
                    .generic_view_mut((range.start, j), (Dyn(range.len()), Const::<1>))
                    .copy_from(&(block / norm));
                let shrunk = norm - gamma[j];
                if shrunk > 0.0 {
                    // scale is exactly 1 when γ_j = 0, so t = A^T x bitwise
                    let scale = shrunk / norm;
                    t.generic_view_mut((range.start, j), (Dyn(range.len()), Const::<1>))
                        .copy_from(&(block * scale));
                }
            } else {
                directions[(range.start, j)] = 1.0;
            }
        }
    }
    ThresholdResult {
        t,
        alpha,
        directions,
    }
}

fn objective_from(thr: &ThresholdResult, mu_sq: &[f64]) -> f64 {
    (0..thr.t.ncols())
        .map(|j| mu_sq[j] * thr.t.column(j).norm_squared())
        .sum()
}

fn gradient_from(a: &GroupedMatrix, thr: &ThresholdResult, mu_sq: &[f64]) -> DMatrix<f64> {
    let mut g = a.data() * &thr.t;
    for (j, &w) in mu_sq.iter().enumerate() {
        g.column_mut(j).scale_mut(2.0 * w);
    }
    g
}

/// Objective F(X) = Σ_j μ_j² Σ_i [‖a_i^T x_j‖ − γ_j]_+².
pub fn objective_f(a: &GroupedMatrix, x: &OrthonormalBlock, cfg: &SolverConfig) -> Result<f64> {
    check_config_lengths(cfg, x.ncols())?;
    let thr = threshold_map(a, x, &cfg.sparsity)?;
    Ok(objective_from(&thr, &cfg.weights.squared()))
}

/// Ambient gradient ∇F(X) = 2·A·T·N². At thresholding kinks the formula
/// yields a valid subgradient.
pub fn gradient_f(
    a: &GroupedMatrix,
    x: &OrthonormalBlock,
    cfg: &SolverConfig,
) -> Result<DMatrix<f64>> {
    check_config_lengths(cfg, x.ncols())?;
    let thr = threshold_map(a, x, &cfg.sparsity)?;
    Ok(gradient_from(a, &thr, &cfg.weights.squared()))
}

fn check_config_lengths(cfg: &SolverConfig, m: usize) -> Result<()> {
    if cfg.weights.len() != m || cfg.sparsity.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "config carries {} weights and {} sparsity parameters for m = {m}",
            cfg.weights.len(),
            cfg.sparsity.len()
        )));
    }
    if !(cfg.rel_tol > 0.0) {
        return Err(Error::InvalidInput("rel_tol must be positive".into()));
    }
    if cfg.max_iterations == 0 {
        return Err(Error::InvalidInput(
            "max_iterations must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Result of a sparse block solve, the deflation scheme, or the PCA
/// baseline.
///
/// For block solves `x` has orthonormal columns (the converged Stiefel
/// iterate). For deflation `x` collects the per-step normalized
/// components, which are unit vectors but not mutually orthogonal in
/// general. `objective_trace` concatenates the per-fixed-point-run
/// traces; `segment_lengths` records where each run starts (a single
/// segment for block solves, one per deflation step).
#[derive(Debug, Clone)]
pub struct GspcaResult {
    pub z: LoadingBlock,
    pub y: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub segment_lengths: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl GspcaResult {
    /// Final objective value.
    pub fn objective(&self) -> f64 {
        self.objective
    }

    /// Per-run views into the concatenated objective trace.
    pub fn trace_segments(&self) -> impl Iterator<Item = &[f64]> {
        let mut start = 0;
        self.segment_lengths.iter().map(move |&len| {
            let seg = &self.objective_trace[start..start + len];
            start += len;
            seg
        })
    }

    /// Number of nonzero loading vectors.
    pub fn nonzero_loadings(&self) -> usize {
        (0..self.z.m())
            .filter(|&j| self.z.matrix().column(j).norm() > 0.0)
            .count()
    }
}

struct FixedPointOutcome {
    x: DMatrix<f64>,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// A starting block that certifies condition (414): when some γ_ℓ is
/// below max_i ‖a_i‖_2, aligning column ℓ with the top left singular
/// vector of the strongest group makes F strictly positive.
fn certificate_block(a: &GroupedMatrix, gamma: &[f64], fallback: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    let (gamma_max, k) = group_norm_max(a)?;
    let (l, &gamma_min) = gamma
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
        .expect("gamma is non-empty");
    if gamma_min >= gamma_max {
        return Ok(None);
    }
    let group = a.group_slice(k)?.into_owned();
    let top = linalg::svd(&group)?.u.column(0).into_owned();
    let m = fallback.ncols();
    let n = fallback.nrows();

    // Gram–Schmidt completion: column ℓ is the certificate direction, the
    // rest come from the fallback block and, if needed, the canonical basis.
    let mut cols: Vec<DVector<f64>> = vec![top];
    let mut candidates: Vec<DVector<f64>> = (0..m).map(|j| fallback.column(j).into_owned()).collect();
    candidates.extend((0..n).map(|i| {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        e
    }));
    for cand in candidates {
        if cols.len() == m {
            break;
        }
        let mut v = cand;
        for c in &cols {
            let proj = c.dot(&v);
            v -= c * proj;
        }
        let norm = v.norm();
        if norm > 1e-8 {
            cols.push(v / norm);
        }
    }
    if cols.len() < m {
        return Ok(None);
    }
    let mut x = DMatrix::zeros(n, m);
    // certificate direction goes to the column with the smallest γ
    x.set_column(l, &cols[0]);
    let mut next = 1;
    for j in 0..m {
        if j != l {
            x.set_column(j, &cols[next]);
            next += 1;
        }
    }
    Ok(Some(x))
}

fn fixed_point(
    a: &GroupedMatrix,
    x0: DMatrix<f64>,
    gamma: &[f64],
    mu_sq: &[f64],
    max_iterations: usize,
    rel_tol: f64,
) -> Result<FixedPointOutcome> {
    let mut x = x0;
    let mut trace = Vec::new();
    let mut prev_f = f64::NEG_INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut stall = 0usize;
    let mut dx_window_start = f64::INFINITY;
    let mut restarted = false;

    while iterations < max_iterations {
        iterations += 1;
        let thr = threshold_raw(a, &x, gamma);
        let f = objective_from(&thr, mu_sq);
        trace.push(f);
        let grad = gradient_from(a, &thr, mu_sq);

        if grad.norm() <= OBJECTIVE_FLOOR {
            // F is locally flat. If condition (414) still promises a
            // positive optimum, restart once from a certificate block;
            // otherwise the zero solution is the answer.
            if !restarted {
                if let Some(cert) = certificate_block(a, gamma, &x)? {
                    restarted = true;
                    prev_f = f64::NEG_INFINITY;
                    stall = 0;
                    x = cert;
                    continue;
                }
            }
            converged = true;
            break;
        }

        let x_next = linalg::polar(&grad)?.unitary;
        let dx = (&x_next - &x).norm();
        let f_stalled = (f - prev_f) <= rel_tol * f.max(OBJECTIVE_FLOOR);

        if f_stalled && dx <= FIXED_POINT_FACTOR * rel_tol {
            // the current iterate satisfies X = polar(∇F(X)) to tolerance
            converged = true;
            break;
        }
        if f_stalled {
            if stall == 0 {
                dx_window_start = dx;
            }
            stall += 1;
            if stall >= STALL_WINDOW {
                if dx > STALL_SHRINK * dx_window_start {
                    // objective flat but the iterate keeps moving between
                    // maximizers of equal value
                    converged = false;
                    break;
                }
                stall = 0;
            }
        } else {
            stall = 0;
        }
        prev_f = f;
        x = x_next;
    }

    Ok(FixedPointOutcome {
        x,
        trace,
        iterations,
        converged,
    })
}

/// Reads the loadings off the final threshold image, fixes signs so each
/// loading's largest-magnitude entry is positive, and assembles the
/// result. The sign flip is applied jointly to (z_j, x_j) so all solver
/// relations are preserved.
fn assemble_result(
    a: &GroupedMatrix,
    mut x: DMatrix<f64>,
    gamma: &[f64],
    mut trace: Vec<f64>,
    mu_sq: &[f64],
    iterations: usize,
    converged: bool,
) -> Result<GspcaResult> {
    let thr = threshold_raw(a, &x, gamma);
    let f = objective_from(&thr, mu_sq);
    if trace.last() != Some(&f) {
        trace.push(f);
    }
    let m = x.ncols();
    let mut z = DMatrix::zeros(a.ncols(), m);
    for j in 0..m {
        let t = thr.t.column(j);
        let norm = t.norm();
        if norm > 0.0 {
            z.set_column(j, &(t / norm));
        }
    }
    for j in 0..m {
        let col = z.column(j);
        let lead = (0..col.len()).max_by(|&p, &q| {
            col[p].abs().partial_cmp(&col[q].abs()).unwrap()
        });
        if let Some(p) = lead {
            if col[p] < 0.0 {
                z.column_mut(j).neg_mut();
                x.column_mut(j).neg_mut();
            }
        }
    }
    let y = a.data() * &z;
    let len = trace.len();
    Ok(GspcaResult {
        z: LoadingBlock::new(z, a.groups().clone())?,
        y,
        x,
        objective_trace: trace,
        segment_lengths: vec![len],
        objective: f,
        iterations,
        converged,
    })
}

fn initial_block(a: &GroupedMatrix, svd: &SvdResult, m: usize, init: &Init) -> Result<DMatrix<f64>> {
    match init {
        Init::LeftSingularVectors => Ok(svd.left_block(m)),
        Init::Provided(x0) => {
            check_block_shapes(a, x0.matrix(), m)?;
            Ok(x0.matrix().clone())
        }
        Init::Seeded(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let raw = DMatrix::from_fn(a.nrows(), m, |_, _| rng.sample(StandardNormal));
            Ok(linalg::qr_norm_ordered(&raw)?.q)
        }
    }
}

/// Group-sparse block PCA: solves the component/loading formulation for
/// all m loadings simultaneously.
pub fn block_solve(a: &GroupedMatrix, m: usize, cfg: &SolverConfig) -> Result<GspcaResult> {
    check_config_lengths(cfg, m)?;
    let svd = linalg::svd(a.data())?;
    if m > svd.rank() {
        return Err(Error::RankDeficient(format!(
            "m = {m} exceeds the data rank {}",
            svd.rank()
        )));
    }
    let x0 = initial_block(a, &svd, m, &cfg.init)?;
    let mu_sq = cfg.weights.squared();
    let out = fixed_point(
        a,
        x0,
        cfg.sparsity.as_slice(),
        &mu_sq,
        cfg.max_iterations,
        cfg.rel_tol,
    )?;
    assemble_result(
        a,
        out.x,
        cfg.sparsity.as_slice(),
        out.trace,
        &mu_sq,
        out.iterations,
        out.converged,
    )
}

/// Group-sparse deflation: finds one loading at a time, each time
/// projecting the found direction out of the data. Components `y` are
/// reported against the original data matrix. A zero loading at some step
/// is recorded and deflation continues with the data unchanged.
pub fn deflation_solve(a: &GroupedMatrix, m: usize, cfg: &SolverConfig) -> Result<GspcaResult> {
    check_config_lengths(cfg, m)?;
    let svd = linalg::svd(a.data())?;
    if m > svd.rank() {
        return Err(Error::RankDeficient(format!(
            "m = {m} exceeds the data rank {}",
            svd.rank()
        )));
    }

    let mut current = a.data().clone();
    let mut z = DMatrix::zeros(a.ncols(), m);
    let mut x = DMatrix::zeros(a.nrows(), m);
    let mut trace = Vec::new();
    let mut segment_lengths = Vec::with_capacity(m);
    let mut objective = 0.0;
    let mut iterations = 0;
    let mut converged = true;

    for j in 0..m {
        let data_j = GroupedMatrix::new(current.clone(), a.groups().clone())?;
        let step_init = match &cfg.init {
            Init::Seeded(s) => Init::Seeded(s.wrapping_add(j as u64)),
            _ => Init::LeftSingularVectors,
        };
        let step_cfg = SolverConfig {
            weights: Weights::uniform(1),
            sparsity: SparsityParams::explicit(vec![cfg.sparsity.as_slice()[j]])?,
            max_iterations: cfg.max_iterations,
            rel_tol: cfg.rel_tol,
            init: step_init,
        };
        let step = block_solve(&data_j, 1, &step_cfg)?;
        segment_lengths.push(step.objective_trace.len());
        trace.extend_from_slice(&step.objective_trace);
        objective += step.objective;
        iterations += step.iterations;
        converged &= step.converged;

        let zj = step.z.matrix().column(0).into_owned();
        x.set_column(j, &step.x.column(0));
        if zj.norm() > 0.0 {
            let az = &current * &zj;
            current -= az * zj.transpose();
            z.set_column(j, &zj);
        }
    }

    let y = a.data() * &z;
    Ok(GspcaResult {
        z: LoadingBlock::new(z, a.groups().clone())?,
        y,
        x,
        objective_trace: trace,
        segment_lengths,
        objective,
        iterations,
        converged,
    })
}

/// Plain PCA baseline: the m first right singular vectors as loadings,
/// with the matching components and normalized components.
pub fn pca_baseline(a: &GroupedMatrix, m: usize) -> Result<GspcaResult> {
    if m == 0 {
        return Err(Error::InvalidInput("m must be at least 1".into()));
    }
    let svd = linalg::svd(a.data())?;
    if m > svd.rank() {
        return Err(Error::RankDeficient(format!(
            "m = {m} exceeds the data rank {}",
            svd.rank()
        )));
    }
    let mut z = svd.right_block(m);
    let mut x = svd.left_block(m);
    for j in 0..m {
        let col = z.column(j);
        let lead = (0..col.len())
            .max_by(|&p, &q| col[p].abs().partial_cmp(&col[q].abs()).unwrap())
            .unwrap();
        if col[lead] < 0.0 {
            z.column_mut(j).neg_mut();
            x.column_mut(j).neg_mut();
        }
    }
    let y = a.data() * &z;
    let objective = svd.leading_energy(m);
    Ok(GspcaResult {
        z: LoadingBlock::new(z, a.groups().clone())?,
        y,
        x,
        objective_trace: Vec::new(),
        segment_lengths: Vec::new(),
        objective,
        iterations: 0,
        converged: true,
    })
}
