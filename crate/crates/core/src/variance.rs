//! Explained variance for a block of possibly non-orthogonal components.
//!
//! For components Y = AZ with full column rank, five definitions are
//! provided:
//!
//! - **subspace**: ‖A·P_Z‖_F², the energy of the data projected on the
//!   loading span. Depends only on span(Z).
//! - **adjusted**: Σ_j r_jj² from the norm-ordered QR of Y — each
//!   component contributes its projection on the QR basis axis.
//! - **optimal**: the largest projection-based value Σ_j ⟨y_j, x_j⟩² over
//!   all orthonormal bases X of span(Y); by construction it dominates the
//!   adjusted variance, which uses one particular basis. The polar basis
//!   of Y is the natural starting point and already maximal for
//!   components of equal norm.
//! - **qr_normalized / up_normalized**: Σ_j 1/‖t_j‖² where T carries the
//!   loadings of the normalized basis (T = Z·R⁻¹ for QR,
//!   T = Z·(Y^TY)^{-1/2} for polar).
//!
//! All five collapse to Σσ_j² on an exact PCA solution, and the
//! projection-based values never exceed the subspace variance, which
//! never exceeds Σ_{j≤m} σ_j². The classical chain
//! adjusted ≤ optimal ≤ subspace assumes unit-norm loading columns (the
//! solver's convention); the functions themselves accept any full-rank
//! block.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouped::{GroupedMatrix, LoadingBlock};
use crate::linalg;

/// Relative eigenvalue floor below which Y^TY counts as singular.
const EIGEN_FLOOR_REL: f64 = 1e-14;

/// The five explained-variance definitions, in the conventional table
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Definition {
    Subspace,
    Optimal,
    Adjusted,
    QrNormalized,
    UpNormalized,
}

impl Definition {
    pub const ALL: [Definition; 5] = [
        Definition::Subspace,
        Definition::Optimal,
        Definition::Adjusted,
        Definition::QrNormalized,
        Definition::UpNormalized,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Definition::Subspace => "subspVar",
            Definition::Optimal => "optVar",
            Definition::Adjusted => "adjVar",
            Definition::QrNormalized => "QRnormVar",
            Definition::UpNormalized => "UPnormVar",
        }
    }
}

fn components(a: &GroupedMatrix, z: &LoadingBlock) -> Result<DMatrix<f64>> {
    if z.groups() != a.groups() {
        return Err(Error::ShapeMismatch(
            "loadings and data have different group structures".into(),
        ));
    }
    Ok(a.data() * z.matrix())
}

/// Symmetric eigendecomposition of Y^TY with a rank check, returning
/// (Y^TY)^{-1/2}.
fn gram_inv_sqrt(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = y.transpose() * y;
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    if max <= 0.0 || eig.eigenvalues.iter().any(|&l| l <= EIGEN_FLOOR_REL * max) {
        return Err(Error::RankDeficient(
            "components do not have full column rank".into(),
        ));
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt())) * q.transpose())
}

/// Projection values m_jj = ⟨y_j, x_j⟩ under the basis X of span(Y) that
/// maximizes Σ m_jj², returned as (Σ m_jj², per-column m_jj²).
///
/// In span coordinates the problem is max over orthogonal O of
/// Σ_j (c_j^T o_j)², with C the coordinates of Y. For m = 2 the objective
/// along the rotation angle is a shifted sinusoid and the maximum is
/// closed-form; reflections square to the same values. For m ≥ 3 the
/// objective is convex, so iterating O ← polar(C·diag(c_j^T o_j)) ascends
/// to a maximizer; starting from both the polar basis of C and the QR
/// basis keeps the result at least as large as the adjusted variance.
fn optimal_projection(y: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    let qr = linalg::qr_norm_ordered(y)?;
    let c = qr.q.transpose() * y;
    let m = c.ncols();

    let diag_products = |o: &DMatrix<f64>| -> Vec<f64> {
        (0..o.ncols()).map(|j| c.column(j).dot(&o.column(j))).collect()
    };
    let value_of = |o: &DMatrix<f64>| -> f64 {
        diag_products(o).iter().map(|d| d * d).sum()
    };

    let best = match m {
        1 => DMatrix::from_element(1, 1, if c[(0, 0)] >= 0.0 { 1.0 } else { -1.0 }),
        2 => {
            // Σ_j (c_j^T o_j)² = A + B·cos 2φ + C·sin 2φ along rotations
            let (c11, c21, c12, c22) = (c[(0, 0)], c[(1, 0)], c[(0, 1)], c[(1, 1)]);
            let b = 0.5 * (c11 * c11 - c21 * c21 + c22 * c22 - c12 * c12);
            let s = c11 * c21 - c22 * c12;
            let phi = 0.5 * s.atan2(b);
            DMatrix::from_column_slice(2, 2, &[phi.cos(), phi.sin(), -phi.sin(), phi.cos()])
        }
        _ => {
            let polar_start = linalg::polar(&c)?.unitary;
            // basis produced by the norm-ordered QR of Y, as an O(m) point
            let mut qr_start = DMatrix::zeros(m, m);
            for (k, &j) in qr.permutation.iter().enumerate() {
                qr_start[(k, j)] = 1.0;
            }
            let mut best = polar_start;
            let mut best_value = f64::NEG_INFINITY;
            for start in [best.clone(), qr_start] {
                let mut o = start;
                let mut value = value_of(&o);
                for _ in 0..500 {
                    let d = diag_products(&o);
                    let mut grad = c.clone();
                    for (j, dj) in d.iter().enumerate() {
                        grad.column_mut(j).scale_mut(*dj);
                    }
                    if grad.norm() <= 1e-300 {
                        break;
                    }
                    let next = linalg::polar(&grad)?.unitary;
                    let next_value = value_of(&next);
                    o = next;
                    if next_value - value <= 1e-14 * next_value.abs().max(1e-300) {
                        value = next_value;
                        break;
                    }
                    value = next_value;
                }
                if value > best_value {
                    best_value = value;
                    best = o;
                }
            }
            best
        }
    };

    let squares: Vec<f64> = diag_products(&best).iter().map(|d| d * d).collect();
    Ok((squares.iter().sum(), squares))
}

/// Subspace variance ‖A·P_Z‖_F² = tr{Z^TA^TAZ·(Z^TZ)⁻¹}: the energy of
/// the data projected onto span(Z). Invariant under any invertible
/// recombination of the loading columns.
pub fn subspace_variance(a: &GroupedMatrix, z: &LoadingBlock) -> Result<f64> {
    if z.groups() != a.groups() {
        return Err(Error::ShapeMismatch(
            "loadings and data have different group structures".into(),
        ));
    }
    let basis = linalg::qr_norm_ordered(z.matrix()).map_err(|e| match e {
        Error::RankDeficient(_) => {
            Error::RankDeficient("loadings do not have full column rank".into())
        }
        other => other,
    })?;
    Ok((a.data() * basis.q).norm_squared())
}

/// Adjusted variance: Σ_j r_jj² from the norm-ordered QR of Y.
pub fn adjusted_variance(y: &DMatrix<f64>) -> Result<f64> {
    let qr = linalg::qr_norm_ordered(y)?;
    Ok(qr.r_diagonal().iter().map(|r| r * r).sum())
}

/// Optimal variance: the largest projection-based value Σ_j ⟨y_j, x_j⟩²
/// over all orthonormal bases X of span(Y). It dominates the adjusted
/// variance, which uses one particular basis.
pub fn optimal_variance(y: &DMatrix<f64>) -> Result<f64> {
    optimal_projection(y).map(|(value, _)| value)
}

/// QR-normalized variance: Σ_j 1/‖t_j‖² with T = Z·R⁻¹ taken from the
/// norm-ordered QR of Y = AZ.
pub fn qr_normalized_variance(a: &GroupedMatrix, z: &LoadingBlock) -> Result<f64> {
    let y = components(a, z)?;
    let qr = linalg::qr_norm_ordered(&y)?;
    let t = permuted_loadings(z.matrix(), &qr.permutation)
        * qr.r.clone().try_inverse().ok_or_else(|| {
            Error::RankDeficient("components do not have full column rank".into())
        })?;
    Ok((0..t.ncols()).map(|j| 1.0 / t.column(j).norm_squared()).sum())
}

/// UP-normalized variance: Σ_j 1/‖t_j‖² with T = Z·(Y^TY)^{-1/2}.
pub fn up_normalized_variance(a: &GroupedMatrix, z: &LoadingBlock) -> Result<f64> {
    let y = components(a, z)?;
    let inv_sqrt = gram_inv_sqrt(&y)?;
    let t = z.matrix() * inv_sqrt;
    Ok((0..t.ncols()).map(|j| 1.0 / t.column(j).norm_squared()).sum())
}

fn permuted_loadings(z: &DMatrix<f64>, permutation: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(z.nrows(), z.ncols());
    for (k, &j) in permutation.iter().enumerate() {
        out.set_column(k, &z.column(j));
    }
    out
}

/// Per-component contributions θ_j = ‖y'_j‖²/‖A‖_F² for the four
/// definitions that admit a split; each vector sums to the matching pev.
/// Entries are reported in the original column order of Z.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contributions {
    #[serde(rename = "optVar")]
    pub optimal: Vec<f64>,
    #[serde(rename = "adjVar")]
    pub adjusted: Vec<f64>,
    #[serde(rename = "QRnormVar")]
    pub qr_normalized: Vec<f64>,
    #[serde(rename = "UPnormVar")]
    pub up_normalized: Vec<f64>,
}

/// The five explained-variance values for one (A, Z) pair, with the PCA
/// bound Σ_{j≤m}σ_j², the total data variance ‖A‖_F², the proportions of
/// explained variance, and per-component contributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    #[serde(rename = "subspVar")]
    pub subspace: f64,
    #[serde(rename = "optVar")]
    pub optimal: f64,
    #[serde(rename = "adjVar")]
    pub adjusted: f64,
    #[serde(rename = "QRnormVar")]
    pub qr_normalized: f64,
    #[serde(rename = "UPnormVar")]
    pub up_normalized: f64,
    #[serde(rename = "pcaBound")]
    pub pca_bound: f64,
    #[serde(rename = "totalVar")]
    pub total_variance: f64,
    #[serde(rename = "pev_subspVar")]
    pub pev_subspace: f64,
    #[serde(rename = "pev_optVar")]
    pub pev_optimal: f64,
    #[serde(rename = "pev_adjVar")]
    pub pev_adjusted: f64,
    #[serde(rename = "pev_QRnormVar")]
    pub pev_qr_normalized: f64,
    #[serde(rename = "pev_UPnormVar")]
    pub pev_up_normalized: f64,
    pub theta: Contributions,
}

impl VarianceReport {
    pub fn value(&self, d: Definition) -> f64 {
        match d {
            Definition::Subspace => self.subspace,
            Definition::Optimal => self.optimal,
            Definition::Adjusted => self.adjusted,
            Definition::QrNormalized => self.qr_normalized,
            Definition::UpNormalized => self.up_normalized,
        }
    }

    pub fn pev(&self, d: Definition) -> f64 {
        match d {
            Definition::Subspace => self.pev_subspace,
            Definition::Optimal => self.pev_optimal,
            Definition::Adjusted => self.pev_adjusted,
            Definition::QrNormalized => self.pev_qr_normalized,
            Definition::UpNormalized => self.pev_up_normalized,
        }
    }
}

/// Computes all five definitions plus the pev and per-component
/// contributions in one pass.
pub fn variance_report(a: &GroupedMatrix, z: &LoadingBlock) -> Result<VarianceReport> {
    let y = components(a, z)?;
    let m = y.ncols();
    let total = a.data().norm_squared();
    let svd = linalg::svd(a.data())?;
    let pca_bound = svd.leading_energy(m);

    let subspace = subspace_variance(a, z)?;

    let qr = linalg::qr_norm_ordered(&y)?;
    let r_diag = qr.r_diagonal();
    let adjusted: f64 = r_diag.iter().map(|r| r * r).sum();
    let mut theta_adjusted = vec![0.0; m];
    for (k, &j) in qr.permutation.iter().enumerate() {
        theta_adjusted[j] = r_diag[k] * r_diag[k] / total;
    }

    let (optimal, optimal_squares) = optimal_projection(&y)?;
    let theta_optimal: Vec<f64> = optimal_squares.iter().map(|s| s / total).collect();
    let inv_sqrt = gram_inv_sqrt(&y)?;

    let r_inv = qr.r.clone().try_inverse().ok_or_else(|| {
        Error::RankDeficient("components do not have full column rank".into())
    })?;
    let t_qr = permuted_loadings(z.matrix(), &qr.permutation) * r_inv;
    let mut theta_qr = vec![0.0; m];
    for (k, &j) in qr.permutation.iter().enumerate() {
        theta_qr[j] = 1.0 / t_qr.column(k).norm_squared() / total;
    }
    let qr_normalized: f64 = theta_qr.iter().sum::<f64>() * total;

    let t_up = z.matrix() * inv_sqrt;
    let theta_up: Vec<f64> = (0..m)
        .map(|j| 1.0 / t_up.column(j).norm_squared() / total)
        .collect();
    let up_normalized: f64 = theta_up.iter().sum::<f64>() * total;

    Ok(VarianceReport {
        subspace,
        optimal,
        adjusted,
        qr_normalized,
        up_normalized,
        pca_bound,
        total_variance: total,
        pev_subspace: subspace / total,
        pev_optimal: optimal / total,
        pev_adjusted: adjusted / total,
        pev_qr_normalized: qr_normalized / total,
        pev_up_normalized: up_normalized / total,
        theta: Contributions {
            optimal: theta_optimal,
            adjusted: theta_adjusted,
            qr_normalized: theta_qr,
            up_normalized: theta_up,
        },
    })
}
