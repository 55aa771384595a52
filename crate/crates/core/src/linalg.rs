//! Dense matrix primitives: SVD access, polar decomposition, norm-ordered
//! QR, spectral norm, and the two geometric diagnostics (RV coefficient,
//! orthogonality volume).
//!
//! Everything here is a pure function of its inputs. Decompositions are
//! delegated to nalgebra; this module fixes conventions (sorted singular
//! values, positive R diagonal, rank tolerances) on top of them.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative cutoff below which a singular value counts as zero:
/// σ_j is "zero" if σ_j ≤ RANK_REL_TOL · σ_1.
pub const RANK_REL_TOL: f64 = 1e-12;

/// Tolerance on ‖X^T X − I‖_F accepted by [`OrthonormalBlock::new`].
pub const ORTHONORMALITY_TOL: f64 = 1e-8;

pub(crate) fn ensure_finite(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} contains a non-finite entry"
        )))
    }
}

fn ensure_nonempty(m: &DMatrix<f64>, name: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::InvalidInput(format!("{name} is empty")));
    }
    Ok(())
}

/// Thin SVD truncated at the rank tolerance.
///
/// `u` is n×r, `v` is p×r, both with orthonormal columns; the r singular
/// values are positive and nonincreasing.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl SvdResult {
    /// Numerical rank: the number of retained singular values.
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Σ_{j<m} σ_j², the variance explained by an m-component PCA.
    pub fn leading_energy(&self, m: usize) -> f64 {
        self.singular_values.iter().take(m).map(|s| s * s).sum()
    }

    /// The first m left singular vectors as an n×m block.
    pub fn left_block(&self, m: usize) -> DMatrix<f64> {
        self.u.columns(0, m).into_owned()
    }

    /// The first m right singular vectors as a p×m block.
    pub fn right_block(&self, m: usize) -> DMatrix<f64> {
        self.v.columns(0, m).into_owned()
    }
}

/// Singular value decomposition A = U·diag(σ)·V^T with σ sorted
/// nonincreasing and factors truncated at the numerical rank.
pub fn svd(a: &DMatrix<f64>) -> Result<SvdResult> {
    ensure_nonempty(a, "svd input")?;
    ensure_finite(a, "svd input")?;
    if a.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("svd input is all-zero".into()));
    }
    let decomp = a.clone().svd(true, true);
    let u = decomp.u.expect("svd was requested with compute_u");
    let v_t = decomp.v_t.expect("svd was requested with compute_v");
    let sigma = decomp.singular_values;

    let s_max = sigma.max();
    let rank = sigma.iter().filter(|&&s| s > RANK_REL_TOL * s_max).count();
    if rank == 0 {
        return Err(Error::InvalidInput(
            "svd input is numerically zero".into(),
        ));
    }
    Ok(SvdResult {
        u: u.columns(0, rank).into_owned(),
        singular_values: sigma.iter().take(rank).copied().collect(),
        v: v_t.rows(0, rank).transpose(),
    })
}

/// Polar decomposition G = U·P of a k×ℓ matrix with k ≥ ℓ.
///
/// `unitary` has orthonormal columns even when G is rank deficient (the
/// missing directions are completed from the SVD basis); `rank_deficient`
/// flags that case, where the polar factor is not unique.
#[derive(Debug, Clone)]
pub struct PolarResult {
    pub unitary: DMatrix<f64>,
    pub psd_factor: DMatrix<f64>,
    pub rank_deficient: bool,
}

/// Polar decomposition via thin SVD: G = W1·diag(s)·W2^T gives
/// U = W1·W2^T and P = W2·diag(s)·W2^T. A column vector reduces to
/// U = G/‖G‖, P = ‖G‖.
pub fn polar(g: &DMatrix<f64>) -> Result<PolarResult> {
    ensure_nonempty(g, "polar input")?;
    ensure_finite(g, "polar input")?;
    if g.nrows() < g.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "polar input must be tall: got {}x{}",
            g.nrows(),
            g.ncols()
        )));
    }
    let decomp = g.clone().svd(true, true);
    let w1 = decomp.u.expect("svd was requested with compute_u");
    let w2_t = decomp.v_t.expect("svd was requested with compute_v");
    let sigma = decomp.singular_values;

    let s_max = sigma.max();
    let rank_deficient =
        s_max == 0.0 || sigma.iter().any(|&s| s <= RANK_REL_TOL * s_max);

    let unitary = &w1 * &w2_t;
    let psd_factor = w2_t.transpose() * DMatrix::from_diagonal(&sigma) * &w2_t;
    Ok(PolarResult {
        unitary,
        psd_factor,
        rank_deficient,
    })
}

/// QR factorization after permuting columns into nonincreasing
/// Euclidean-norm order.
///
/// `q·r` reconstructs the permuted matrix; `permutation[k]` is the
/// original index of the column processed in position k, so callers can
/// report per-column quantities in the original order.
#[derive(Debug, Clone)]
pub struct QrNormOrdered {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub permutation: Vec<usize>,
}

impl QrNormOrdered {
    /// Diagonal of R, in processing order.
    pub fn r_diagonal(&self) -> Vec<f64> {
        (0..self.r.nrows()).map(|j| self.r[(j, j)]).collect()
    }
}

/// Norm-ordered QR: columns are sorted by decreasing Euclidean norm
/// (ties keep their original order), then factored with R upper
/// triangular and positive diagonal.
///
/// Errors on rank-deficient input.
pub fn qr_norm_ordered(y: &DMatrix<f64>) -> Result<QrNormOrdered> {
    ensure_nonempty(y, "qr input")?;
    ensure_finite(y, "qr input")?;
    let (n, m) = (y.nrows(), y.ncols());
    if n < m {
        return Err(Error::ShapeMismatch(format!(
            "qr input must have at least as many rows as columns: got {n}x{m}"
        )));
    }

    let norms: Vec<f64> = (0..m).map(|j| y.column(j).norm()).collect();
    let mut permutation: Vec<usize> = (0..m).collect();
    // stable sort: equal norms keep original index order
    permutation.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap());

    let mut permuted = DMatrix::zeros(n, m);
    for (k, &j) in permutation.iter().enumerate() {
        permuted.set_column(k, &y.column(j));
    }

    let qr = permuted.qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
            for c in j..m {
                r[(j, c)] = -r[(j, c)];
            }
        }
    }

    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    if (0..m).any(|j| r[(j, j)] <= RANK_REL_TOL * max_norm) {
        return Err(Error::RankDeficient(
            "qr input does not have full column rank".into(),
        ));
    }
    Ok(QrNormOrdered { q, r, permutation })
}

/// Largest singular value of a matrix.
pub fn spectral_norm(b: &DMatrix<f64>) -> Result<f64> {
    ensure_nonempty(b, "spectral_norm input")?;
    ensure_finite(b, "spectral_norm input")?;
    if b.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    Ok(b.clone().singular_values().max())
}

/// RV coefficient ‖X^T Y‖_F² / (‖X^T X‖_F · ‖Y^T Y‖_F), a similarity in
/// [0, 1] between the column blocks X and Y; symmetric in its arguments.
pub fn rv_coefficient(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    ensure_nonempty(x, "rv_coefficient first argument")?;
    ensure_nonempty(y, "rv_coefficient second argument")?;
    ensure_finite(x, "rv_coefficient first argument")?;
    ensure_finite(y, "rv_coefficient second argument")?;
    if x.nrows() != y.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "rv_coefficient needs equal row counts: got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let gx = x.transpose() * x;
    let gy = y.transpose() * y;
    let (nx, ny) = (gx.norm(), gy.norm());
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::InvalidInput(
            "rv_coefficient argument is all-zero".into(),
        ));
    }
    let cross = x.transpose() * y;
    Ok(cross.norm_squared() / (nx * ny))
}

/// Orthogonality measure of a component block: the volume of the
/// parallelepiped spanned by the columns, normalized by the product of
/// the column norms. Equals 1 iff the columns are orthogonal; returns 0
/// for rank-deficient input (degenerate volume).
pub fn orthogonality_volume(y: &DMatrix<f64>) -> Result<f64> {
    ensure_nonempty(y, "orthogonality_volume input")?;
    ensure_finite(y, "orthogonality_volume input")?;
    let m = y.ncols();
    let norms: Vec<f64> = (0..m).map(|j| y.column(j).norm()).collect();
    if norms.iter().any(|&n| n == 0.0) {
        return Ok(0.0);
    }
    let qr = match qr_norm_ordered(y) {
        Ok(qr) => qr,
        Err(Error::RankDeficient(_)) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let ratio = qr
        .r_diagonal()
        .iter()
        .zip(&qr.permutation)
        .map(|(r, &j)| r / norms[j])
        .product::<f64>();
    Ok(ratio.clamp(0.0, 1.0))
}

/// An n×m matrix with orthonormal columns (a point on the Stiefel
/// manifold), validated on construction.
#[derive(Debug, Clone)]
pub struct OrthonormalBlock {
    matrix: DMatrix<f64>,
}

impl OrthonormalBlock {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        ensure_nonempty(&matrix, "orthonormal block")?;
        ensure_finite(&matrix, "orthonormal block")?;
        let m = matrix.ncols();
        let gram = matrix.transpose() * &matrix;
        let defect = (&gram - DMatrix::identity(m, m)).norm();
        if defect > ORTHONORMALITY_TOL {
            return Err(Error::InvalidInput(format!(
                "columns are not orthonormal: ‖X^TX − I‖ = {defect:.3e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.matrix
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
    }

    /// Power iteration on B^T B: an oracle for the largest singular value.
    fn power_iteration_sigma_max(b: &DMatrix<f64>, iters: usize) -> f64 {
        let g = b.transpose() * b;
        let mut v = DVector::from_element(g.nrows(), 1.0).normalize();
        for _ in 0..iters {
            v = (&g * &v).normalize();
        }
        (b * &v).norm()
    }

    #[test]
    fn svd_diagonal_matrix() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 1.0]));
        let res = svd(&a).unwrap();
        assert_eq!(res.singular_values, vec![3.0, 2.0, 1.0]);
        // U and V agree up to a joint column sign and are axis-aligned
        for j in 0..3 {
            for i in 0..3 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(res.u[(i, j)].abs(), expected, epsilon = 1e-12);
                assert_relative_eq!(res.u[(i, j)], res.v[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn svd_identity() {
        let a = DMatrix::<f64>::identity(4, 4);
        let res = svd(&a).unwrap();
        assert_eq!(res.singular_values, vec![1.0; 4]);
    }

    #[test]
    fn svd_reconstruction_random() {
        let a = random_matrix(6, 4, 7);
        let res = svd(&a).unwrap();
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(res.singular_values.clone()));
        let recon = &res.u * sigma * res.v.transpose();
        assert!((recon - &a).norm() <= 1e-10 * a.norm());
        // orthonormality of both factors
        let m = res.rank();
        assert!((res.u.transpose() * &res.u - DMatrix::identity(m, m)).norm() < 1e-10);
        assert!((res.v.transpose() * &res.v - DMatrix::identity(m, m)).norm() < 1e-10);
    }

    #[test]
    fn svd_rejects_zero_and_nonfinite() {
        assert!(svd(&DMatrix::zeros(3, 3)).is_err());
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 0)] = f64::NAN;
        assert!(svd(&a).is_err());
    }

    #[test]
    fn svd_singular_values_match_gram_eigenvalues() {
        for seed in 0..20 {
            let a = random_matrix(10, 6, seed);
            let res = svd(&a).unwrap();
            let gram = a.transpose() * &a;
            let mut eig: Vec<f64> = gram.symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(|x, y| y.partial_cmp(x).unwrap());
            for (s, e) in res.singular_values.iter().zip(eig) {
                assert_relative_eq!(*s, e.max(0.0).sqrt(), max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn polar_identity() {
        let res = polar(&DMatrix::<f64>::identity(3, 3)).unwrap();
        assert!((res.unitary - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        assert!((res.psd_factor - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        assert!(!res.rank_deficient);
    }

    #[test]
    fn polar_column_vector() {
        let g = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let res = polar(&g).unwrap();
        assert_relative_eq!(res.unitary[(0, 0)], 0.6, epsilon = 1e-12);
        assert_relative_eq!(res.unitary[(1, 0)], 0.8, epsilon = 1e-12);
        assert_relative_eq!(res.psd_factor[(0, 0)], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn polar_reconstruction_random() {
        for seed in 0..20 {
            let g = random_matrix(5, 3, 100 + seed);
            let res = polar(&g).unwrap();
            assert!((&res.unitary * &res.psd_factor - &g).norm() <= 1e-10 * g.norm());
            let gram = res.unitary.transpose() * &res.unitary;
            assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-10);
            // P symmetric with nonnegative eigenvalues
            assert!((&res.psd_factor - res.psd_factor.transpose()).norm() < 1e-10);
            let eig = res.psd_factor.clone().symmetric_eigen().eigenvalues;
            assert!(eig.iter().all(|&l| l >= -1e-10));
        }
    }

    #[test]
    fn polar_idempotent_on_orthonormal_input() {
        for seed in 0..10 {
            let x = qr_norm_ordered(&random_matrix(7, 3, 200 + seed)).unwrap().q;
            let res = polar(&x).unwrap();
            assert!((res.unitary - &x).norm() < 1e-10);
        }
    }

    #[test]
    fn polar_flags_rank_deficiency() {
        let mut g = random_matrix(5, 3, 3);
        let c = g.column(0).into_owned();
        g.set_column(2, &c); // duplicate column
        let res = polar(&g).unwrap();
        assert!(res.rank_deficient);
        let gram = res.unitary.transpose() * &res.unitary;
        assert!((gram - DMatrix::identity(3, 3)).norm() < 1e-8);
    }

    #[test]
    fn polar_rejects_wide_input() {
        assert!(polar(&random_matrix(2, 4, 1)).is_err());
    }

    #[test]
    fn qr_orthogonal_norm_ordered_input() {
        // orthogonal columns, already norm-ordered
        let y = DMatrix::from_column_slice(3, 2, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let res = qr_norm_ordered(&y).unwrap();
        assert_eq!(res.permutation, vec![0, 1]);
        assert_relative_eq!(res.r[(0, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(res.r[(1, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(res.r[(0, 1)], 0.0, epsilon = 1e-12);
        assert!((res.q.column(0) - y.column(0) / 2.0).norm() < 1e-12);
    }

    #[test]
    fn qr_permutes_by_decreasing_norm() {
        let y = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0]);
        let res = qr_norm_ordered(&y).unwrap();
        assert_eq!(res.permutation, vec![1, 0]);
    }

    #[test]
    fn qr_reconstruction_random() {
        for seed in 0..20 {
            let y = random_matrix(8, 3, 300 + seed);
            let res = qr_norm_ordered(&y).unwrap();
            let mut permuted = DMatrix::zeros(8, 3);
            for (k, &j) in res.permutation.iter().enumerate() {
                permuted.set_column(k, &y.column(j));
            }
            assert!((&res.q * &res.r - permuted).norm() <= 1e-10 * y.norm());
            assert!(res.r_diagonal().iter().all(|&d| d > 0.0));
        }
    }

    #[test]
    fn qr_rejects_rank_deficient() {
        let mut y = random_matrix(6, 3, 4);
        let c = y.column(1).into_owned();
        y.set_column(2, &(c * 2.0));
        assert!(matches!(qr_norm_ordered(&y), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn spectral_norm_cases() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 7.0, 1.0]));
        assert_relative_eq!(spectral_norm(&b).unwrap(), 7.0, epsilon = 1e-12);
        assert_eq!(spectral_norm(&DMatrix::zeros(3, 2)).unwrap(), 0.0);
        for seed in 0..10 {
            let b = random_matrix(10, 4, 400 + seed);
            let oracle = power_iteration_sigma_max(&b, 2000);
            assert_relative_eq!(spectral_norm(&b).unwrap(), oracle, max_relative = 1e-8);
        }
    }

    #[test]
    fn rv_self_similarity_and_orthogonal_case() {
        let x = random_matrix(6, 2, 5);
        assert_relative_eq!(rv_coefficient(&x, &x).unwrap(), 1.0, epsilon = 1e-12);

        // orthonormal bases of mutually orthogonal subspaces
        let mut a = DMatrix::zeros(4, 2);
        a[(0, 0)] = 1.0;
        a[(1, 1)] = 1.0;
        let mut b = DMatrix::zeros(4, 2);
        b[(2, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        assert_relative_eq!(rv_coefficient(&a, &b).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rv_two_forms_agree() {
        // second form: the Frobenius inner product of the outer Gram
        // matrices, ⟨XX^T, YY^T⟩_F / (‖X^TX‖_F‖Y^TY‖_F)
        for seed in 0..50 {
            let x = random_matrix(7, 3, 500 + seed);
            let y = random_matrix(7, 2, 600 + seed);
            let first = rv_coefficient(&x, &y).unwrap();
            let gx = x.transpose() * &x;
            let gy = y.transpose() * &y;
            let outer_inner = ((&x * x.transpose()) * (&y * y.transpose())).trace();
            let second = outer_inner / (gx.norm() * gy.norm());
            assert_relative_eq!(first, second, epsilon = 1e-12);
        }
    }

    #[test]
    fn rv_bounds_and_symmetry() {
        for seed in 0..1000 {
            let x = random_matrix(5, 2, 10_000 + seed);
            let y = random_matrix(5, 3, 20_000 + seed);
            let rxy = rv_coefficient(&x, &y).unwrap();
            let ryx = rv_coefficient(&y, &x).unwrap();
            assert!((0.0..=1.0 + 1e-12).contains(&rxy));
            assert_relative_eq!(rxy, ryx, epsilon = 1e-12);
        }
    }

    #[test]
    fn rv_rejects_zero_argument() {
        let x = random_matrix(4, 2, 6);
        assert!(rv_coefficient(&x, &DMatrix::zeros(4, 2)).is_err());
    }

    #[test]
    fn volume_orthogonal_columns_is_one() {
        let y = DMatrix::from_column_slice(3, 2, &[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]);
        assert_relative_eq!(orthogonality_volume(&y).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn volume_two_columns_is_sine_of_angle() {
        for &theta in &[0.1f64, 0.4, 1.0, 1.5] {
            let y = DMatrix::from_column_slice(
                2,
                2,
                &[1.0, 0.0, theta.cos(), theta.sin()],
            );
            assert_relative_eq!(
                orthogonality_volume(&y).unwrap(),
                theta.sin().abs(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn volume_matches_gram_determinant_oracle() {
        for seed in 0..50 {
            let y = random_matrix(6, 3, 700 + seed);
            let vol = orthogonality_volume(&y).unwrap();
            let gram = y.transpose() * &y;
            let denom: f64 = (0..3).map(|j| y.column(j).norm_squared()).product();
            let oracle_sq = gram.determinant() / denom;
            assert_relative_eq!(vol * vol, oracle_sq, max_relative = 1e-10);
        }
    }

    #[test]
    fn volume_near_collinear_is_tiny_and_deficient_is_zero() {
        let base = random_matrix(5, 1, 8);
        let mut y = DMatrix::zeros(5, 2);
        y.set_column(0, &base.column(0));
        let perturbed = base.column(0).into_owned() * 1.0
            + random_matrix(5, 1, 9).column(0) * 1e-5;
        y.set_column(1, &perturbed.column(0));
        assert!(orthogonality_volume(&y).unwrap() <= 1e-3);

        let mut z = DMatrix::zeros(5, 2);
        z.set_column(0, &base.column(0));
        z.set_column(1, &base.column(0));
        assert_eq!(orthogonality_volume(&z).unwrap(), 0.0);
    }

    #[test]
    fn orthonormal_block_validation() {
        let q = qr_norm_ordered(&random_matrix(6, 3, 11)).unwrap().q;
        assert!(OrthonormalBlock::new(q).is_ok());
        assert!(OrthonormalBlock::new(random_matrix(6, 3, 12)).is_err());
    }
}
