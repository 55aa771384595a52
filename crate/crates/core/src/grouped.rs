//! Group-variable data model: a data matrix whose columns are partitioned
//! into contiguous groups, group-blocked loading vectors, and the group
//! ℓ1 norm.
//!
//! Groups are contiguous column ranges. Data with scattered group
//! membership can be loaded through [`GroupedMatrix::new_permuted`], which
//! reorders columns once at construction time.

use nalgebra::{Const, DMatrix, DMatrixView, DVectorView, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ensure_finite;

/// Partition of a variable index range into contiguous groups.
///
/// Serializes as a plain JSON array of group sizes, e.g. `[4,4,4,4,4]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct GroupStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl GroupStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidInput("no groups given".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidInput("group sizes must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self { sizes, offsets })
    }

    /// One group per scalar variable.
    pub fn singletons(total: usize) -> Self {
        Self::new(vec![1; total]).expect("total must be positive")
    }

    /// Number of groups.
    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Total number of scalar variables.
    pub fn total(&self) -> usize {
        self.offsets.last().unwrap() + self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Column range of group `i` (0-based).
    pub fn range(&self, i: usize) -> Result<std::ops::Range<usize>> {
        if i >= self.count() {
            return Err(Error::IndexOutOfRange(format!(
                "group {i} of {}",
                self.count()
            )));
        }
        Ok(self.offsets[i]..self.offsets[i] + self.sizes[i])
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.count()).map(|i| self.offsets[i]..self.offsets[i] + self.sizes[i])
    }
}

impl TryFrom<Vec<usize>> for GroupStructure {
    type Error = Error;
    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(sizes)
    }
}

impl From<GroupStructure> for Vec<usize> {
    fn from(g: GroupStructure) -> Self {
        g.sizes
    }
}

/// Data matrix together with the group partition of its columns.
#[derive(Debug, Clone)]
pub struct GroupedMatrix {
    data: DMatrix<f64>,
    groups: GroupStructure,
}

impl GroupedMatrix {
    pub fn new(data: DMatrix<f64>, groups: GroupStructure) -> Result<Self> {
        ensure_finite(&data, "data matrix")?;
        if data.ncols() != groups.total() {
            return Err(Error::ShapeMismatch(format!(
                "data has {} columns but groups cover {}",
                data.ncols(),
                groups.total()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::InvalidInput("data matrix has no rows".into()));
        }
        Ok(Self { data, groups })
    }

    /// Builds a grouped matrix whose stored column `k` is `data` column
    /// `permutation[k]`, so that scattered group members become
    /// contiguous. `permutation` must be a permutation of `0..ncols`.
    pub fn new_permuted(
        data: DMatrix<f64>,
        groups: GroupStructure,
        permutation: &[usize],
    ) -> Result<Self> {
        let n = data.ncols();
        if permutation.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "permutation has {} entries for {} columns",
                permutation.len(),
                n
            )));
        }
        let mut seen = vec![false; n];
        for &j in permutation {
            if j >= n || seen[j] {
                return Err(Error::InvalidInput(
                    "column permutation is not a permutation".into(),
                ));
            }
            seen[j] = true;
        }
        let mut reordered = DMatrix::zeros(data.nrows(), n);
        for (k, &j) in permutation.iter().enumerate() {
            reordered.set_column(k, &data.column(j));
        }
        Self::new(reordered, groups)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// The n×p_i column block of group `i`.
    pub fn group_slice(&self, i: usize) -> Result<DMatrixView<'_, f64>> {
        let r = self.groups.range(i)?;
        Ok(self.data.columns_range(r))
    }
}

/// Block of loading vectors over a grouped variable space: a |p|×m matrix
/// whose rows follow the group partition.
#[derive(Debug, Clone)]
pub struct LoadingBlock {
    z: DMatrix<f64>,
    groups: GroupStructure,
}

impl LoadingBlock {
    pub fn new(z: DMatrix<f64>, groups: GroupStructure) -> Result<Self> {
        ensure_finite(&z, "loading block")?;
        if z.nrows() != groups.total() {
            return Err(Error::ShapeMismatch(format!(
                "loadings have {} rows but groups cover {}",
                z.nrows(),
                groups.total()
            )));
        }
        if z.ncols() == 0 {
            return Err(Error::InvalidInput("loading block has no columns".into()));
        }
        Ok(Self { z, groups })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn groups(&self) -> &GroupStructure {
        &self.groups
    }

    /// Number of loading vectors.
    pub fn m(&self) -> usize {
        self.z.ncols()
    }

    /// The group-`i` sub-vector of loading `j`.
    pub fn group_component(&self, i: usize, j: usize) -> Result<DVectorView<'_, f64>> {
        if j >= self.m() {
            return Err(Error::IndexOutOfRange(format!("loading {j} of {}", self.m())));
        }
        let r = self.groups.range(i)?;
        Ok(self.z.generic_view((r.start, j), (Dyn(r.len()), Const::<1>)))
    }
}

/// Group ℓ1 norm of a loading vector: the sum over groups of the
/// Euclidean norms of its group sub-vectors.
pub fn group_l1_norm(z: &[f64], groups: &GroupStructure) -> Result<f64> {
    if z.len() != groups.total() {
        return Err(Error::ShapeMismatch(format!(
            "vector has {} entries but groups cover {}",
            z.len(),
            groups.total()
        )));
    }
    Ok(groups
        .ranges()
        .map(|r| z[r].iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum())
}

/// Group-level zero pattern of a loading block: entry (i, j) is true iff
/// ‖z_{i,j}‖ ≤ tol. Solver outputs zero whole groups exactly, so tol = 0
/// is the right choice there.
pub fn sparsity_pattern(z: &LoadingBlock, tol: f64) -> DMatrix<bool> {
    let p = z.groups().count();
    let m = z.m();
    DMatrix::from_fn(p, m, |i, j| {
        z.group_component(i, j).unwrap().norm() <= tol
    })
}
