//! Dense symmetric matrix algebra and the index-deletion calculus used by the
//! moment recurrences.
//!
//! Indices are zero-based throughout.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and averaged away) by [`SymMatrix::new`].
const SYMMETRY_TOL: f64 = 1e-12;
/// Largest condition number accepted for a conditioning block.
const MAX_BLOCK_COND: f64 = 1e14;

/// A dense real symmetric matrix. Entries `(i, j)` and `(j, i)` are bitwise equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Wraps a square matrix, averaging away asymmetry up to a relative 1e-12.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n == 0 {
            return Err(Error::InvalidParameter("matrix must have dimension >= 1".into()));
        }
        if m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
        }
        let scale = m.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                let (x, y) = (m[(i, j)], m[(j, i)]);
                if !x.is_finite() || !y.is_finite() || (x - y).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotSymmetric { row: i, col: j });
                }
            }
            if !m[(i, i)].is_finite() {
                return Err(Error::InvalidParameter(format!("non-finite diagonal entry {i}")));
            }
        }
        Ok(Self::symmetrize(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r.len() });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// `(m + mᵀ) / 2`, with no checks. Used after every conditioning step.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut out = m;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (out[(i, j)] + out[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.0.diagonal()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    /// Principal sub-block on the given (ordered) indices.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix(DMatrix::from_fn(idx.len(), idx.len(), |a, b| self.0[(idx[a], idx[b])]))
    }

    /// Drops row and column `i`.
    pub fn without(&self, i: usize) -> Result<SymMatrix> {
        check_index(i, self.dim())?;
        let keep: Vec<usize> = (0..self.dim()).filter(|&k| k != i).collect();
        Ok(self.principal(&keep))
    }

    /// `D S D` for a diagonal `D = diag(d)`.
    pub fn scale_both(&self, d: &[f64]) -> SymMatrix {
        let n = self.dim();
        SymMatrix(DMatrix::from_fn(n, n, |i, j| d[i] * self.0[(i, j)] * d[j]))
    }

    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.0.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// PSD test with a relative tolerance on the smallest eigenvalue.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let (min, max) = self.eigen_range();
        min >= -rel_tol * max.abs().max(f64::MIN_POSITIVE)
    }
}

fn check_index(i: usize, dim: usize) -> Result<()> {
    if i >= dim {
        Err(Error::IndexOutOfRange { index: i, dim })
    } else {
        Ok(())
    }
}

/// The unique symmetric PSD square root, via a symmetric eigendecomposition
/// with small negative eigenvalues clamped to zero.
pub fn sym_sqrt(s: &SymMatrix, rel_tol: f64) -> Result<SymMatrix> {
    let (sqrt, _) = eigen_map(s, rel_tol, |l| l.sqrt(), None)?;
    Ok(sqrt)
}

/// Returns `(S^{1/2}, S^{-1/2})`. Fails unless `S` is positive definite.
pub fn sym_sqrt_and_inv_sqrt(s: &SymMatrix, rel_tol: f64) -> Result<(SymMatrix, SymMatrix)> {
    let (sqrt, inv) = eigen_map(s, rel_tol, |l| l.sqrt(), Some(|l| 1.0 / l.sqrt()))?;
    Ok((sqrt, inv.expect("inverse map requested")))
}

fn eigen_map(
    s: &SymMatrix,
    rel_tol: f64,
    f: impl Fn(f64) -> f64,
    g: Option<fn(f64) -> f64>,
) -> Result<(SymMatrix, Option<SymMatrix>)> {
    let eig = SymmetricEigen::new(s.0.clone());
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max >= 0.0) || min < -rel_tol * max {
        return Err(Error::NotPsd { min_eig: min, max_eig: max });
    }
    let vecs = &eig.eigenvectors;
    let apply = |h: &dyn Fn(f64) -> f64| {
        let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| h(l.max(0.0))));
        SymMatrix::symmetrize(vecs * DMatrix::from_diagonal(&d) * vecs.transpose())
    };
    let first = apply(&f);
    let second = match g {
        Some(g) => {
            if min <= rel_tol * max {
                return Err(Error::NotPsd { min_eig: min, max_eig: max });
            }
            Some(apply(&g))
        }
        None => None,
    };
    Ok((first, second))
}

/// Inverse of a symmetric block, rejecting condition numbers above 1e14.
pub fn sym_inverse(s: &SymMatrix) -> Result<SymMatrix> {
    let eig = SymmetricEigen::new(s.0.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &l| m.min(l.abs()));
    let cond = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(cond < MAX_BLOCK_COND) {
        return Err(Error::SingularBlock { cond });
    }
    let d = DVector::from_iterator(eig.eigenvalues.len(), eig.eigenvalues.iter().map(|&l| 1.0 / l));
    let v = &eig.eigenvectors;
    Ok(SymMatrix::symmetrize(v * DMatrix::from_diagonal(&d) * v.transpose()))
}

pub fn delete_index(v: &DVector<f64>, i: usize) -> Result<DVector<f64>> {
    check_index(i, v.len())?;
    Ok(DVector::from_iterator(
        v.len() - 1,
        v.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, &x)| x),
    ))
}

/// Removes row `i` and column `j` (`A_{(i,j)}`).
pub fn delete_row_col(s: &DMatrix<f64>, i: usize, j: usize) -> Result<DMatrix<f64>> {
    check_index(i, s.nrows())?;
    check_index(j, s.ncols())?;
    Ok(s.clone().remove_row(i).remove_column(j))
}

/// Row `i` with its `j`th element removed (`A_{i(j)}`).
pub fn row_without(s: &SymMatrix, i: usize, j: usize) -> Result<DVector<f64>> {
    check_index(i, s.dim())?;
    check_index(j, s.dim())?;
    Ok(DVector::from_iterator(
        s.dim() - 1,
        (0..s.dim()).filter(|&k| k != j).map(|k| s.get(i, k)),
    ))
}

pub fn select(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Rectangular block `S[rows, cols]`.
pub fn cross_block(s: &SymMatrix, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| s.get(rows[a], cols[b]))
}

/// A split of `0..dim` into kept and removed coordinates, each strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionIndex {
    kept: Vec<usize>,
    removed: Vec<usize>,
}

impl PartitionIndex {
    pub fn from_removed(dim: usize, removed: &[usize]) -> Result<Self> {
        let mut mask = vec![false; dim];
        for &r in removed {
            check_index(r, dim)?;
            if mask[r] {
                return Err(Error::InvalidParameter(format!("index {r} listed twice")));
            }
            mask[r] = true;
        }
        Ok(PartitionIndex {
            kept: (0..dim).filter(|&k| !mask[k]).collect(),
            removed: (0..dim).filter(|&k| mask[k]).collect(),
        })
    }

    pub fn from_kept(dim: usize, kept: &[usize]) -> Result<Self> {
        let p = Self::from_removed(dim, kept)?;
        Ok(PartitionIndex { kept: p.removed, removed: p.kept })
    }

    pub fn kept(&self) -> &[usize] {
        &self.kept
    }

    pub fn removed(&self) -> &[usize] {
        &self.removed
    }

    pub fn dim(&self) -> usize {
        self.kept.len() + self.removed.len()
    }

    /// Re-inserts kept and removed parts into a full-length vector.
    pub fn merge(&self, kept: &DVector<f64>, removed: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (a, &k) in self.kept.iter().enumerate() {
            out[k] = kept[a];
        }
        for (a, &k) in self.removed.iter().enumerate() {
            out[k] = removed[a];
        }
        out
    }
}

/// Law of the kept coordinates of `N(mu, S)` given the removed ones equal `value`:
/// `(mu1 + S12 S22^{-1}(value - mu2), S11 - S12 S22^{-1} S21)`.
pub fn conditional_normal(
    mu: &DVector<f64>,
    s: &SymMatrix,
    given: &PartitionIndex,
    value: &DVector<f64>,
) -> Result<(DVector<f64>, SymMatrix)> {
    if mu.len() != s.dim() || given.dim() != s.dim() {
        return Err(Error::DimensionMismatch { expected: s.dim(), got: mu.len().min(given.dim()) });
    }
    if value.len() != given.removed().len() {
        return Err(Error::DimensionMismatch { expected: given.removed().len(), got: value.len() });
    }
    let k = given.kept();
    let r = given.removed();
    let mu1 = select(mu, k);
    let s11 = s.principal(k);
    if r.is_empty() {
        return Ok((mu1, s11));
    }
    let mu2 = select(mu, r);
    let s22_inv = sym_inverse(&s.principal(r))?;
    let s12 = cross_block(s, k, r);
    let gain = &s12 * s22_inv.as_matrix();
    let mean = mu1 + &gain * (value - mu2);
    let cov = s11.as_matrix() - &gain * s12.transpose();
    Ok((mean, SymMatrix::symmetrize(cov)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spectral_norm(m: &DMatrix<f64>) -> f64 {
        m.singular_values().iter().copied().fold(0.0, f64::max)
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i3 = SymMatrix::identity(3);
        assert_eq!(sym_sqrt(&i3, 1e-10).unwrap().as_matrix(), i3.as_matrix());
        let d = sym_sqrt(&SymMatrix::from_diagonal(&[4.0, 9.0]), 1e-10).unwrap();
        assert!((d.get(0, 0) - 2.0).abs() < 1e-15);
        assert!((d.get(1, 1) - 3.0).abs() < 1e-15);
        assert_eq!(d.get(0, 1), 0.0);
    }

    #[test]
    fn sqrt_squares_back() {
        let s = SymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let r = sym_sqrt(&s, 1e-10).unwrap();
        let back = r.as_matrix() * r.as_matrix();
        assert!(spectral_norm(&(back - s.as_matrix())) <= 1e-12 * spectral_norm(s.as_matrix()));
    }

    #[test]
    fn sqrt_rejects_indefinite_and_clamps_tiny_negative() {
        let bad = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert!(matches!(sym_sqrt(&bad, 1e-10), Err(Error::NotPsd { .. })));
        // rank one plus a -1e-13 perturbation
        let near = SymMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0 - 1e-13]]).unwrap();
        let r = sym_sqrt(&near, 1e-10).unwrap();
        assert!(r.as_matrix().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn inverse_sqrt_pairs_up() {
        let s = SymMatrix::from_rows(&[vec![3.0, 0.5, 0.2], vec![0.5, 2.0, -0.3], vec![0.2, -0.3, 1.0]]).unwrap();
        let (r, ri) = sym_sqrt_and_inv_sqrt(&s, 1e-10).unwrap();
        let id = r.as_matrix() * ri.as_matrix();
        assert!((id - DMatrix::<f64>::identity(3, 3)).amax() < 1e-13);
    }

    #[test]
    fn deletions() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(delete_index(&v, 1).unwrap().as_slice(), &[1.0, 3.0]);
        assert!(matches!(delete_index(&v, 3), Err(Error::IndexOutOfRange { .. })));

        let i3 = SymMatrix::identity(3);
        assert_eq!(delete_row_col(i3.as_matrix(), 0, 0).unwrap(), DMatrix::<f64>::identity(2, 2));
        assert_eq!(i3.without(0).unwrap(), SymMatrix::identity(2));

        let s = SymMatrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 5.0], vec![3.0, 5.0, 6.0]]).unwrap();
        assert_eq!(row_without(&s, 1, 1).unwrap().as_slice(), &[2.0, 5.0]);
        assert!(matches!(row_without(&s, 0, 7), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn partition_merge_restores_vector() {
        let v = DVector::from_vec(vec![5.0, 6.0, 7.0, 8.0]);
        let p = PartitionIndex::from_removed(4, &[3, 1]).unwrap();
        assert_eq!(p.removed(), &[1, 3]);
        let back = p.merge(&select(&v, p.kept()), &select(&v, p.removed()));
        assert_eq!(back, v);
    }

    #[test]
    fn conditional_of_independent_blocks_is_unchanged() {
        let mu = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let s = SymMatrix::from_rows(&[vec![2.0, 0.3, 0.0], vec![0.3, 1.0, 0.0], vec![0.0, 0.0, 4.0]]).unwrap();
        let g = PartitionIndex::from_removed(3, &[2]).unwrap();
        let (m, c) = conditional_normal(&mu, &s, &g, &DVector::from_vec(vec![10.0])).unwrap();
        assert_eq!(m.as_slice(), &[1.0, -2.0]);
        assert_eq!(c, s.principal(&[0, 1]));
    }

    #[test]
    fn conditional_bivariate_textbook() {
        let rho = 0.6;
        let mu = DVector::from_vec(vec![0.5, -1.0]);
        let s = SymMatrix::from_rows(&[vec![1.0, rho], vec![rho, 1.0]]).unwrap();
        let g = PartitionIndex::from_removed(2, &[1]).unwrap();
        let v = 2.0;
        let (m, c) = conditional_normal(&mu, &s, &g, &DVector::from_vec(vec![v])).unwrap();
        assert!((m[0] - (0.5 + rho * (v + 1.0))).abs() < 1e-15);
        assert!((c.get(0, 0) - (1.0 - rho * rho)).abs() < 1e-15);
    }

    #[test]
    fn conditional_matches_dense_block_inversion() {
        // fixed 4x4 SPD built as A Aᵀ + I
        let a = DMatrix::from_row_slice(4, 4, &[
            0.3, -1.2, 0.5, 0.8, 1.1, 0.2, -0.7, 0.4, -0.5, 0.9, 1.3, -0.2, 0.6, -0.4, 0.1, 1.0,
        ]);
        let s = SymMatrix::new(&a * a.transpose() + DMatrix::identity(4, 4)).unwrap();
        let mu = DVector::from_vec(vec![0.1, 0.2, -0.3, 0.4]);
        let g = PartitionIndex::from_removed(4, &[0, 2]).unwrap();
        let val = DVector::from_vec(vec![1.5, -0.5]);
        let (m, c) = conditional_normal(&mu, &s, &g, &val).unwrap();

        // brute force through the full precision matrix: the conditional
        // covariance is the inverse of the kept block of S^{-1}
        let prec = s.as_matrix().clone().try_inverse().unwrap();
        let k = [1usize, 3];
        let r = [0usize, 2];
        let pkk = DMatrix::from_fn(2, 2, |i, j| prec[(k[i], k[j])]);
        let pkr = DMatrix::from_fn(2, 2, |i, j| prec[(k[i], r[j])]);
        let cov = pkk.clone().try_inverse().unwrap();
        let mean = DVector::from_vec(vec![mu[1], mu[3]])
            - &cov * pkr * (val - DVector::from_vec(vec![mu[0], mu[2]]));
        assert!((c.as_matrix() - cov).amax() < 1e-12);
        assert!((m - mean).amax() < 1e-12);
        let (min, _) = c.eigen_range();
        assert!(min > 0.0);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(SymMatrix::new(m), Err(Error::NotSymmetric { .. })));
    }
}
