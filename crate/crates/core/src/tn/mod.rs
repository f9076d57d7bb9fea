//! Truncated multivariate normal moments: the product-moment recurrence, the
//! MGF-based first two moments, and the corrections for extreme boxes.

mod corrected;
mod mgf;
mod recurrence;

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

pub use corrected::{tn_first_two_corrected, tn_first_two_corrected_traced, Correction};
pub use mgf::{tn_first_two_mgf, TnMgfWork};
pub use recurrence::{tn_fk, tn_first_two_recurrence, TnRecurrence};

use crate::linalg::SymMatrix;

/// Exponents `κ = (k_1, ..., k_p)` of a product moment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(k: Vec<u32>) -> Self {
        MultiIndex(k)
    }

    pub fn zeros(p: usize) -> Self {
        MultiIndex(vec![0; p])
    }

    /// `e_i`.
    pub fn unit(p: usize, i: usize) -> Self {
        let mut k = vec![0; p];
        k[i] = 1;
        MultiIndex(k)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&k| k == 0)
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    #[inline]
    pub fn get(&self, i: usize) -> u32 {
        self.0[i]
    }

    /// `κ + e_i`.
    pub fn plus(&self, i: usize) -> Self {
        let mut k = self.0.clone();
        k[i] += 1;
        MultiIndex(k)
    }

    /// `κ - e_i`; the entry must be positive.
    pub fn minus(&self, i: usize) -> Self {
        let mut k = self.0.clone();
        k[i] -= 1;
        MultiIndex(k)
    }

    /// `κ_(j)`.
    pub fn without(&self, j: usize) -> Self {
        let mut k = self.0.clone();
        k.remove(j);
        MultiIndex(k)
    }

    /// `κ* = (κ, 0)`.
    pub fn augmented(&self) -> Self {
        let mut k = self.0.clone();
        k.push(0);
        MultiIndex(k)
    }

    /// `x^κ` with `0^0 = 1`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(&k, &x)| x.powi(k as i32)).product()
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(k: Vec<u32>) -> Self {
        MultiIndex(k)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// Memoized product moments of one (box, parameters) problem. Values are
/// stored divided by `exp(log_scale)`, the box probability, so that they are
/// the normalized moments and stay representable deep in the tails.
#[derive(Debug, Clone)]
pub struct MomentTable {
    dim: usize,
    log_scale: f64,
    entries: HashMap<MultiIndex, f64>,
}

impl MomentTable {
    pub fn new(dim: usize, log_scale: f64) -> Self {
        let mut entries = HashMap::new();
        if log_scale > f64::NEG_INFINITY {
            entries.insert(MultiIndex::zeros(dim), 1.0);
        }
        MomentTable { dim, log_scale, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ln F_0`.
    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// `F_κ / F_0`, if already computed.
    pub fn normalized(&self, k: &MultiIndex) -> Option<f64> {
        self.entries.get(k).copied()
    }

    /// `F_κ`, if already computed.
    pub fn value(&self, k: &MultiIndex) -> Option<f64> {
        self.entries.get(k).map(|v| v * self.log_scale.exp())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub(crate) fn insert(&mut self, k: MultiIndex, normalized: f64) {
        self.entries.insert(k, normalized);
    }
}

/// Mean, raw second moment `E[XXᵀ]` and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstTwoMoments {
    pub mean: DVector<f64>,
    pub raw2: SymMatrix,
    pub cov: SymMatrix,
}

impl FirstTwoMoments {
    pub fn from_mean_cov(mean: DVector<f64>, cov: SymMatrix) -> Self {
        let raw2 = SymMatrix::symmetrize(cov.as_matrix() + &mean * mean.transpose());
        FirstTwoMoments { mean, raw2, cov }
    }

    pub fn from_mean_raw2(mean: DVector<f64>, raw2: SymMatrix) -> Self {
        let cov = SymMatrix::symmetrize(raw2.as_matrix() - &mean * mean.transpose());
        FirstTwoMoments { mean, raw2, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().all(|x| x.is_finite()) && self.cov.as_matrix().iter().all(|x| x.is_finite())
    }

    /// Drops the last coordinate (the augmented one of the normal reduction).
    pub(crate) fn drop_last(&self) -> Self {
        let p = self.dim() - 1;
        let idx: Vec<usize> = (0..p).collect();
        let mean = DVector::from_iterator(p, self.mean.iter().take(p).copied());
        FirstTwoMoments::from_mean_raw2(mean, self.raw2.principal(&idx))
    }

    pub fn max_abs_diff(&self, other: &FirstTwoMoments) -> f64 {
        let dm = (&self.mean - &other.mean).amax();
        let dc: DMatrix<f64> = self.cov.as_matrix() - other.cov.as_matrix();
        dm.max(dc.amax())
    }
}
