//! Multi-index combinatorics and the graded monomial basis.
//!
//! Monomial positions follow the graded order: lower total degree first,
//! and inside a degree level the indices are listed in descending
//! lexicographic order, so that for `D = 2`, level 2 reads
//! `(2,0), (1,1), (0,2)` and level 1 is the canonical basis
//! `e_1, ..., e_D` in order.

use crate::{C64, CMat, CVec};
use std::collections::HashMap;

/// Exponent vector of a monomial `x^alpha`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zeros(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// Canonical unit multi-index `e_a` (axis is 0-based).
    pub fn unit(dim: usize, axis: usize) -> Self {
        let mut v = vec![0; dim];
        v[axis] = 1;
        MultiIndex(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Total degree `|alpha|`.
    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    /// Componentwise difference, `None` if any entry would go negative.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<u32>>>()
            .map(MultiIndex)
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `alpha! = prod_a alpha_a!`
    pub fn factorial(&self) -> f64 {
        self.0
            .iter()
            .map(|&e| (1..=e as u64).product::<u64>() as f64)
            .product()
    }

    /// `x^alpha` over complex coordinates.
    pub fn eval(&self, x: &[C64]) -> C64 {
        debug_assert_eq!(x.len(), self.0.len());
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powu(e))
            .product()
    }

    /// `x^alpha` over real coordinates.
    pub fn eval_real(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&e, &xi)| xi.powi(e as i32))
            .product()
    }
}

/// Number of multi-indices of dimension `dim` and total degree `k`,
/// i.e. `binomial(dim + k - 1, k)`.
pub fn level_cardinality(dim: usize, k: usize) -> usize {
    binomial(dim + k - 1, k)
}

/// `binomial(n, k)` as usize; small arguments only.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All multi-indices of total degree `k` in `dim` variables, in the
/// module's fixed intra-level order (descending lexicographic).
pub fn enumerate_level(dim: usize, k: usize) -> Vec<MultiIndex> {
    assert!(dim >= 1);
    let mut out = Vec::with_capacity(level_cardinality(dim, k));
    let mut cur = vec![0u32; dim];
    fill_level(&mut out, &mut cur, 0, k as u32);
    out
}

fn fill_level(out: &mut Vec<MultiIndex>, cur: &mut Vec<u32>, pos: usize, rem: u32) {
    if pos + 1 == cur.len() {
        cur[pos] = rem;
        out.push(MultiIndex(cur.clone()));
        return;
    }
    for e in (0..=rem).rev() {
        cur[pos] = e;
        fill_level(out, cur, pos + 1, rem - e);
    }
}

/// Bijection between multi-indices of degree at most `n_max` and matrix
/// positions under the graded order, with the block boundaries `N_k`.
#[derive(Debug, Clone)]
pub struct GradedIndexer {
    dim: usize,
    n_max: usize,
    indices: Vec<MultiIndex>,
    offsets: Vec<usize>,
    positions: HashMap<MultiIndex, usize>,
}

impl GradedIndexer {
    pub fn new(dim: usize, n_max: usize) -> Self {
        assert!(dim >= 1);
        let mut indices = Vec::new();
        let mut offsets = Vec::with_capacity(n_max + 2);
        for k in 0..=n_max {
            offsets.push(indices.len());
            indices.extend(enumerate_level(dim, k));
        }
        offsets.push(indices.len());
        let positions = indices
            .iter()
            .enumerate()
            .map(|(i, a)| (a.clone(), i))
            .collect();
        GradedIndexer {
            dim,
            n_max,
            indices,
            offsets,
            positions,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// `|[k]|`.
    pub fn level_size(&self, k: usize) -> usize {
        self.offsets[k + 1] - self.offsets[k]
    }

    /// Position where block `[k]` starts.
    pub fn level_offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// `N_k`, the dimension of polynomials of degree at most `k`.
    pub fn cumulative(&self, k: usize) -> usize {
        self.offsets[k + 1]
    }

    /// Total number of positions, `N_{n_max}`.
    pub fn total(&self) -> usize {
        self.indices.len()
    }

    pub fn index_at(&self, i: usize) -> &MultiIndex {
        &self.indices[i]
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        self.positions.get(alpha).copied()
    }

    pub fn level_of_position(&self, i: usize) -> usize {
        self.indices[i].degree()
    }

    pub fn level_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn level_indices(&self, k: usize) -> &[MultiIndex] {
        &self.indices[self.level_range(k)]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.indices.iter()
    }

    /// Monomial vector `chi(x)` over complex coordinates.
    pub fn eval_chi(&self, x: &[C64]) -> CVec {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        CVec::from_iterator(self.total(), self.indices.iter().map(|a| a.eval(x)))
    }

    /// Monomial vector `chi(x)` over real coordinates.
    pub fn eval_chi_real(&self, x: &[f64]) -> CVec {
        assert_eq!(x.len(), self.dim, "point dimension mismatch");
        CVec::from_iterator(
            self.total(),
            self.indices.iter().map(|a| C64::new(a.eval_real(x), 0.0)),
        )
    }
}

/// Shift matrix `Lambda_a` on the truncation: the only nonzero entries sit
/// in the first block superdiagonal, with
/// `(Lambda_a)_{alpha,beta} = 1` iff `alpha + e_a = beta`.
/// Rows of degree below `n_max` satisfy `(Lambda_a chi(x))_alpha = x_a x^alpha`.
pub fn shift_matrix(idx: &GradedIndexer, axis: usize) -> CMat {
    assert!(axis < idx.dim());
    let n = idx.total();
    let mut m = CMat::zeros(n, n);
    let e = MultiIndex::unit(idx.dim(), axis);
    for i in 0..n {
        let target = idx.index_at(i).add(&e);
        if let Some(j) = idx.index_of(&target) {
            m[(i, j)] = C64::new(1.0, 0.0);
        }
    }
    m
}

/// `Q(Lambda_1, ..., Lambda_D)` on the truncation, assembled directly from
/// the exponent shifts: entry `(alpha, beta)` is the coefficient of
/// `x^{beta - alpha}` in `Q`. Rows of degree at most `n_max - deg Q` agree
/// with products of the individual shift matrices.
pub fn poly_of_shifts(q: &crate::poly::Poly, idx: &GradedIndexer) -> CMat {
    assert_eq!(q.dim(), idx.dim(), "polynomial dimension mismatch");
    let n = idx.total();
    let mut m = CMat::zeros(n, n);
    for (alpha, &c) in q.terms() {
        for i in 0..n {
            let target = idx.index_at(i).add(alpha);
            if let Some(j) = idx.index_of(&target) {
                m[(i, j)] += c;
            }
        }
    }
    m
}
