//! Dense matrices carrying the graded block partitioning.

use crate::mindex::GradedIndexer;
use crate::{C64, CMat};

/// A dense square matrix of size `N_{n_max}` whose rows and columns are
/// grouped by total degree.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    pub data: CMat,
    pub idx: GradedIndexer,
}

impl BlockMatrix {
    pub fn new(data: CMat, idx: GradedIndexer) -> Self {
        assert_eq!(data.nrows(), idx.total());
        assert_eq!(data.ncols(), idx.total());
        BlockMatrix { data, idx }
    }

    pub fn zeros(idx: GradedIndexer) -> Self {
        let n = idx.total();
        BlockMatrix {
            data: CMat::zeros(n, n),
            idx,
        }
    }

    pub fn identity(idx: GradedIndexer) -> Self {
        let n = idx.total();
        BlockMatrix {
            data: CMat::identity(n, n),
            idx,
        }
    }

    /// The `|[k]| x |[l]|` block.
    pub fn block(&self, k: usize, l: usize) -> CMat {
        let r = self.idx.level_range(k);
        let c = self.idx.level_range(l);
        self.data.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }

    pub fn set_block(&mut self, k: usize, l: usize, m: &CMat) {
        let r = self.idx.level_range(k);
        let c = self.idx.level_range(l);
        assert_eq!(m.nrows(), r.len());
        assert_eq!(m.ncols(), c.len());
        self.data
            .view_mut((r.start, c.start), (r.len(), c.len()))
            .copy_from(m);
    }

    /// Leading principal truncation keeping levels `0..levels`.
    pub fn truncate(&self, levels: usize) -> BlockMatrix {
        assert!(levels >= 1 && levels <= self.idx.n_max() + 1);
        let idx = GradedIndexer::new(self.idx.dim(), levels - 1);
        let n = idx.total();
        BlockMatrix {
            data: self.data.view((0, 0), (n, n)).into_owned(),
            idx,
        }
    }

    pub fn max_norm(&self) -> f64 {
        max_norm(&self.data)
    }
}

/// Largest entry magnitude.
pub fn max_norm(m: &CMat) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Largest entry magnitude over the blocks `[k],[l]` with
/// `k <= k_max` and `l <= l_max`.
pub fn trust_max_norm(m: &CMat, idx: &GradedIndexer, k_max: usize, l_max: usize) -> f64 {
    let rows = idx.cumulative(k_max);
    let cols = idx.cumulative(l_max);
    max_norm(&m.view((0, 0), (rows, cols)).into_owned())
}

/// Largest entrywise difference on the trusted leading blocks.
pub fn trust_max_diff(a: &CMat, b: &CMat, idx: &GradedIndexer, k_max: usize, l_max: usize) -> f64 {
    trust_max_norm(&(a - b), idx, k_max, l_max)
}

/// Smallest singular value.
pub fn smallest_singular_value(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// 2-norm condition number estimate.
pub fn condition_estimate(m: &CMat) -> f64 {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Real part check helper: true when no entry has an imaginary part above
/// `tol` relative to the matrix scale.
pub fn is_effectively_real(m: &CMat, tol: f64) -> bool {
    let scale = max_norm(m).max(1e-300);
    m.iter().all(|c| c.im.abs() <= tol * scale)
}

/// Block-diagonal matrix from per-level blocks.
pub fn block_diag(idx: &GradedIndexer, blocks: &[CMat]) -> CMat {
    let n = idx.total();
    let mut m = CMat::zeros(n, n);
    for (k, b) in blocks.iter().enumerate() {
        let r = idx.level_range(k);
        m.view_mut((r.start, r.start), (r.len(), r.len())).copy_from(b);
    }
    m
}

pub fn c64(re: f64) -> C64 {
    C64::new(re, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_access_roundtrip() {
        let idx = GradedIndexer::new(2, 3);
        let mut m = BlockMatrix::zeros(idx.clone());
        let b = CMat::from_fn(2, 3, |i, j| c64((i * 3 + j) as f64));
        m.set_block(1, 2, &b);
        assert_eq!(m.block(1, 2), b);
        assert_eq!(m.block(0, 0)[(0, 0)], c64(0.0));
        let t = m.truncate(3);
        assert_eq!(t.idx.total(), idx.cumulative(2));
    }

    #[test]
    fn singular_values_of_identity() {
        let m = CMat::identity(4, 4);
        assert!((smallest_singular_value(&m) - 1.0).abs() < 1e-12);
        assert!((condition_estimate(&m) - 1.0).abs() < 1e-12);
    }
}
