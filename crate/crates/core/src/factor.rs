//! Block Cholesky and block LU factorizations with quasi-determinants.
//!
//! Elimination is blocked per graded level, right-looking, and never
//! pivots across blocks: pivoting would destroy the unit-lower block
//! structure the downstream formulas rely on. A numerically singular
//! diagonal block is reported, not repaired.

use crate::block::{block_diag, max_norm, smallest_singular_value, BlockMatrix};
use crate::error::{Error, Result};
use crate::mindex::GradedIndexer;
use crate::{C64, CMat};

/// Relative threshold on the smallest singular value of a pivot block.
pub const SINGULAR_MINOR_TOL: f64 = 1e-10;

/// Relative symmetry tolerance demanded of Cholesky inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorMode {
    Cholesky,
    Lu,
}

/// Output of a block factorization `G = S1^{-1} H S2^{-T}` with `S1`, `S2`
/// unit lower triangular and `H` block diagonal. In Cholesky mode
/// `S1 == S2`.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub idx: GradedIndexer,
    pub mode: FactorMode,
    s1: CMat,
    s1_inv: CMat,
    s2: CMat,
    s2_inv: CMat,
    h: Vec<CMat>,
}

impl Factorization {
    pub fn s1(&self) -> &CMat {
        &self.s1
    }

    pub fn s1_inv(&self) -> &CMat {
        &self.s1_inv
    }

    pub fn s2(&self) -> &CMat {
        &self.s2
    }

    pub fn s2_inv(&self) -> &CMat {
        &self.s2_inv
    }

    pub fn levels(&self) -> usize {
        self.idx.n_max() + 1
    }

    pub fn h_block(&self, k: usize) -> &CMat {
        &self.h[k]
    }

    pub fn h_blocks(&self) -> &[CMat] {
        &self.h
    }

    /// `H` as a full block-diagonal matrix.
    pub fn h_matrix(&self) -> CMat {
        block_diag(&self.idx, &self.h)
    }

    /// Solve `H_k x = rhs`.
    pub fn h_solve(&self, k: usize, rhs: &CMat) -> Result<CMat> {
        solve(&self.h[k], rhs)
    }

    /// Solve `x H_k = rhs`.
    pub fn h_solve_right(&self, k: usize, rhs: &CMat) -> Result<CMat> {
        Ok(solve(&self.h[k].transpose(), &rhs.transpose())?.transpose())
    }

    pub fn h_det(&self, k: usize) -> C64 {
        self.h[k].clone().lu().determinant()
    }

    /// First block subdiagonal of `S1`: `beta_[k] = (S1)_{[k],[k-1]}`.
    pub fn beta(&self, k: usize) -> CMat {
        assert!(k >= 1);
        let r = self.idx.level_range(k);
        let c = self.idx.level_range(k - 1);
        self.s1
            .view((r.start, c.start), (r.len(), c.len()))
            .into_owned()
    }

    /// `S1^{-1} H S2^{-T}`, for reconstruction checks.
    pub fn reconstruct(&self) -> CMat {
        &self.s1_inv * self.h_matrix() * self.s2_inv.transpose()
    }
}

/// Block Cholesky `G = S^{-1} H S^{-T}` of a symmetric block matrix.
pub fn block_cholesky(g: &BlockMatrix) -> Result<Factorization> {
    let scale = g.max_norm().max(1e-300);
    let asym = max_norm(&(&g.data - g.data.transpose()));
    if asym > SYMMETRY_TOL * scale * 10.0 {
        return Err(Error::DimensionMismatch(format!(
            "block_cholesky input asymmetry {:.3e} exceeds tolerance",
            asym / scale
        )));
    }
    factorize(g, FactorMode::Cholesky)
}

/// Block LU `G = S1^{-1} H S2^{-T}` of a general block matrix.
pub fn block_lu(g: &BlockMatrix) -> Result<Factorization> {
    factorize(g, FactorMode::Lu)
}

fn factorize(g: &BlockMatrix, mode: FactorMode) -> Result<Factorization> {
    let idx = g.idx.clone();
    let levels = idx.n_max() + 1;
    let n = idx.total();
    let scale = g.max_norm().max(1e-300);
    let mut work = g.data.clone();
    let mut a = CMat::identity(n, n); // S1^{-1}
    let mut b = CMat::identity(n, n); // S2^{-1}
    let mut h = Vec::with_capacity(levels);

    for k in 0..levels {
        let rk = idx.level_range(k);
        let dk = work
            .view((rk.start, rk.start), (rk.len(), rk.len()))
            .into_owned();
        if smallest_singular_value(&dk) < SINGULAR_MINOR_TOL * scale {
            return Err(Error::SingularMinor(k));
        }
        let lu = dk.clone().lu();
        h.push(dk.clone());
        for j in (k + 1)..levels {
            let rj = idx.level_range(j);
            let wjk = work
                .view((rj.start, rk.start), (rj.len(), rk.len()))
                .into_owned();
            // A_{jk} = W_{jk} D^{-1}
            let ajk = solve(&dk.transpose(), &wjk.transpose())?.transpose();
            a.view_mut((rj.start, rk.start), (rj.len(), rk.len()))
                .copy_from(&ajk);
            // B_{jk} = (D^{-1} W_{kj})^T
            let wkj = work
                .view((rk.start, rj.start), (rk.len(), rj.len()))
                .into_owned();
            let bjk_t = lu
                .solve(&wkj)
                .ok_or(Error::SingularMinor(k))?;
            b.view_mut((rj.start, rk.start), (rj.len(), rk.len()))
                .copy_from(&bjk_t.transpose());
            // trailing Schur update of row-block j
            for l in (k + 1)..levels {
                let rl = idx.level_range(l);
                let wkl = work
                    .view((rk.start, rl.start), (rk.len(), rl.len()))
                    .into_owned();
                let update = &ajk * &wkl;
                let mut tgt = work.view_mut((rj.start, rl.start), (rj.len(), rl.len()));
                tgt -= update;
            }
        }
    }

    let (s1_inv, s2_inv) = match mode {
        FactorMode::Cholesky => (a.clone(), a),
        FactorMode::Lu => (a, b),
    };
    let s1 = unit_lower_inverse(&s1_inv);
    let s2 = match mode {
        FactorMode::Cholesky => s1.clone(),
        FactorMode::Lu => unit_lower_inverse(&s2_inv),
    };
    Ok(Factorization {
        idx,
        mode,
        s1,
        s1_inv,
        s2,
        s2_inv,
        h,
    })
}

/// Last quasi-determinant of a bordered block matrix `[[A, B], [C, D]]`:
/// `D - C A^{-1} B`, computed through a linear solve.
pub fn quasi_det_last(a: &CMat, b: &CMat, c: &CMat, d: &CMat) -> Result<CMat> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(d.clone());
    }
    let x = solve(a, b)?;
    Ok(d - c * x)
}

/// Last quasi-determinant of a matrix with the split before its last
/// `tail` rows and columns.
pub fn quasi_det_last_split(m: &CMat, tail_rows: usize, tail_cols: usize) -> Result<CMat> {
    let n = m.nrows() - tail_rows;
    let p = m.ncols() - tail_cols;
    let a = m.view((0, 0), (n, p)).into_owned();
    let b = m.view((0, p), (n, tail_cols)).into_owned();
    let c = m.view((n, 0), (tail_rows, p)).into_owned();
    let d = m.view((n, p), (tail_rows, tail_cols)).into_owned();
    quasi_det_last(&a, &b, &c, &d)
}

/// Solve `A X = B` by partial-pivot LU; `SingularBlock` on breakdown.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    a.clone().lu().solve(b).ok_or(Error::SingularBlock)
}

/// Invert a unit lower triangular matrix by forward substitution.
pub fn unit_lower_inverse(l: &CMat) -> CMat {
    let n = l.nrows();
    let mut inv = CMat::identity(n, n);
    for col in 0..n {
        for row in (col + 1)..n {
            let mut acc = C64::new(0.0, 0.0);
            for k in col..row {
                acc += l[(row, k)] * inv[(k, col)];
            }
            inv[(row, col)] = -acc;
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::c64;

    fn hankel_lebesgue(n_max: usize) -> BlockMatrix {
        // moments of Lebesgue on [-1, 1]: m_k = 2/(k+1) for even k
        let idx = GradedIndexer::new(1, n_max);
        let n = idx.total();
        let data = CMat::from_fn(n, n, |i, j| {
            let k = i + j;
            if k % 2 == 0 {
                c64(2.0 / (k as f64 + 1.0))
            } else {
                c64(0.0)
            }
        });
        BlockMatrix::new(data, idx)
    }

    #[test]
    fn identity_factors_trivially() {
        let idx = GradedIndexer::new(2, 3);
        let g = BlockMatrix::identity(idx.clone());
        let f = block_cholesky(&g).unwrap();
        assert!(max_norm(&(f.s1() - CMat::identity(idx.total(), idx.total()))) == 0.0);
        for k in 0..f.levels() {
            let hk = f.h_block(k);
            assert!(max_norm(&(hk - CMat::identity(hk.nrows(), hk.ncols()))) == 0.0);
        }
    }

    #[test]
    fn lebesgue_hankel_h_blocks() {
        let g = hankel_lebesgue(2);
        let f = block_cholesky(&g).unwrap();
        let expect = [2.0, 2.0 / 3.0, 8.0 / 45.0];
        for (k, e) in expect.iter().enumerate() {
            assert!(
                (f.h_block(k)[(0, 0)] - c64(*e)).norm() < 1e-14,
                "H_{k} = {} vs {e}",
                f.h_block(k)[(0, 0)]
            );
        }
        let recon = f.reconstruct();
        assert!(max_norm(&(recon - g.data)) < 1e-13);
    }

    #[test]
    fn lu_matches_hand_elimination() {
        let idx = GradedIndexer::new(1, 1);
        let data = CMat::from_fn(2, 2, |i, j| c64([[1.0, 2.0], [3.0, 4.0]][i][j]));
        let g = BlockMatrix::new(data, idx);
        let f = block_lu(&g).unwrap();
        assert!((f.s1_inv()[(1, 0)] - c64(3.0)).norm() < 1e-14);
        assert!((f.h_block(0)[(0, 0)] - c64(1.0)).norm() < 1e-14);
        assert!((f.h_block(1)[(0, 0)] - c64(-2.0)).norm() < 1e-14);
        // S2^{-T} upper factor has (0,1) entry 2
        assert!((f.s2_inv().transpose()[(0, 1)] - c64(2.0)).norm() < 1e-14);
        assert!(max_norm(&(f.reconstruct() - g.data)) < 1e-13);
    }

    #[test]
    fn quasi_det_examples() {
        let a = CMat::from_fn(1, 1, |_, _| c64(2.0));
        let b = CMat::from_fn(1, 1, |_, _| c64(1.0));
        let c = CMat::from_fn(1, 1, |_, _| c64(1.0));
        let d = CMat::from_fn(1, 1, |_, _| c64(1.0));
        let q = quasi_det_last(&a, &b, &c, &d).unwrap();
        assert!((q[(0, 0)] - c64(0.5)).norm() < 1e-15);

        // decoupled bordered matrix returns d
        let a = CMat::identity(3, 3);
        let b = CMat::zeros(3, 2);
        let c = CMat::zeros(2, 3);
        let d = CMat::from_fn(2, 2, |i, j| c64((i + 2 * j) as f64));
        let q = quasi_det_last(&a, &b, &c, &d).unwrap();
        assert!(max_norm(&(q - d)) == 0.0);
    }

    #[test]
    fn h_equals_quasi_det_of_truncation() {
        let g = hankel_lebesgue(4);
        let f = block_cholesky(&g).unwrap();
        for k in 0..=4 {
            let nk = g.idx.cumulative(k);
            let sz = g.idx.level_size(k);
            let lead = nk - sz;
            let trunc = g.data.view((0, 0), (nk, nk)).into_owned();
            let q = quasi_det_last_split(&trunc, sz, sz).unwrap();
            let _ = lead;
            assert!(max_norm(&(q - f.h_block(k))) < 1e-13, "level {k}");
        }
    }

    #[test]
    fn singular_minor_is_reported() {
        let idx = GradedIndexer::new(1, 1);
        // second leading minor vanishes: [[1, 1], [1, 1]]
        let data = CMat::from_fn(2, 2, |_, _| c64(1.0));
        let g = BlockMatrix::new(data, idx);
        match block_cholesky(&g) {
            Err(Error::SingularMinor(1)) => {}
            other => panic!("expected SingularMinor(1), got {other:?}"),
        }
    }

    #[test]
    fn unit_lower_inverse_roundtrip() {
        let n = 6;
        let mut l = CMat::identity(n, n);
        for i in 0..n {
            for j in 0..i {
                l[(i, j)] = C64::new(0.3 * (i as f64) - 0.2 * (j as f64), 0.1);
            }
        }
        let inv = unit_lower_inverse(&l);
        assert!(max_norm(&(&l * &inv - CMat::identity(n, n))) < 1e-13);
    }
}
