//! Polynomial families attached to a block factorization: evaluation,
//! biorthogonal pairing, Christoffel–Darboux kernels and Jacobi matrices.

use crate::block::BlockMatrix;
use crate::error::{Error, Result};
use crate::factor::{block_cholesky, block_lu, solve, FactorMode, Factorization};
use crate::functional::{BilinearGenerator, FunctionalSpec};
use crate::mindex::{shift_matrix, GradedIndexer};
use crate::poly::Poly;
use crate::{C64, CMat, CVec};

/// Which factor a polynomial family comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    One,
    Two,
}

/// A biorthogonal (or orthogonal, in Cholesky mode) family of monic
/// polynomials together with the generator that produced its Gram matrix.
#[derive(Debug, Clone)]
pub struct OpFamily {
    pub fact: Factorization,
    pub gen: BilinearGenerator,
}

impl OpFamily {
    /// Build from a functional: assemble the moment matrix and run block
    /// Cholesky.
    pub fn from_functional(u: FunctionalSpec, idx: &GradedIndexer) -> Result<OpFamily> {
        let g = u.moment_matrix(idx)?;
        let fact = block_cholesky(&BlockMatrix::new(g, idx.clone()))?;
        Ok(OpFamily {
            fact,
            gen: BilinearGenerator::diagonal(u),
        })
    }

    /// Build from a general bilinear generator through block LU
    /// (which reduces to Cholesky on symmetric input).
    pub fn from_generator(gen: BilinearGenerator, idx: &GradedIndexer) -> Result<OpFamily> {
        let g = gen.gram_matrix(
            idx,
            &crate::functional::TimeSeries::zero(),
            &crate::functional::TimeSeries::zero(),
        )?;
        let bm = BlockMatrix::new(g, idx.clone());
        let fact = match gen {
            BilinearGenerator::Diagonal(_) => block_cholesky(&bm)?,
            BilinearGenerator::Kernel(_) => block_lu(&bm)?,
        };
        Ok(OpFamily { fact, gen })
    }

    pub fn idx(&self) -> &GradedIndexer {
        &self.fact.idx
    }

    pub fn n_max(&self) -> usize {
        self.fact.idx.n_max()
    }

    fn s_side(&self, side: Side) -> &CMat {
        match side {
            Side::One => self.fact.s1(),
            Side::Two => self.fact.s2(),
        }
    }

    /// `P_{side,[k]}(x)`: row block `[k]` of `S_side` applied to `chi(x)`.
    pub fn eval_block(&self, side: Side, k: usize, x: &[f64]) -> CVec {
        let idx = self.idx();
        let r = idx.level_range(k);
        let cols = idx.cumulative(k);
        let chi = idx.eval_chi_real(x).rows(0, cols).into_owned();
        self.s_side(side).view((r.start, 0), (r.len(), cols)) * chi
    }

    /// All blocks up to level `k_max`, stacked.
    pub fn eval_stacked(&self, side: Side, k_max: usize, x: &[f64]) -> CVec {
        let idx = self.idx();
        let n = idx.cumulative(k_max);
        let chi = idx.eval_chi_real(x).rows(0, n).into_owned();
        self.s_side(side).view((0, 0), (n, n)) * chi
    }

    /// The entries of `P_{side,[k]}` as explicit polynomials.
    pub fn poly_block(&self, side: Side, k: usize) -> Vec<Poly> {
        let idx = self.idx();
        let r = idx.level_range(k);
        let cols = idx.cumulative(k);
        let s = self.s_side(side);
        r.map(|i| {
            Poly::from_terms(
                idx.dim(),
                (0..cols)
                    .filter(|&j| s[(i, j)].norm() > 0.0)
                    .map(|j| (idx.index_at(j).clone(), s[(i, j)]))
                    .collect(),
            )
        })
        .collect()
    }

    /// Coefficient matrix of the Christoffel–Darboux kernel
    /// `K_n(x, y) = chi(x)^T C chi(y)` on the leading `N_n` positions
    /// (Cholesky families).
    pub fn cd_coeff_matrix(&self, n: usize) -> Result<CMat> {
        if self.fact.mode != FactorMode::Cholesky {
            return Err(Error::Unsupported(
                "Christoffel-Darboux kernel requires a Cholesky-mode family".into(),
            ));
        }
        let idx = self.idx();
        let size = idx.cumulative(n);
        let s = self.fact.s1().view((0, 0), (size, size)).into_owned();
        // H^{-1} S on the truncation, level by level
        let mut hinv_s = CMat::zeros(size, size);
        for m in 0..=n {
            let r = idx.level_range(m);
            let rows = s.view((r.start, 0), (r.len(), size)).into_owned();
            let solved = self.fact.h_solve(m, &rows)?;
            hinv_s
                .view_mut((r.start, 0), (r.len(), size))
                .copy_from(&solved);
        }
        Ok(s.transpose() * hinv_s)
    }

    /// `K_n(x, y)`.
    pub fn cd_kernel(&self, n: usize, x: &[f64], y: &[f64]) -> Result<C64> {
        let c = self.cd_coeff_matrix(n)?;
        let idx = self.idx();
        let size = idx.cumulative(n);
        let cx = idx.eval_chi_real(x).rows(0, size).into_owned();
        let cy = idx.eval_chi_real(y).rows(0, size).into_owned();
        Ok((cx.transpose() * c * cy)[(0, 0)])
    }

    /// Kernel projection `S_n(f)(x) = <u, f(y) K_n(y, x)>` of a polynomial,
    /// returned in coefficient form.
    pub fn project(&self, n: usize, f: &Poly) -> Result<Poly> {
        let idx = self.idx();
        let mut out = Poly::zero(idx.dim());
        for m in 0..=n {
            let pm = self.poly_block(Side::One, m);
            let paired = self
                .gen
                .pair_polys(std::slice::from_ref(f), &pm)?;
            // row vector <f, P_[m]^T> times H_[m]^{-1}
            let coef = self.fact.h_solve_right(m, &paired)?;
            for (j, pj) in pm.iter().enumerate() {
                out = out.add(&pj.scale(coef[(0, j)]));
            }
        }
        Ok(out)
    }

    /// Jacobi matrix `J_a = S Lambda_a S^{-1}` (Cholesky families).
    pub fn jacobi_matrix(&self, axis: usize) -> Result<CMat> {
        if self.fact.mode != FactorMode::Cholesky {
            return Err(Error::Unsupported(
                "Jacobi matrices require a Cholesky-mode family".into(),
            ));
        }
        let l = shift_matrix(self.idx(), axis);
        Ok(self.fact.s1() * l * self.fact.s1_inv())
    }

    /// Biorthogonal pairing `<P_{1,[k]}, P_{2,[l]}^T>` evaluated through
    /// the source generator (independent of the factorization route).
    pub fn pair_blocks(&self, k: usize, l: usize) -> Result<CMat> {
        let pk = self.poly_block(Side::One, k);
        let pl = self.poly_block(Side::Two, l);
        self.gen.pair_polys(&pk, &pl)
    }
}

/// Both sides of the Christoffel–Darboux formula for a direction vector
/// `dir`: returns `(lhs, rhs)` where
/// `lhs = (dir . (x - y)) K_n(x, y)` and `rhs` is the boundary-term
/// difference at level `n + 1`. Real Cholesky families.
pub fn cd_formula_sides(
    fam: &OpFamily,
    n: usize,
    dir: &[f64],
    x: &[f64],
    y: &[f64],
) -> Result<(C64, C64)> {
    let idx = fam.idx();
    assert!(n < idx.n_max());
    let kxy = fam.cd_kernel(n, x, y)?;
    let dot: f64 = dir
        .iter()
        .zip(x.iter().zip(y))
        .map(|(&d, (&xi, &yi))| d * (xi - yi))
        .sum();
    let lhs = C64::new(dot, 0.0) * kxy;

    // (dir . Lambda)_{[n],[n+1]}
    let rn = idx.level_range(n);
    let rn1 = idx.level_range(n + 1);
    let mut band = CMat::zeros(rn.len(), rn1.len());
    for (a, &d) in dir.iter().enumerate() {
        let l = shift_matrix(idx, a);
        band += l
            .view((rn.start, rn1.start), (rn.len(), rn1.len()))
            .into_owned()
            .scale(d);
    }
    let pn_x = fam.eval_block(Side::One, n, x);
    let pn1_x = fam.eval_block(Side::One, n + 1, x);
    let pn_y = fam.eval_block(Side::One, n, y);
    let pn1_y = fam.eval_block(Side::One, n + 1, y);
    // H_[n]^{-1} P_[n](y) and H_[n]^{-1} (dir.Lambda) P_[n+1](y)
    let hn_inv_pny = fam.fact.h_solve(n, &CMat::from_column_slice(pn_y.len(), 1, pn_y.as_slice()))?;
    let band_pn1y = &band * &pn1_y;
    let hn_inv_band =
        fam.fact
            .h_solve(n, &CMat::from_column_slice(band_pn1y.len(), 1, band_pn1y.as_slice()))?;
    let term1 = (pn1_x.transpose() * band.transpose() * &hn_inv_pny)[(0, 0)];
    let term2 = (pn_x.transpose() * hn_inv_band)[(0, 0)];
    Ok((lhs, term1 - term2))
}

/// Max-norm residual of `J_a H - H J_a^T` over the trusted block rows and
/// columns (`k, l <= n_max - 2`).
pub fn jacobi_symmetry_residual(fam: &OpFamily, axis: usize) -> Result<f64> {
    let j = fam.jacobi_matrix(axis)?;
    let h = fam.fact.h_matrix();
    let lhs = &j * &h;
    let rhs = &h * j.transpose();
    let kmax = fam.n_max().saturating_sub(2);
    Ok(crate::block::trust_max_diff(
        &lhs,
        &rhs,
        fam.idx(),
        kmax,
        kmax,
    ))
}

/// Solve `x^T H_k = v^T` convenience for row vectors.
pub fn row_solve(h: &CMat, row: &CMat) -> Result<CMat> {
    Ok(solve(&h.transpose(), &row.transpose())?.transpose())
}
