//! Exponential deformations of Gram matrices and the integrable
//! structure they carry: Lax and Zakharov–Shabat compatibility residuals,
//! lattice and second-order wave equations, reductions, the deformed
//! rational spectral transformation, and the bilinear contour identity.
//!
//! Deformed Gram matrices are always assembled entrywise through the
//! generator with scalar weights `e^{t1(x)}`, `e^{-t2(y)}`. Truncating a
//! product of wave matrices would corrupt every block; the entrywise
//! route realises the flow exactly on the truncation, so residuals are
//! limited only by the finite-difference step.

use crate::block::{max_norm, trust_max_diff, trust_max_norm, BlockMatrix};
use crate::error::{Error, Result};
use crate::factor::{block_lu, solve};
use crate::family::OpFamily;
use crate::functional::{BilinearGenerator, TimeSeries};
use crate::mindex::{poly_of_shifts, shift_matrix, GradedIndexer, MultiIndex};
use crate::poly::Poly;
use crate::transforms::TransformSpec;
use crate::{C64, CMat, CVec};

/// Default finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Relative tolerance of the bilinear identity.
pub const BILINEAR_TOL: f64 = 1e-7;

/// Which Lax family a matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    One,
    Two,
}

/// A deformed biorthogonal family: the generator, the active times, and
/// the factorization of the deformed Gram matrix.
#[derive(Debug, Clone)]
pub struct TodaState {
    pub fam: OpFamily,
    pub t1: TimeSeries,
    pub t2: TimeSeries,
    pub gram: CMat,
}

impl TodaState {
    pub fn new(
        gen: BilinearGenerator,
        idx: &GradedIndexer,
        t1: TimeSeries,
        t2: TimeSeries,
    ) -> Result<TodaState> {
        let gram = gen.gram_matrix(idx, &t1, &t2)?;
        let fact = block_lu(&BlockMatrix::new(gram.clone(), idx.clone()))?;
        Ok(TodaState {
            fam: OpFamily { fact, gen },
            t1,
            t2,
            gram,
        })
    }

    pub fn idx(&self) -> &GradedIndexer {
        self.fam.idx()
    }

    /// Rebuild at shifted times.
    pub fn evolved(&self, dt1: &TimeSeries, dt2: &TimeSeries) -> Result<TodaState> {
        let mut t1 = self.t1.clone();
        for (a, &v) in &dt1.coeffs {
            t1.set(a.clone(), t1.get(a) + v);
        }
        let mut t2 = self.t2.clone();
        for (a, &v) in &dt2.coeffs {
            t2.set(a.clone(), t2.get(a) + v);
        }
        TodaState::new(self.fam.gen.clone(), self.idx(), t1, t2)
    }

    /// Shift a single flow coefficient.
    pub fn shifted(&self, flow: Flow, alpha: &MultiIndex, delta: f64) -> Result<TodaState> {
        let d = TimeSeries::single(alpha.clone(), C64::new(delta, 0.0));
        match flow {
            Flow::One => self.evolved(&d, &TimeSeries::zero()),
            Flow::Two => self.evolved(&TimeSeries::zero(), &d),
        }
    }

    /// `S2_tilde = H S2^{-T}` and its inverse `S2^T H^{-1}`.
    fn s2_tilde(&self) -> (CMat, CMat) {
        let h = self.fam.fact.h_matrix();
        let s2_inv_t = self.fam.fact.s2_inv().transpose();
        let tilde = &h * &s2_inv_t;
        let mut h_inv = CMat::zeros(h.nrows(), h.ncols());
        for k in 0..=self.idx().n_max() {
            let r = self.idx().level_range(k);
            let block = self
                .fam
                .fact
                .h_solve(k, &CMat::identity(r.len(), r.len()))
                .expect("H blocks are invertible in a valid factorization");
            h_inv
                .view_mut((r.start, r.start), (r.len(), r.len()))
                .copy_from(&block);
        }
        let tilde_inv = self.fam.fact.s2().transpose() * h_inv;
        (tilde, tilde_inv)
    }

    /// Lax matrix `L_{1,a} = S1 Lambda_a S1^{-1}` or
    /// `L_{2,a} = S2_tilde Lambda_a^T S2_tilde^{-1}`.
    pub fn lax(&self, flow: Flow, axis: usize) -> CMat {
        let l = shift_matrix(self.idx(), axis);
        match flow {
            Flow::One => self.fam.fact.s1() * l * self.fam.fact.s1_inv(),
            Flow::Two => {
                let (tilde, tilde_inv) = self.s2_tilde();
                tilde * l.transpose() * tilde_inv
            }
        }
    }

    /// `(L_i)^alpha` as an ordered product over axes.
    pub fn lax_power(&self, flow: Flow, alpha: &MultiIndex) -> CMat {
        let n = self.idx().total();
        let mut acc = CMat::identity(n, n);
        for (a, &e) in alpha.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            let l = self.lax(flow, a);
            for _ in 0..e {
                acc = &acc * &l;
            }
        }
        acc
    }

    /// Generator matrix of one flow:
    /// `B_{1,alpha} = ((L_1)^alpha)_+`, `B_{2,alpha} = ((L_2)^alpha)_-`.
    pub fn b_matrix(&self, flow: Flow, alpha: &MultiIndex) -> CMat {
        let power = self.lax_power(flow, alpha);
        match flow {
            Flow::One => split_upper(&power, self.idx()),
            Flow::Two => split_strict_lower(&power, self.idx()),
        }
    }

    /// Baker vector `Psi_1(t, z) = e^{t1(z)} P_1(t, z)` at a complex
    /// point, all components.
    pub fn psi1(&self, z: &[C64]) -> CVec {
        let chi = self.idx().eval_chi(z);
        let phase = self.t1.eval(z).exp();
        (self.fam.fact.s1() * chi) * phase
    }

    /// Adjoint Baker vector `Psi_2^*(t, z) = e^{-t2(z)} H^{-T} P_2(t, z)`.
    pub fn psi2_star(&self, z: &[C64]) -> CVec {
        let chi = self.idx().eval_chi(z);
        let p2 = self.fam.fact.s2() * chi;
        let mut out = CVec::zeros(p2.len());
        for k in 0..=self.idx().n_max() {
            let r = self.idx().level_range(k);
            let seg = CMat::from_fn(r.len(), 1, |i, _| p2[r.start + i]);
            let solved = solve(&self.fam.fact.h_block(k).transpose(), &seg)
                .expect("H blocks are invertible");
            for i in 0..r.len() {
                out[r.start + i] = solved[(i, 0)];
            }
        }
        out * (-self.t2.eval(z)).exp()
    }

    /// First block subdiagonal of `S1` at one level.
    pub fn beta(&self, k: usize) -> CMat {
        self.fam.fact.beta(k)
    }

    /// Largest active time degree.
    pub fn time_degree(&self) -> usize {
        self.t1.max_degree().max(self.t2.max_degree())
    }

    /// Truncated wave matrix `W_1 = S1 exp(t1(Lambda))`.
    pub fn wave1(&self) -> CMat {
        let e = exp_of_shifts(&self.t1, self.idx());
        self.fam.fact.s1() * e
    }

    /// Truncated wave matrix `W_2 = S2_tilde exp(t2(Lambda))^T`.
    pub fn wave2(&self) -> CMat {
        let (tilde, _) = self.s2_tilde();
        let e = exp_of_shifts(&self.t2, self.idx());
        tilde * e.transpose()
    }
}

/// Block upper part (diagonal included).
pub fn split_upper(m: &CMat, idx: &GradedIndexer) -> CMat {
    let mut out = m.clone();
    for k in 0..=idx.n_max() {
        let rk = idx.level_range(k);
        for l in 0..k {
            let rl = idx.level_range(l);
            out.view_mut((rk.start, rl.start), (rk.len(), rl.len()))
                .fill(C64::new(0.0, 0.0));
        }
    }
    out
}

/// Strictly lower block part.
pub fn split_strict_lower(m: &CMat, idx: &GradedIndexer) -> CMat {
    m - split_upper(m, idx)
}

/// `exp(t(Lambda))` on the truncation, assembled from the truncated
/// series coefficients of `e^{t(x)}` through the exponent-shift formula;
/// this equals the leading block of the semi-infinite exponential.
pub fn exp_of_shifts(t: &TimeSeries, idx: &GradedIndexer) -> CMat {
    let p = t.as_poly(idx.dim()).series_exp(idx.n_max());
    poly_of_shifts(&p, idx)
}

fn trust(idx: &GradedIndexer, degree: usize) -> usize {
    idx.n_max().saturating_sub(degree + 2)
}

/// Residual of the Lax equation
/// `dL_{i,a}/dt_{j,alpha} = [B_{j,alpha}, L_{i,a}]`
/// by a central difference of step `h`, measured in max norm over the
/// trusted leading blocks.
pub fn lax_residual(
    state: &TodaState,
    i: Flow,
    axis: usize,
    j: Flow,
    alpha: &MultiIndex,
    h: f64,
) -> Result<f64> {
    let plus = state.shifted(j, alpha, h)?;
    let minus = state.shifted(j, alpha, -h)?;
    let dl = (plus.lax(i, axis) - minus.lax(i, axis)).unscale(2.0 * h);
    let b = state.b_matrix(j, alpha);
    let l = state.lax(i, axis);
    let commutator = &b * &l - &l * &b;
    // the deformed Gram matrix is exact entrywise, so only the probed
    // flow's band limits the trusted blocks
    let k = trust(state.idx(), alpha.degree());
    Ok(trust_max_diff(&dl, &commutator, state.idx(), k, k))
}

/// Residual of the Zakharov–Shabat compatibility equation
/// `dB_{i',a'}/dt_{i,a} - dB_{i,a}/dt_{i',a'} + [B_{i',a'}, B_{i,a}] = 0`,
/// the commutator order that follows from the wave evolution
/// `dW/dt_{i,a} = B_{i,a} W`.
pub fn zs_residual(
    state: &TodaState,
    i: Flow,
    alpha: &MultiIndex,
    ip: Flow,
    alpha_p: &MultiIndex,
    h: f64,
) -> Result<f64> {
    let d_bp = {
        let plus = state.shifted(i, alpha, h)?;
        let minus = state.shifted(i, alpha, -h)?;
        (plus.b_matrix(ip, alpha_p) - minus.b_matrix(ip, alpha_p)).unscale(2.0 * h)
    };
    let d_b = {
        let plus = state.shifted(ip, alpha_p, h)?;
        let minus = state.shifted(ip, alpha_p, -h)?;
        (plus.b_matrix(i, alpha) - minus.b_matrix(i, alpha)).unscale(2.0 * h)
    };
    let b = state.b_matrix(i, alpha);
    let bp = state.b_matrix(ip, alpha_p);
    let resid = d_bp - d_b + (&bp * &b - &b * &bp);
    let d = alpha.degree().max(alpha_p.degree());
    let k = trust(state.idx(), d);
    Ok(trust_max_norm(&resid, state.idx(), k, k))
}

/// Residual of the lattice equation at one level:
///
/// ```text
/// d/dt_{2,e_b} ( dH_[k]/dt_{1,e_a} H_[k]^{-1} )
///   + (La)_{[k],[k+1]} H_[k+1] (Lb)_{[k],[k+1]}^T H_[k]^{-1}
///   - H_[k] (Lb)_{[k-1],[k]}^T H_[k-1]^{-1} (La)_{[k-1],[k]} = 0
/// ```
pub fn toda_lattice_residual(
    state: &TodaState,
    k: usize,
    a: usize,
    b: usize,
    h: f64,
) -> Result<f64> {
    let idx = state.idx();
    assert!(
        k >= 1 && k < idx.n_max(),
        "level must sit strictly inside the truncation"
    );
    let ea = MultiIndex::unit(idx.dim(), a);
    let eb = MultiIndex::unit(idx.dim(), b);

    let f_at = |s: &TodaState| -> Result<CMat> {
        let plus = s.shifted(Flow::One, &ea, h)?;
        let minus = s.shifted(Flow::One, &ea, -h)?;
        let dh = (plus.fam.fact.h_block(k) - minus.fam.fact.h_block(k)).unscale(2.0 * h);
        s.fam.fact.h_solve_right(k, &dh)
    };
    let outer_plus = state.shifted(Flow::Two, &eb, h)?;
    let outer_minus = state.shifted(Flow::Two, &eb, -h)?;
    let term1 = (f_at(&outer_plus)? - f_at(&outer_minus)?).unscale(2.0 * h);

    let la = shift_matrix(idx, a);
    let lb = shift_matrix(idx, b);
    let rk = idx.level_range(k);
    let rk1 = idx.level_range(k + 1);
    let rkm = idx.level_range(k - 1);
    let la_up = la
        .view((rk.start, rk1.start), (rk.len(), rk1.len()))
        .into_owned();
    let lb_up = lb
        .view((rk.start, rk1.start), (rk.len(), rk1.len()))
        .into_owned();
    let la_dn = la
        .view((rkm.start, rk.start), (rkm.len(), rk.len()))
        .into_owned();
    let lb_dn = lb
        .view((rkm.start, rk.start), (rkm.len(), rk.len()))
        .into_owned();

    let term2 = state
        .fam
        .fact
        .h_solve_right(k, &(la_up * state.fam.fact.h_block(k + 1) * lb_up.transpose()))?;
    let hinv_la = state.fam.fact.h_solve(k - 1, &la_dn)?;
    let term3 = state.fam.fact.h_block(k) * lb_dn.transpose() * hinv_la;

    Ok(max_norm(&(term1 + term2 - term3)))
}

/// Algebraic right side of the `H` evolution at one level,
///
/// ```text
/// dH_[k]/dt_{1,e_a} H_[k]^{-1} == beta_[k] (La)_{[k-1],[k]} - (La)_{[k],[k+1]} beta_[k+1]
/// ```
///
/// compared against a central difference. Returns the residual.
pub fn h_evolution_residual(state: &TodaState, k: usize, a: usize, h: f64) -> Result<f64> {
    let idx = state.idx();
    assert!(k >= 1 && k < idx.n_max());
    let ea = MultiIndex::unit(idx.dim(), a);
    let plus = state.shifted(Flow::One, &ea, h)?;
    let minus = state.shifted(Flow::One, &ea, -h)?;
    let dh = (plus.fam.fact.h_block(k) - minus.fam.fact.h_block(k)).unscale(2.0 * h);
    let lhs = state.fam.fact.h_solve_right(k, &dh)?;

    let la = shift_matrix(idx, a);
    let rk = idx.level_range(k);
    let rk1 = idx.level_range(k + 1);
    let rkm = idx.level_range(k - 1);
    let la_dn = la
        .view((rkm.start, rk.start), (rkm.len(), rk.len()))
        .into_owned();
    let la_up = la
        .view((rk.start, rk1.start), (rk.len(), rk1.len()))
        .into_owned();
    let rhs = state.beta(k) * la_dn - la_up * state.beta(k + 1);
    Ok(max_norm(&(lhs - rhs)))
}

/// Residual of the second-order wave equation
/// `dPsi_1/dt_{1,(a,b)} = d^2 Psi_1 / dt_{1,a} dt_{1,b} + U_{a,b} Psi_1`
/// with `U_{a,b} = -V_{a,b} - V_{b,a}` and
/// `V_{a,b} = (d beta / dt_{1,a}) Lambda_b`, at a complex point `z`.
pub fn kp_wave_residual(
    state: &TodaState,
    a: usize,
    b: usize,
    z: &[C64],
    h: f64,
) -> Result<f64> {
    let idx = state.idx();
    let dim = idx.dim();
    let ea = MultiIndex::unit(dim, a);
    let eb = MultiIndex::unit(dim, b);
    let eab = ea.add(&eb);

    // left side: flow along t_{1,(a,b)}
    let lhs = {
        let plus = state.shifted(Flow::One, &eab, h)?;
        let minus = state.shifted(Flow::One, &eab, -h)?;
        (plus.psi1(z) - minus.psi1(z)).unscale(2.0 * h)
    };

    // mixed second derivative
    let second = if a == b {
        let plus = state.shifted(Flow::One, &ea, h)?;
        let minus = state.shifted(Flow::One, &ea, -h)?;
        (plus.psi1(z) - state.psi1(z).scale(2.0) + minus.psi1(z)).unscale(h * h)
    } else {
        let pp = state
            .shifted(Flow::One, &ea, h)?
            .shifted(Flow::One, &eb, h)?;
        let pm = state
            .shifted(Flow::One, &ea, h)?
            .shifted(Flow::One, &eb, -h)?;
        let mp = state
            .shifted(Flow::One, &ea, -h)?
            .shifted(Flow::One, &eb, h)?;
        let mm = state
            .shifted(Flow::One, &ea, -h)?
            .shifted(Flow::One, &eb, -h)?;
        (pp.psi1(z) - pm.psi1(z) - mp.psi1(z) + mm.psi1(z)).unscale(4.0 * h * h)
    };

    // U_{a,b} Psi_1 blockwise
    let d_beta = |axis: usize, k: usize| -> Result<CMat> {
        let e = MultiIndex::unit(dim, axis);
        let plus = state.shifted(Flow::One, &e, h)?;
        let minus = state.shifted(Flow::One, &e, -h)?;
        Ok((plus.beta(k) - minus.beta(k)).unscale(2.0 * h))
    };
    let la = shift_matrix(idx, a);
    let lb = shift_matrix(idx, b);
    let psi = state.psi1(z);
    let mut u_psi = CVec::zeros(psi.len());
    for k in 1..=idx.n_max() {
        let rk = idx.level_range(k);
        let rkm = idx.level_range(k - 1);
        let lb_dn = lb
            .view((rkm.start, rk.start), (rkm.len(), rk.len()))
            .into_owned();
        let la_dn = la
            .view((rkm.start, rk.start), (rkm.len(), rk.len()))
            .into_owned();
        let v_ab = d_beta(a, k)? * lb_dn;
        let v_ba = d_beta(b, k)? * la_dn;
        let u = -(v_ab + v_ba);
        let seg = CVec::from_iterator(rk.len(), rk.clone().map(|i| psi[i]));
        let prod = u * seg;
        for (i, global) in rk.enumerate() {
            u_psi[global] += prod[i];
        }
    }

    let rhs = second + u_psi;
    let k_trust = trust(idx, 2);
    let limit = idx.cumulative(k_trust);
    let mut res = 0.0f64;
    for i in 0..limit {
        res = res.max((lhs[i] - rhs[i]).norm());
    }
    Ok(res)
}

/// Residual of the spectral property `L_{1,a} Psi_1 == z_a Psi_1` on the
/// components of degree below `n_max`; exact up to roundoff at any time.
pub fn spectral_residual(state: &TodaState, axis: usize, z: &[C64]) -> f64 {
    let l = state.lax(Flow::One, axis);
    let psi = state.psi1(z);
    let lhs = &l * &psi;
    let idx = state.idx();
    let limit = idx.cumulative(idx.n_max() - 1);
    let mut res = 0.0f64;
    for i in 0..limit {
        res = res.max((lhs[i] - z[axis] * psi[i]).norm());
    }
    res
}

/// Residual of the wave-matrix factorization `W_1^{-1} W_2 == G(0)` on
/// the trusted leading blocks; the tolerance budget grows with the
/// dropped exponential tail, so keep the active times small.
pub fn wave_identity_residual(state: &TodaState, g0: &CMat) -> Result<f64> {
    let idx = state.idx();
    let w1 = state.wave1();
    let w2 = state.wave2();
    let recon = solve(&w1, &w2)?;
    let k = trust(idx, state.time_degree());
    let scale = trust_max_norm(g0, idx, k, k).max(1e-300);
    Ok(trust_max_diff(&recon, g0, idx, k, k) / scale)
}

/// Residual of the Baker closed form: `W_1 chi(z)` against
/// `e^{t1(z)} P_1(t, z)` on low components.
pub fn baker_closed_form_residual(state: &TodaState, z: &[C64]) -> f64 {
    let idx = state.idx();
    let via_wave = state.wave1() * idx.eval_chi(z);
    let closed = state.psi1(z);
    let limit = idx.cumulative(trust(idx, state.time_degree()));
    let mut res = 0.0f64;
    for i in 0..limit {
        res = res.max((via_wave[i] - closed[i]).norm());
    }
    res
}

/// Report of a `(q1, q2)`-invariance reduction check.
#[derive(Debug, Clone)]
pub struct ReductionReport {
    /// `q1(Lambda) G == G q2(Lambda^T)` residual.
    pub invariance: f64,
    /// `q1(L_1) == q2(L_2)` residual on trusted blocks.
    pub lax_match: f64,
    /// Combined-flow derivative residual at step `h`.
    pub combined_flow: f64,
    /// Combined-flow derivative residual at step `h/2`.
    pub combined_flow_half: f64,
}

/// Verify a `(q1, q2)`-invariant generator: the algebraic constraint on
/// the Gram matrix, the matching of the two Lax polynomials, and the
/// vanishing combined flow by finite differences.
pub fn reduction_check(
    state: &TodaState,
    q1: &Poly,
    q2: &Poly,
    h: f64,
) -> Result<ReductionReport> {
    let idx = state.idx();
    let d = q1.degree().max(q2.degree());
    let k = trust(idx, d.max(state.time_degree()));

    let lhs = poly_of_shifts(q1, idx) * &state.gram;
    let rhs = &state.gram * poly_of_shifts(q2, idx).transpose();
    let scale = trust_max_norm(&state.gram, idx, k, k).max(1e-300);
    let invariance = trust_max_diff(&lhs, &rhs, idx, k, k) / scale;
    if invariance > 1e-8 {
        return Err(Error::InvarianceViolated {
            residual: invariance,
        });
    }

    // q1(L1) == q2(L2)
    let mut q1_l1 = CMat::zeros(idx.total(), idx.total());
    for (alpha, &c) in q1.terms() {
        q1_l1 += state.lax_power(Flow::One, alpha).scale_cplx(c);
    }
    let mut q2_l2 = CMat::zeros(idx.total(), idx.total());
    for (alpha, &c) in q2.terms() {
        q2_l2 += state.lax_power(Flow::Two, alpha).scale_cplx(c);
    }
    let lax_match = trust_max_diff(&q1_l1, &q2_l2, idx, k, k);

    // combined flow: t1 += eps q1-coefficients, t2 += eps q2-coefficients
    let combined = |eps: f64| -> Result<CMat> {
        let mut d1 = TimeSeries::zero();
        for (alpha, &c) in q1.terms() {
            d1.set(alpha.clone(), c * eps);
        }
        let mut d2 = TimeSeries::zero();
        for (alpha, &c) in q2.terms() {
            d2.set(alpha.clone(), c * eps);
        }
        Ok(state.evolved(&d1, &d2)?.lax(Flow::One, 0))
    };
    let diff_at = |step: f64| -> Result<f64> {
        let dl = (combined(step)? - combined(-step)?).unscale(2.0 * step);
        Ok(trust_max_norm(&dl, idx, k, k))
    };
    let combined_flow = diff_at(h)?;
    let combined_flow_half = diff_at(h / 2.0)?;

    Ok(ReductionReport {
        invariance,
        lax_match,
        combined_flow,
        combined_flow_half,
    })
}

trait ScaleCplx {
    fn scale_cplx(self, c: C64) -> Self;
}

impl ScaleCplx for CMat {
    fn scale_cplx(mut self, c: C64) -> Self {
        for v in self.iter_mut() {
            *v *= c;
        }
        self
    }
}

/// The deformed transformed generator: `G_hat = q1(Lambda) G_check` with
/// `G_check` the divided generator. Diagonal generators carry the masses;
/// kernel generators support the mass-free case.
pub fn hat_generator(gen: &BilinearGenerator, spec: &TransformSpec) -> Result<BilinearGenerator> {
    match gen {
        BilinearGenerator::Diagonal(u) => Ok(BilinearGenerator::Diagonal(
            crate::transforms::hat_functional(u, spec),
        )),
        BilinearGenerator::Kernel(pairs) => {
            if !spec.masses.components.is_empty() {
                return Err(Error::Unsupported(
                    "masses over a kernel generator".into(),
                ));
            }
            let mut out = Vec::with_capacity(pairs.len());
            for (x, y, w) in pairs {
                let q2v = spec.q2.eval_real(y);
                if q2v.norm() <= spec.masses.divisor_tol {
                    return Err(Error::DivisorNearZero {
                        value: q2v.norm(),
                        tol: spec.masses.divisor_tol,
                    });
                }
                out.push((x.clone(), y.clone(), *w * spec.q1.eval_real(x) / q2v));
            }
            Ok(BilinearGenerator::Kernel(out))
        }
    }
}

/// The divided generator `G_check` with `G_check q2(Lambda^T) = G`,
/// including the discrete v-part.
fn check_generator(gen: &BilinearGenerator, spec: &TransformSpec) -> Result<BilinearGenerator> {
    match gen {
        BilinearGenerator::Diagonal(u) => Ok(BilinearGenerator::Diagonal(
            crate::transforms::check_functional(u, spec),
        )),
        BilinearGenerator::Kernel(pairs) => {
            if !spec.masses.components.is_empty() {
                return Err(Error::Unsupported(
                    "masses over a kernel generator".into(),
                ));
            }
            let mut out = Vec::with_capacity(pairs.len());
            for (x, y, w) in pairs {
                let q2v = spec.q2.eval_real(y);
                if q2v.norm() <= spec.masses.divisor_tol {
                    return Err(Error::DivisorNearZero {
                        value: q2v.norm(),
                        tol: spec.masses.divisor_tol,
                    });
                }
                out.push((x.clone(), y.clone(), *w / q2v));
            }
            Ok(BilinearGenerator::Kernel(out))
        }
    }
}

/// Output of the deformed rational spectral transformation at one level.
#[derive(Debug, Clone)]
pub struct TodaCguBlock {
    pub level: usize,
    /// `Psi_hat_{1,[k]}(t, x)` at the probe point.
    pub psi_hat: CVec,
    pub h_hat: CMat,
    pub condition: f64,
}

/// Deformed CGU step: quasi-determinant expressions with Baker columns
/// replacing polynomial columns, built on `R(t) = S1(t) G_check(t)`.
pub fn toda_cgu(
    state: &TodaState,
    spec: &TransformSpec,
    k: usize,
    x: &[f64],
) -> Result<TodaCguBlock> {
    let idx = state.idx();
    let (m1, m2) = (spec.m1(), spec.m2());
    if k + m1 > idx.n_max() {
        return Err(Error::DegreeOverflow {
            requested: k + m1,
            max: idx.n_max(),
        });
    }
    spec.validate_nodes()?;

    let check_gen = check_generator(&state.fam.gen, spec)?;
    let g_check = check_gen.gram_matrix(idx, &state.t1, &state.t2)?;
    let r = state.fam.fact.s1() * g_check;

    let lo = k.saturating_sub(m2);
    let row_start = idx.level_offset(lo);
    let rows = idx.level_offset(k + m1) - row_start;
    let border = idx.level_range(k + m1);

    let need_r = crate::transforms::r2_count(idx, k, m2);
    let need_n = crate::transforms::r1_count(idx, k, m1);
    if spec.nodes.len() < need_n {
        return Err(Error::NoPoisedSet {
            level: k,
            best_cond: f64::INFINITY,
        });
    }

    // Baker columns at the nodes (the e^{t1} phases rescale columns and
    // drop out of the Schur complement only if consistent, so keep them)
    let full_psi = |p: &[f64]| -> CVec {
        let zc: Vec<C64> = p.iter().map(|&v| C64::new(v, 0.0)).collect();
        state.psi1(&zc)
    };

    // choose beta columns: leading positions, falling back to the pivoted
    // order when ill-conditioned
    let beta_cols: Vec<usize> = (0..need_r).collect();
    let node_ids: Vec<usize> = (0..need_n).collect();

    let assemble = |beta: &[usize], nodes: &[usize]| -> (CMat, CMat) {
        let ncols = beta.len() + nodes.len();
        let mut a = CMat::zeros(rows, ncols);
        let mut c = CMat::zeros(border.len(), ncols);
        for (j, &col) in beta.iter().enumerate() {
            for i in 0..rows {
                a[(i, j)] = r[(row_start + i, col)];
            }
            for i in 0..border.len() {
                c[(i, j)] = r[(border.start + i, col)];
            }
        }
        for (j, &nid) in nodes.iter().enumerate() {
            let psi = full_psi(&spec.nodes[nid]);
            for i in 0..rows {
                a[(i, beta.len() + j)] = psi[row_start + i];
            }
            for i in 0..border.len() {
                c[(i, beta.len() + j)] = psi[border.start + i];
            }
        }
        (a, c)
    };

    let (a, c) = assemble(&beta_cols, &node_ids);
    let condition = if a.ncols() == 0 {
        1.0
    } else {
        crate::block::condition_estimate(&a)
    };
    if condition > crate::transforms::POISED_COND_MAX {
        return Err(Error::NoPoisedSet {
            level: k,
            best_cond: condition,
        });
    }
    let w = if a.ncols() == 0 {
        CMat::zeros(border.len(), 0)
    } else {
        solve(&a.transpose(), &c.transpose())?.transpose()
    };

    let q1l = poly_of_shifts(&spec.q1, idx);
    let rk = idx.level_range(k);
    let pref = q1l
        .view((rk.start, border.start), (rk.len(), border.len()))
        .into_owned();

    // Baker column at the probe point
    let zc: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    let psi_x = state.psi1(&zc);
    let mut theta = CMat::from_fn(border.len(), 1, |i, _| psi_x[border.start + i]);
    if a.ncols() > 0 {
        let stacked = CMat::from_fn(rows, 1, |i, _| psi_x[row_start + i]);
        theta -= &w * stacked;
    }
    let q1_at_x = spec.q1.eval(&zc);
    if q1_at_x.norm() < 1e-12 {
        return Err(Error::PoleOnSupport {
            dist: q1_at_x.norm(),
            tol: 1e-12,
        });
    }
    let psi_hat_mat = (&pref * theta).unscale_cplx(q1_at_x);
    let psi_hat = CVec::from_iterator(rk.len(), (0..rk.len()).map(|i| psi_hat_mat[(i, 0)]));

    // quasi-tau: R column block [k]
    let mut d_h = CMat::zeros(border.len(), rk.len());
    for i in 0..border.len() {
        for j in 0..rk.len() {
            d_h[(i, j)] = r[(border.start + i, rk.start + j)];
        }
    }
    if a.ncols() > 0 {
        let mut b_h = CMat::zeros(rows, rk.len());
        for i in 0..rows {
            for j in 0..rk.len() {
                b_h[(i, j)] = r[(row_start + i, rk.start + j)];
            }
        }
        d_h -= &w * b_h;
    }
    let h_hat = &pref * d_h;

    Ok(TodaCguBlock {
        level: k,
        psi_hat,
        h_hat,
        condition,
    })
}

trait UnscaleCplx {
    fn unscale_cplx(self, c: C64) -> Self;
}

impl UnscaleCplx for CMat {
    fn unscale_cplx(mut self, c: C64) -> Self {
        for v in self.iter_mut() {
            *v /= c;
        }
        self
    }
}

// ---------------------------------------------------------------------
// generalized bilinear identity (one-dimensional path)
// ---------------------------------------------------------------------

/// Both contour integrals of the bilinear identity, with the radii used.
#[derive(Debug, Clone)]
pub struct BilinearResult {
    pub lhs: C64,
    pub rhs: C64,
    pub r1: f64,
    pub r2: f64,
}

fn support_radius(gen: &BilinearGenerator) -> f64 {
    let mut r: f64 = 0.0;
    match gen {
        BilinearGenerator::Diagonal(u) => {
            let _ = u.for_each_quad_node(|x, _| {
                for &v in x {
                    r = r.max(v.abs());
                }
            });
        }
        BilinearGenerator::Kernel(pairs) => {
            for (x, y, _) in pairs {
                for &v in x.iter().chain(y) {
                    r = r.max(v.abs());
                }
            }
        }
    }
    r.max(0.25)
}

fn choose_radius(tail: impl Fn(f64) -> f64, start: f64) -> Result<f64> {
    let mut r = start;
    for _ in 0..48 {
        let t = tail(r);
        if t < 1e-10 {
            return Ok(r);
        }
        r *= 2.0;
    }
    Err(Error::NonConvergentSeries {
        tail: tail(r),
        target: 1e-10,
        radius: r,
    })
}

/// Coefficients of `e^{t(x)}` up to degree `n` in one variable.
fn exp_coeffs_1d(t: &TimeSeries, n: usize) -> Vec<C64> {
    let p = t.as_poly(1).series_exp(n);
    let mut out = vec![C64::new(0.0, 0.0); n + 1];
    for (a, &c) in p.terms() {
        out[a.0[0] as usize] = c;
    }
    out
}

/// Evaluator data for the adjoint Baker series
/// `Psi_1^*_alpha(t, z) = sum_j (G(t) q_alpha)_j z^{-j-1}` where
/// `q_alpha` are the coefficients of `e^{-t2(x)} (H^{-T} P_2)_alpha`.
struct Psi1StarSeries {
    weights: CVec,
}

impl Psi1StarSeries {
    fn build(state: &TodaState, alpha: usize) -> Result<Psi1StarSeries> {
        let idx = state.idx();
        let n = idx.total();
        // the pairing runs through the static bilinear form
        let g0 = state
            .fam
            .gen
            .gram_matrix(idx, &TimeSeries::zero(), &TimeSeries::zero())?;
        let minus_t2 = {
            let mut t = TimeSeries::zero();
            for (a, &c) in &state.t2.coeffs {
                t.set(a.clone(), -c);
            }
            t
        };
        let e2 = exp_coeffs_1d(&minus_t2, n - 1);
        // P_2 row alpha over monomials, divided by H_alpha
        let h_a = state.fam.fact.h_block(alpha)[(0, 0)];
        let s2 = state.fam.fact.s2();
        let mut q = CVec::zeros(n);
        for m in 0..n {
            // coefficient of x^m in e^{-t2} * P_{2,alpha}
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..=m.min(alpha) {
                acc += s2[(alpha, j)] * e2[m - j];
            }
            q[m] = acc / h_a;
        }
        let weights = g0 * q;
        Ok(Psi1StarSeries { weights })
    }

    fn eval(&self, z: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        let zinv = C64::new(1.0, 0.0) / z;
        let mut p = zinv;
        for j in 0..self.weights.len() {
            acc += self.weights[j] * p;
            p *= zinv;
        }
        acc
    }

    fn tail(&self, r: f64) -> f64 {
        let n = self.weights.len();
        (n.saturating_sub(3)..n)
            .map(|j| self.weights[j].norm() * r.powi(-(j as i32) - 1))
            .sum()
    }
}

/// Evaluator for the transformed second Baker function through
/// `Psi_2_hat(t, z) = H_hat S2_hat^{-T} exp(t2(Lambda))^T chi^*(z)`.
struct Psi2HatSeries {
    row: CVec,
    e2: Vec<C64>,
}

impl Psi2HatSeries {
    fn build(hat: &TodaState, alpha: usize) -> Psi2HatSeries {
        let idx = hat.idx();
        let n = idx.total();
        let m = hat.fam.fact.h_matrix() * hat.fam.fact.s2_inv().transpose();
        let row = CVec::from_iterator(n, (0..n).map(|j| m[(alpha, j)]));
        // one order past the kept positions, for the dropped-term monitor
        let e2 = exp_coeffs_1d(&hat.t2, n);
        Psi2HatSeries { row, e2 }
    }

    fn eval(&self, z: C64) -> C64 {
        let n = self.row.len();
        let zinv = C64::new(1.0, 0.0) / z;
        // v_j = sum_{i <= j} e2[j - i] z^{-i-1}
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            let mut vj = C64::new(0.0, 0.0);
            let mut p = zinv;
            for i in 0..=j {
                vj += self.e2[j - i] * p;
                p *= zinv;
            }
            acc += self.row[j] * vj;
        }
        acc
    }

    /// First dropped term of the position series: its slow `1/r` pieces
    /// carry factorially small exponential coefficients, so the estimate
    /// collapses quickly once the active times are modest.
    fn tail(&self, r: f64) -> f64 {
        let n = self.row.len();
        let row_scale = self.row.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut vj = 0.0;
        for i in 0..=n {
            vj += self.e2[n - i].norm() * r.powi(-(i as i32) - 1);
        }
        row_scale * vj
    }
}

fn contour_integral(f: impl Fn(C64) -> C64, r: f64, n_quad: usize) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for m in 0..n_quad {
        let theta = 2.0 * std::f64::consts::PI * m as f64 / n_quad as f64;
        let z = C64::from_polar(r, theta);
        acc += f(z) * C64::new(0.0, 1.0) * z;
    }
    acc * (2.0 * std::f64::consts::PI / n_quad as f64)
}

/// Evaluate both sides of the generalized bilinear identity for a pair
/// of time points and component indices (one-dimensional path):
/// `oint Psi_hat_{1,a'}(t',z) Psi^*_{1,a}(t,z) q1(z) dz ==
///  oint Psi_hat_{2,a'}(t',z) Psi^*_{2,a}(t,z) q2(z) dz`.
#[allow(clippy::too_many_arguments)]
pub fn bilinear_check(
    gen: &BilinearGenerator,
    idx: &GradedIndexer,
    spec: &TransformSpec,
    t: (&TimeSeries, &TimeSeries),
    tp: (&TimeSeries, &TimeSeries),
    alpha: usize,
    alpha_p: usize,
    radii: (Option<f64>, Option<f64>),
    n_quad: usize,
) -> Result<BilinearResult> {
    if idx.dim() != 1 {
        return Err(Error::Unsupported(
            "the bilinear identity path requires D = 1".into(),
        ));
    }
    assert!(n_quad >= 64, "contour rule needs at least 64 nodes");
    let base = TodaState::new(gen.clone(), idx, t.0.clone(), t.1.clone())?;
    let hat_gen = hat_generator(gen, spec)?;
    let hat = TodaState::new(hat_gen, idx, tp.0.clone(), tp.1.clone())?;

    let series1 = Psi1StarSeries::build(&base, alpha)?;
    let series2 = Psi2HatSeries::build(&hat, alpha_p);
    let start = 2.0 * support_radius(gen);
    let r1 = match radii.0 {
        Some(r) => r,
        None => choose_radius(|r| series1.tail(r), start)?,
    };
    let r2 = match radii.1 {
        Some(r) => r,
        None => choose_radius(|r| series2.tail(r), start)?,
    };

    let lhs = contour_integral(
        |z| {
            let psi_hat_1 = hat.psi1(&[z])[alpha_p];
            psi_hat_1 * series1.eval(z) * spec.q1.eval(&[z])
        },
        r1,
        n_quad,
    );
    let rhs = contour_integral(
        |z| {
            let psi2_star = base.psi2_star(&[z])[alpha];
            series2.eval(z) * psi2_star * spec.q2.eval(&[z])
        },
        r2,
        n_quad,
    );
    Ok(BilinearResult { lhs, rhs, r1, r2 })
}

/// Closed-form left side of the bilinear identity through the wave-matrix
/// product of the lemma: `2 pi i (W1_hat(t') q1(Lambda) W1(t)^{-1})_{a',a}`.
/// Exact up to the dropped exponential tail, so keep `t - t'` small.
pub fn bilinear_lhs_closed(
    gen: &BilinearGenerator,
    idx: &GradedIndexer,
    spec: &TransformSpec,
    t: (&TimeSeries, &TimeSeries),
    tp: (&TimeSeries, &TimeSeries),
    alpha: usize,
    alpha_p: usize,
) -> Result<C64> {
    let base = TodaState::new(gen.clone(), idx, t.0.clone(), t.1.clone())?;
    let hat_gen = hat_generator(gen, spec)?;
    let hat = TodaState::new(hat_gen, idx, tp.0.clone(), tp.1.clone())?;
    let minus_t1 = {
        let mut m = TimeSeries::zero();
        for (a, &c) in &t.0.coeffs {
            m.set(a.clone(), -c);
        }
        m
    };
    let w1_inv = exp_of_shifts(&minus_t1, idx) * base.fam.fact.s1_inv();
    let prod = hat.wave1() * poly_of_shifts(&spec.q1, idx) * w1_inv;
    Ok(prod[(alpha_p, alpha)] * C64::new(0.0, 2.0 * std::f64::consts::PI))
}
