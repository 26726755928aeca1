//! Additive perturbations of a functional: point multipoles solved
//! through finite linear systems of Christoffel–Darboux jets, and curve
//! perturbations solved through a separable Fredholm equation in the
//! curve parameter.

use crate::block::{block_diag, max_norm, smallest_singular_value};
use crate::error::{Error, Result};
use crate::factor::solve;
use crate::family::{OpFamily, Side};
use crate::functional::{Curve, FunctionalComponent, FunctionalSpec, Weight};
use crate::mindex::{enumerate_level, GradedIndexer, MultiIndex};
use crate::poly::Poly;
use crate::quad::gauss_legendre_on;
use crate::{C64, CMat};

/// Relative collocation tolerance of the Fredholm solve.
pub const FREDHOLM_TOL: f64 = 1e-8;

/// One puncture: a point, the largest derivative multi-index, and the
/// coefficient table `xi_gamma` over the jet index set.
#[derive(Debug, Clone)]
pub struct Puncture {
    pub point: Vec<f64>,
    pub beta: MultiIndex,
    pub xi: Vec<(MultiIndex, C64)>,
}

/// A finite set of punctures defining the discrete additive perturbation
/// `v = sum_i sum_gamma xi_{i,gamma} * (1/gamma!) d^gamma(.)|_{x_i}`.
#[derive(Debug, Clone)]
pub struct MultipoleSet {
    pub punctures: Vec<Puncture>,
}

impl MultipoleSet {
    /// Plain masses: zero-order punctures.
    pub fn masses(points: Vec<(Vec<f64>, C64)>) -> Self {
        MultipoleSet {
            punctures: points
                .into_iter()
                .map(|(point, w)| {
                    let dim = point.len();
                    Puncture {
                        point,
                        beta: MultiIndex::zeros(dim),
                        xi: vec![(MultiIndex::zeros(dim), w)],
                    }
                })
                .collect(),
        }
    }

    /// One dipole per point: first-order derivative strengths, no mass.
    pub fn dipoles(points: Vec<(Vec<f64>, Vec<C64>)>) -> Self {
        MultipoleSet {
            punctures: points
                .into_iter()
                .map(|(point, strength)| {
                    let dim = point.len();
                    let beta = MultiIndex::unit(dim, dim - 1);
                    let xi = strength
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.norm() > 0.0)
                        .map(|(a, &s)| (MultiIndex::unit(dim, a), s))
                        .collect();
                    Puncture { point, beta, xi }
                })
                .collect(),
        }
    }

    /// The perturbation as a functional (multipole components), for the
    /// refactorization oracle.
    pub fn as_functional(&self) -> FunctionalSpec {
        let comps = self
            .punctures
            .iter()
            .flat_map(|p| {
                p.xi.iter().map(|(gamma, coef)| {
                    FunctionalComponent::multipole(p.point.clone(), gamma.clone(), *coef)
                })
            })
            .collect();
        FunctionalSpec::new(comps)
    }
}

/// Jet index set of a largest multi-index: every index of lower degree,
/// then the indices of the same degree up to and including `beta` in the
/// intra-level order.
pub fn jet_order(beta: &MultiIndex) -> Vec<MultiIndex> {
    let dim = beta.dim();
    let k = beta.degree();
    let mut out = Vec::new();
    for lvl in 0..k {
        out.extend(enumerate_level(dim, lvl));
    }
    for idx in enumerate_level(dim, k) {
        let stop = idx == *beta;
        out.push(idx);
        if stop {
            break;
        }
    }
    out
}

fn jet_sets(mp: &MultipoleSet) -> Vec<Vec<MultiIndex>> {
    mp.punctures.iter().map(|p| jet_order(&p.beta)).collect()
}

fn total_width(sets: &[Vec<MultiIndex>]) -> usize {
    sets.iter().map(|s| s.len()).sum()
}

/// Jet matrix of a polynomial block: row `r`, column `(i, gamma)` holds
/// `(1/gamma!) d^gamma p_r (x_i)`.
pub fn jet_of_polys(polys: &[Poly], mp: &MultipoleSet) -> CMat {
    let sets = jet_sets(mp);
    let width = total_width(&sets);
    let mut m = CMat::zeros(polys.len(), width);
    for (r, p) in polys.iter().enumerate() {
        let mut col = 0;
        for (punct, set) in mp.punctures.iter().zip(&sets) {
            for gamma in set {
                m[(r, col)] = p.jet_value(gamma, &punct.point);
                col += 1;
            }
        }
    }
    m
}

/// Jet matrix of a family block `P_[k]`.
pub fn jet(fam: &OpFamily, level: usize, mp: &MultipoleSet) -> CMat {
    jet_of_polys(&fam.poly_block(Side::One, level), mp)
}

/// The block-diagonal coefficient matrix `Xi` with
/// `(xi^{(i)})_{gamma,delta} = xi_{i, gamma + delta}` (zero off the table).
pub fn xi_matrix(mp: &MultipoleSet) -> CMat {
    let sets = jet_sets(mp);
    let width = total_width(&sets);
    let mut m = CMat::zeros(width, width);
    let mut offset = 0;
    for (punct, set) in mp.punctures.iter().zip(&sets) {
        for (a, ga) in set.iter().enumerate() {
            for (b, gb) in set.iter().enumerate() {
                let key = ga.add(gb);
                if let Some((_, c)) = punct.xi.iter().find(|(g, _)| *g == key) {
                    m[(offset + a, offset + b)] = *c;
                }
            }
        }
        offset += set.len();
    }
    m
}

/// The Christoffel–Darboux jet `K_{n-1}(S)`: jets of the kernel in both
/// arguments, `sum_{m < n} J_{P_[m]}^T H_[m]^{-1} J_{P_[m]}`.
pub fn cd_jet(fam: &OpFamily, n: usize, mp: &MultipoleSet) -> Result<CMat> {
    let sets = jet_sets(mp);
    let width = total_width(&sets);
    let mut acc = CMat::zeros(width, width);
    for m in 0..n {
        let jm = jet(fam, m, mp);
        let solved = fam.fact.h_solve(m, &jm)?;
        acc += jm.transpose() * solved;
    }
    Ok(acc)
}

/// Transformed block from a 0D multipolar perturbation.
#[derive(Debug, Clone)]
pub struct UvarovBlock {
    pub level: usize,
    pub polys: Vec<Poly>,
    pub h_hat: CMat,
}

/// 0D multipolar Uvarov step:
/// `P_hat_[n](x) = P_[n](x) - J_{P_[n]}(S) (I + Xi K_{n-1})^{-1} Xi (J_{K_{n-1}(., x)}(S))^T`,
/// `H_hat_[n]   = H_[n]   + J_{P_[n]}(S) (I + Xi K_{n-1})^{-1} Xi (J_{P_[n]}(S))^T`.
pub fn uvarov_0d(fam: &OpFamily, mp: &MultipoleSet, n: usize) -> Result<UvarovBlock> {
    if fam.fact.mode != crate::factor::FactorMode::Cholesky {
        return Err(Error::Unsupported(
            "additive perturbations act on symmetric-kernel families".into(),
        ));
    }
    let idx = fam.idx();
    let sets = jet_sets(mp);
    let width = total_width(&sets);
    let xi = xi_matrix(mp);
    let kjet = cd_jet(fam, n, mp)?;
    let sys = CMat::identity(width, width) + &xi * &kjet;
    let scale = max_norm(&sys).max(1.0);
    if width > 0 && smallest_singular_value(&sys) < 1e-12 * scale {
        return Err(Error::SingularSystem);
    }

    let jn = jet(fam, n, mp);
    // M = J_n (I + Xi K)^{-1} Xi
    let m = if width == 0 {
        CMat::zeros(jn.nrows(), 0)
    } else {
        solve(&sys.transpose(), &jn.transpose())?.transpose() * &xi
    };

    // coefficient rows of the kernel jet: row (i, gamma) spans monomials
    // of degree below n
    let ncols = idx.cumulative(n);
    let mut kernel_rows = CMat::zeros(width, ncols);
    for lvl in 0..n {
        let jl = jet(fam, lvl, mp);
        let solved = fam.fact.h_solve(lvl, &jl)?; // H^{-1} J
        let r = idx.level_range(lvl);
        let s_rows = fam
            .fact
            .s1()
            .view((r.start, 0), (r.len(), ncols))
            .into_owned();
        kernel_rows += solved.transpose() * s_rows;
    }

    let rn = idx.level_range(n);
    let s_n = fam
        .fact
        .s1()
        .view((rn.start, 0), (rn.len(), ncols))
        .into_owned();
    let coeff = s_n - &m * kernel_rows;
    let polys = (0..coeff.nrows())
        .map(|i| {
            Poly::from_terms(
                idx.dim(),
                (0..ncols)
                    .filter(|&j| coeff[(i, j)].norm() > 0.0)
                    .map(|j| (idx.index_at(j).clone(), coeff[(i, j)]))
                    .collect(),
            )
        })
        .collect();

    let h_hat = fam.fact.h_block(n) + &m * jn.transpose();
    Ok(UvarovBlock {
        level: n,
        polys,
        h_hat,
    })
}

/// The perturbed functional `u + v_S` for the refactorization oracle.
pub fn uvarov_functional(
    fam: &OpFamily,
    mp: &MultipoleSet,
) -> Result<crate::functional::FunctionalSum> {
    let u = match &fam.gen {
        crate::functional::BilinearGenerator::Diagonal(u) => u.clone(),
        _ => {
            return Err(Error::Unsupported(
                "additive perturbations require a functional-backed family".into(),
            ))
        }
    };
    let mut parts = u.0;
    parts.push(mp.as_functional());
    Ok(crate::functional::FunctionalSum(parts))
}

/// A curve-supported additive perturbation with its parameter
/// discretization.
#[derive(Debug, Clone)]
pub struct CurvePerturbation {
    pub curve: Curve,
    pub interval: (f64, f64),
    pub weight: Weight,
    pub scale: C64,
    pub nodes: usize,
}

impl CurvePerturbation {
    pub fn new(curve: Curve, interval: (f64, f64), scale: C64, nodes: usize) -> Self {
        CurvePerturbation {
            curve,
            interval,
            weight: Weight::Lebesgue,
            scale,
            nodes,
        }
    }

    pub fn as_component(&self) -> FunctionalComponent {
        FunctionalComponent::CurveMeasure {
            curve: self.curve.clone(),
            interval: self.interval,
            weight: self.weight,
            nodes: self.nodes,
            scale: self.scale,
            poly_factor: None,
        }
    }

    /// Parameter nodes, quadrature weights, and curve weight values.
    fn rule(&self) -> (Vec<f64>, Vec<f64>, Vec<C64>) {
        let (ts, ws) = gauss_legendre_on(self.nodes, self.interval.0, self.interval.1);
        let wv = ts
            .iter()
            .map(|&t| {
                self.scale
                    * self
                        .weight
                        .eval_box(&[(self.interval.0, self.interval.1)], &[t])
            })
            .collect();
        (ts, ws, wv)
    }
}

/// Output of the separable Fredholm solve on a curve.
#[derive(Debug, Clone)]
pub struct FredholmBlock {
    pub level: usize,
    /// `pi_hat` sampled at the parameter nodes (rows = nodes).
    pub pi_hat: CMat,
    pub polys: Vec<Poly>,
    pub h_hat: CMat,
    /// Collocated residual relative to `max |pi_[n]|`.
    pub residual: f64,
}

/// Evaluate each entry of `P_[m](gamma(t))` at the parameter nodes:
/// rows = nodes, columns = block entries.
fn pi_samples(fam: &OpFamily, level: usize, ts: &[f64], curve: &Curve) -> CMat {
    let width = fam.idx().level_size(level);
    let mut m = CMat::zeros(ts.len(), width);
    for (s, &t) in ts.iter().enumerate() {
        let x = curve.eval(t);
        let v = fam.eval_block(Side::One, level, &x);
        for j in 0..width {
            m[(s, j)] = v[j];
        }
    }
    m
}

/// Separable Fredholm solve of the curve perturbation at one level.
pub fn fredholm_1d(fam: &OpFamily, cp: &CurvePerturbation, n: usize) -> Result<FredholmBlock> {
    let idx = fam.idx();
    let (ts, ws, wv) = cp.rule();
    let nq = ts.len();

    // pi samples for all levels up to n
    let pis: Vec<CMat> = (0..=n).map(|m| pi_samples(fam, m, &ts, &cp.curve)).collect();

    // A_{[l],[m]} = sum_s omega_s w_s pi_[l](t_s) pi_[m](t_s)^T
    let a_block_dim = if n == 0 { 0 } else { idx.cumulative(n - 1) };
    let mut a_block = CMat::zeros(a_block_dim, a_block_dim);
    let mut a_row = CMat::zeros(idx.level_size(n), a_block_dim);
    for l in 0..n {
        let rl = idx.level_range(l);
        for m in 0..n {
            let rm = idx.level_range(m);
            let mut blk = CMat::zeros(rl.len(), rm.len());
            for s in 0..nq {
                let wl = ws[s] * wv[s];
                let pl = pis[l].row(s).transpose();
                let pm = pis[m].row(s).transpose();
                blk.ger(wl, &pl, &pm, C64::new(1.0, 0.0));
            }
            a_block
                .view_mut((rl.start, rm.start), (rl.len(), rm.len()))
                .copy_from(&blk);
        }
        let mut blk = CMat::zeros(idx.level_size(n), rl.len());
        for s in 0..nq {
            let wl = ws[s] * wv[s];
            let pn = pis[n].row(s).transpose();
            let pl = pis[l].row(s).transpose();
            blk.ger(wl, &pn, &pl, C64::new(1.0, 0.0));
        }
        a_row
            .view_mut((0, rl.start), (idx.level_size(n), rl.len()))
            .copy_from(&blk);
    }

    // solve C (I + Hd^{-1} A) = A_row
    let c_row = if n == 0 {
        CMat::zeros(idx.level_size(0), 0)
    } else {
        let hd: Vec<CMat> = (0..n).map(|m| fam.fact.h_block(m).clone()).collect();
        let sub_idx = GradedIndexer::new(idx.dim(), n - 1);
        let hd_mat = block_diag(&sub_idx, &hd);
        let hd_inv_a = solve(&hd_mat, &a_block)?;
        let sys = CMat::identity(a_block_dim, a_block_dim) + hd_inv_a;
        let scale = max_norm(&sys).max(1.0);
        if smallest_singular_value(&sys) < 1e-12 * scale {
            return Err(Error::SingularSystem);
        }
        solve(&sys.transpose(), &a_row.transpose())?.transpose()
    };

    // pi_hat(t_s) = pi_n(t_s) - sum_m C_{[n],[m]} H_m^{-1} pi_m(t_s)
    // and coefficient rows of P_hat the same way
    let ncols = idx.cumulative(n);
    let rn = idx.level_range(n);
    let mut coeff = fam
        .fact
        .s1()
        .view((rn.start, 0), (rn.len(), ncols))
        .into_owned();
    let mut pi_hat = pis[n].clone();
    for m in 0..n {
        let rm = idx.level_range(m);
        let c_blk = c_row
            .view((0, rm.start), (rn.len(), rm.len()))
            .into_owned();
        // C H^{-1}
        let ch = fam.fact.h_solve_right(m, &c_blk)?;
        let s_rows = fam
            .fact
            .s1()
            .view((rm.start, 0), (rm.len(), ncols))
            .into_owned();
        coeff -= &ch * s_rows;
        pi_hat -= pis[m].clone() * ch.transpose();
    }

    // H_hat = H_n + int pi_hat pi_n^T w dt
    let mut h_hat = fam.fact.h_block(n).clone();
    for s in 0..nq {
        let wl = ws[s] * wv[s];
        let ph = pi_hat.row(s).transpose();
        let pn = pis[n].row(s).transpose();
        h_hat.ger(wl, &ph, &pn, C64::new(1.0, 0.0));
    }

    // collocated residual of the integral equation
    let kernel = if n == 0 {
        CMat::zeros(nq, nq)
    } else {
        let c = fam.cd_coeff_matrix(n - 1)?;
        let size = idx.cumulative(n - 1);
        let mut chi = CMat::zeros(nq, size);
        for (s, &t) in ts.iter().enumerate() {
            let x = cp.curve.eval(t);
            let v = idx.eval_chi_real(&x);
            for j in 0..size {
                chi[(s, j)] = v[j];
            }
        }
        &chi * c * chi.transpose()
    };
    let mut residual = 0.0f64;
    let pi_scale = pis[n].iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    for (s_t, _) in ts.iter().enumerate() {
        for j in 0..rn.len() {
            // pi_hat(t) + int pi_hat(s) K(gamma(s), gamma(t)) w(t) ds = pi(t)
            let mut integral = C64::new(0.0, 0.0);
            for s_s in 0..nq {
                integral += ws[s_s] * pi_hat[(s_s, j)] * kernel[(s_s, s_t)] * wv[s_t];
            }
            let r = (pi_hat[(s_t, j)] + integral - pis[n][(s_t, j)]).norm();
            residual = residual.max(r / pi_scale);
        }
    }

    let polys = (0..coeff.nrows())
        .map(|i| {
            Poly::from_terms(
                idx.dim(),
                (0..ncols)
                    .filter(|&j| coeff[(i, j)].norm() > 0.0)
                    .map(|j| (idx.index_at(j).clone(), coeff[(i, j)]))
                    .collect(),
            )
        })
        .collect();

    Ok(FredholmBlock {
        level: n,
        pi_hat,
        polys,
        h_hat,
        residual,
    })
}

/// Dense Nyström solve of the same discretized Fredholm equation,
/// ignoring the separability of the kernel; the independent oracle for
/// [`fredholm_1d`].
pub fn nystrom_solve(fam: &OpFamily, cp: &CurvePerturbation, n: usize) -> Result<CMat> {
    let idx = fam.idx();
    let (ts, ws, wv) = cp.rule();
    let nq = ts.len();
    let pin = pi_samples(fam, n, &ts, &cp.curve);
    if n == 0 {
        return Ok(pin);
    }
    let c = fam.cd_coeff_matrix(n - 1)?;
    let size = idx.cumulative(n - 1);
    let mut chi = CMat::zeros(nq, size);
    for (s, &t) in ts.iter().enumerate() {
        let x = cp.curve.eval(t);
        let v = idx.eval_chi_real(&x);
        for j in 0..size {
            chi[(s, j)] = v[j];
        }
    }
    let kernel = &chi * c * chi.transpose(); // K(gamma(s), gamma(t))
    // (I + M) pi_hat = pi with M_{ts} acting on sample index s
    let mut sys = CMat::identity(nq, nq);
    for t in 0..nq {
        for s in 0..nq {
            sys[(t, s)] += ws[s] * kernel[(s, t)] * wv[t];
        }
    }
    let scale = max_norm(&sys).max(1.0);
    if smallest_singular_value(&sys) < 1e-12 * scale {
        return Err(Error::SingularSystem);
    }
    solve(&sys, &pin)
}
