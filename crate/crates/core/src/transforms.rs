//! Rational spectral transformations of a functional-backed family:
//! pure denominator (Geronimus) and numerator/denominator (CGU)
//! perturbations, computed through quasi-determinants of the R matrix,
//! together with direct refactorization oracles, resolvent diagnostics
//! and the classical one-dimensional reductions.

use crate::block::{condition_estimate, max_norm, trust_max_diff, BlockMatrix};
use crate::error::{Error, Result};
use crate::factor::{block_cholesky, quasi_det_last, solve, Factorization};
use crate::family::{OpFamily, Side};
use crate::functional::{cauchy_transform_1d, BilinearGenerator, FunctionalSpec, FunctionalSum};
use crate::mindex::{poly_of_shifts, GradedIndexer, MultiIndex};
use crate::poly::{check_simple_roots, Poly};
use crate::{C64, CMat};

/// Maximum admissible condition estimate of a poised system.
pub const POISED_COND_MAX: f64 = 1e10;

/// Relative tolerance when recovering the transformed polynomials from
/// the quasi-determinant output by exact division.
pub const TRANSFORM_TOL: f64 = 1e-8;

/// Tolerance on |q1(p)| for user-supplied nodes, relative to the
/// coefficient scale of q1.
pub const NODE_TOL: f64 = 1e-9;

/// A rational spectral perturbation: the transformed functional solves
/// `q2 * u_hat = q1 * u`, with a discrete part `masses` supported on the
/// zero set of `q2`, and candidate `nodes` on the zero set of `q1`.
#[derive(Debug, Clone)]
pub struct TransformSpec {
    pub q1: Poly,
    pub q2: Poly,
    pub masses: FunctionalSpec,
    pub nodes: Vec<Vec<f64>>,
}

impl TransformSpec {
    pub fn identity(dim: usize) -> Self {
        TransformSpec {
            q1: Poly::one(dim),
            q2: Poly::one(dim),
            masses: FunctionalSpec::empty(),
            nodes: Vec::new(),
        }
    }

    /// Pure denominator perturbation (`q1 = 1`).
    pub fn geronimus(q2: Poly, masses: FunctionalSpec) -> Self {
        let dim = q2.dim();
        TransformSpec {
            q1: Poly::one(dim),
            q2,
            masses,
            nodes: Vec::new(),
        }
    }

    pub fn with_nodes(mut self, nodes: Vec<Vec<f64>>) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn m1(&self) -> usize {
        self.q1.degree()
    }

    pub fn m2(&self) -> usize {
        self.q2.degree()
    }

    pub fn is_identity(&self) -> bool {
        self.m1() == 0 && self.m2() == 0 && self.masses.components.is_empty()
    }

    /// Every node must lie on the zero set of `q1`.
    pub fn validate_nodes(&self) -> Result<()> {
        let scale: f64 = self
            .q1
            .terms()
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max)
            .max(1.0);
        for (i, p) in self.nodes.iter().enumerate() {
            let v = self.q1.eval_real(p).norm();
            if v > NODE_TOL * scale {
                return Err(Error::NodeOffVariety { index: i, value: v });
            }
        }
        Ok(())
    }

    /// The intermediate denominator-only functional part of the masses:
    /// the CGU R matrix pairs `v` against `P chi^T / q1`.
    fn theta_functional(&self) -> FunctionalSpec {
        if self.m1() > 0 {
            self.masses.with_divisor(&self.q1)
        } else {
            let c = self.q1.coeff(&MultiIndex::zeros(self.q1.dim()));
            if (c - C64::new(1.0, 0.0)).norm() > 1e-14 {
                self.masses.with_divisor(&self.q1)
            } else {
                self.masses.clone()
            }
        }
    }
}

/// The pairing matrix `R = <u_check, P(x) chi(x)^T>` of a transformation,
/// assembled entrywise through the functional.
#[derive(Debug, Clone)]
pub struct RMatrix {
    pub data: CMat,
    pub idx: GradedIndexer,
}

impl RMatrix {
    pub fn block(&self, k: usize, l: usize) -> CMat {
        let r = self.idx.level_range(k);
        let c = self.idx.level_range(l);
        self.data
            .view((r.start, c.start), (r.len(), c.len()))
            .into_owned()
    }

    /// Leading `N_k x N_k` truncation.
    pub fn truncation(&self, levels: usize) -> CMat {
        let n = self.idx.cumulative(levels - 1);
        self.data.view((0, 0), (n, n)).into_owned()
    }
}

fn diagonal_functional(fam: &OpFamily) -> Result<&FunctionalSum> {
    match &fam.gen {
        BilinearGenerator::Diagonal(u) => Ok(u),
        BilinearGenerator::Kernel(_) => Err(Error::Unsupported(
            "transformation R matrix requires a functional-backed family".into(),
        )),
    }
}

fn all_row_polys(fam: &OpFamily) -> Vec<Poly> {
    (0..=fam.n_max())
        .flat_map(|k| fam.poly_block(Side::One, k))
        .collect()
}

/// `R_{[k],[l]} = <u, P_[k] chi_[l]^T / q2> + <v, P_[k] chi_[l]^T / q1>`
/// (the second term only divides by `q1` when `deg q1 > 0`).
pub fn build_r_matrix(fam: &OpFamily, spec: &TransformSpec) -> Result<RMatrix> {
    let idx = fam.idx().clone();
    let u = diagonal_functional(fam)?;
    let rows = all_row_polys(fam);
    let divided = FunctionalSum(u.0.iter().map(|p| p.with_divisor(&spec.q2)).collect());
    let mut data = divided.pair_outer(&rows, &idx)?;
    if !spec.masses.components.is_empty() {
        data += spec.theta_functional().pair_outer(&rows, &idx)?;
    }
    Ok(RMatrix { data, idx })
}

/// A poised choice of R-matrix columns and variety nodes at one level.
#[derive(Debug, Clone)]
pub struct PoisedSelection {
    pub level: usize,
    /// Global column positions of the chosen multi-indices.
    pub beta_cols: Vec<usize>,
    /// Indices into the node pool of the spec.
    pub node_ids: Vec<usize>,
    pub condition_estimate: f64,
}

fn n_before(idx: &GradedIndexer, k: usize) -> usize {
    if k == 0 {
        0
    } else {
        idx.cumulative(k - 1)
    }
}

/// Required number of R columns at level `k`.
pub fn r2_count(idx: &GradedIndexer, k: usize, m2: usize) -> usize {
    if k < m2 {
        n_before(idx, k)
    } else {
        n_before(idx, k) - n_before(idx, k.saturating_sub(m2))
    }
}

/// Required number of nodes at level `k`.
pub fn r1_count(idx: &GradedIndexer, k: usize, m1: usize) -> usize {
    n_before(idx, k + m1) - n_before(idx, k)
}

struct SystemRows {
    lo: usize,
    row_start: usize,
    rows: usize,
}

fn system_rows(idx: &GradedIndexer, k: usize, m1: usize, m2: usize) -> SystemRows {
    let lo = k.saturating_sub(m2);
    let row_start = n_before(idx, lo);
    let rows = n_before(idx, k + m1) - row_start;
    SystemRows {
        lo,
        row_start,
        rows,
    }
}

fn node_column(fam: &OpFamily, lo: usize, hi: usize, p: &[f64]) -> CMat {
    let idx = fam.idx();
    let stacked = fam.eval_stacked(Side::One, hi, p);
    let start = n_before(idx, lo);
    let len = idx.cumulative(hi) - start;
    CMat::from_fn(len, 1, |i, _| stacked[start + i])
}

/// Greedy pivoted column selection: repeatedly pick the remaining column
/// with the largest residual norm whose type quota is not yet exhausted,
/// then deflate the rest.
fn pivoted_order(cols: &mut [CMat], allowed: &[bool]) -> Vec<usize> {
    let n = cols.len();
    let mut order = Vec::new();
    let mut used = vec![false; n];
    for _ in 0..n {
        let mut best: Option<(usize, f64)> = None;
        for (j, col) in cols.iter().enumerate() {
            if used[j] || !allowed[j] {
                continue;
            }
            let norm = col.norm();
            if best.map(|(_, b)| norm > b).unwrap_or(true) {
                best = Some((j, norm));
            }
        }
        let Some((j, norm)) = best else { break };
        used[j] = true;
        order.push(j);
        if norm < 1e-300 {
            continue;
        }
        let pivot = cols[j].clone().unscale(norm);
        for (l, col) in cols.iter_mut().enumerate() {
            if used[l] || !allowed[l] {
                continue;
            }
            let proj: C64 = pivot.iter().zip(col.iter()).map(|(a, b)| a.conj() * b).sum();
            *col -= pivot.clone() * proj;
        }
    }
    order
}

/// Select a poised set of R columns and nodes for level `k`.
pub fn select_poised(
    r: &RMatrix,
    fam: &OpFamily,
    spec: &TransformSpec,
    k: usize,
) -> Result<PoisedSelection> {
    let idx = fam.idx();
    let (m1, m2) = (spec.m1(), spec.m2());
    assert!(k + m1 <= idx.n_max(), "level exceeds the truncation budget");
    spec.validate_nodes()?;

    let need_r = r2_count(idx, k, m2);
    let need_n = r1_count(idx, k, m1);
    if need_r == 0 && need_n == 0 {
        return Ok(PoisedSelection {
            level: k,
            beta_cols: Vec::new(),
            node_ids: Vec::new(),
            condition_estimate: 1.0,
        });
    }
    if spec.nodes.len() < need_n {
        return Err(Error::NoPoisedSet {
            level: k,
            best_cond: f64::INFINITY,
        });
    }

    let sys = system_rows(idx, k, m1, m2);
    let r_candidates: Vec<usize> = (0..n_before(idx, k)).collect();
    let forced_r = k < m2; // every admissible column is needed

    // candidate columns: R columns first, then node columns
    let mut cols: Vec<CMat> = Vec::new();
    let mut kinds: Vec<bool> = Vec::new(); // true = R column
    for &c in &r_candidates {
        cols.push(
            r.data
                .view((sys.row_start, c), (sys.rows, 1))
                .into_owned(),
        );
        kinds.push(true);
    }
    for p in &spec.nodes {
        let col = node_column(fam, sys.lo, k + m1, p);
        cols.push(col.view((0, 0), (sys.rows, 1)).into_owned());
        kinds.push(false);
    }

    let assemble = |beta: &[usize], nodes: &[usize]| -> CMat {
        let mut m = CMat::zeros(sys.rows, need_r + need_n);
        for (j, &c) in beta.iter().enumerate() {
            m.view_mut((0, j), (sys.rows, 1)).copy_from(
                &r.data
                    .view((sys.row_start, c), (sys.rows, 1))
                    .into_owned(),
            );
        }
        for (j, &nid) in nodes.iter().enumerate() {
            let col = node_column(fam, sys.lo, k + m1, &spec.nodes[nid]);
            m.view_mut((0, need_r + j), (sys.rows, 1))
                .copy_from(&col.view((0, 0), (sys.rows, 1)).into_owned());
        }
        m
    };

    let evaluate = |beta: &[usize], nodes: &[usize]| -> f64 {
        condition_estimate(&assemble(beta, nodes))
    };

    // primary: pivoted order over the full candidate matrix with quotas
    let allowed: Vec<bool> = kinds
        .iter()
        .map(|&is_r| if is_r { !forced_r } else { true })
        .collect();
    let mut work = cols.clone();
    let order = pivoted_order(&mut work, &allowed);
    let mut beta: Vec<usize> = if forced_r {
        r_candidates.clone()
    } else {
        Vec::new()
    };
    let mut nodes: Vec<usize> = Vec::new();
    for j in order {
        if kinds[j] {
            if beta.len() < need_r {
                beta.push(r_candidates[j]);
            }
        } else if nodes.len() < need_n {
            nodes.push(j - r_candidates.len());
        }
    }
    beta.sort_unstable();
    nodes.sort_unstable();

    let mut best_cond = f64::INFINITY;
    if beta.len() == need_r && nodes.len() == need_n {
        let cond = evaluate(&beta, &nodes);
        best_cond = cond;
        if cond < POISED_COND_MAX {
            return Ok(PoisedSelection {
                level: k,
                beta_cols: beta,
                node_ids: nodes,
                condition_estimate: cond,
            });
        }
    }

    // fallback: the first admissible columns in graded order and the
    // leading nodes of the pool
    let beta_nat: Vec<usize> = r_candidates.iter().copied().take(need_r).collect();
    let nodes_nat: Vec<usize> = (0..need_n).collect();
    if beta_nat.len() == need_r {
        let cond = evaluate(&beta_nat, &nodes_nat);
        best_cond = best_cond.min(cond);
        if cond < POISED_COND_MAX {
            return Ok(PoisedSelection {
                level: k,
                beta_cols: beta_nat,
                node_ids: nodes_nat,
                condition_estimate: cond,
            });
        }
    }

    Err(Error::NoPoisedSet {
        level: k,
        best_cond,
    })
}

/// Transformed data at one level: the coefficient rows of the new
/// polynomial block (over the graded monomial basis, width `N_k`) and the
/// new quasi-tau block.
#[derive(Debug, Clone)]
pub struct TransformedBlock {
    pub level: usize,
    pub polys: Vec<Poly>,
    pub h_hat: CMat,
    pub selection: PoisedSelection,
}

impl TransformedBlock {
    /// Coefficient matrix (`|[k]| x N_k`) of the block over the monomial
    /// basis.
    pub fn coeff_rows(&self, idx: &GradedIndexer) -> CMat {
        let cols = idx.cumulative(self.level);
        let mut m = CMat::zeros(self.polys.len(), cols);
        for (i, p) in self.polys.iter().enumerate() {
            for (a, &c) in p.terms() {
                m[(i, idx.index_of(a).expect("in-range term"))] = c;
            }
        }
        m
    }
}

/// Pure Geronimus transformation (`q1 = 1`) at one level through the
/// R-matrix quasi-determinant formulas.
pub fn geronimus_transform(
    fam: &OpFamily,
    spec: &TransformSpec,
    k: usize,
) -> Result<TransformedBlock> {
    if spec.m1() != 0 {
        return Err(Error::Unsupported(
            "geronimus_transform requires a constant q1".into(),
        ));
    }
    let r = build_r_matrix(fam, spec)?;
    cgu_transform_with_r(fam, spec, &r, k)
}

/// Linear spectral (CGU) transformation at one level.
pub fn cgu_transform(fam: &OpFamily, spec: &TransformSpec, k: usize) -> Result<TransformedBlock> {
    let r = build_r_matrix(fam, spec)?;
    cgu_transform_with_r(fam, spec, &r, k)
}

/// CGU step with a precomputed R matrix (shared across levels).
pub fn cgu_transform_with_r(
    fam: &OpFamily,
    spec: &TransformSpec,
    r: &RMatrix,
    k: usize,
) -> Result<TransformedBlock> {
    let idx = fam.idx();
    let (m1, m2) = (spec.m1(), spec.m2());
    if k + m1 > idx.n_max() {
        return Err(Error::DegreeOverflow {
            requested: k + m1,
            max: idx.n_max(),
        });
    }
    let sel = select_poised(r, fam, spec, k)?;
    let sys = system_rows(idx, k, m1, m2);
    let ncols = sel.beta_cols.len() + sel.node_ids.len();

    // bordered system: A over rows lo..k+m1-1, border row block k+m1
    let border = idx.level_range(k + m1);
    let mut a = CMat::zeros(sys.rows, ncols);
    let mut c = CMat::zeros(border.len(), ncols);
    for (j, &col) in sel.beta_cols.iter().enumerate() {
        a.view_mut((0, j), (sys.rows, 1)).copy_from(
            &r.data
                .view((sys.row_start, col), (sys.rows, 1))
                .into_owned(),
        );
        c.view_mut((0, j), (border.len(), 1)).copy_from(
            &r.data
                .view((border.start, col), (border.len(), 1))
                .into_owned(),
        );
    }
    for (j, &nid) in sel.node_ids.iter().enumerate() {
        let col = node_column(fam, sys.lo, k + m1, &spec.nodes[nid]);
        a.view_mut((0, sel.beta_cols.len() + j), (sys.rows, 1))
            .copy_from(&col.view((0, 0), (sys.rows, 1)).into_owned());
        c.view_mut((0, sel.beta_cols.len() + j), (border.len(), 1))
            .copy_from(&col.view((sys.rows, 0), (border.len(), 1)).into_owned());
    }

    // w = C A^{-1}
    let w = if ncols == 0 {
        CMat::zeros(border.len(), 0)
    } else {
        solve(&a.transpose(), &c.transpose())?.transpose()
    };

    // prefactor (q1(Lambda))_{[k],[k+m1]}
    let q1l = poly_of_shifts(&spec.q1, idx);
    let rk = idx.level_range(k);
    let pref = q1l
        .view((rk.start, border.start), (rk.len(), border.len()))
        .into_owned();

    // polynomial part: Theta_* of the P-bordered matrix, in coefficients
    let width = idx.cumulative(k + m1);
    let s = fam.fact.s1();
    let s_rows = s.view((sys.row_start, 0), (sys.rows, width)).into_owned();
    let s_border = s.view((border.start, 0), (border.len(), width)).into_owned();
    let theta_p = s_border - &w * s_rows;
    let q1_phat = &pref * theta_p;

    let mut polys = Vec::with_capacity(rk.len());
    for i in 0..q1_phat.nrows() {
        let poly = Poly::from_terms(
            idx.dim(),
            (0..width)
                .filter(|&j| q1_phat[(i, j)].norm() > 0.0)
                .map(|j| (idx.index_at(j).clone(), q1_phat[(i, j)]))
                .collect(),
        );
        polys.push(poly.div_exact(&spec.q1, TRANSFORM_TOL)?);
    }

    // quasi-tau part: Theta_* with the R column block [k]
    let b_h = r
        .data
        .view((sys.row_start, rk.start), (sys.rows, rk.len()))
        .into_owned();
    let d_h = r
        .data
        .view((border.start, rk.start), (border.len(), rk.len()))
        .into_owned();
    let h_hat = &pref * (d_h - &w * b_h);

    Ok(TransformedBlock {
        level: k,
        polys,
        h_hat,
        selection: sel,
    })
}

/// The transformed functional `u_hat = (q1 / q2) u + v` as a component sum.
pub fn hat_functional(u: &FunctionalSum, spec: &TransformSpec) -> FunctionalSum {
    let mut parts = Vec::new();
    for part in &u.0 {
        let mut p = part.clone();
        if spec.m1() > 0 || (spec.q1.coeff(&MultiIndex::zeros(spec.q1.dim()))
            - C64::new(1.0, 0.0))
        .norm()
            > 1e-14
        {
            p = p.with_poly_factor(&spec.q1);
        }
        if spec.m2() > 0
            || (spec.q2.coeff(&MultiIndex::zeros(spec.q2.dim())) - C64::new(1.0, 0.0)).norm()
                > 1e-14
        {
            p = p.with_divisor(&spec.q2);
        }
        parts.push(p);
    }
    if !spec.masses.components.is_empty() {
        parts.push(spec.masses.clone());
    }
    FunctionalSum(parts)
}

/// The intermediate Geronimus functional `u_check = u / q2 + v / q1`.
pub fn check_functional(u: &FunctionalSum, spec: &TransformSpec) -> FunctionalSum {
    let mut parts: Vec<FunctionalSpec> =
        u.0.iter().map(|p| p.with_divisor(&spec.q2)).collect();
    if !spec.masses.components.is_empty() {
        parts.push(spec.theta_functional());
    }
    FunctionalSum(parts)
}

/// Direct refactorization oracle: build the moment matrix of the
/// transformed functional entrywise and factor it.
pub fn oracle_transform(fam: &OpFamily, spec: &TransformSpec) -> Result<OpFamily> {
    let u = diagonal_functional(fam)?;
    let hat = hat_functional(u, spec);
    let g = hat.moment_matrix(fam.idx())?;
    let fact = block_cholesky(&BlockMatrix::new(g, fam.idx().clone()))?;
    Ok(OpFamily {
        fact,
        gen: BilinearGenerator::Diagonal(hat),
    })
}

/// Residual of the moment-matrix intertwining
/// `q2(Lambda) G_hat == q1(Lambda) G` on the trusted block rows.
pub fn moment_identity_residual(
    fam: &OpFamily,
    hat: &OpFamily,
    spec: &TransformSpec,
) -> Result<f64> {
    let idx = fam.idx();
    let zero = crate::functional::TimeSeries::zero();
    let g = fam.gen.gram_matrix(idx, &zero, &zero)?;
    let g_hat = hat.gen.gram_matrix(idx, &zero, &zero)?;
    let lhs = poly_of_shifts(&spec.q2, idx) * g_hat;
    let rhs = poly_of_shifts(&spec.q1, idx) * g;
    let k_max = idx.n_max() - spec.m1().max(spec.m2());
    Ok(trust_max_diff(&lhs, &rhs, idx, k_max, idx.n_max()))
}

/// Resolvent matrices of a transformation pair.
#[derive(Debug, Clone)]
pub struct Resolvents {
    pub omega1: CMat,
    pub omega2: CMat,
}

/// `omega1 = S1_hat q1(Lambda) S1^{-1}`,
/// `omega2 = (S2 q2(Lambda) S2_hat^{-1})^T`.
pub fn resolvents(base: &Factorization, hat: &Factorization, spec: &TransformSpec) -> Resolvents {
    let idx = &base.idx;
    let q1l = poly_of_shifts(&spec.q1, idx);
    let q2l = poly_of_shifts(&spec.q2, idx);
    let omega1 = hat.s1() * q1l * base.s1_inv();
    let omega2 = (base.s2() * q2l * hat.s2_inv()).transpose();
    Resolvents { omega1, omega2 }
}

/// Structural residuals of the resolvent identities.
#[derive(Debug, Clone)]
pub struct ResolventReport {
    /// Strictly lower blocks of `omega1 R`, relative to its trusted scale.
    pub lower_max: f64,
    /// Relative deviation of the diagonal blocks of `omega1 R` from
    /// `H_hat`.
    pub diag_rel: f64,
    /// Blocks of `omega1` outside the `m1`/`m2` band, relative to its
    /// trusted scale.
    pub band_max: f64,
    /// Relative residual of `H_hat omega2 == omega1 H`.
    pub quasi_tau_rel: f64,
}

pub fn resolvent_checks(
    base: &OpFamily,
    hat: &OpFamily,
    spec: &TransformSpec,
    r: &RMatrix,
) -> Result<ResolventReport> {
    let idx = base.idx();
    let res = resolvents(&base.fact, &hat.fact, spec);
    let (m1, m2) = (spec.m1(), spec.m2());
    let k_trust = idx.n_max() - m1;

    let omega_r = &res.omega1 * &r.data;
    let omega_r_scale = crate::block::trust_max_norm(&omega_r, idx, k_trust, idx.n_max()).max(1e-300);
    let mut lower_max = 0.0f64;
    let mut diag_rel = 0.0f64;
    for k in 0..=k_trust {
        let rk = idx.level_range(k);
        for l in 0..k {
            let rl = idx.level_range(l);
            let blk = omega_r
                .view((rk.start, rl.start), (rk.len(), rl.len()))
                .into_owned();
            lower_max = lower_max.max(max_norm(&blk) / omega_r_scale);
        }
        let diag = omega_r
            .view((rk.start, rk.start), (rk.len(), rk.len()))
            .into_owned();
        let h_hat = hat.fact.h_block(k);
        let denom = max_norm(h_hat).max(1e-300);
        diag_rel = diag_rel.max(max_norm(&(diag - h_hat)) / denom);
    }

    let omega_scale = crate::block::trust_max_norm(&res.omega1, idx, k_trust, idx.n_max()).max(1e-300);
    let mut band_max = 0.0f64;
    for k in 0..=k_trust {
        let rk = idx.level_range(k);
        for l in 0..=idx.n_max() {
            if l + m2 >= k && l <= k + m1 {
                continue;
            }
            let rl = idx.level_range(l);
            let blk = res
                .omega1
                .view((rk.start, rl.start), (rk.len(), rl.len()))
                .into_owned();
            band_max = band_max.max(max_norm(&blk) / omega_scale);
        }
    }

    // omega2 columns beyond n_max - m2 are contaminated by the truncation
    let h = base.fact.h_matrix();
    let h_hat = hat.fact.h_matrix();
    let lhs = &h_hat * &res.omega2;
    let rhs = &res.omega1 * &h;
    let row_trust = idx.n_max() - m1;
    let col_trust = idx.n_max() - m2;
    let scale = crate::block::trust_max_norm(&rhs, idx, row_trust, col_trust).max(1e-300);
    let quasi_tau_rel = trust_max_diff(&lhs, &rhs, idx, row_trust, col_trust) / scale;

    Ok(ResolventReport {
        lower_max,
        diag_rel,
        band_max,
        quasi_tau_rel,
    })
}

/// Residuals of the Jacobi-side factorizations:
/// `q1(J) q2(J) == omega2^T omega1` on trusted blocks, and the
/// truncation-determinant identity for the Geronimus case.
pub fn jacobi_factorization_residuals(
    base: &OpFamily,
    hat: &OpFamily,
    spec: &TransformSpec,
) -> Result<(f64, f64)> {
    let idx = base.idx();
    let res = resolvents(&base.fact, &hat.fact, spec);
    let q12 = spec.q1.mul(&spec.q2);
    let j_poly = base.fact.s1() * poly_of_shifts(&q12, idx) * base.fact.s1_inv();
    let prod = res.omega2.transpose() * &res.omega1;
    let k_trust = idx.n_max() - spec.m1() - spec.m2();
    let scale = crate::block::trust_max_norm(&j_poly, idx, k_trust, k_trust).max(1e-300);
    let fact_res = trust_max_diff(&j_poly, &prod, idx, k_trust, k_trust) / scale;

    // det identity (denominator-only case): det[(q2(J_hat))^{[k]}]
    // equals prod_{l<k} det H_[l] / det H_hat_[l]
    let mut det_res = 0.0f64;
    if spec.m1() == 0 {
        let jq2_hat = hat.fact.s1() * poly_of_shifts(&spec.q2, idx) * hat.fact.s1_inv();
        let mut ratio = C64::new(1.0, 0.0);
        for k in 1..=(idx.n_max() - spec.m2() + 1) {
            ratio *= base.fact.h_det(k - 1) / hat.fact.h_det(k - 1);
            let n = idx.cumulative(k - 1);
            let det = jq2_hat.view((0, 0), (n, n)).into_owned().lu().determinant();
            let rel = (det - ratio).norm() / ratio.norm().max(1e-300);
            det_res = det_res.max(rel);
        }
    }
    Ok((fact_res, det_res))
}

/// Companion data of the one-dimensional reduction at a level:
/// phi values and the transformed pair.
#[derive(Debug, Clone)]
pub struct Cauchy1dBlock {
    pub p_hat: Poly,
    pub h_hat: C64,
}

/// One-dimensional reduction through Cauchy transforms: builds
/// `phi_l(q_j, xi_j) = C_l(q_j) + xi_j P_l(q_j)` at the simple roots of
/// `q2`, assembles the bordered quasi-determinants and returns the
/// transformed pair. Requires `k >= deg q2`.
pub fn reduce_1d_cauchy(fam: &OpFamily, spec: &TransformSpec, k: usize) -> Result<Cauchy1dBlock> {
    let idx = fam.idx();
    if idx.dim() != 1 {
        return Err(Error::Unsupported("reduce_1d_cauchy requires D = 1".into()));
    }
    let (m1, m2) = (spec.m1(), spec.m2());
    if k < m2 || k + m1 > idx.n_max() {
        return Err(Error::DegreeOverflow {
            requested: k,
            max: idx.n_max(),
        });
    }
    let u = diagonal_functional(fam)?;
    if u.0.len() != 1 {
        return Err(Error::Unsupported(
            "reduce_1d_cauchy expects a single-part base functional".into(),
        ));
    }
    let c1 = leading_coeff_1d(&spec.q1);
    let c2 = leading_coeff_1d(&spec.q2);
    if m1 > 0 && m2 > 0 && spec.q1.resultant_1d(&spec.q2).norm() < 1e-9 {
        return Err(Error::Unsupported("q1 and q2 share a root".into()));
    }

    let q_roots = spec.q2.roots_1d()?;
    check_simple_roots(&q_roots, 1e-7)?;
    let p_roots = spec.q1.roots_1d()?;
    check_simple_roots(&p_roots, 1e-7)?;
    let q1_monic = Poly::from_roots_1d(&p_roots);

    // masses matched to the roots of q2
    let zeta = match_masses_to_roots(&spec.masses, &q_roots)?;

    // xi_j = zeta_j * (c2 / c1) * prod_{i != j} (q_j - q_i) / q1m(q_j)
    let mut xi = vec![C64::new(0.0, 0.0); q_roots.len()];
    for (j, &qj) in q_roots.iter().enumerate() {
        let mut prod = C64::new(1.0, 0.0);
        for (i, &qi) in q_roots.iter().enumerate() {
            if i != j {
                prod *= qj - qi;
            }
        }
        let q1_at = q1_monic.eval(&[qj]);
        xi[j] = zeta[j] * (c2 / c1) * prod / q1_at;
    }

    // phi table for levels k - m2 .. k + m1
    let base = &u.0[0];
    let polys: Vec<Poly> = (0..=idx.n_max())
        .map(|l| fam.poly_block(Side::One, l).remove(0))
        .collect();
    let lo = k - m2;
    let hi = k + m1;
    let nrows = hi - lo + 1;
    let ncols = m2 + m1;
    let mut m = CMat::zeros(nrows, ncols);
    for (row, l) in (lo..=hi).enumerate() {
        for (j, &qj) in q_roots.iter().enumerate() {
            let c_l = cauchy_transform_1d(base, &polys[l], qj)?;
            m[(row, j)] = c_l + xi[j] * polys[l].eval(&[qj]);
        }
        for (j, &pj) in p_roots.iter().enumerate() {
            m[(row, m2 + j)] = polys[l].eval(&[pj]);
        }
    }

    let a = m.view((0, 0), (nrows - 1, ncols)).into_owned();
    let c = m.view((nrows - 1, 0), (1, ncols)).into_owned();

    // polynomial column
    let mut p_hat = polys[hi].clone();
    if ncols > 0 {
        let w = solve(&a.transpose(), &c.transpose())?.transpose();
        for (row, l) in (lo..hi).enumerate() {
            p_hat = p_hat.sub(&polys[l].scale(w[(0, row)]));
        }
    }
    let p_hat = p_hat.div_exact(&q1_monic, TRANSFORM_TOL)?;

    // quasi-tau column: (H_{k-m2}, 0, ..., 0)^T with prefactor c1 / c2
    let h_lo = fam.fact.h_block(lo)[(0, 0)];
    let h_hat = if ncols > 0 {
        let mut b = CMat::zeros(nrows - 1, 1);
        b[(0, 0)] = h_lo;
        let theta = quasi_det_last(&a, &b, &c, &CMat::zeros(1, 1))?[(0, 0)];
        theta * c1 / c2
    } else {
        h_lo * c1 / c2
    };

    Ok(Cauchy1dBlock { p_hat, h_hat })
}

fn leading_coeff_1d(q: &Poly) -> C64 {
    q.coeff(&MultiIndex(vec![q.degree() as u32]))
}

fn match_masses_to_roots(masses: &FunctionalSpec, roots: &[C64]) -> Result<Vec<C64>> {
    let mut zeta = vec![C64::new(0.0, 0.0); roots.len()];
    for comp in &masses.components {
        match comp {
            crate::functional::FunctionalComponent::Discrete { atoms, poly_factor } => {
                if poly_factor.is_some() {
                    return Err(Error::Unsupported(
                        "mass components with polynomial factors in the 1D reduction".into(),
                    ));
                }
                for (p, w) in atoms {
                    let x = C64::new(p[0], 0.0);
                    let j = roots
                        .iter()
                        .position(|&r| (r - x).norm() < 1e-7)
                        .ok_or_else(|| {
                            Error::Unsupported(
                                "mass atom off the zero set of q2 in the 1D reduction".into(),
                            )
                        })?;
                    zeta[j] += *w;
                }
            }
            _ => {
                return Err(Error::Unsupported(
                    "only point masses are supported by the 1D reduction".into(),
                ))
            }
        }
    }
    Ok(zeta)
}

/// The Vandermonde and root-product matrices linking the R entries to
/// Cauchy transforms in one dimension; used by cross-path tests.
pub fn vandermonde_link(roots: &[C64], m2: usize) -> (CMat, CMat) {
    let v = CMat::from_fn(m2, roots.len(), |i, j| roots[j].powu(i as u32));
    let d = CMat::from_fn(roots.len(), roots.len(), |i, j| {
        if i != j {
            return C64::new(0.0, 0.0);
        }
        let mut prod = C64::new(1.0, 0.0);
        for (l, &r) in roots.iter().enumerate() {
            if l != i {
                prod *= roots[i] - r;
            }
        }
        prod
    });
    (v, d)
}
