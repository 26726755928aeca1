//! Constructive linear functionals and bilinear Gram generators.
//!
//! A functional is a finite sum of components (quadrature density,
//! discrete measure, Dirac multipole, curve measure) with an optional
//! global polynomial divisor. Quadrature-backed components discretize to
//! weighted node sets once, so every downstream identity holds exactly
//! for the discretized functional — agreement between independent code
//! paths is then limited only by roundoff, not by quadrature error.

use crate::error::{Error, Result};
use crate::mindex::{GradedIndexer, MultiIndex};
use crate::poly::Poly;
use crate::quad::{gauss_legendre_on, tensor_gauss};
use crate::{C64, CMat, CVec};
use std::collections::BTreeMap;

/// Default tolerance on |divisor| at support points.
pub const DIVISOR_TOL: f64 = 1e-8;

/// Built-in weight profiles for densities and curve measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weight {
    /// Constant one.
    Lebesgue,
    /// Per-axis `1/sqrt(1 - t^2)` after mapping the axis to `[-1, 1]`.
    Chebyshev,
    /// `exp(-|x|^2)` in the physical coordinates.
    Gaussian,
}

impl Weight {
    pub(crate) fn eval_box(&self, box_: &[(f64, f64)], x: &[f64]) -> f64 {
        match self {
            Weight::Lebesgue => 1.0,
            Weight::Chebyshev => box_
                .iter()
                .zip(x)
                .map(|(&(a, b), &xi)| {
                    let t = (2.0 * xi - a - b) / (b - a);
                    1.0 / (1.0 - t * t).sqrt()
                })
                .product(),
            Weight::Gaussian => (-x.iter().map(|v| v * v).sum::<f64>()).exp(),
        }
    }

    fn eval_interval(&self, interval: (f64, f64), t: f64) -> f64 {
        self.eval_box(&[interval], &[t])
    }
}

/// Built-in parametrized curves in `R^D`.
#[derive(Debug, Clone, PartialEq)]
pub enum Curve {
    /// `gamma(t) = from + t * (to - from)`.
    Segment { from: Vec<f64>, to: Vec<f64> },
    /// Arc in the `(x_1, x_2)` plane: `center + radius (cos t, sin t)`,
    /// remaining coordinates held at the center.
    CircleArc { center: Vec<f64>, radius: f64 },
}

impl Curve {
    pub fn dim(&self) -> usize {
        match self {
            Curve::Segment { from, .. } => from.len(),
            Curve::CircleArc { center, .. } => center.len(),
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        match self {
            Curve::Segment { from, to } => from
                .iter()
                .zip(to)
                .map(|(&a, &b)| a + t * (b - a))
                .collect(),
            Curve::CircleArc { center, radius } => {
                let mut p = center.clone();
                p[0] += radius * t.cos();
                p[1] += radius * t.sin();
                p
            }
        }
    }
}

/// One constructive piece of a linear functional.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalComponent {
    /// `P -> int_box P(x) f(x) w(x) dx` by tensor Gauss–Legendre.
    Density {
        box_: Vec<(f64, f64)>,
        weight: Weight,
        nodes: usize,
        poly_factor: Option<Poly>,
    },
    /// `P -> sum_i w_i P(x_i)`.
    Discrete {
        atoms: Vec<(Vec<f64>, C64)>,
        poly_factor: Option<Poly>,
    },
    /// `P -> c * (d^alpha P)(x) / alpha!`.
    Multipole {
        point: Vec<f64>,
        deriv: MultiIndex,
        coef: C64,
        poly_factor: Option<Poly>,
    },
    /// `P -> scale * int P(gamma(t)) f(gamma(t)) w(t) dt` by Gauss–Legendre
    /// in the parameter.
    CurveMeasure {
        curve: Curve,
        interval: (f64, f64),
        weight: Weight,
        nodes: usize,
        scale: C64,
        poly_factor: Option<Poly>,
    },
}

impl FunctionalComponent {
    pub fn density(box_: Vec<(f64, f64)>, weight: Weight, nodes: usize) -> Self {
        FunctionalComponent::Density {
            box_,
            weight,
            nodes,
            poly_factor: None,
        }
    }

    pub fn discrete(atoms: Vec<(Vec<f64>, C64)>) -> Self {
        FunctionalComponent::Discrete {
            atoms,
            poly_factor: None,
        }
    }

    pub fn multipole(point: Vec<f64>, deriv: MultiIndex, coef: C64) -> Self {
        FunctionalComponent::Multipole {
            point,
            deriv,
            coef,
            poly_factor: None,
        }
    }

    fn poly_factor_mut(&mut self) -> &mut Option<Poly> {
        match self {
            FunctionalComponent::Density { poly_factor, .. }
            | FunctionalComponent::Discrete { poly_factor, .. }
            | FunctionalComponent::Multipole { poly_factor, .. }
            | FunctionalComponent::CurveMeasure { poly_factor, .. } => poly_factor,
        }
    }
}

/// A linear functional as a finite component sum with an optional divisor:
/// the functional acts as `P -> <components, P/Q>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalSpec {
    pub components: Vec<FunctionalComponent>,
    pub divisor: Option<Poly>,
    pub divisor_tol: f64,
}

impl FunctionalSpec {
    pub fn new(components: Vec<FunctionalComponent>) -> Self {
        FunctionalSpec {
            components,
            divisor: None,
            divisor_tol: DIVISOR_TOL,
        }
    }

    pub fn lebesgue_box(box_: Vec<(f64, f64)>, nodes: usize) -> Self {
        FunctionalSpec::new(vec![FunctionalComponent::density(
            box_,
            Weight::Lebesgue,
            nodes,
        )])
    }

    pub fn empty() -> Self {
        FunctionalSpec::new(Vec::new())
    }

    /// Compose an extra divisor (multiplies any existing one).
    pub fn with_divisor(&self, q: &Poly) -> Self {
        let mut out = self.clone();
        out.divisor = Some(match &self.divisor {
            Some(d) => d.mul(q),
            None => q.clone(),
        });
        out
    }

    /// Fold a polynomial multiplier into every component.
    pub fn with_poly_factor(&self, q: &Poly) -> Self {
        let mut out = self.clone();
        for comp in &mut out.components {
            let slot = comp.poly_factor_mut();
            *slot = Some(match slot {
                Some(f) => f.mul(q),
                None => q.clone(),
            });
        }
        out
    }

    /// Visit every quadrature node / discrete atom with its final weight
    /// (poly factors, curve scales and the divisor folded in). Multipole
    /// components are not visited; their exact jet action is applied in
    /// `apply` and the assembly routines.
    pub fn for_each_quad_node<F: FnMut(&[f64], C64)>(&self, mut f: F) -> Result<()> {
        let tol = self.divisor_tol;
        let mut emit = |x: &[f64], mut w: C64, factor: &Option<Poly>| -> Result<()> {
            if let Some(p) = factor {
                w *= p.eval_real(x);
            }
            if let Some(q) = &self.divisor {
                let qv = q.eval_real(x);
                if qv.norm() <= tol {
                    return Err(Error::DivisorNearZero {
                        value: qv.norm(),
                        tol,
                    });
                }
                w /= qv;
            }
            f(x, w);
            Ok(())
        };
        for comp in &self.components {
            match comp {
                FunctionalComponent::Density {
                    box_,
                    weight,
                    nodes,
                    poly_factor,
                } => {
                    let (pts, ws) = tensor_gauss(box_, *nodes);
                    for (p, wq) in pts.iter().zip(ws) {
                        let w = wq * weight.eval_box(box_, p);
                        emit(p, C64::new(w, 0.0), poly_factor)?;
                    }
                }
                FunctionalComponent::Discrete { atoms, poly_factor } => {
                    for (p, w) in atoms {
                        emit(p, *w, poly_factor)?;
                    }
                }
                FunctionalComponent::Multipole { .. } => {}
                FunctionalComponent::CurveMeasure {
                    curve,
                    interval,
                    weight,
                    nodes,
                    scale,
                    poly_factor,
                } => {
                    let (ts, ws) = gauss_legendre_on(*nodes, interval.0, interval.1);
                    for (&t, wq) in ts.iter().zip(ws) {
                        let p = curve.eval(t);
                        let w = *scale * wq * weight.eval_interval(*interval, t);
                        emit(&p, w, poly_factor)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn multipoles(&self) -> impl Iterator<Item = (&[f64], &MultiIndex, C64, &Option<Poly>)> {
        self.components.iter().filter_map(|c| match c {
            FunctionalComponent::Multipole {
                point,
                deriv,
                coef,
                poly_factor,
            } => Some((point.as_slice(), deriv, *coef, poly_factor)),
            _ => None,
        })
    }

    /// `(1/alpha!) d^alpha (factor * f / divisor)` at `point`, by exact
    /// Taylor-jet arithmetic.
    fn multipole_action(
        &self,
        f: &Poly,
        point: &[f64],
        deriv: &MultiIndex,
        factor: &Option<Poly>,
    ) -> Result<C64> {
        let order = deriv.degree();
        let mut jet = f.taylor_at(point).truncate_degree(order);
        if let Some(p) = factor {
            jet = jet.mul(&p.taylor_at(point)).truncate_degree(order);
        }
        if let Some(q) = &self.divisor {
            let qv = q.eval_real(point);
            if qv.norm() <= self.divisor_tol {
                return Err(Error::DivisorNearZero {
                    value: qv.norm(),
                    tol: self.divisor_tol,
                });
            }
            let qinv = q.taylor_at(point).series_inverse(order)?;
            jet = jet.mul(&qinv).truncate_degree(order);
        }
        Ok(jet.coeff(deriv))
    }

    /// Apply the functional to a polynomial.
    pub fn apply(&self, f: &Poly) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        self.for_each_quad_node(|x, w| acc += w * f.eval_real(x))?;
        for (point, deriv, coef, factor) in self.multipoles() {
            acc += coef * self.multipole_action(f, point, deriv, factor)?;
        }
        Ok(acc)
    }

    /// Moment `<u, x^alpha>`.
    pub fn moment(&self, alpha: &MultiIndex) -> Result<C64> {
        self.apply(&Poly::monomial(alpha.clone(), C64::new(1.0, 0.0)))
    }

    /// Moment matrix `<u, chi chi^T>` on the truncation.
    pub fn moment_matrix(&self, idx: &GradedIndexer) -> Result<CMat> {
        moment_matrix_sum(std::slice::from_ref(self), idx)
    }

    /// Outer pairing `<u, f_i(x) x^beta_j>` as a `rows.len() x N` matrix,
    /// with the columns running over the graded monomial basis.
    pub fn pair_outer(&self, rows: &[Poly], idx: &GradedIndexer) -> Result<CMat> {
        let n = idx.total();
        let mut m = CMat::zeros(rows.len(), n);
        self.for_each_quad_node(|x, w| {
            let chi = idx.eval_chi_real(x);
            let fx = CVec::from_iterator(rows.len(), rows.iter().map(|p| p.eval_real(x)));
            m.ger(w, &fx, &chi, C64::new(1.0, 0.0));
        })?;
        for (point, deriv, coef, factor) in self.multipoles() {
            for (i, p) in rows.iter().enumerate() {
                for j in 0..n {
                    let prod = p.mul(&Poly::monomial(
                        idx.index_at(j).clone(),
                        C64::new(1.0, 0.0),
                    ));
                    m[(i, j)] += coef * self.multipole_action(&prod, point, deriv, factor)?;
                }
            }
        }
        Ok(m)
    }
}

/// A formal sum of functionals; used for perturbed functionals whose
/// pieces carry different divisors.
#[derive(Debug, Clone)]
pub struct FunctionalSum(pub Vec<FunctionalSpec>);

impl From<FunctionalSpec> for FunctionalSum {
    fn from(spec: FunctionalSpec) -> Self {
        FunctionalSum(vec![spec])
    }
}

impl FunctionalSum {
    pub fn apply(&self, f: &Poly) -> Result<C64> {
        let mut acc = C64::new(0.0, 0.0);
        for part in &self.0 {
            acc += part.apply(f)?;
        }
        Ok(acc)
    }

    pub fn moment(&self, alpha: &MultiIndex) -> Result<C64> {
        self.apply(&Poly::monomial(alpha.clone(), C64::new(1.0, 0.0)))
    }

    pub fn moment_matrix(&self, idx: &GradedIndexer) -> Result<CMat> {
        let parts: Vec<&FunctionalSpec> = self.0.iter().collect();
        moment_matrix_refs(&parts, idx)
    }

    pub fn for_each_quad_node<F: FnMut(&[f64], C64)>(&self, mut f: F) -> Result<()> {
        for part in &self.0 {
            part.for_each_quad_node(&mut f)?;
        }
        Ok(())
    }

    pub fn pair_outer(&self, rows: &[Poly], idx: &GradedIndexer) -> Result<CMat> {
        let mut acc = CMat::zeros(rows.len(), idx.total());
        for part in &self.0 {
            acc += part.pair_outer(rows, idx)?;
        }
        Ok(acc)
    }
}

/// Moment matrix of a sum of functionals, assembled by node outer
/// products plus exact multipole jets.
pub fn moment_matrix_sum(parts: &[FunctionalSpec], idx: &GradedIndexer) -> Result<CMat> {
    let refs: Vec<&FunctionalSpec> = parts.iter().collect();
    moment_matrix_refs(&refs, idx)
}

fn moment_matrix_refs(parts: &[&FunctionalSpec], idx: &GradedIndexer) -> Result<CMat> {
    let n = idx.total();
    let mut g = CMat::zeros(n, n);
    for part in parts {
        part.for_each_quad_node(|x, w| {
            let chi = idx.eval_chi_real(x);
            g.ger(w, &chi, &chi, C64::new(1.0, 0.0));
        })?;
        for (point, deriv, coef, factor) in part.multipoles() {
            for i in 0..n {
                for j in 0..=i {
                    let mono = Poly::monomial(
                        idx.index_at(i).add(idx.index_at(j)),
                        C64::new(1.0, 0.0),
                    );
                    let v = coef * part.multipole_action(&mono, point, deriv, factor)?;
                    g[(i, j)] += v;
                    if i != j {
                        g[(j, i)] += v;
                    }
                }
            }
        }
    }
    Ok(g)
}

/// Exponential reweighting data for deformed Gram matrices: a sparse set
/// of coefficients `t_alpha` defining `t(x) = sum_alpha t_alpha x^alpha`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub coeffs: BTreeMap<MultiIndex, C64>,
}

impl TimeSeries {
    pub fn zero() -> Self {
        TimeSeries::default()
    }

    pub fn single(alpha: MultiIndex, value: C64) -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(alpha, value);
        TimeSeries { coeffs }
    }

    pub fn set(&mut self, alpha: MultiIndex, value: C64) {
        if value.norm() == 0.0 {
            self.coeffs.remove(&alpha);
        } else {
            self.coeffs.insert(alpha, value);
        }
    }

    pub fn get(&self, alpha: &MultiIndex) -> C64 {
        self.coeffs
            .get(alpha)
            .copied()
            .unwrap_or_else(|| C64::new(0.0, 0.0))
    }

    pub fn shifted(&self, alpha: &MultiIndex, delta: C64) -> Self {
        let mut out = self.clone();
        out.set(alpha.clone(), self.get(alpha) + delta);
        out
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Largest active total degree.
    pub fn max_degree(&self) -> usize {
        self.coeffs.keys().map(|a| a.degree()).max().unwrap_or(0)
    }

    pub fn eval_real(&self, x: &[f64]) -> C64 {
        self.coeffs
            .iter()
            .map(|(a, &c)| c * a.eval_real(x))
            .sum()
    }

    pub fn eval(&self, x: &[C64]) -> C64 {
        self.coeffs.iter().map(|(a, &c)| c * a.eval(x)).sum()
    }

    /// The polynomial `t(x)` itself.
    pub fn as_poly(&self, dim: usize) -> Poly {
        Poly::from_terms(
            dim,
            self.coeffs.iter().map(|(a, &c)| (a.clone(), c)).collect(),
        )
    }
}

/// Generator of a bilinear Gram pairing on polynomials.
#[derive(Debug, Clone)]
pub enum BilinearGenerator {
    /// `<x^alpha, x^beta> = <u, x^{alpha + beta}>`; Gram matrices are
    /// multi-Hankel.
    Diagonal(FunctionalSum),
    /// `<x^alpha, y^beta> = sum_s w_s x_s^alpha y_s^beta` over point pairs.
    Kernel(Vec<(Vec<f64>, Vec<f64>, C64)>),
}

impl BilinearGenerator {
    pub fn diagonal(u: FunctionalSpec) -> Self {
        BilinearGenerator::Diagonal(u.into())
    }

    /// Kernel generator from tensor grids on two boxes coupled by
    /// `exp(x . y)`, a full-rank positive coupling.
    pub fn kernel_exp_coupling(
        box_x: &[(f64, f64)],
        box_y: &[(f64, f64)],
        nodes: usize,
    ) -> Self {
        let (px, wx) = tensor_gauss(box_x, nodes);
        let (py, wy) = tensor_gauss(box_y, nodes);
        let mut pairs = Vec::with_capacity(px.len() * py.len());
        for (x, &wxs) in px.iter().zip(&wx) {
            for (y, &wys) in py.iter().zip(&wy) {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                pairs.push((x.clone(), y.clone(), C64::new(wxs * wys * dot.exp(), 0.0)));
            }
        }
        BilinearGenerator::Kernel(pairs)
    }

    /// Single Gram entry under optional exponential deformation
    /// `<e^{t1(x)} x^alpha, y^beta e^{-t2(y)}>`.
    pub fn gram_entry(
        &self,
        alpha: &MultiIndex,
        beta: &MultiIndex,
        t1: &TimeSeries,
        t2: &TimeSeries,
    ) -> Result<C64> {
        match self {
            BilinearGenerator::Diagonal(u) => {
                if t1.is_zero() && t2.is_zero() {
                    return u.moment(&alpha.add(beta));
                }
                ensure_no_multipoles(u)?;
                let mut acc = C64::new(0.0, 0.0);
                let mono = alpha.add(beta);
                u.for_each_quad_node(|x, w| {
                    let phase = (t1.eval_real(x) - t2.eval_real(x)).exp();
                    acc += w * phase * mono.eval_real(x);
                })?;
                Ok(acc)
            }
            BilinearGenerator::Kernel(pairs) => {
                let mut acc = C64::new(0.0, 0.0);
                for (x, y, w) in pairs {
                    let phase = (t1.eval_real(x) - t2.eval_real(y)).exp();
                    acc += w * phase * alpha.eval_real(x) * beta.eval_real(y);
                }
                Ok(acc)
            }
        }
    }

    /// Full Gram matrix under optional exponential deformation.
    pub fn gram_matrix(
        &self,
        idx: &GradedIndexer,
        t1: &TimeSeries,
        t2: &TimeSeries,
    ) -> Result<CMat> {
        let n = idx.total();
        match self {
            BilinearGenerator::Diagonal(u) => {
                if t1.is_zero() && t2.is_zero() {
                    return u.moment_matrix(idx);
                }
                ensure_no_multipoles(u)?;
                let mut g = CMat::zeros(n, n);
                u.for_each_quad_node(|x, w| {
                    let phase = (t1.eval_real(x) - t2.eval_real(x)).exp();
                    let chi = idx.eval_chi_real(x);
                    g.ger(w * phase, &chi, &chi, C64::new(1.0, 0.0));
                })?;
                Ok(g)
            }
            BilinearGenerator::Kernel(pairs) => {
                let mut g = CMat::zeros(n, n);
                for (x, y, w) in pairs {
                    let phase = (t1.eval_real(x) - t2.eval_real(y)).exp();
                    let cx = idx.eval_chi_real(x);
                    let cy = idx.eval_chi_real(y);
                    g.ger(*w * phase, &cx, &cy, C64::new(1.0, 0.0));
                }
                Ok(g)
            }
        }
    }

    /// Pair two vectors of polynomials through the generator:
    /// `<p_i(x), q_j(y)>` as a matrix. Used as the independent re-pairing
    /// oracle for biorthogonality.
    pub fn pair_polys(&self, p: &[Poly], q: &[Poly]) -> Result<CMat> {
        let mut m = CMat::zeros(p.len(), q.len());
        match self {
            BilinearGenerator::Diagonal(u) => {
                for (i, pi) in p.iter().enumerate() {
                    for (j, qj) in q.iter().enumerate() {
                        m[(i, j)] = u.apply(&pi.mul(qj))?;
                    }
                }
            }
            BilinearGenerator::Kernel(pairs) => {
                for (x, y, w) in pairs {
                    for (i, pi) in p.iter().enumerate() {
                        let px = pi.eval_real(x);
                        for (j, qj) in q.iter().enumerate() {
                            m[(i, j)] += *w * px * qj.eval_real(y);
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        match self {
            BilinearGenerator::Diagonal(u) => u
                .0
                .iter()
                .flat_map(|part| part.components.iter())
                .map(|c| match c {
                    FunctionalComponent::Density { box_, .. } => box_.len(),
                    FunctionalComponent::Discrete { atoms, .. } => {
                        atoms.first().map(|(p, _)| p.len()).unwrap_or(0)
                    }
                    FunctionalComponent::Multipole { point, .. } => point.len(),
                    FunctionalComponent::CurveMeasure { curve, .. } => curve.dim(),
                })
                .max()
                .unwrap_or(1),
            BilinearGenerator::Kernel(pairs) => {
                pairs.first().map(|(x, _, _)| x.len()).unwrap_or(1)
            }
        }
    }
}

fn ensure_no_multipoles(u: &FunctionalSum) -> Result<()> {
    if u.0.iter().any(|part| part.multipoles().next().is_some()) {
        return Err(Error::Unsupported(
            "multipole components under nonzero deformation times".into(),
        ));
    }
    Ok(())
}

/// Cauchy transform `int P(y) / (y - q) du(y)` for a one-dimensional
/// functional; the pole must stay away from every support node.
pub fn cauchy_transform_1d(u: &FunctionalSpec, p: &Poly, q: C64) -> Result<C64> {
    if q.im == 0.0 {
        // real pole: reuse the divisor machinery, which also covers
        // multipole components exactly
        let div = Poly::from_terms(
            1,
            vec![
                (MultiIndex(vec![1]), C64::new(1.0, 0.0)),
                (MultiIndex(vec![0]), -q),
            ],
        );
        return u.with_divisor(&div).apply(p).map_err(|e| match e {
            Error::DivisorNearZero { value, tol } => Error::PoleOnSupport { dist: value, tol },
            other => other,
        });
    }
    let mut acc = C64::new(0.0, 0.0);
    let mut bad: Option<f64> = None;
    u.for_each_quad_node(|x, w| {
        let y = C64::new(x[0], 0.0);
        let d = y - q;
        if d.norm() <= u.divisor_tol {
            bad = Some(d.norm());
        } else {
            acc += w * p.eval_real(x) / d;
        }
    })?;
    if let Some(dist) = bad {
        return Err(Error::PoleOnSupport {
            dist,
            tol: u.divisor_tol,
        });
    }
    if u.multipoles().next().is_some() {
        return Err(Error::Unsupported(
            "complex pole over multipole components".into(),
        ));
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn lebesgue_box_moment() {
        // int over [0,1]^2 of x y^2 = 1/6
        let u = FunctionalSpec::lebesgue_box(vec![(0.0, 1.0), (0.0, 1.0)], 8);
        let m = u.moment(&MultiIndex(vec![1, 2])).unwrap();
        assert!((m - c(1.0 / 6.0)).norm() < 1e-14);
    }

    #[test]
    fn discrete_moment_at_origin() {
        let u = FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
            vec![0.0, 0.0],
            c(1.0),
        )])]);
        let m = u.moment(&MultiIndex(vec![1, 0])).unwrap();
        assert_eq!(m.norm(), 0.0);
    }

    #[test]
    fn multipole_derivative_action() {
        // <c d/dx at x=1, x^3> = 3
        let u = FunctionalSpec::new(vec![FunctionalComponent::multipole(
            vec![1.0],
            MultiIndex(vec![1]),
            c(1.0),
        )]);
        let m = u.moment(&MultiIndex(vec![3])).unwrap();
        assert!((m - c(3.0)).norm() < 1e-14);
    }

    #[test]
    fn apply_is_linear_and_kills_legendre() {
        let u = FunctionalSpec::lebesgue_box(vec![(-1.0, 1.0)], 10);
        // x^2 - 1/3 is orthogonal to constants
        let p = Poly::from_terms(
            1,
            vec![
                (MultiIndex(vec![2]), c(1.0)),
                (MultiIndex(vec![0]), c(-1.0 / 3.0)),
            ],
        );
        assert!(u.apply(&p).unwrap().norm() < 1e-14);
        assert!(u.apply(&Poly::zero(1)).unwrap().norm() == 0.0);

        let q = Poly::from_terms(1, vec![(MultiIndex(vec![1]), c(2.0))]);
        let lhs = u.apply(&p.scale(c(0.7)).add(&q)).unwrap();
        let rhs = c(0.7) * u.apply(&p).unwrap() + u.apply(&q).unwrap();
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn divisor_consistency() {
        // <u/q2, q2 * P> == <u, P> for q2 = x - 3
        let u = FunctionalSpec::lebesgue_box(vec![(-1.0, 1.0)], 12);
        let q2 = Poly::from_terms(
            1,
            vec![(MultiIndex(vec![1]), c(1.0)), (MultiIndex(vec![0]), c(-3.0))],
        );
        let p = Poly::monomial(MultiIndex(vec![1]), c(1.0));
        let lhs = u.with_divisor(&q2).apply(&q2.mul(&p)).unwrap();
        let rhs = u.apply(&p).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn divisor_near_zero_is_detected() {
        let u = FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![
            (vec![0.5], c(1.0)),
            (vec![-0.25], c(1.0)),
        ])]);
        let q2 = Poly::from_terms(
            1,
            vec![(MultiIndex(vec![1]), c(1.0)), (MultiIndex(vec![0]), c(-0.5))],
        );
        let err = u
            .with_divisor(&q2)
            .moment(&MultiIndex(vec![0]))
            .unwrap_err();
        assert!(matches!(err, Error::DivisorNearZero { .. }));
    }

    #[test]
    fn cauchy_transform_matches_log() {
        // int_{-1}^{1} dy / (y - 2) = ln(1/3)
        let u = FunctionalSpec::lebesgue_box(vec![(-1.0, 1.0)], 40);
        let v = cauchy_transform_1d(&u, &Poly::one(1), c(2.0)).unwrap();
        assert!((v - c((1.0f64 / 3.0).ln())).norm() < 1e-12);

        assert_eq!(
            cauchy_transform_1d(&u, &Poly::zero(1), c(2.0)).unwrap().norm(),
            0.0
        );

        // P = y - q: the pole cancels and the transform is the total mass
        let p = Poly::from_terms(
            1,
            vec![(MultiIndex(vec![1]), c(1.0)), (MultiIndex(vec![0]), c(-2.0))],
        );
        let v = cauchy_transform_1d(&u, &p, c(2.0)).unwrap();
        assert!((v - c(2.0)).norm() < 1e-12);
    }

    #[test]
    fn gram_entries() {
        // Diagonal over atoms {0, 1} with t_{1,1} = t: G_00(t) = 1 + e^t
        let u = FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![
            (vec![0.0], c(1.0)),
            (vec![1.0], c(1.0)),
        ])]);
        let g = BilinearGenerator::diagonal(u);
        let t = TimeSeries::single(MultiIndex(vec![1]), c(0.3));
        let z = MultiIndex(vec![0]);
        let v = g.gram_entry(&z, &z, &t, &TimeSeries::zero()).unwrap();
        assert!((v - c(1.0 + 0.3f64.exp())).norm() < 1e-14);

        // static entry through the same path
        let v0 = g
            .gram_entry(&z, &z, &TimeSeries::zero(), &TimeSeries::zero())
            .unwrap();
        assert!((v0 - c(2.0)).norm() < 1e-14);

        // kernel pair (x=1, y=2, w=1), alpha = beta = 1 -> 2
        let k = BilinearGenerator::Kernel(vec![(vec![1.0], vec![2.0], c(1.0))]);
        let one = MultiIndex(vec![1]);
        let v = k
            .gram_entry(&one, &one, &TimeSeries::zero(), &TimeSeries::zero())
            .unwrap();
        assert!((v - c(2.0)).norm() < 1e-14);
    }

    #[test]
    fn tensor_gauss_moments_are_exact_up_to_rule_degree() {
        // per-axis rule of n nodes integrates |alpha| <= 2n - 1 exactly
        let n = 6;
        let u = FunctionalSpec::lebesgue_box(vec![(-1.0, 1.0), (0.0, 1.0)], n);
        for a in 0..(2 * n) {
            for b in 0..(2 * n) {
                let alpha = MultiIndex(vec![a as u32, b as u32]);
                let exact = {
                    let ma = if a % 2 == 1 { 0.0 } else { 2.0 / (a as f64 + 1.0) };
                    let mb = 1.0 / (b as f64 + 1.0);
                    ma * mb
                };
                let got = u.moment(&alpha).unwrap();
                assert!(
                    (got - c(exact)).norm() <= 1e-13 * (1.0 + exact.abs()),
                    "alpha = ({a},{b})"
                );
            }
        }
    }

    #[test]
    fn diagonal_gram_is_multi_hankel() {
        use crate::mindex::{shift_matrix, GradedIndexer};
        let idx = GradedIndexer::new(2, 4);
        let u = FunctionalSpec::lebesgue_box(vec![(-1.0, 1.0), (0.0, 2.0)], 9);
        let g = u.moment_matrix(&idx).unwrap();
        for a in 0..2 {
            let l = shift_matrix(&idx, a);
            let lhs = &l * &g;
            let rhs = &g * l.transpose();
            for i in 0..idx.total() {
                for j in 0..idx.total() {
                    if idx.level_of_position(i) < idx.n_max()
                        && idx.level_of_position(j) < idx.n_max()
                    {
                        assert!((lhs[(i, j)] - rhs[(i, j)]).norm() < 1e-12);
                    }
                }
            }
        }
    }
}
