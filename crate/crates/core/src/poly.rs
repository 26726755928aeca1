//! Dense multivariate polynomials with complex coefficients, plus the
//! small amount of exact calculus the transformation formulas need:
//! derivatives, Taylor jets, truncated series inversion, division with
//! remainder, and univariate root finding.

use crate::error::{Error, Result};
use crate::mindex::{enumerate_level, MultiIndex};
use crate::C64;
use std::cmp::Ordering;
use std::collections::BTreeMap;

const COEFF_EPS: f64 = 1e-14;

/// A polynomial stored as a map from exponent vectors to coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Poly {
    dim: usize,
    terms: BTreeMap<MultiIndex, C64>,
}

/// Graded order on exponents: lower total degree first, descending
/// lexicographic inside a degree level (matching the basis order).
pub fn cmp_graded(a: &MultiIndex, b: &MultiIndex) -> Ordering {
    a.degree()
        .cmp(&b.degree())
        .then_with(|| b.0.cmp(&a.0))
}

impl Poly {
    pub fn zero(dim: usize) -> Self {
        Poly {
            dim,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(dim: usize, c: C64) -> Self {
        Self::monomial(MultiIndex::zeros(dim), c)
    }

    pub fn one(dim: usize) -> Self {
        Self::constant(dim, C64::new(1.0, 0.0))
    }

    pub fn monomial(alpha: MultiIndex, c: C64) -> Self {
        let dim = alpha.dim();
        let mut terms = BTreeMap::new();
        if c.norm() > 0.0 {
            terms.insert(alpha, c);
        }
        Poly { dim, terms }
    }

    pub fn from_terms(dim: usize, items: Vec<(MultiIndex, C64)>) -> Self {
        let mut p = Poly::zero(dim);
        for (a, c) in items {
            assert_eq!(a.dim(), dim);
            p.add_term(a, c);
        }
        p
    }

    /// Univariate polynomial from coefficients in increasing degree.
    pub fn univariate(coeffs: &[C64]) -> Self {
        Poly::from_terms(
            1,
            coeffs
                .iter()
                .enumerate()
                .map(|(i, &c)| (MultiIndex(vec![i as u32]), c))
                .collect(),
        )
    }

    /// Monic univariate polynomial with the given roots.
    pub fn from_roots_1d(roots: &[C64]) -> Self {
        let mut p = Poly::one(1);
        for &r in roots {
            let factor = Poly::from_terms(
                1,
                vec![
                    (MultiIndex(vec![1]), C64::new(1.0, 0.0)),
                    (MultiIndex(vec![0]), -r),
                ],
            );
            p = p.mul(&factor);
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &C64)> {
        self.terms.iter()
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> C64 {
        self.terms
            .get(alpha)
            .copied()
            .unwrap_or_else(|| C64::new(0.0, 0.0))
    }

    pub fn add_term(&mut self, alpha: MultiIndex, c: C64) {
        if c.norm() == 0.0 && !self.terms.contains_key(&alpha) {
            return;
        }
        let entry = self
            .terms
            .entry(alpha.clone())
            .or_insert_with(|| C64::new(0.0, 0.0));
        *entry += c;
        if entry.norm() == 0.0 {
            self.terms.remove(&alpha);
        }
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(|a| a.degree()).max().unwrap_or(0)
    }

    /// Leading term under the graded order.
    pub fn leading(&self) -> Option<(&MultiIndex, &C64)> {
        self.terms.iter().max_by(|(a, _), (b, _)| cmp_graded(a, b))
    }

    pub fn scale(&self, s: C64) -> Poly {
        let mut out = self.clone();
        if s.norm() == 0.0 {
            return Poly::zero(self.dim);
        }
        for v in out.terms.values_mut() {
            *v *= s;
        }
        out
    }

    pub fn add(&self, other: &Poly) -> Poly {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (a, &c) in &other.terms {
            out.add_term(a.clone(), c);
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        assert_eq!(self.dim, other.dim);
        let mut out = Poly::zero(self.dim);
        for (a, &ca) in &self.terms {
            for (b, &cb) in &other.terms {
                out.add_term(a.add(b), ca * cb);
            }
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        let scale: f64 = self.terms.values().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            self.terms.clear();
            return;
        }
        self.terms.retain(|_, c| c.norm() > COEFF_EPS * scale);
    }

    pub fn eval(&self, x: &[C64]) -> C64 {
        assert_eq!(x.len(), self.dim);
        self.terms
            .iter()
            .map(|(a, &c)| c * a.eval(x))
            .sum()
    }

    pub fn eval_real(&self, x: &[f64]) -> C64 {
        self.terms
            .iter()
            .map(|(a, &c)| c * a.eval_real(x))
            .sum()
    }

    /// Partial derivative along one axis.
    pub fn derivative(&self, axis: usize) -> Poly {
        let mut out = Poly::zero(self.dim);
        for (a, &c) in &self.terms {
            let e = a.0[axis];
            if e > 0 {
                let mut b = a.clone();
                b.0[axis] = e - 1;
                out.add_term(b, c * e as f64);
            }
        }
        out
    }

    /// Mixed partial `d^alpha`.
    pub fn derivative_multi(&self, alpha: &MultiIndex) -> Poly {
        let mut p = self.clone();
        for (axis, &e) in alpha.0.iter().enumerate() {
            for _ in 0..e {
                p = p.derivative(axis);
            }
        }
        p
    }

    /// Scaled derivative `(1/alpha!) d^alpha P` evaluated at a real point.
    pub fn jet_value(&self, alpha: &MultiIndex, x: &[f64]) -> C64 {
        self.derivative_multi(alpha).eval_real(x) / alpha.factorial()
    }

    /// Taylor expansion around `center`: a polynomial in the offset whose
    /// coefficient on `h^alpha` is `(1/alpha!) d^alpha P (center)`.
    pub fn taylor_at(&self, center: &[f64]) -> Poly {
        assert_eq!(center.len(), self.dim);
        let mut out = Poly::zero(self.dim);
        for (a, &c) in &self.terms {
            // expand prod_a (c_a + h_a)^{e_a} term by term
            let mut partial = vec![(MultiIndex::zeros(self.dim), c)];
            for (axis, &e) in a.0.iter().enumerate() {
                let mut next = Vec::new();
                for (idx, coef) in partial {
                    for j in 0..=e {
                        let mut b = idx.clone();
                        b.0[axis] += j;
                        let binom = crate::mindex::binomial(e as usize, j as usize) as f64;
                        let pw = center[axis].powi((e - j) as i32);
                        next.push((b, coef * binom * pw));
                    }
                }
                partial = next;
            }
            for (idx, coef) in partial {
                out.add_term(idx, coef);
            }
        }
        out.prune();
        out
    }

    /// Truncate to total degree at most `order`.
    pub fn truncate_degree(&self, order: usize) -> Poly {
        let mut out = self.clone();
        out.terms.retain(|a, _| a.degree() <= order);
        out
    }

    /// `exp(self)` as a truncated power series up to total degree
    /// `order`; exact whenever paired against the matching truncation.
    pub fn series_exp(&self, order: usize) -> Poly {
        let c0 = self.coeff(&MultiIndex::zeros(self.dim));
        let nilpotent = self.sub(&Poly::constant(self.dim, c0));
        let mut acc = Poly::constant(self.dim, C64::new(1.0, 0.0));
        let mut power = Poly::constant(self.dim, C64::new(1.0, 0.0));
        let mut fact = 1.0;
        for j in 1..=order {
            power = power.mul(&nilpotent).truncate_degree(order);
            if power.is_zero() {
                break;
            }
            fact *= j as f64;
            acc = acc.add(&power.scale(C64::new(1.0 / fact, 0.0)));
        }
        acc.scale(c0.exp())
    }

    /// Multiplicative inverse as a truncated power series up to total
    /// degree `order`; requires a nonzero constant term.
    pub fn series_inverse(&self, order: usize) -> Result<Poly> {
        let c0 = self.coeff(&MultiIndex::zeros(self.dim));
        if c0.norm() < 1e-300 {
            return Err(Error::SingularBlock);
        }
        let mut inv = Poly::constant(self.dim, C64::new(1.0, 0.0) / c0);
        for k in 1..=order {
            for gamma in enumerate_level(self.dim, k) {
                // sum over self-terms delta with 0 < |delta|, delta <= gamma
                let mut acc = C64::new(0.0, 0.0);
                for (delta, &g) in &self.terms {
                    if delta.degree() == 0 || !delta.le(&gamma) {
                        continue;
                    }
                    let rest = gamma.checked_sub(delta).unwrap();
                    acc += g * inv.coeff(&rest);
                }
                if acc.norm() > 0.0 {
                    inv.add_term(gamma, -acc / c0);
                }
            }
        }
        Ok(inv)
    }

    /// Division with remainder by a single divisor under the graded order:
    /// `self = q * div + r` where no term of `r` is divisible by the
    /// leading term of `div`. Returns `(q, r)`.
    pub fn div_rem(&self, div: &Poly) -> (Poly, Poly) {
        assert_eq!(self.dim, div.dim);
        let (lt_alpha, lt_c) = div
            .leading()
            .map(|(a, c)| (a.clone(), *c))
            .expect("division by the zero polynomial");
        let mut q = Poly::zero(self.dim);
        let mut r = Poly::zero(self.dim);
        let mut work = self.clone();
        while let Some((a, c)) = work.leading().map(|(a, c)| (a.clone(), *c)) {
            if let Some(shift) = a.checked_sub(&lt_alpha) {
                let factor = c / lt_c;
                q.add_term(shift.clone(), factor);
                let piece = div.mul(&Poly::monomial(shift, factor));
                work = work.sub(&piece);
                // the leading term cancels exactly up to roundoff ghosts
                work.terms.remove(&a);
            } else {
                r.add_term(a.clone(), c);
                work.terms.remove(&a);
            }
        }
        (q, r)
    }

    /// Exact division; errors if the remainder is noticeable relative to
    /// the dividend scale.
    pub fn div_exact(&self, div: &Poly, rel_tol: f64) -> Result<Poly> {
        let (q, r) = self.div_rem(div);
        let scale: f64 = self
            .terms
            .values()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
            .max(1e-300);
        let rem: f64 = r.terms.values().map(|c| c.norm()).fold(0.0, f64::max);
        if rem > rel_tol * scale {
            return Err(Error::DivisionRemainder {
                remainder: rem / scale,
            });
        }
        Ok(q)
    }

    /// Coefficients of a univariate polynomial in increasing degree.
    pub fn coeffs_1d(&self) -> Vec<C64> {
        assert_eq!(self.dim, 1);
        let deg = self.degree();
        let mut out = vec![C64::new(0.0, 0.0); deg + 1];
        for (a, &c) in &self.terms {
            out[a.0[0] as usize] = c;
        }
        out
    }

    /// Roots of a univariate polynomial. Real-coefficient inputs go through
    /// the companion matrix; genuinely complex coefficients fall back to a
    /// Weierstrass iteration.
    pub fn roots_1d(&self) -> Result<Vec<C64>> {
        assert_eq!(self.dim, 1, "roots_1d requires a univariate polynomial");
        let coeffs = self.coeffs_1d();
        let deg = coeffs.len() - 1;
        if deg == 0 {
            return Ok(Vec::new());
        }
        let lead = coeffs[deg];
        if lead.norm() < 1e-300 {
            return Err(Error::SingularBlock);
        }
        let monic: Vec<C64> = coeffs.iter().map(|&c| c / lead).collect();
        let all_real = monic.iter().all(|c| c.im.abs() < 1e-13 * (1.0 + c.re.abs()));
        if all_real {
            let mut comp = nalgebra::DMatrix::<f64>::zeros(deg, deg);
            for i in 1..deg {
                comp[(i, i - 1)] = 1.0;
            }
            for i in 0..deg {
                comp[(i, deg - 1)] = -monic[i].re;
            }
            let eig = comp.complex_eigenvalues();
            Ok(eig.iter().copied().collect())
        } else {
            durand_kerner(&monic)
        }
    }

    /// Resultant of two univariate polynomials via the Sylvester matrix.
    pub fn resultant_1d(&self, other: &Poly) -> C64 {
        assert_eq!(self.dim, 1);
        assert_eq!(other.dim, 1);
        let a = self.coeffs_1d();
        let b = other.coeffs_1d();
        let m = a.len() - 1;
        let n = b.len() - 1;
        if m == 0 {
            return a[0].powu(n as u32);
        }
        if n == 0 {
            return b[0].powu(m as u32);
        }
        let size = m + n;
        let mut s = crate::CMat::zeros(size, size);
        for row in 0..n {
            for (j, &c) in a.iter().enumerate() {
                s[(row, row + (m - j))] = c;
            }
        }
        for row in 0..m {
            for (j, &c) in b.iter().enumerate() {
                s[(n + row, row + (n - j))] = c;
            }
        }
        s.lu().determinant()
    }
}

fn durand_kerner(monic: &[C64]) -> Result<Vec<C64>> {
    let deg = monic.len() - 1;
    let eval = |z: C64| -> C64 {
        let mut acc = C64::new(1.0, 0.0);
        for k in (0..deg).rev() {
            acc = acc * z + monic[k];
        }
        acc
    };
    let radius = 1.0
        + monic[..deg]
            .iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max);
    let mut roots: Vec<C64> = (0..deg)
        .map(|k| {
            let angle = 2.0 * std::f64::consts::PI * k as f64 / deg as f64 + 0.7;
            C64::from_polar(radius.powf(0.5).max(0.5), angle)
        })
        .collect();
    for _ in 0..400 {
        let mut max_step = 0.0f64;
        for i in 0..deg {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-300 {
                return Err(Error::RepeatedRoots {
                    re: roots[i].re,
                    im: roots[i].im,
                });
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 * radius {
            break;
        }
    }
    Ok(roots)
}

/// Rejects roots closer than `tol` to each other.
pub fn check_simple_roots(roots: &[C64], tol: f64) -> Result<()> {
    for i in 0..roots.len() {
        for j in 0..i {
            if (roots[i] - roots[j]).norm() < tol {
                return Err(Error::RepeatedRoots {
                    re: roots[i].re,
                    im: roots[i].im,
                });
            }
        }
    }
    Ok(())
}
