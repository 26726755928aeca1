//! Shared fixtures and independent oracles for the integration suites.

#![allow(dead_code)]

use mvopr::family::{OpFamily, Side};
use mvopr::functional::{FunctionalComponent, FunctionalSpec, Weight};
use mvopr::mindex::GradedIndexer;
use mvopr::{C64, CMat};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn max_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_norm(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    max_diff(a, b) / max_norm(b).max(1e-300)
}

/// Monic Legendre polynomial by the classical three-term recurrence; the
/// independent oracle for one-dimensional Lebesgue families.
pub fn monic_legendre(k: usize, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let mut pm1 = 1.0;
    let mut p = x;
    for j in 1..k {
        let jf = j as f64;
        let cj = jf * jf / (4.0 * jf * jf - 1.0);
        let next = x * p - cj * pm1;
        pm1 = p;
        p = next;
    }
    p
}

/// Squared norm of the monic Legendre polynomial on `[-1, 1]`.
pub fn monic_legendre_h(k: usize) -> f64 {
    // H_k = 2^{2k+1} (k!)^4 / ((2k+1) ((2k)!)^2)
    let kf = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    let num = 2f64.powi(2 * k as i32 + 1) * kf(k).powi(4);
    let den = (2.0 * k as f64 + 1.0) * kf(2 * k).powi(2);
    num / den
}

pub fn lebesgue_family_1d(n_max: usize) -> OpFamily {
    let idx = GradedIndexer::new(1, n_max);
    let u = FunctionalSpec::lebesgue_box(vec![(-1.0, 1.0)], n_max + 8);
    OpFamily::from_functional(u, &idx).unwrap()
}

pub fn lebesgue_family(dim: usize, n_max: usize) -> OpFamily {
    let idx = GradedIndexer::new(dim, n_max);
    let box_: Vec<(f64, f64)> = (0..dim).map(|_| (-1.0, 1.0)).collect();
    let u = FunctionalSpec::lebesgue_box(box_, n_max + 8);
    OpFamily::from_functional(u, &idx).unwrap()
}

/// A quasi-definite discrete measure: enough random atoms in general
/// position with positive weights.
pub fn discrete_family(dim: usize, n_max: usize, seed: u64) -> OpFamily {
    let idx = GradedIndexer::new(dim, n_max);
    let mut r = rng(seed);
    let count = 2 * idx.total() + 3;
    let atoms: Vec<(Vec<f64>, C64)> = (0..count)
        .map(|_| {
            let p: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
            (p, c(r.gen_range(0.5..1.5)))
        })
        .collect();
    let u = FunctionalSpec::new(vec![FunctionalComponent::discrete(atoms)]);
    OpFamily::from_functional(u, &idx).unwrap()
}

pub fn chebyshev_family_1d(n_max: usize) -> OpFamily {
    let idx = GradedIndexer::new(1, n_max);
    let u = FunctionalSpec::new(vec![FunctionalComponent::density(
        vec![(-1.0, 1.0)],
        Weight::Chebyshev,
        2 * n_max + 24,
    )]);
    OpFamily::from_functional(u, &idx).unwrap()
}

/// A discrete functional with random atoms; no product structure across
/// axes, so every deformation direction acts generically.
pub fn discrete_spec(dim: usize, count: usize, seed: u64) -> FunctionalSpec {
    let mut r = rng(seed);
    let atoms: Vec<(Vec<f64>, C64)> = (0..count)
        .map(|_| {
            let p: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
            (p, c(r.gen_range(0.5..1.5)))
        })
        .collect();
    FunctionalSpec::new(vec![FunctionalComponent::discrete(atoms)])
}

/// Random point-pair kernel generator (no product structure).
pub fn kernel_random_pairs(
    dim: usize,
    count: usize,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<f64>, C64)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
            (x, y, c(r.gen_range(0.4..1.4)))
        })
        .collect()
}

/// Full biorthogonal pairing matrix `<P_1, P_2^T>` assembled through the
/// source generator by node outer products; independent of the
/// factorization identities.
pub fn pair_all(fam: &OpFamily) -> CMat {
    let idx = fam.idx();
    let n = fam.idx().total();
    let mut m = CMat::zeros(n, n);
    match &fam.gen {
        mvopr::functional::BilinearGenerator::Diagonal(u) => {
            u.for_each_quad_node(|x, w| {
                let p = fam.eval_stacked(Side::One, idx.n_max(), x);
                m.ger(w, &p, &p, C64::new(1.0, 0.0));
            })
            .unwrap();
        }
        mvopr::functional::BilinearGenerator::Kernel(pairs) => {
            for (x, y, w) in pairs {
                let p1 = fam.eval_stacked(Side::One, idx.n_max(), x);
                let p2 = fam.eval_stacked(Side::Two, idx.n_max(), y);
                m.ger(*w, &p1, &p2, C64::new(1.0, 0.0));
            }
        }
    }
    m
}

/// Near-diagonal positive kernel: pairs `(x, x + eps * noise)` with
/// positive weights. Non-Hankel, yet close enough to a positive measure
/// that every minor stays regular along the real flows.
pub fn kernel_near_diag(
    dim: usize,
    count: usize,
    eps: f64,
    seed: u64,
) -> Vec<(Vec<f64>, Vec<f64>, C64)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let x: Vec<f64> = (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = x.iter().map(|&v| v + eps * r.gen_range(-1.0..1.0)).collect();
            (x, y, c(r.gen_range(0.4..1.4)))
        })
        .collect()
}

/// Coefficient matrix (`|[k]| x N_k`) of a block of family polynomials.
pub fn block_coeff_rows(fam: &OpFamily, side: Side, k: usize) -> CMat {
    let idx = fam.idx();
    let polys = fam.poly_block(side, k);
    let cols = idx.cumulative(k);
    let mut m = CMat::zeros(polys.len(), cols);
    for (i, p) in polys.iter().enumerate() {
        for (a, &coef) in p.terms() {
            m[(i, idx.index_of(a).unwrap())] = coef;
        }
    }
    m
}
