//! Additive-perturbation checks against direct refactorization oracles
//! and the dense Nyström collocation solve.

mod common;

use common::*;
use mvopr::block::BlockMatrix;
use mvopr::factor::block_cholesky;
use mvopr::family::{OpFamily, Side};
use mvopr::functional::{BilinearGenerator, Curve, FunctionalSpec};
use mvopr::mindex::MultiIndex;
use mvopr::uvarov::*;
use mvopr::{C64, CMat};

fn refactorized(fam: &OpFamily, mp: &MultipoleSet) -> OpFamily {
    let hat = uvarov_functional(fam, mp).unwrap();
    let g = hat.moment_matrix(fam.idx()).unwrap();
    let fact = block_cholesky(&BlockMatrix::new(g, fam.idx().clone())).unwrap();
    OpFamily {
        fact,
        gen: BilinearGenerator::Diagonal(hat),
    }
}

fn compare_block(fam: &OpFamily, mp: &MultipoleSet, n: usize, tol: f64) {
    let out = uvarov_0d(fam, mp, n).unwrap();
    let oracle = refactorized(fam, mp);
    let got = {
        let idx = fam.idx();
        let cols = idx.cumulative(n);
        let mut m = CMat::zeros(out.polys.len(), cols);
        for (i, p) in out.polys.iter().enumerate() {
            for (a, &c) in p.terms() {
                m[(i, idx.index_of(a).unwrap())] = c;
            }
        }
        m
    };
    let expect = block_coeff_rows(&oracle, Side::One, n);
    let p_err = max_diff(&got, &expect) / max_norm(&expect).max(1.0);
    let h_err = rel_diff(&out.h_hat, oracle.fact.h_block(n));
    assert!(
        p_err < tol && h_err < tol,
        "level {n}: p_err={p_err:.3e} h_err={h_err:.3e}"
    );
}

#[test]
fn zero_strengths_leave_the_family_unchanged() {
    let fam = lebesgue_family(2, 3);
    let mp = MultipoleSet::masses(vec![(vec![0.3, -0.2], c(0.0))]);
    for n in 0..=3 {
        let out = uvarov_0d(&fam, &mp, n).unwrap();
        assert!(max_diff(&out.h_hat, fam.fact.h_block(n)) < 1e-13);
        let expect = fam.poly_block(Side::One, n);
        for (p, q) in out.polys.iter().zip(&expect) {
            let d = p.sub(q);
            assert!(d.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max) < 1e-13);
        }
    }
}

#[test]
fn single_mass_on_chebyshev_matches_oracle() {
    let fam = chebyshev_family_1d(5);
    let mp = MultipoleSet::masses(vec![(vec![0.35], c(0.8))]);
    for n in 0..=5 {
        compare_block(&fam, &mp, n, 1e-9);
    }
}

#[test]
fn dipole_2d_matches_oracle() {
    let fam = lebesgue_family(2, 4);
    let mp = MultipoleSet::dipoles(vec![(vec![0.25, -0.4], vec![c(0.5), c(-0.3)])]);
    for n in 0..=4 {
        compare_block(&fam, &mp, n, 1e-8);
    }
}

#[test]
fn mixed_multipoles_match_oracle() {
    let fam = lebesgue_family(2, 4);
    // one second-order puncture with a full table, one plain mass
    let beta = MultiIndex(vec![1, 1]);
    let xi = vec![
        (MultiIndex(vec![0, 0]), c(0.2)),
        (MultiIndex(vec![1, 0]), c(-0.1)),
        (MultiIndex(vec![0, 1]), c(0.15)),
        (MultiIndex(vec![1, 1]), c(0.05)),
        (MultiIndex(vec![2, 0]), c(-0.02)),
    ];
    let mp = MultipoleSet {
        punctures: vec![
            Puncture {
                point: vec![0.3, 0.1],
                beta,
                xi,
            },
            Puncture {
                point: vec![-0.5, 0.6],
                beta: MultiIndex(vec![0, 0]),
                xi: vec![(MultiIndex(vec![0, 0]), c(0.4))],
            },
        ],
    };
    for n in 0..=4 {
        compare_block(&fam, &mp, n, 1e-8);
    }
}

#[test]
fn plain_masses_specialize_the_multipole_machinery() {
    // a hand-rolled bordered system of plain kernel values must reproduce
    // the general multipole machinery at zero derivative order
    let fam = lebesgue_family(2, 3);
    let pts = vec![(vec![0.3, -0.2], c(0.7)), (vec![-0.6, 0.5], c(0.25))];
    let mp = MultipoleSet::masses(pts.clone());
    let x = [0.17, 0.61];
    for n in 1..=3 {
        let general = uvarov_0d(&fam, &mp, n).unwrap();
        let q = pts.len();
        // (I + Xi K)_{ij} = delta_{ij} + xi_i K(x_i, x_j)
        let mut sys = CMat::identity(q, q);
        for i in 0..q {
            for j in 0..q {
                let k = fam.cd_kernel(n - 1, &pts[i].0, &pts[j].0).unwrap();
                sys[(i, j)] += pts[i].1 * k;
            }
        }
        // rhs_i = xi_i K(x_i, x); then P_hat(x) = P(x) - sum_i w_i P(x_i)
        let rhs = CMat::from_fn(q, 1, |i, _| {
            pts[i].1 * fam.cd_kernel(n - 1, &pts[i].0, &x).unwrap()
        });
        let w = sys.lu().solve(&rhs).unwrap();
        let mut p_hat = fam.eval_block(Side::One, n, &x);
        for i in 0..q {
            let pni = fam.eval_block(Side::One, n, &pts[i].0);
            for r in 0..p_hat.len() {
                p_hat[r] -= w[(i, 0)] * pni[r];
            }
        }
        let general_at_x: Vec<C64> = general.polys.iter().map(|p| p.eval_real(&x)).collect();
        for r in 0..p_hat.len() {
            assert!(
                (p_hat[r] - general_at_x[r]).norm() < 1e-10,
                "n={n} entry {r}"
            );
        }
    }
}

#[test]
fn small_mass_linearization_scales_linearly() {
    let fam = lebesgue_family_1d(4);
    let deltas: Vec<f64> = [1e-4, 5e-5]
        .iter()
        .map(|&xi| {
            let mp = MultipoleSet::masses(vec![(vec![0.3], c(xi))]);
            let out = uvarov_0d(&fam, &mp, 3).unwrap();
            let base = fam.poly_block(Side::One, 3).remove(0);
            out.polys[0]
                .sub(&base)
                .terms()
                .map(|(_, c)| c.norm())
                .fold(0.0, f64::max)
        })
        .collect();
    let ratio = deltas[0] / deltas[1];
    assert!(
        (1.9..=2.1).contains(&ratio),
        "linearization ratio {ratio:.3}"
    );
}

#[test]
fn defining_relation_of_h_hat() {
    // H_hat_[n] - H_[n] == <v, P_hat_[n] P_[n]^T> with <v, .> evaluated
    // directly through the multipole components
    let fam = lebesgue_family(2, 3);
    let mp = MultipoleSet::dipoles(vec![(vec![0.25, -0.4], vec![c(0.5), c(-0.3)])]);
    let v = mp.as_functional();
    for n in 0..=3 {
        let out = uvarov_0d(&fam, &mp, n).unwrap();
        let pn = fam.poly_block(Side::One, n);
        let mut pairing = CMat::zeros(out.polys.len(), pn.len());
        for (i, ph) in out.polys.iter().enumerate() {
            for (j, p) in pn.iter().enumerate() {
                pairing[(i, j)] = v.apply(&ph.mul(p)).unwrap();
            }
        }
        let lhs = &out.h_hat - fam.fact.h_block(n);
        assert!(max_diff(&lhs, &pairing) < 1e-9, "level {n}");
    }
}

#[test]
fn fredholm_zero_weight_is_identity() {
    let fam = lebesgue_family(2, 3);
    let cp = CurvePerturbation::new(
        Curve::Segment {
            from: vec![-0.5, -0.5],
            to: vec![0.5, 0.5],
        },
        (0.0, 1.0),
        c(0.0),
        12,
    );
    let out = fredholm_1d(&fam, &cp, 2).unwrap();
    assert!(out.residual < 1e-14);
    assert!(max_diff(&out.h_hat, fam.fact.h_block(2)) < 1e-13);
    let expect = pi_check(&fam, &cp, 2);
    assert!(max_diff(&out.pi_hat, &expect) < 1e-13);
}

fn pi_check(fam: &OpFamily, cp: &CurvePerturbation, n: usize) -> CMat {
    let (ts, _) = mvopr::quad::gauss_legendre_on(cp.nodes, cp.interval.0, cp.interval.1);
    let width = fam.idx().level_size(n);
    let mut m = CMat::zeros(ts.len(), width);
    for (s, &t) in ts.iter().enumerate() {
        let x = match &cp.curve {
            Curve::Segment { from, to } => from
                .iter()
                .zip(to)
                .map(|(&a, &b)| a + t * (b - a))
                .collect::<Vec<f64>>(),
            Curve::CircleArc { center, radius } => {
                let mut p = center.clone();
                p[0] += radius * t.cos();
                p[1] += radius * t.sin();
                p
            }
        };
        let v = fam.eval_block(Side::One, n, &x);
        for j in 0..width {
            m[(s, j)] = v[j];
        }
    }
    m
}

#[test]
fn separable_solve_matches_nystrom() {
    let fam = lebesgue_family(2, 4);
    let cp = CurvePerturbation::new(
        Curve::Segment {
            from: vec![-0.7, -0.2],
            to: vec![0.6, 0.5],
        },
        (0.0, 1.0),
        c(0.35),
        16,
    );
    for n in 0..=4 {
        let sep = fredholm_1d(&fam, &cp, n).unwrap();
        let dense = nystrom_solve(&fam, &cp, n).unwrap();
        assert!(
            max_diff(&sep.pi_hat, &dense) < 1e-10,
            "level {n}: {:.3e}",
            max_diff(&sep.pi_hat, &dense)
        );
        assert!(sep.residual < 1e-8, "level {n} residual {:.3e}", sep.residual);
    }
}

#[test]
fn curve_perturbation_matches_refactorization() {
    let fam = lebesgue_family(2, 4);
    let cp = CurvePerturbation::new(
        Curve::Segment {
            from: vec![-0.7, -0.2],
            to: vec![0.6, 0.5],
        },
        (0.0, 1.0),
        c(0.35),
        16,
    );
    // oracle: refactorize u + scale * (curve measure)
    let mut parts = match &fam.gen {
        BilinearGenerator::Diagonal(u) => u.0.clone(),
        _ => unreachable!(),
    };
    parts.push(FunctionalSpec::new(vec![cp.as_component()]));
    let hat_u = mvopr::functional::FunctionalSum(parts);
    let g = hat_u.moment_matrix(fam.idx()).unwrap();
    let fact = block_cholesky(&BlockMatrix::new(g, fam.idx().clone())).unwrap();
    let oracle = OpFamily {
        fact,
        gen: BilinearGenerator::Diagonal(hat_u),
    };
    for n in 0..=4 {
        let sep = fredholm_1d(&fam, &cp, n).unwrap();
        let got = {
            let idx = fam.idx();
            let cols = idx.cumulative(n);
            let mut m = CMat::zeros(sep.polys.len(), cols);
            for (i, p) in sep.polys.iter().enumerate() {
                for (a, &c) in p.terms() {
                    m[(i, idx.index_of(a).unwrap())] = c;
                }
            }
            m
        };
        let expect = block_coeff_rows(&oracle, Side::One, n);
        assert!(
            max_diff(&got, &expect) / max_norm(&expect).max(1.0) < 1e-7,
            "level {n}"
        );
        assert!(rel_diff(&sep.h_hat, oracle.fact.h_block(n)) < 1e-7, "level {n}");
    }
}

#[test]
fn nystrom_kernel_has_separable_rank() {
    let fam = lebesgue_family(2, 4);
    let n = 3;
    let (ts, _) = mvopr::quad::gauss_legendre_on(16, 0.0, 1.0);
    let curve = Curve::Segment {
        from: vec![-0.7, -0.2],
        to: vec![0.6, 0.5],
    };
    let mut kernel = CMat::zeros(ts.len(), ts.len());
    for (i, &ti) in ts.iter().enumerate() {
        for (j, &tj) in ts.iter().enumerate() {
            kernel[(i, j)] = fam
                .cd_kernel(n - 1, &curve.eval(ti), &curve.eval(tj))
                .unwrap();
        }
    }
    let sv = kernel.clone().svd(false, false).singular_values;
    let scale = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-9 * scale).count();
    assert!(
        rank <= fam.idx().cumulative(n - 1),
        "rank {rank} exceeds N_{}",
        n - 1
    );
}
