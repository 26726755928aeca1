//! Oracle-first checks for the rational spectral transformations: every
//! quasi-determinant output is compared against a direct refactorization
//! of the perturbed functional, and the one-dimensional reduction against
//! the Cauchy-transform determinant path.

mod common;

use common::*;
use mvopr::error::Error;
use mvopr::family::Side;
use mvopr::functional::{cauchy_transform_1d, FunctionalComponent, FunctionalSpec};
use mvopr::mindex::MultiIndex;
use mvopr::poly::Poly;
use mvopr::transforms::*;
use mvopr::{C64, CMat};

fn linear_poly_1d(shift: f64) -> Poly {
    Poly::from_terms(
        1,
        vec![
            (MultiIndex(vec![1]), c(1.0)),
            (MultiIndex(vec![0]), c(-shift)),
        ],
    )
}

/// x_a - shift in `dim` variables.
fn linear_poly(dim: usize, axis: usize, shift: f64) -> Poly {
    Poly::from_terms(
        dim,
        vec![
            (MultiIndex::unit(dim, axis), c(1.0)),
            (MultiIndex::zeros(dim), c(-shift)),
        ],
    )
}

#[test]
fn r_matrix_identity_case_is_lower_triangular_with_h_diagonal() {
    let fam = lebesgue_family(2, 4);
    let spec = TransformSpec::identity(2);
    let r = build_r_matrix(&fam, &spec).unwrap();
    for k in 0..=4 {
        for l in 0..=4 {
            let blk = r.block(k, l);
            if l < k {
                assert!(max_norm(&blk) < 1e-12, "lower block ({k},{l})");
            } else if l == k {
                assert!(max_diff(&blk, fam.fact.h_block(k)) < 1e-12);
            }
        }
    }
}

#[test]
fn r_matrix_first_column_is_cauchy_transform() {
    let fam = lebesgue_family_1d(4);
    let spec = TransformSpec::geronimus(linear_poly_1d(3.0), FunctionalSpec::empty());
    let r = build_r_matrix(&fam, &spec).unwrap();
    let u = FunctionalSpec::lebesgue_box(vec![(-1.0, 1.0)], 12);
    for k in 0..=4 {
        let p_k = fam.poly_block(Side::One, k).remove(0);
        let expect = cauchy_transform_1d(&u, &p_k, c(3.0)).unwrap();
        assert!(
            (r.data[(k, 0)] - expect).norm() < 1e-12,
            "row {k}: {} vs {}",
            r.data[(k, 0)],
            expect
        );
    }
}

#[test]
fn theta_of_single_mass_is_delta_pairing() {
    let fam = lebesgue_family_1d(4);
    let q = 3.0;
    let zeta = c(0.7);
    let masses = FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
        vec![q],
        zeta,
    )])]);
    let spec = TransformSpec::geronimus(linear_poly_1d(q), masses);
    let with = build_r_matrix(&fam, &spec).unwrap();
    let without =
        build_r_matrix(&fam, &TransformSpec::geronimus(linear_poly_1d(q), FunctionalSpec::empty()))
            .unwrap();
    let theta = &with.data - &without.data;
    for k in 0..=4 {
        let p_k = fam.poly_block(Side::One, k).remove(0);
        for l in 0..=4 {
            let expect = zeta * p_k.eval(&[c(q)]) * c(q).powu(l as u32);
            assert!((theta[(k, l)] - expect).norm() < 1e-11, "({k},{l})");
        }
    }
}

#[test]
fn poised_selection_edge_cases() {
    let fam = lebesgue_family(2, 4);
    // trivial spec: empty selection
    let spec = TransformSpec::identity(2);
    let r = build_r_matrix(&fam, &spec).unwrap();
    let sel = select_poised(&r, &fam, &spec, 2).unwrap();
    assert!(sel.beta_cols.is_empty() && sel.node_ids.is_empty());

    // duplicated node: the square system is rank deficient
    let q1 = linear_poly(2, 0, 2.0);
    let spec = TransformSpec {
        q1,
        q2: Poly::one(2),
        masses: FunctionalSpec::empty(),
        nodes: vec![vec![2.0, 0.5]; 3], // level-2 needs three distinct nodes
    };
    let r = build_r_matrix(&fam, &spec).unwrap();
    match select_poised(&r, &fam, &spec, 2) {
        Err(Error::NoPoisedSet { .. }) => {}
        other => panic!("expected NoPoisedSet, got {other:?}"),
    }
}

#[test]
fn node_off_variety_is_rejected() {
    let fam = lebesgue_family(2, 3);
    let spec = TransformSpec {
        q1: linear_poly(2, 0, 2.0),
        q2: Poly::one(2),
        masses: FunctionalSpec::empty(),
        nodes: vec![vec![1.5, 0.0]],
    };
    let r = build_r_matrix(&fam, &spec).unwrap();
    match select_poised(&r, &fam, &spec, 1) {
        Err(Error::NodeOffVariety { index: 0, .. }) => {}
        other => panic!("expected NodeOffVariety, got {other:?}"),
    }
}

#[test]
fn identity_transform_returns_the_family() {
    for fam in [lebesgue_family(2, 4), lebesgue_family_1d(4)] {
        let dim = fam.idx().dim();
        let spec = TransformSpec::identity(dim);
        for k in 0..=3 {
            let out = cgu_transform(&fam, &spec, k).unwrap();
            let coeffs = out.coeff_rows(fam.idx());
            let expect = block_coeff_rows(&fam, Side::One, k);
            assert!(max_diff(&coeffs, &expect) < 1e-12);
            assert!(max_diff(&out.h_hat, fam.fact.h_block(k)) < 1e-12);
        }
        // the oracle agrees at machine precision
        let hat = oracle_transform(&fam, &spec).unwrap();
        for k in 0..=4 {
            assert!(rel_diff(hat.fact.h_block(k), fam.fact.h_block(k)) < 1e-12);
        }
    }
}

fn compare_with_oracle(fam: &mvopr::family::OpFamily, spec: &TransformSpec, k_max: usize, tol: f64) {
    let hat = oracle_transform(fam, spec).unwrap();
    let r = build_r_matrix(fam, spec).unwrap();
    for k in 0..=k_max {
        let out = cgu_transform_with_r(fam, spec, &r, k).unwrap();
        let got = out.coeff_rows(fam.idx());
        let expect = block_coeff_rows(&hat, Side::One, k);
        let p_err = max_diff(&got, &expect) / max_norm(&expect).max(1.0);
        let h_err = rel_diff(&out.h_hat, hat.fact.h_block(k));
        assert!(
            p_err < tol && h_err < tol,
            "level {k}: p_err={p_err:.3e} h_err={h_err:.3e}"
        );
    }
}

#[test]
fn geronimus_matches_oracle_1d_linear() {
    let fam = lebesgue_family_1d(5);
    // without and with a mass at the zero of q2
    for zeta in [0.0, 0.8] {
        let masses = if zeta == 0.0 {
            FunctionalSpec::empty()
        } else {
            FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
                vec![3.0],
                c(zeta),
            )])])
        };
        let spec = TransformSpec::geronimus(linear_poly_1d(3.0), masses);
        compare_with_oracle(&fam, &spec, 5, 1e-8);
    }
}

#[test]
fn geronimus_matches_oracle_2d_linear() {
    let fam = lebesgue_family(2, 4);
    let spec = TransformSpec::geronimus(linear_poly(2, 0, 3.0), FunctionalSpec::empty());
    compare_with_oracle(&fam, &spec, 4, 1e-8);
}

#[test]
fn geronimus_matches_oracle_2d_quadratic_with_mass() {
    let fam = lebesgue_family(2, 4);
    // q2 = (x1 - 3)(x2 - 2.5), with a mass at its zero-set point (3, 2.5)
    let q2 = linear_poly(2, 0, 3.0).mul(&linear_poly(2, 1, 2.5));
    let masses = FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
        vec![3.0, 2.5],
        c(0.4),
    )])]);
    let spec = TransformSpec::geronimus(q2, masses);
    compare_with_oracle(&fam, &spec, 4, 1e-8);
}

#[test]
fn geronimus_1d_reduction_agrees_with_multivariate_path() {
    let fam = lebesgue_family_1d(5);
    for (q2, masses) in [
        (linear_poly_1d(3.0), FunctionalSpec::empty()),
        (
            linear_poly_1d(3.0),
            FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
                vec![3.0],
                c(0.8),
            )])]),
        ),
        (
            linear_poly_1d(3.0).mul(&linear_poly_1d(-4.0)),
            FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![
                (vec![3.0], c(0.5)),
                (vec![-4.0], c(-0.2)),
            ])]),
        ),
    ] {
        let spec = TransformSpec::geronimus(q2, masses);
        let m2 = spec.m2();
        for k in m2..=4 {
            let red = reduce_1d_cauchy(&fam, &spec, k).unwrap();
            let qd = geronimus_transform(&fam, &spec, k).unwrap();
            let p_qd = &qd.polys[0];
            let diff = red.p_hat.sub(p_qd);
            let scale: f64 = p_qd.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max);
            let p_err = diff.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max) / scale;
            let h_err = (red.h_hat - qd.h_hat[(0, 0)]).norm() / qd.h_hat[(0, 0)].norm();
            assert!(
                p_err < 1e-9 && h_err < 1e-9,
                "m2={m2} k={k}: p_err={p_err:.3e} h_err={h_err:.3e}"
            );
        }
    }
}

#[test]
fn vandermonde_link_between_rho_and_cauchy() {
    let fam = lebesgue_family_1d(5);
    let q2 = linear_poly_1d(3.0).mul(&linear_poly_1d(-4.0));
    let spec = TransformSpec::geronimus(q2.clone(), FunctionalSpec::empty());
    let r = build_r_matrix(&fam, &spec).unwrap();
    let roots = q2.roots_1d().unwrap();
    let m2 = 2;
    let u = FunctionalSpec::lebesgue_box(vec![(-1.0, 1.0)], 13);
    let (v, d) = vandermonde_link(&roots, m2);
    for k in m2..=4 {
        let p_k = fam.poly_block(Side::One, k).remove(0);
        let cvals = CMat::from_fn(1, m2, |_, j| {
            cauchy_transform_1d(&u, &p_k, roots[j]).unwrap()
        });
        let rho = CMat::from_fn(1, m2, |_, l| r.data[(k, l)]);
        let expect = &cvals * d.clone().try_inverse().unwrap() * v.transpose();
        assert!(
            max_diff(&rho, &expect) < 1e-10 * max_norm(&expect).max(1.0),
            "k={k}"
        );
    }
}

#[test]
fn cgu_matches_oracle_1d() {
    let fam = lebesgue_family_1d(5);
    let spec = TransformSpec {
        q1: linear_poly_1d(2.0),
        q2: linear_poly_1d(3.0),
        masses: FunctionalSpec::empty(),
        nodes: vec![vec![2.0]],
    };
    compare_with_oracle(&fam, &spec, 4, 1e-9);
    // and against the determinant-quotient reduction
    for k in 1..=4 {
        let red = reduce_1d_cauchy(&fam, &spec, k).unwrap();
        let qd = cgu_transform(&fam, &spec, k).unwrap();
        let diff = red.p_hat.sub(&qd.polys[0]);
        let err: f64 = diff.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "k={k} err={err:.3e}");
        assert!((red.h_hat - qd.h_hat[(0, 0)]).norm() / qd.h_hat[(0, 0)].norm() < 1e-9);
    }
}

#[test]
fn cgu_matches_oracle_1d_with_mass() {
    let fam = lebesgue_family_1d(5);
    let spec = TransformSpec {
        q1: linear_poly_1d(2.0),
        q2: linear_poly_1d(3.0),
        masses: FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
            vec![3.0],
            c(0.6),
        )])]),
        nodes: vec![vec![2.0]],
    };
    compare_with_oracle(&fam, &spec, 4, 1e-9);
    for k in 1..=4 {
        let red = reduce_1d_cauchy(&fam, &spec, k).unwrap();
        let qd = cgu_transform(&fam, &spec, k).unwrap();
        let diff = red.p_hat.sub(&qd.polys[0]);
        let err: f64 = diff.terms().map(|(_, c)| c.norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "k={k} err={err:.3e}");
    }
}

#[test]
fn christoffel_1d_matches_kernel_formula() {
    // numerator-only step against the classical closed form
    // p_hat_k(x) = (P_{k+1}(x) - (P_{k+1}(p)/P_k(p)) P_k(x)) / (x - p)
    let fam = lebesgue_family_1d(5);
    let p0 = 2.0;
    let spec = TransformSpec {
        q1: linear_poly_1d(p0),
        q2: Poly::one(1),
        masses: FunctionalSpec::empty(),
        nodes: vec![vec![p0]],
    };
    for k in 0..=4 {
        let qd = cgu_transform(&fam, &spec, k).unwrap();
        let red = reduce_1d_cauchy(&fam, &spec, k).unwrap();
        let pk = fam.poly_block(Side::One, k).remove(0);
        let pk1 = fam.poly_block(Side::One, k + 1).remove(0);
        let ratio = pk1.eval(&[c(p0)]) / pk.eval(&[c(p0)]);
        let closed = pk1
            .sub(&pk.scale(ratio))
            .div_exact(&linear_poly_1d(p0), 1e-8)
            .unwrap();
        for probe in [&qd.polys[0], &red.p_hat] {
            let diff = closed.sub(probe);
            let err: f64 = diff.terms().map(|(_, v)| v.norm()).fold(0.0, f64::max);
            assert!(err < 1e-10, "k={k} err={err:.3e}");
        }
        // and the squared-norm sign: h_hat_k = -(P_{k+1}(p)/P_k(p)) H_k
        let expect_h = -ratio * fam.fact.h_block(k)[(0, 0)];
        assert!((qd.h_hat[(0, 0)] - expect_h).norm() < 1e-10 * expect_h.norm());
    }
}

#[test]
fn non_monic_polynomials_scale_consistently() {
    // q1 = 3(x - 2), q2 = 2(x - 3): the transform and its reductions must
    // carry the leading coefficients through
    let fam = lebesgue_family_1d(5);
    let spec = TransformSpec {
        q1: linear_poly_1d(2.0).scale(c(3.0)),
        q2: linear_poly_1d(3.0).scale(c(2.0)),
        masses: FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
            vec![3.0],
            c(0.4),
        )])]),
        nodes: vec![vec![2.0]],
    };
    compare_with_oracle(&fam, &spec, 4, 1e-9);
    for k in 1..=4 {
        let red = reduce_1d_cauchy(&fam, &spec, k).unwrap();
        let qd = cgu_transform(&fam, &spec, k).unwrap();
        let diff = red.p_hat.sub(&qd.polys[0]);
        let err: f64 = diff.terms().map(|(_, v)| v.norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "k={k} err={err:.3e}");
        let h_err = (red.h_hat - qd.h_hat[(0, 0)]).norm() / qd.h_hat[(0, 0)].norm();
        assert!(h_err < 1e-9, "k={k} h_err={h_err:.3e}");
    }
}

#[test]
fn cgu_matches_oracle_2d() {
    let fam = lebesgue_family(2, 4);
    let spec = TransformSpec {
        q1: linear_poly(2, 0, 2.0),
        q2: linear_poly(2, 1, 3.0),
        masses: FunctionalSpec::empty(),
        nodes: vec![
            vec![2.0, -0.9],
            vec![2.0, -0.3],
            vec![2.0, 0.4],
            vec![2.0, 1.1],
            vec![2.0, 1.7],
        ],
    };
    compare_with_oracle(&fam, &spec, 3, 1e-8);
}

#[test]
fn christoffel_moment_identity() {
    // q2 = 1, q1 = x1 - 2: G_hat == q1(Lambda) G at trust rows
    let fam = lebesgue_family(2, 4);
    let spec = TransformSpec {
        q1: linear_poly(2, 0, 2.0),
        q2: Poly::one(2),
        masses: FunctionalSpec::empty(),
        nodes: vec![
            vec![2.0, -0.8],
            vec![2.0, -0.1],
            vec![2.0, 0.6],
            vec![2.0, 1.3],
            vec![2.0, 1.9],
        ],
    };
    let hat = oracle_transform(&fam, &spec).unwrap();
    let res = moment_identity_residual(&fam, &hat, &spec).unwrap();
    assert!(res < 1e-11, "residual {res:.3e}");
    compare_with_oracle(&fam, &spec, 3, 1e-8);
}

#[test]
fn geronimus_then_christoffel_composes_to_cgu() {
    let fam = lebesgue_family_1d(5);
    let q1 = linear_poly_1d(2.0);
    let q2 = linear_poly_1d(3.0);
    let zeta = c(0.5);
    let spec = TransformSpec {
        q1: q1.clone(),
        q2: q2.clone(),
        masses: FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
            vec![3.0],
            zeta,
        )])]),
        nodes: vec![vec![2.0]],
    };
    // composition: u_check = u / q2 + v / q1, then multiply by q1
    let v_tilde = FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
        vec![3.0],
        zeta / q1.eval(&[c(3.0)]),
    )])]);
    let geron = TransformSpec::geronimus(q2, v_tilde);
    let step1 = oracle_transform(&fam, &geron).unwrap();
    let christoffel = TransformSpec {
        q1,
        q2: Poly::one(1),
        masses: FunctionalSpec::empty(),
        nodes: vec![vec![2.0]],
    };
    let composed = oracle_transform(&step1, &christoffel).unwrap();
    let direct = oracle_transform(&fam, &spec).unwrap();
    for k in 0..=5 {
        assert!(
            rel_diff(composed.fact.h_block(k), direct.fact.h_block(k)) < 1e-10,
            "H at level {k}"
        );
    }
    for k in 0..=4 {
        let a = block_coeff_rows(&composed, Side::One, k);
        let b = block_coeff_rows(&direct, Side::One, k);
        assert!(max_diff(&a, &b) < 1e-10, "P at level {k}");
    }
}

#[test]
fn resolvent_structure_on_fixtures() {
    // Geronimus 1D and 2D, CGU 1D and 2D
    let specs: Vec<(mvopr::family::OpFamily, TransformSpec)> = vec![
        (
            lebesgue_family_1d(5),
            TransformSpec::geronimus(linear_poly_1d(3.0), FunctionalSpec::empty()),
        ),
        (
            lebesgue_family(2, 4),
            TransformSpec::geronimus(linear_poly(2, 0, 3.0), FunctionalSpec::empty()),
        ),
        (
            lebesgue_family_1d(5),
            TransformSpec {
                q1: linear_poly_1d(2.0),
                q2: linear_poly_1d(3.0),
                masses: FunctionalSpec::new(vec![FunctionalComponent::discrete(vec![(
                    vec![3.0],
                    c(0.3),
                )])]),
                nodes: vec![vec![2.0]],
            },
        ),
        (
            lebesgue_family(2, 4),
            TransformSpec {
                q1: linear_poly(2, 0, 2.0),
                q2: linear_poly(2, 1, 3.0),
                masses: FunctionalSpec::empty(),
                nodes: vec![
                    vec![2.0, -0.9],
                    vec![2.0, -0.3],
                    vec![2.0, 0.4],
                    vec![2.0, 1.1],
                    vec![2.0, 1.7],
                ],
            },
        ),
    ];
    for (fam, spec) in &specs {
        let hat = oracle_transform(fam, spec).unwrap();
        // the defining intertwining of the perturbed moment matrix holds
        // for every fixture, masses included
        let ident = moment_identity_residual(fam, &hat, spec).unwrap();
        assert!(ident < 1e-10, "moment identity {ident:.3e}");
        let r = build_r_matrix(fam, spec).unwrap();
        let rep = resolvent_checks(fam, &hat, spec, &r).unwrap();
        assert!(rep.lower_max < 1e-9, "lower {:.3e}", rep.lower_max);
        assert!(rep.diag_rel < 1e-9, "diag {:.3e}", rep.diag_rel);
        assert!(rep.band_max < 1e-9, "band {:.3e}", rep.band_max);
        assert!(rep.quasi_tau_rel < 1e-9, "quasi-tau {:.3e}", rep.quasi_tau_rel);
    }
}

#[test]
fn jacobi_factorization_identities() {
    let fam = lebesgue_family_1d(6);
    let spec = TransformSpec::geronimus(linear_poly_1d(3.0), FunctionalSpec::empty());
    let hat = oracle_transform(&fam, &spec).unwrap();
    let (fact_res, det_res) = jacobi_factorization_residuals(&fam, &hat, &spec).unwrap();
    assert!(fact_res < 1e-9, "factorization residual {fact_res:.3e}");
    assert!(det_res < 1e-7, "determinant residual {det_res:.3e}");

    let fam2 = lebesgue_family(2, 4);
    let spec2 = TransformSpec::geronimus(linear_poly(2, 0, 3.0), FunctionalSpec::empty());
    let hat2 = oracle_transform(&fam2, &spec2).unwrap();
    let (fact_res2, det_res2) = jacobi_factorization_residuals(&fam2, &hat2, &spec2).unwrap();
    assert!(fact_res2 < 1e-9, "factorization residual {fact_res2:.3e}");
    assert!(det_res2 < 1e-7, "determinant residual {det_res2:.3e}");
}

#[test]
fn det_r_truncation_identity() {
    // prod_{l <= k} det H_check_[l] == det R^{[k+1]}
    let fam = lebesgue_family(2, 4);
    let spec = TransformSpec::geronimus(linear_poly(2, 0, 3.0), FunctionalSpec::empty());
    let hat = oracle_transform(&fam, &spec).unwrap();
    let r = build_r_matrix(&fam, &spec).unwrap();
    let mut prod = C64::new(1.0, 0.0);
    for k in 0..=4 {
        prod *= hat.fact.h_det(k);
        let det = r.truncation(k + 1).lu().determinant();
        let rel = (det - prod).norm() / prod.norm();
        assert!(rel < 1e-8, "k={k} rel={rel:.3e}");
    }
}
