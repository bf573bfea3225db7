mod common;

use common::*;
use ldhit_core::geometry::kappa_closed_form;
use ldhit_core::linalg::tangent_frame;
use ldhit_core::{
    C3Status, Error, GaussianJumpModel, HalfSpaceGeom, JumpModel, Matrix, OrthantTarget,
    RateEvaluator,
};

#[test]
fn reference_most_probable_point() {
    let m = reference_model();
    let rep = reference_report();
    assert_eq!(rep.status, C3Status::Satisfied);
    assert_close(rep.d_g, 2.22939, 1e-5, "D(G)");
    assert_close(
        rep.d_g,
        gaussian_d(m.mu(), m.sigma(), &reference_g()),
        1e-10,
        "closed form",
    );
    // Λ(tg)/t is minimised at t = ‖μ‖/‖g‖ in the Σ⁻¹ norm, here 1/√20.
    assert_close(rep.r_g, 1.0 / 20f64.sqrt(), 1e-9, "r_G");
    assert_close(rep.u_g * rep.r_g, 1.0, 1e-14, "u_G r_G");
    assert!((&rep.alpha_star - reference_g() * rep.r_g).amax() < 1e-14);
    // The normal is the tilt at α*, and D(G) = ⟨N, g⟩ with ψ(N) = 1.
    let si = m.sigma().clone().try_inverse().unwrap();
    let n_want = &si * (&rep.alpha_star - m.mu());
    assert!((&rep.n - &n_want).amax() < 1e-9, "N = {}", rep.n);
    assert_close(rep.n.dot(&reference_g()), rep.d_g, 1e-9, "⟨N,g⟩");
    assert_close(m.cumulant(&rep.n).unwrap(), 0.0, 1e-10, "K(N)");
    assert_close(rep.zeta.norm(), 1.0, 1e-14, "‖ζ‖");
    assert!(rep.drift_along_n < 0.0);
}

#[test]
fn fixed_tilt_is_on_the_level_set_but_not_the_normal() {
    let m = reference_model();
    let rep = reference_report();
    let l = v(&LAMBDA_STAR);
    assert!(m.cumulant(&l).unwrap().abs() < 1e-7);
    // N maximises ⟨λ, g⟩ on {K ≤ 0}, so any other point of the level set scores lower.
    let gap = rep.d_g - l.dot(&reference_g());
    assert!(gap > 1e-3, "gap {gap}");
}

#[test]
fn dual_maximiser_is_the_normal() {
    let m = reference_model();
    let ev = RateEvaluator::new(&m);
    let rep = reference_report();
    let dual = ev.second_rate_dual(&reference_g()).unwrap();
    assert!((&dual.lambda_opt - &rep.n).amax() < 1e-7);
    assert!((dual.d - rep.d_g).abs() < 1e-9);
}

#[test]
fn vertex_is_the_unique_minimiser_over_the_orthant() {
    let m = reference_model();
    let ev = RateEvaluator::new(&m);
    let rep = reference_report();
    for (a, b) in [(0.1, 0.0), (0.0, 0.1), (0.5, 0.5), (2.0, 0.3), (0.01, 3.0)] {
        let x = reference_g() + v(&[a, b]);
        let d = ev.second_rate(&x).unwrap().d;
        assert!(d > rep.d_g + 1e-6, "D({x}) = {d}");
        // Ĥ dominates: every point of G lies in the half-space.
        assert!(rep.n.dot(&(x - reference_g())) >= 0.0);
    }
}

#[test]
fn half_space_mpp_at_the_most_probable_time() {
    let m = reference_model();
    let ev = RateEvaluator::new(&m);
    let rep = reference_report();
    let geom = HalfSpaceGeom::new(&rep, &ev).unwrap();
    let beta = geom.half_space_mpp(&m, geom.u_g).unwrap();
    assert!((&beta - &rep.g * rep.r_g).amax() < 1e-8, "β = {beta}");
    assert_close(
        geom.half_space_theta(&m, geom.u_g).unwrap(),
        1.0,
        1e-10,
        "θ",
    );
    assert_close(
        geom.d_u_half_space(&m, geom.u_g).unwrap(),
        rep.d_g,
        1e-10,
        "D_u(Ĥ)",
    );
    for du in [-1.0, -0.1, 0.1, 1.0] {
        assert!(geom.d_u_half_space(&m, geom.u_g + du).unwrap() > rep.d_g);
    }
}

#[test]
fn kappa_matches_a_finite_difference_of_the_scaled_mpp() {
    let m = reference_model();
    let ev = RateEvaluator::new(&m);
    let rep = reference_report();
    let geom = HalfSpaceGeom::new(&rep, &ev).unwrap();
    let f = |u: f64| geom.half_space_mpp(&m, u).unwrap() * u;
    let h = 1e-4 * geom.u_g;
    let fd = (f(geom.u_g + h) - f(geom.u_g - h)) / (2.0 * h);
    assert!(
        (&fd - &geom.kappa).amax() < 1e-4,
        "κ = {}, fd = {fd}",
        geom.kappa
    );
    assert_close(geom.kappa[0], -0.0822949, 1e-6, "κ_1");
    assert_close(geom.kappa[1], 0.0736068, 1e-6, "κ_2");
    // Moving along the normal time coordinate keeps ⟨N, uβ(1/u)⟩ = ⟨N, g⟩.
    assert!(geom.kappa.dot(&rep.n).abs() < 1e-9);
}

#[test]
fn isotropic_walk_has_tangential_kappa() {
    let m = GaussianJumpModel::new(v(&[-1.0, -1.0]), Matrix::identity(2, 2)).unwrap();
    let ev = RateEvaluator::new(&m);
    let g = v(&[1.0, 3.0]);
    let rep = OrthantTarget::new(g.clone(), &m).unwrap().mpp(&ev).unwrap();
    let geom = HalfSpaceGeom::new(&rep, &ev).unwrap();
    // With Σ = I, β(1/u) = μ + θN and ζ ∥ N, so κ is the tangential part of r_G g.
    let tang = (&g - &rep.zeta * g.dot(&rep.zeta)) * rep.r_g;
    assert!((&geom.kappa - &tang).amax() < 1e-9);
    let j = tangent_frame(&rep.zeta).unwrap();
    let k = kappa_closed_form(rep.r_g, &g, &rep.zeta, &j, &Matrix::identity(2, 2)).unwrap();
    assert!((&k - &tang).amax() < 1e-12);
    assert_close(rep.d_g, gaussian_d(m.mu(), m.sigma(), &g), 1e-10, "D");
}

#[test]
fn conditions_fail_when_the_normal_is_not_positive() {
    // Strong positive correlation pushes one component of N negative.
    let c = 0.9;
    let m = GaussianJumpModel::new(
        v(&[-1.0, -1.0]),
        Matrix::from_row_slice(2, 2, &[1.0, c, c, 1.0]),
    )
    .unwrap();
    let ev = RateEvaluator::new(&m);
    let rep = OrthantTarget::new(v(&[0.2, 3.0]), &m)
        .unwrap()
        .mpp(&ev)
        .unwrap();
    assert!(rep.n[0] < 0.0);
    assert!(!rep.c3.normal_positive);
    assert_eq!(rep.status, C3Status::Violated);
    assert!(matches!(rep.require_c3(), Err(Error::C3Violated(_))));
    assert!(matches!(
        HalfSpaceGeom::new(&rep, &ev),
        Err(Error::C3Violated(_))
    ));
}

#[test]
fn mean_inside_the_orthant_has_no_large_deviation_regime() {
    let m = GaussianJumpModel::new(v(&[0.1, 0.2]), Matrix::identity(2, 2)).unwrap();
    assert!(matches!(
        OrthantTarget::new(v(&[1.0, 1.0]), &m),
        Err(Error::NoLargeDeviationRegime(_))
    ));
    let m = reference_model();
    assert!(OrthantTarget::new(v(&[1.0, 0.0]), &m).is_err());
    assert!(OrthantTarget::new(v(&[1.0, 1.0, 1.0]), &m).is_err());
}

#[test]
fn sparre_andersen_target() {
    let m = sa_independent();
    let ev = RateEvaluator::new(&m);
    let rep = OrthantTarget::new(v(&[1.0, 0.5]), &m)
        .unwrap()
        .mpp(&ev)
        .unwrap();
    assert_eq!(rep.status, C3Status::Satisfied);
    assert_close(m.cumulant(&rep.n).unwrap(), 0.0, 1e-9, "K(N)");
    assert_close(rep.n.dot(&v(&[1.0, 0.5])), rep.d_g, 1e-8, "⟨N,g⟩");
    let dual = ev.second_rate_dual(&v(&[1.0, 0.5])).unwrap();
    assert!((dual.d - rep.d_g).abs() < 1e-8 * rep.d_g);
}
