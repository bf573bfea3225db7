#![allow(dead_code)]

use ldhit_core::{
    ClaimModel, GaussianJumpModel, Matrix, OrthantTarget, RateEvaluator, ScalarDist,
    SparreAndersenModel, Vector,
};

pub const LAMBDA_STAR: [f64; 2] = [0.5331315, 0.7108420];

pub fn v(x: &[f64]) -> Vector {
    Vector::from_vec(x.to_vec())
}

/// μ = (−0.5, −0.3), unit variance in the first coordinate, 0.8 in the
/// second, correlation 0.4.
pub fn reference_model() -> GaussianJumpModel {
    let c = 0.4 * 0.8f64.sqrt();
    GaussianJumpModel::new(
        v(&[-0.5, -0.3]),
        Matrix::from_row_slice(2, 2, &[1.0, c, c, 0.8]),
    )
    .unwrap()
}

pub fn reference_g() -> Vector {
    v(&[1.5, 2.0])
}

/// Two companies sharing exponential claims 60/40, unit premiums and
/// exponential inter-arrival times.
pub fn sa_model() -> SparreAndersenModel {
    SparreAndersenModel::new(
        v(&[1.0, 1.0]),
        ClaimModel::Proportional {
            weights: v(&[0.6, 0.4]),
            dist: ScalarDist::Exponential { rate: 1.0 },
        },
        ScalarDist::Exponential { rate: 1.0 },
    )
    .unwrap()
}

/// Independent claims, so the jump law has a full-dimensional support.
pub fn sa_independent() -> SparreAndersenModel {
    SparreAndersenModel::new(
        v(&[1.0, 1.2]),
        ClaimModel::Independent {
            components: vec![
                ScalarDist::Exponential { rate: 1.5 },
                ScalarDist::Gamma {
                    shape: 2.0,
                    rate: 2.5,
                },
            ],
        },
        ScalarDist::Exponential { rate: 1.0 },
    )
    .unwrap()
}

pub fn reference_report() -> ldhit_core::MppReport {
    let m = reference_model();
    let ev = RateEvaluator::new(&m);
    OrthantTarget::new(reference_g(), &m)
        .unwrap()
        .mpp(&ev)
        .unwrap()
}

/// Closed-form second rate of a Gaussian walk:
/// `D(v) = ‖v‖·‖μ‖ − ⟨v, μ⟩` in the Σ⁻¹ inner product.
pub fn gaussian_d(mu: &Vector, sigma: &Matrix, x: &Vector) -> f64 {
    let si = sigma.clone().try_inverse().unwrap();
    let ip = |a: &Vector, b: &Vector| (a.transpose() * &si * b)[(0, 0)];
    ip(x, x).sqrt() * ip(mu, mu).sqrt() - ip(x, mu)
}

pub fn assert_close(got: f64, want: f64, tol: f64, what: &str) {
    assert!(
        (got - want).abs() <= tol,
        "{what}: got {got}, want {want} ± {tol}"
    );
}
