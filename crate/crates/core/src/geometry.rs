//! Orthant target `G = g + cl(Q⁺)`, its most probable point, and the
//! auxiliary half-space `Ĥ(r_G)` tangent to the level set of Λ at `r_G·g`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::jump::JumpModel;
use crate::linalg::{in_closed_orthant, tangent_frame};
use crate::rate::RateEvaluator;
use crate::{Error, Matrix, Result, Vector};

/// Margin applied to the strict inequalities of the vertex condition.
pub const C3_MARGIN: f64 = 1e-8;

/// Vertex of a translated positive orthant.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthantTarget {
    g: Vector,
}

impl OrthantTarget {
    /// Checks `g > 0` and that the mean jump points away from the orthant.
    pub fn new(g: Vector, model: &dyn JumpModel) -> Result<Self> {
        if g.len() != model.dim() {
            return Err(Error::Config(format!(
                "g has dimension {}, model has {}",
                g.len(),
                model.dim()
            )));
        }
        if !g.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Err(Error::Config(format!(
                "g must be strictly positive, got {:?}",
                g.as_slice()
            )));
        }
        let mean = model.mean();
        if in_closed_orthant(mean.as_slice()) {
            return Err(Error::NoLargeDeviationRegime(format!(
                "Eξ = {:?}",
                mean.as_slice()
            )));
        }
        Ok(Self { g })
    }

    pub fn g(&self) -> &Vector {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// Most probable time and point of `G`, with the vertex condition flags.
    pub fn mpp(&self, ev: &RateEvaluator<'_>) -> Result<MppReport> {
        let sr = ev.second_rate(&self.g)?;
        let r_g = sr.t;
        let alpha_star = &self.g * r_g;
        let n = ev.lambda_of_alpha(&alpha_star)?;
        let norm = n.norm();
        if norm == 0.0 {
            return Err(Error::C3Violated("normal vector vanishes".into()));
        }
        let zeta = &n / norm;
        let drift = ev.model().mean().dot(&n);
        let min_n = n.min();
        let flags = C3Flags {
            normal_positive: min_n > 0.0,
            in_cramer_range: true,
            negative_drift: drift < 0.0,
        };
        let marginal = min_n.abs() <= C3_MARGIN || drift.abs() <= C3_MARGIN;
        let status = if !flags.all() && !marginal {
            C3Status::Violated
        } else if marginal {
            C3Status::Marginal
        } else {
            C3Status::Satisfied
        };
        Ok(MppReport {
            g: self.g.clone(),
            u_g: sr.u,
            r_g,
            alpha_star,
            n,
            zeta,
            d_g: sr.d,
            drift_along_n: drift,
            c3: flags,
            status,
        })
    }
}

/// The three clauses of the vertex condition at `r_G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct C3Flags {
    /// `N(r_G) ∈ Q⁺`.
    pub normal_positive: bool,
    /// `r_G·g ∈ Ω_Λ`.
    pub in_cramer_range: bool,
    /// `⟨Eξ, N(r_G)⟩ < 0`.
    pub negative_drift: bool,
}

impl C3Flags {
    pub fn all(&self) -> bool {
        self.normal_positive && self.in_cramer_range && self.negative_drift
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum C3Status {
    Satisfied,
    /// A strict inequality holds only within [`C3_MARGIN`].
    Marginal,
    Violated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MppReport {
    pub g: Vector,
    pub u_g: f64,
    pub r_g: f64,
    pub alpha_star: Vector,
    pub n: Vector,
    pub zeta: Vector,
    pub d_g: f64,
    pub drift_along_n: f64,
    pub c3: C3Flags,
    pub status: C3Status,
}

impl MppReport {
    /// Fails unless the vertex condition holds with margin.
    pub fn require_c3(&self) -> Result<()> {
        match self.status {
            C3Status::Satisfied => Ok(()),
            C3Status::Marginal => Err(Error::C3Marginal(self.describe_flags())),
            C3Status::Violated => Err(Error::C3Violated(self.describe_flags())),
        }
    }

    fn describe_flags(&self) -> String {
        let mut parts: Vec<String> = Vec::new();
        parts.push(format!(
            "N = {:?} (N > 0: {})",
            self.n.as_slice(),
            self.c3.normal_positive
        ));
        parts.push(format!(
            "r_G·g in Cramér range: {}",
            self.c3.in_cramer_range
        ));
        parts.push(format!(
            "⟨Eξ,N⟩ = {:e} (< 0: {})",
            self.drift_along_n, self.c3.negative_drift
        ));
        parts.join("; ")
    }
}

/// Geometry of `Ĥ(r_G) = g + {v : ⟨v, N(r_G)⟩ ≥ 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpaceGeom {
    pub g: Vector,
    pub n: Vector,
    pub zeta: Vector,
    pub u_g: f64,
    pub r_g: f64,
    pub d_g: f64,
    /// Rows span the hyperplane orthogonal to `ζ`.
    pub frame: Matrix,
    /// `Λ''(r_G·g)`.
    pub lambda_hess: Matrix,
    /// `∇²K(N)`, the covariance of the walk tilted at `N`.
    pub tilted_cov: Matrix,
    pub kappa: Vector,
}

impl HalfSpaceGeom {
    pub fn new(report: &MppReport, ev: &RateEvaluator<'_>) -> Result<Self> {
        report.require_c3()?;
        let frame = tangent_frame(&report.zeta)?;
        let tilted_cov = ev.model().cumulant_hess(&report.n)?;
        let lambda_hess = ev.rate_hess(&report.alpha_star)?;
        let kappa = kappa_closed_form(report.r_g, &report.g, &report.zeta, &frame, &lambda_hess)?;
        Ok(Self {
            g: report.g.clone(),
            n: report.n.clone(),
            zeta: report.zeta.clone(),
            u_g: report.u_g,
            r_g: report.r_g,
            d_g: report.d_g,
            frame,
            lambda_hess,
            tilted_cov,
            kappa,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    /// Tilt `θ` with `λ(β(1/u)) = θ·N`.
    ///
    /// β minimises Λ over `{v : ⟨v, N⟩ = ⟨g, N⟩/u}`, so its conjugate point is
    /// parallel to `N` and `θ` solves `⟨∇K(θN), N⟩ = ⟨g, N⟩/u`, a monotone
    /// scalar equation with root `θ = 1` at `u = u_G`.
    pub fn half_space_theta(&self, model: &dyn JumpModel, u: f64) -> Result<f64> {
        let fail = |why: &str| Error::ConstrainedSolveFailed(format!("u = {u}: {why}"));
        if !(u > 0.0) {
            return Err(fail("u must be positive"));
        }
        let c = self.g.dot(&self.n) / u;
        let f = |th: f64| -> Result<(f64, f64)> {
            let l = &self.n * th;
            let gr = model.cumulant_grad(&l)?;
            let h = model.cumulant_hess(&l)?;
            Ok((gr.dot(&self.n) - c, (&h * &self.n).dot(&self.n)))
        };
        let mut th = 1.0;
        let (mut r, mut dr) = f(th)?;
        let tol = 1e-14 * (1.0 + c.abs());
        for _ in 0..100 {
            if r.abs() <= tol {
                return Ok(th);
            }
            if !(dr > 0.0) {
                return Err(fail("non-positive curvature along N"));
            }
            let step = r / dr;
            let mut a = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = th - a * step;
                if model.in_domain(&(&self.n * cand)) {
                    if let Ok((rc, drc)) = f(cand) {
                        if rc.abs() < r.abs() || rc.abs() <= tol {
                            th = cand;
                            r = rc;
                            dr = drc;
                            accepted = true;
                            break;
                        }
                    }
                }
                a *= 0.5;
            }
            if !accepted {
                // Stalled at round-off level.
                if r.abs() <= 1e-10 * (1.0 + c.abs()) {
                    return Ok(th);
                }
                return Err(fail("line search stalled"));
            }
        }
        Err(fail("iteration budget exhausted"))
    }

    /// `β(1/u)`, the most probable point of `(1/u)·Ĥ(r_G)`.
    pub fn half_space_mpp(&self, model: &dyn JumpModel, u: f64) -> Result<Vector> {
        let th = self.half_space_theta(model, u)?;
        model.cumulant_grad(&(&self.n * th))
    }

    /// `D_u(Ĥ(r_G)) = u·Λ(β(1/u))`.
    pub fn d_u_half_space(&self, model: &dyn JumpModel, u: f64) -> Result<f64> {
        let th = self.half_space_theta(model, u)?;
        let l = &self.n * th;
        let c = self.g.dot(&self.n) / u;
        Ok(u * (th * c - model.cumulant(&l)?))
    }
}

/// `κ = r_G[(ζAJᵀ(JAJᵀ)⁻¹J − ζ)⟨g,ζ⟩ + g]` with `A = Λ''(r_G·g)`.
pub fn kappa_closed_form(
    r_g: f64,
    g: &Vector,
    zeta: &Vector,
    frame: &Matrix,
    a: &Matrix,
) -> Result<Vector> {
    let gz = g.dot(zeta);
    if frame.nrows() == 0 {
        return Ok((g - zeta * gz) * r_g);
    }
    let jaj = frame * a * frame.transpose();
    let inv = jaj
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularFrame(format!("JAJᵀ = {jaj}")))?;
    // Row vector ζAJᵀ(JAJᵀ)⁻¹J, kept as a column.
    let row = frame.transpose() * (inv * (frame * (a * zeta)));
    Ok(((row - zeta) * gz + g) * r_g)
}
