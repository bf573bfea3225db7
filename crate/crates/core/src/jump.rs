//! Jump distributions and their exponential tilts.
//!
//! A model exposes the cumulant `K(λ) = ln E e^{⟨λ,ξ⟩}`, its gradient and
//! Hessian, and samplers for the Cramér transform
//!
//! ```text
//! F_λ(dx) = e^{⟨λ,x⟩} F(dx) / ψ(λ)
//! ```
//!
//! whose mean is `∇K(λ)` and covariance `∇²K(λ)`. The MGF domain Θ_ψ is only
//! known through the membership predicate [`JumpModel::in_domain`]; `λ = 0`
//! is always assumed to be an interior point.
//!
//! The non-lattice assumption on the jump law is documented, not checked.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};

use crate::linalg::fd_step;
use crate::{Error, Matrix, Result, Vector};

/// Draws one jump at a time into a caller-owned buffer.
pub trait StepSampler: Send + Sync {
    fn dim(&self) -> usize;
    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]);
}

/// A light-tailed jump distribution on ℝᵈ.
///
/// Implementors must provide the cumulant and domain test; gradient and
/// Hessian fall back to central differences, and tilting is unsupported
/// unless overridden.
pub trait JumpModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Interior membership for Θ_ψ.
    fn in_domain(&self, lambda: &Vector) -> bool;

    /// `K(λ) = ln ψ(λ)`.
    fn cumulant(&self, lambda: &Vector) -> Result<f64>;

    fn psi(&self, lambda: &Vector) -> Result<f64> {
        self.cumulant(lambda).map(libm::exp)
    }

    fn cumulant_grad(&self, lambda: &Vector) -> Result<Vector> {
        fd_gradient(self, lambda)
    }

    fn cumulant_hess(&self, lambda: &Vector) -> Result<Matrix> {
        fd_hessian(self, lambda)
    }

    /// `Eξ = ∇K(0)`.
    fn mean(&self) -> Vector {
        self.cumulant_grad(&Vector::zeros(self.dim()))
            .expect("0 lies in the interior of the MGF domain")
    }

    fn tilted_sampler(&self, _lambda: &Vector) -> Result<Box<dyn StepSampler>> {
        Err(Error::UnsupportedTilt(format!(
            "model of dimension {} provides no tilted sampler",
            self.dim()
        )))
    }

    fn sampler(&self) -> Result<Box<dyn StepSampler>> {
        self.tilted_sampler(&Vector::zeros(self.dim()))
    }
}

fn check_dim(model: &(impl JumpModel + ?Sized), lambda: &Vector) -> Result<()> {
    if lambda.len() != model.dim() {
        return Err(Error::Config(format!(
            "tilt has dimension {}, model has {}",
            lambda.len(),
            model.dim()
        )));
    }
    Ok(())
}

fn check_domain(model: &(impl JumpModel + ?Sized), lambda: &Vector) -> Result<()> {
    check_dim(model, lambda)?;
    if !model.in_domain(lambda) {
        return Err(Error::Domain(format!("λ = {:?}", lambda.as_slice())));
    }
    Ok(())
}

/// Central-difference gradient of `K`, usable as an oracle for any model.
pub fn fd_gradient<M: JumpModel + ?Sized>(model: &M, lambda: &Vector) -> Result<Vector> {
    check_domain(model, lambda)?;
    let h = fd_step(lambda);
    let mut g = Vector::zeros(lambda.len());
    for i in 0..lambda.len() {
        let mut up = lambda.clone();
        let mut dn = lambda.clone();
        up[i] += h;
        dn[i] -= h;
        g[i] = (model.cumulant(&up)? - model.cumulant(&dn)?) / (2.0 * h);
    }
    Ok(g)
}

/// Central-difference Hessian of `K` built from [`JumpModel::cumulant_grad`].
pub fn fd_hessian<M: JumpModel + ?Sized>(model: &M, lambda: &Vector) -> Result<Matrix> {
    check_domain(model, lambda)?;
    let d = lambda.len();
    let h = fd_step(lambda);
    let mut m = Matrix::zeros(d, d);
    for j in 0..d {
        let mut up = lambda.clone();
        let mut dn = lambda.clone();
        up[j] += h;
        dn[j] -= h;
        let col = (model.cumulant_grad(&up)? - model.cumulant_grad(&dn)?) / (2.0 * h);
        m.set_column(j, &col);
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// Draws one sample from `F_λ`.
pub fn sample_tilted<M: JumpModel + ?Sized>(
    model: &M,
    lambda: &Vector,
    rng: &mut dyn RngCore,
) -> Result<Vector> {
    let s = model.tilted_sampler(lambda)?;
    let mut out = Vector::zeros(model.dim());
    s.sample_into(rng, out.as_mut_slice());
    Ok(out)
}

// ---------------------------------------------------------------------------
// Gaussian

/// `N(μ, Σ)` jumps. Θ_ψ is all of ℝᵈ and `F_λ = N(μ + Σλ, Σ)`.
#[derive(Debug, Clone)]
pub struct GaussianJumpModel {
    mu: Vector,
    sigma: Matrix,
    chol: Matrix,
}

impl GaussianJumpModel {
    pub fn new(mu: Vector, sigma: Matrix) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::Config("mu is empty".into()));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Config(format!(
                "sigma is {}x{}, expected {d}x{d}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if (&sigma - sigma.transpose()).abs().max() > 1e-12 * (1.0 + sigma.abs().max()) {
            return Err(Error::Config("sigma is not symmetric".into()));
        }
        let chol = sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Config("sigma is not positive definite".into()))?
            .l();
        Ok(Self { mu, sigma, chol })
    }

    pub fn mu(&self) -> &Vector {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }
}

struct GaussianSampler {
    mean: Vec<f64>,
    chol: Matrix,
}

impl StepSampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        let d = self.mean.len();
        // Lower-triangular L·z, filled from the last row so z can live in `out`.
        for o in out.iter_mut() {
            *o = rng.sample(StandardNormal);
        }
        for i in (0..d).rev() {
            let acc: f64 = out[..=i]
                .iter()
                .enumerate()
                .map(|(k, z)| self.chol[(i, k)] * z)
                .sum();
            out[i] = self.mean[i] + acc;
        }
    }
}

impl JumpModel for GaussianJumpModel {
    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn in_domain(&self, lambda: &Vector) -> bool {
        lambda.iter().all(|x| x.is_finite())
    }

    fn cumulant(&self, lambda: &Vector) -> Result<f64> {
        check_domain(self, lambda)?;
        Ok(self.mu.dot(lambda) + 0.5 * lambda.dot(&(&self.sigma * lambda)))
    }

    fn cumulant_grad(&self, lambda: &Vector) -> Result<Vector> {
        check_domain(self, lambda)?;
        Ok(&self.mu + &self.sigma * lambda)
    }

    fn cumulant_hess(&self, lambda: &Vector) -> Result<Matrix> {
        check_domain(self, lambda)?;
        Ok(self.sigma.clone())
    }

    fn mean(&self) -> Vector {
        self.mu.clone()
    }

    fn tilted_sampler(&self, lambda: &Vector) -> Result<Box<dyn StepSampler>> {
        let mean = self.cumulant_grad(lambda)?;
        Ok(Box::new(GaussianSampler {
            mean: mean.as_slice().to_vec(),
            chol: self.chol.clone(),
        }))
    }
}

// ---------------------------------------------------------------------------
// Non-negative scalar laws for claim sizes and inter-arrival times

/// A non-negative scalar law with an explicit MGF and closed-form tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarDist {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Constant { value: f64 },
}

impl ScalarDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ScalarDist::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            ScalarDist::Gamma { shape, rate } => {
                shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()
            }
            ScalarDist::Constant { value } => value >= 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid scalar distribution {self:?}"
            )))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarDist::Exponential { rate } => 1.0 / rate,
            ScalarDist::Gamma { shape, rate } => shape / rate,
            ScalarDist::Constant { value } => value,
        }
    }

    pub fn in_domain(&self, theta: f64) -> bool {
        match *self {
            ScalarDist::Exponential { rate } | ScalarDist::Gamma { rate, .. } => theta < rate,
            ScalarDist::Constant { .. } => theta.is_finite(),
        }
    }

    /// Returns `(k, k', k'')` for the scalar cumulant `k(θ) = ln E e^{θX}`.
    pub fn cumulant_derivs(&self, theta: f64) -> Option<(f64, f64, f64)> {
        if !self.in_domain(theta) {
            return None;
        }
        Some(match *self {
            ScalarDist::Exponential { rate } => {
                let r = rate - theta;
                (-libm::log(r / rate), 1.0 / r, 1.0 / (r * r))
            }
            ScalarDist::Gamma { shape, rate } => {
                let r = rate - theta;
                (-shape * libm::log(r / rate), shape / r, shape / (r * r))
            }
            ScalarDist::Constant { value } => (theta * value, value, 0.0),
        })
    }

    /// The law of `X` under the tilt `e^{θX}/E e^{θX}`; same family.
    pub fn tilted(&self, theta: f64) -> Option<ScalarDist> {
        if !self.in_domain(theta) {
            return None;
        }
        Some(match *self {
            ScalarDist::Exponential { rate } => ScalarDist::Exponential { rate: rate - theta },
            ScalarDist::Gamma { shape, rate } => ScalarDist::Gamma {
                shape,
                rate: rate - theta,
            },
            c @ ScalarDist::Constant { .. } => c,
        })
    }

    fn sampler(&self) -> ScalarSampler {
        match *self {
            ScalarDist::Exponential { rate } => {
                ScalarSampler::Exp(Exp::new(rate).expect("validated rate"))
            }
            ScalarDist::Gamma { shape, rate } => {
                ScalarSampler::Gamma(Gamma::new(shape, 1.0 / rate).expect("validated gamma"))
            }
            ScalarDist::Constant { value } => ScalarSampler::Const(value),
        }
    }
}

#[derive(Debug, Clone)]
enum ScalarSampler {
    Exp(Exp<f64>),
    Gamma(Gamma<f64>),
    Const(f64),
}

impl ScalarSampler {
    #[inline]
    fn draw(&self, rng: &mut dyn RngCore) -> f64 {
        match self {
            ScalarSampler::Exp(e) => e.sample(rng),
            ScalarSampler::Gamma(g) => g.sample(rng),
            ScalarSampler::Const(c) => *c,
        }
    }
}

/// Claim vector `J` of a Sparre Andersen model.
#[derive(Debug, Clone, PartialEq)]
pub enum ClaimModel {
    /// `J = δ·J₀` with a scalar claim `J₀` split in fixed proportions.
    Proportional { weights: Vector, dist: ScalarDist },
    /// Independent components `J_i`.
    Independent { components: Vec<ScalarDist> },
    /// Deterministic claim vector.
    Constant { value: Vector },
}

impl ClaimModel {
    pub fn dim(&self) -> usize {
        match self {
            ClaimModel::Proportional { weights, .. } => weights.len(),
            ClaimModel::Independent { components } => components.len(),
            ClaimModel::Constant { value } => value.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            ClaimModel::Proportional { weights, dist } => {
                dist.validate()?;
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::Config("claim weights must be non-negative".into()));
                }
            }
            ClaimModel::Independent { components } => {
                for c in components {
                    c.validate()?;
                }
            }
            ClaimModel::Constant { value } => {
                if value.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::Config("constant claims must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> Vector {
        match self {
            ClaimModel::Proportional { weights, dist } => weights * dist.mean(),
            ClaimModel::Independent { components } => {
                Vector::from_iterator(components.len(), components.iter().map(|c| c.mean()))
            }
            ClaimModel::Constant { value } => value.clone(),
        }
    }

    fn in_domain(&self, lambda: &Vector) -> bool {
        match self {
            ClaimModel::Proportional { weights, dist } => dist.in_domain(weights.dot(lambda)),
            ClaimModel::Independent { components } => components
                .iter()
                .zip(lambda.iter())
                .all(|(c, &l)| c.in_domain(l)),
            ClaimModel::Constant { .. } => lambda.iter().all(|x| x.is_finite()),
        }
    }

    /// `(K_J, ∇K_J, ∇²K_J)` at `λ`, assumed in domain.
    fn derivs(&self, lambda: &Vector) -> Option<(f64, Vector, Matrix)> {
        let d = lambda.len();
        match self {
            ClaimModel::Proportional { weights, dist } => {
                let (k, k1, k2) = dist.cumulant_derivs(weights.dot(lambda))?;
                Some((k, weights * k1, weights * weights.transpose() * k2))
            }
            ClaimModel::Independent { components } => {
                let mut k = 0.0;
                let mut g = Vector::zeros(d);
                let mut h = Matrix::zeros(d, d);
                for (i, c) in components.iter().enumerate() {
                    let (a, b, c2) = c.cumulant_derivs(lambda[i])?;
                    k += a;
                    g[i] = b;
                    h[(i, i)] = c2;
                }
                Some((k, g, h))
            }
            ClaimModel::Constant { value } => {
                Some((value.dot(lambda), value.clone(), Matrix::zeros(d, d)))
            }
        }
    }

    fn tilted(&self, lambda: &Vector) -> Option<ClaimSampler> {
        Some(match self {
            ClaimModel::Proportional { weights, dist } => ClaimSampler::Proportional {
                weights: weights.as_slice().to_vec(),
                dist: dist.tilted(weights.dot(lambda))?.sampler(),
            },
            ClaimModel::Independent { components } => ClaimSampler::Independent(
                components
                    .iter()
                    .zip(lambda.iter())
                    .map(|(c, &l)| c.tilted(l).map(|t| t.sampler()))
                    .collect::<Option<Vec<_>>>()?,
            ),
            ClaimModel::Constant { value } => ClaimSampler::Constant(value.as_slice().to_vec()),
        })
    }
}

enum ClaimSampler {
    Proportional {
        weights: Vec<f64>,
        dist: ScalarSampler,
    },
    Independent(Vec<ScalarSampler>),
    Constant(Vec<f64>),
}

/// Embedded-walk jumps of a d-company Sparre Andersen model:
/// `ξ = J − c·τ` with claim vector `J` independent of the inter-claim time `τ`.
///
/// Then `ψ_ξ(λ) = ψ_J(λ) · E e^{−⟨λ,c⟩τ}`, and tilting factorises: `J` is
/// tilted at `λ` and `τ` at `−⟨λ,c⟩`.
#[derive(Debug, Clone)]
pub struct SparreAndersenModel {
    premium: Vector,
    claims: ClaimModel,
    interarrival: ScalarDist,
}

impl SparreAndersenModel {
    pub fn new(premium: Vector, claims: ClaimModel, interarrival: ScalarDist) -> Result<Self> {
        if premium.is_empty() {
            return Err(Error::Config("premium vector is empty".into()));
        }
        if premium.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Config(
                "premium rates must be strictly positive".into(),
            ));
        }
        if claims.dim() != premium.len() {
            return Err(Error::Config(format!(
                "claims have dimension {}, premium has {}",
                claims.dim(),
                premium.len()
            )));
        }
        claims.validate()?;
        interarrival.validate()?;
        Ok(Self {
            premium,
            claims,
            interarrival,
        })
    }

    pub fn premium(&self) -> &Vector {
        &self.premium
    }

    pub fn claims(&self) -> &ClaimModel {
        &self.claims
    }

    pub fn interarrival(&self) -> ScalarDist {
        self.interarrival
    }
}

/// Builds the composite jump model `ξ = J − c·τ`.
pub fn build_sparre_andersen(
    premium: Vector,
    claims: ClaimModel,
    interarrival: ScalarDist,
) -> Result<SparreAndersenModel> {
    SparreAndersenModel::new(premium, claims, interarrival)
}

struct SparreAndersenSampler {
    premium: Vec<f64>,
    claims: ClaimSampler,
    interarrival: ScalarSampler,
}

impl StepSampler for SparreAndersenSampler {
    fn dim(&self) -> usize {
        self.premium.len()
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [f64]) {
        match &self.claims {
            ClaimSampler::Proportional { weights, dist } => {
                let j0 = dist.draw(rng);
                for (o, w) in out.iter_mut().zip(weights) {
                    *o = w * j0;
                }
            }
            ClaimSampler::Independent(cs) => {
                for (o, c) in out.iter_mut().zip(cs) {
                    *o = c.draw(rng);
                }
            }
            ClaimSampler::Constant(v) => out.copy_from_slice(v),
        }
        let tau = self.interarrival.draw(rng);
        for (o, c) in out.iter_mut().zip(&self.premium) {
            *o -= c * tau;
        }
    }
}

impl JumpModel for SparreAndersenModel {
    fn dim(&self) -> usize {
        self.premium.len()
    }

    fn in_domain(&self, lambda: &Vector) -> bool {
        lambda.iter().all(|x| x.is_finite())
            && self.claims.in_domain(lambda)
            && self.interarrival.in_domain(-self.premium.dot(lambda))
    }

    fn cumulant(&self, lambda: &Vector) -> Result<f64> {
        self.derivs(lambda).map(|(k, _, _)| k)
    }

    fn cumulant_grad(&self, lambda: &Vector) -> Result<Vector> {
        self.derivs(lambda).map(|(_, g, _)| g)
    }

    fn cumulant_hess(&self, lambda: &Vector) -> Result<Matrix> {
        self.derivs(lambda).map(|(_, _, h)| h)
    }

    fn mean(&self) -> Vector {
        self.claims.mean() - &self.premium * self.interarrival.mean()
    }

    fn tilted_sampler(&self, lambda: &Vector) -> Result<Box<dyn StepSampler>> {
        check_domain(self, lambda)?;
        let theta_tau = -self.premium.dot(lambda);
        let claims = self
            .claims
            .tilted(lambda)
            .ok_or_else(|| Error::Domain(format!("claim tilt at {:?}", lambda.as_slice())))?;
        let tau = self
            .interarrival
            .tilted(theta_tau)
            .ok_or_else(|| Error::Domain(format!("inter-arrival tilt at {theta_tau}")))?;
        Ok(Box::new(SparreAndersenSampler {
            premium: self.premium.as_slice().to_vec(),
            claims,
            interarrival: tau.sampler(),
        }))
    }
}

impl SparreAndersenModel {
    fn derivs(&self, lambda: &Vector) -> Result<(f64, Vector, Matrix)> {
        check_domain(self, lambda)?;
        let theta = -self.premium.dot(lambda);
        let domain = || Error::Domain(format!("λ = {:?}", lambda.as_slice()));
        let (kj, gj, hj) = self.claims.derivs(lambda).ok_or_else(domain)?;
        let (kt, kt1, kt2) = self
            .interarrival
            .cumulant_derivs(theta)
            .ok_or_else(domain)?;
        let c = &self.premium;
        Ok((kj + kt, gj - c * kt1, hj + c * c.transpose() * kt2))
    }
}
