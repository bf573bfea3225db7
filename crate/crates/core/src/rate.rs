//! First and second rate functions.
//!
//! ```text
//! Λ(α)  = sup_λ ⟨α,λ⟩ − K(λ)          attained at λ(α), ∇K(λ(α)) = α
//! Λ''(α) = (∇²K(λ(α)))⁻¹,  σ²(α) = det ∇²K(λ(α))
//! D(v)  = inf_{t>0} Λ(tv)/t           (primal)
//!       = sup { ⟨λ,v⟩ : K(λ) ≤ 0 }    (dual)
//! D_u(v) = u Λ(v/u)
//! ```
//!
//! Along the ray `t ↦ tv`, `d/dt [Λ(tv)/t] = K(λ(tv))/t²`, so the primal
//! minimiser is the root of `h(t) = K(λ(tv))`, and `h'(t) = t·vᵀ∇²K⁻¹v > 0`.
//! Membership in the Cramér range Ω_Λ is decided operationally: `α ∈ Ω_Λ` iff
//! the Newton solve for `λ(α)` converges.

use alloc::format;
use core::cell::RefCell;

use crate::jump::JumpModel;
use crate::linalg::{spd_inverse, spd_solve};
use crate::{Error, Matrix, Result, Vector};

/// Newton and bracketing tolerances.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_newton_iter: usize,
    /// Relative residual `‖∇K(λ)−α‖ ≤ tol·(1+‖α‖)`.
    pub newton_tol: f64,
    /// Tolerance on `φ'(t) = K(λ(tv))/t²`.
    pub ray_tol: f64,
    pub max_bracket_steps: usize,
    pub dual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_newton_iter: 100,
            newton_tol: 1e-10,
            ray_tol: 1e-10,
            max_bracket_steps: 60,
            dual_tol: 1e-12,
        }
    }
}

/// Result of minimising `Λ(tv)/t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondRateResult {
    pub d: f64,
    pub t: f64,
    pub u: f64,
    /// The dual maximiser; for the primal route this is `λ(t·v)`, which
    /// coincides with it at the optimum.
    pub lambda_opt: Vector,
}

/// Evaluates rate functions for one jump model.
///
/// Keeps the last Newton solution as a warm start, so an instance must not
/// be shared between threads; create one per worker, or call
/// [`RateEvaluator::without_cache`].
pub struct RateEvaluator<'a> {
    model: &'a dyn JumpModel,
    opts: SolverOptions,
    cache: Option<RefCell<Option<Vector>>>,
}

impl<'a> RateEvaluator<'a> {
    pub fn new(model: &'a dyn JumpModel) -> Self {
        Self {
            model,
            opts: SolverOptions::default(),
            cache: Some(RefCell::new(None)),
        }
    }

    pub fn with_options(mut self, opts: SolverOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    pub fn model(&self) -> &'a dyn JumpModel {
        self.model
    }

    pub fn options(&self) -> &SolverOptions {
        &self.opts
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Solves `∇K(λ) = α` by damped Newton.
    pub fn lambda_of_alpha(&self, alpha: &Vector) -> Result<Vector> {
        if alpha.len() != self.dim() {
            return Err(Error::Config(format!(
                "α has dimension {}, model has {}",
                alpha.len(),
                self.dim()
            )));
        }
        let warm = self.cache.as_ref().and_then(|c| c.borrow().clone());
        let res = match warm {
            Some(w) if self.model.in_domain(&w) => self
                .newton(alpha, w)
                .or_else(|_| self.newton(alpha, Vector::zeros(self.dim()))),
            _ => self.newton(alpha, Vector::zeros(self.dim())),
        };
        if let (Ok(l), Some(c)) = (&res, &self.cache) {
            *c.borrow_mut() = Some(l.clone());
        }
        res
    }

    fn newton(&self, alpha: &Vector, mut lambda: Vector) -> Result<Vector> {
        let tol = self.opts.newton_tol * (1.0 + alpha.norm());
        let fail =
            |why: &str| Error::NotInCramerRange(format!("α = {:?}: {why}", alpha.as_slice()));
        let mut r = self.model.cumulant_grad(&lambda)? - alpha;
        for _ in 0..self.opts.max_newton_iter {
            let rn = r.norm();
            if rn <= tol {
                return Ok(lambda);
            }
            let h = self.model.cumulant_hess(&lambda)?;
            let step = spd_solve(&h, &r).map_err(|_| fail("singular Hessian"))?;
            // Backtrack on ‖∇K−α‖², staying inside the MGF domain.
            let mut a = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &lambda - &step * a;
                if self.model.in_domain(&cand) {
                    if let Ok(g) = self.model.cumulant_grad(&cand) {
                        let rc = g - alpha;
                        if rc.norm_squared() <= (1.0 - 1e-4 * a) * rn * rn || rc.norm() <= tol {
                            lambda = cand;
                            r = rc;
                            accepted = true;
                            break;
                        }
                    }
                }
                a *= 0.5;
            }
            if !accepted {
                return Err(fail("line search stalled"));
            }
        }
        if r.norm() <= tol {
            Ok(lambda)
        } else {
            Err(fail("iteration budget exhausted"))
        }
    }

    /// `Λ(α) = ⟨α, λ(α)⟩ − K(λ(α))`.
    pub fn rate(&self, alpha: &Vector) -> Result<f64> {
        let l = self.lambda_of_alpha(alpha)?;
        Ok((alpha.dot(&l) - self.model.cumulant(&l)?).max(0.0))
    }

    /// `Λ''(α) = (∇²K(λ(α)))⁻¹`.
    pub fn rate_hess(&self, alpha: &Vector) -> Result<Matrix> {
        let l = self.lambda_of_alpha(alpha)?;
        spd_inverse(&self.model.cumulant_hess(&l)?)
    }

    /// `σ²(α) = det ∇²K(λ(α))`, the determinant of the tilted covariance.
    pub fn sigma2(&self, alpha: &Vector) -> Result<f64> {
        let l = self.lambda_of_alpha(alpha)?;
        let h = self.model.cumulant_hess(&l)?;
        let det = h.determinant();
        if det > 0.0 {
            Ok(det)
        } else {
            Err(Error::SingularHessian(format!("det ∇²K = {det}")))
        }
    }

    /// `D_u(v) = u Λ(v/u)`.
    pub fn d_u(&self, v: &Vector, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::Config(format!("u must be positive, got {u}")));
        }
        Ok(u * self.rate(&(v / u))?)
    }

    /// `h(t) = K(λ(tv))` and `h'(t)`.
    fn ray_fn(&self, v: &Vector, t: f64) -> Result<(f64, f64, Vector)> {
        let l = self.lambda_of_alpha(&(v * t))?;
        let k = self.model.cumulant(&l)?;
        let h = self.model.cumulant_hess(&l)?;
        let hv = spd_solve(&h, v)?;
        Ok((k, t * v.dot(&hv), l))
    }

    /// `D(v) = inf_{t>0} Λ(tv)/t` by bracketing then safeguarded Newton.
    pub fn second_rate(&self, v: &Vector) -> Result<SecondRateResult> {
        if v.len() != self.dim() || v.norm() == 0.0 {
            return Err(Error::Config(
                "v must be a non-zero vector of model dimension".into(),
            ));
        }
        let no_min = |why: &str| Error::NoInteriorMinimum(format!("v = {:?}: {why}", v.as_slice()));

        let (k1, _, l1) = self
            .ray_fn(v, 1.0)
            .map_err(|_| no_min("t = 1 not in Ω_Λ"))?;
        if k1 == 0.0 {
            return self.primal_result(v, 1.0, l1);
        }
        // Bracket [lo, hi] with h(lo) < 0 < h(hi).
        let (mut lo, mut hi) = (1.0, 1.0);
        if k1 < 0.0 {
            let mut found = false;
            for _ in 0..self.opts.max_bracket_steps {
                hi *= 2.0;
                match self.ray_fn(v, hi) {
                    Ok((k, _, _)) if k > 0.0 => {
                        found = true;
                        break;
                    }
                    Ok(_) => lo = hi,
                    Err(_) => {
                        // Left Ω_Λ; tighten towards the last good point.
                        let mut a = lo;
                        let mut b = hi;
                        let mut ok = false;
                        for _ in 0..60 {
                            let m = 0.5 * (a + b);
                            match self.ray_fn(v, m) {
                                Ok((k, _, _)) if k > 0.0 => {
                                    hi = m;
                                    ok = true;
                                    break;
                                }
                                Ok(_) => {
                                    a = m;
                                    lo = m;
                                }
                                Err(_) => b = m,
                            }
                        }
                        if !ok {
                            return Err(no_min("Λ(tv)/t keeps decreasing up to the edge of Ω_Λ"));
                        }
                        found = true;
                        break;
                    }
                }
            }
            if !found {
                return Err(no_min("bracket expansion exhausted"));
            }
        } else {
            let mut found = false;
            for _ in 0..self.opts.max_bracket_steps {
                lo *= 0.5;
                match self.ray_fn(v, lo) {
                    Ok((k, _, _)) if k < 0.0 => {
                        found = true;
                        break;
                    }
                    Ok(_) => hi = lo,
                    Err(_) => return Err(no_min("small t left Ω_Λ")),
                }
            }
            if !found {
                return Err(no_min("bracket contraction exhausted"));
            }
        }

        // Safeguarded Newton on h(t) = 0.
        let mut t = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (k, dk, l) = self.ray_fn(v, t)?;
            // φ'(t) = k/t², judged against the scale ⟨λ, v⟩ of φ itself.
            let scale = 1.0 + l.dot(v).abs();
            if (k / (t * t)).abs() <= self.opts.ray_tol * scale || (hi - lo) <= 1e-15 * hi {
                return self.primal_result(v, t, l);
            }
            if k < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - k / dk;
            if dk > 0.0 && newton > lo && newton < hi {
                // Round-off floor: the step no longer moves t.
                if (newton - t).abs() <= 1e-14 * t {
                    return self.primal_result(v, newton, self.lambda_of_alpha(&(v * newton))?);
                }
                t = newton;
            } else {
                t = 0.5 * (lo + hi);
            }
        }
        Err(no_min("Newton on φ' did not converge"))
    }

    fn primal_result(&self, v: &Vector, t: f64, lambda: Vector) -> Result<SecondRateResult> {
        let alpha = v * t;
        let rate = (alpha.dot(&lambda) - self.model.cumulant(&lambda)?).max(0.0);
        Ok(SecondRateResult {
            d: rate / t,
            t,
            u: 1.0 / t,
            lambda_opt: lambda,
        })
    }

    /// `D(v) = sup{⟨λ,v⟩ : K(λ) ≤ 0}` by Lagrange–Newton on the active
    /// constraint `K(λ) = 0`, started independently of the primal route.
    pub fn second_rate_dual(&self, v: &Vector) -> Result<SecondRateResult> {
        let init = self.dual_start(v)?;
        self.second_rate_dual_from(v, init)
    }

    /// Dual solve warm-started at `init` (typically `λ(t(v)·v)`).
    pub fn second_rate_dual_from(&self, v: &Vector, init: Vector) -> Result<SecondRateResult> {
        let d = self.dim();
        let fail = |why: &str| Error::DualSolveFailed(format!("v = {:?}: {why}", v.as_slice()));
        if v.len() != d || v.norm() == 0.0 {
            return Err(fail("v must be a non-zero vector of model dimension"));
        }
        if !self.model.in_domain(&init) {
            return Err(fail("start outside the MGF domain"));
        }
        let mut lambda = init;
        let mut g = self.model.cumulant_grad(&lambda)?;
        // Multiplier ν from least squares on v = ν ∇K(λ).
        let mut nu = v.dot(&g) / g.norm_squared().max(f64::MIN_POSITIVE);
        if !(nu > 0.0) {
            nu = 1.0;
        }
        let residual = |l: &Vector, n: f64| -> Result<(f64, Vector, f64)> {
            let g = self.model.cumulant_grad(l)?;
            let k = self.model.cumulant(l)?;
            let rl = v - &g * n;
            Ok((libm::sqrt(rl.norm_squared() + k * k), g, k))
        };
        let (mut res, _, mut k) = residual(&lambda, nu)?;
        let scale = 1.0 + v.norm();
        for _ in 0..self.opts.max_newton_iter {
            if res <= self.opts.dual_tol * scale {
                break;
            }
            let h = self.model.cumulant_hess(&lambda)?;
            // KKT system: [νH  g; gᵀ 0][dλ; dν] = [v − ν g; −K]
            let mut m = Matrix::zeros(d + 1, d + 1);
            m.view_mut((0, 0), (d, d)).copy_from(&(&h * nu));
            for i in 0..d {
                m[(i, d)] = g[i];
                m[(d, i)] = g[i];
            }
            let mut rhs = crate::Vector::zeros(d + 1);
            let rl = v - &g * nu;
            for i in 0..d {
                rhs[i] = rl[i];
            }
            rhs[d] = -k;
            let step = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| fail("singular KKT matrix"))?;
            let dl = step.rows(0, d).into_owned();
            let dn = step[d];
            let mut a = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let cand = &lambda + &dl * a;
                let cn = nu + dn * a;
                if cn > 0.0 && self.model.in_domain(&cand) {
                    if let Ok((r, gc, kc)) = residual(&cand, cn) {
                        if r < (1.0 - 1e-4 * a) * res || r <= self.opts.dual_tol * scale {
                            lambda = cand;
                            nu = cn;
                            res = r;
                            g = gc;
                            k = kc;
                            accepted = true;
                            break;
                        }
                    }
                }
                a *= 0.5;
            }
            if !accepted {
                return Err(fail("line search stalled"));
            }
        }
        if res > 1e3 * self.opts.dual_tol * scale {
            return Err(fail("iteration budget exhausted"));
        }
        let t = 1.0 / nu;
        Ok(SecondRateResult {
            d: lambda.dot(v),
            t,
            u: nu,
            lambda_opt: lambda,
        })
    }

    /// A point on `{K = 0}` along a ray with negative mean drift, found
    /// without any primal solve.
    fn dual_start(&self, v: &Vector) -> Result<Vector> {
        let fail = |why: &str| Error::DualSolveFailed(format!("v = {:?}: {why}", v.as_slice()));
        if v.len() != self.dim() || v.norm() == 0.0 {
            return Err(fail("v must be a non-zero vector of model dimension"));
        }
        let mu = self.model.mean();
        let vh = v / v.norm();
        let mn = mu.norm();
        let dir = if mn == 0.0 {
            return Err(fail("zero mean drift"));
        } else if vh.dot(&mu) < -0.1 * mn {
            vh
        } else {
            let c = vh.dot(&mu) + 0.5 * mn;
            let d = &vh - &mu * (c / (mn * mn));
            &d / d.norm()
        };
        // K(c·dir) < 0 for small c > 0; find where it returns to zero.
        let k_at = |c: f64| -> Option<f64> {
            let l = &dir * c;
            if self.model.in_domain(&l) {
                self.model.cumulant(&l).ok()
            } else {
                None
            }
        };
        let mut lo = 0.0;
        let mut hi = 1e-3;
        loop {
            match k_at(hi) {
                Some(k) if k < 0.0 => {
                    lo = hi;
                    hi *= 2.0;
                    if hi > 1e8 {
                        return Err(fail("cumulant stays negative along the start ray"));
                    }
                }
                Some(_) => break,
                None => {
                    // Domain edge before the root: start strictly inside.
                    if lo == 0.0 {
                        return Err(fail("no feasible start"));
                    }
                    return Ok(&dir * lo);
                }
            }
        }
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            match k_at(m) {
                Some(k) if k < 0.0 => lo = m,
                Some(_) => hi = m,
                None => hi = m,
            }
        }
        Ok(&dir * (0.5 * (lo + hi)))
    }
}
