//! The constant in `P(η(sG) < ∞) ≈ A·s^{-(d-1)/2}·e^{-sD(G)}`.
//!
//! ```text
//! A = E / ((2π)^{(d-1)/2} · u_G^{d/2} · σ*_D · σ(α(r_G)))
//! σ*_D = √(σ²_D + a(u_G)/u_G),   σ²_D = d²/du² u·Λ(β(1/u)) at u_G,
//! a(u_G) = κᵀ Λ''(r_G g) κ
//! E = ∫_{ℝ^{d-1}} ∫_0^∞ e^{-‖N‖y} q(y) p(Jᵀt + yζ) dy dt
//! ```
//!
//! `p(z)` is the chance the untilted walk started at `z` ever enters
//! `cl(Q⁺)`, and `q(y)` the chance that the walk tilted at `N` keeps
//! `⟨N, S(n)⟩ ≥ ‖N‖y` for all `n ≥ 1`. Both come from Monte Carlo.
//!
//! Since `ψ(N) = 1`, `e^{⟨N,S(n)⟩}` is a martingale, which gives the bounds
//! used to stop trajectories early and to certify truncation:
//! `p(z) ≤ e^{⟨N,z⟩}`, and the tilted walk drops by `h` with probability at
//! most `e^{-h}`. Coordinatewise, `p(z) ≤ e^{ν_i z_i}` where `ψ(ν_i e_i) = 1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::RngCore;

use crate::geometry::HalfSpaceGeom;
use crate::jump::{JumpModel, StepSampler};
use crate::linalg::in_closed_orthant;
use crate::quadrature::CompositeRule;
use crate::simulation::trajectory_rng;
use crate::{Error, Result, Vector};

/// Relative step for the second difference of `u ↦ D_u(Ĥ)`.
pub const SIGMA2_REL_STEP: f64 = 1e-3;
/// Log-probability cut for abandoning `p` trajectories.
pub const P_LOG_CUT: f64 = 25.0;
/// Overshoot above the largest `q` threshold after which a path is final.
pub const Q_LOG_CUT: f64 = 25.0;

const P_SALT: u64 = 0x7073_616d_706c_6573;
const Q_SALT: u64 = 0x7173_616d_706c_6573;

// ---------------------------------------------------------------------------
// Laplace quantities

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceQuantities {
    pub sigma2_d: f64,
    /// Same second difference at half the step, for the consistency check.
    pub sigma2_d_half_step: f64,
    pub a_ug: f64,
    pub sigma_star_d: f64,
    /// `σ(α(r_G)) = √det ∇²K(N)`.
    pub sigma_alpha: f64,
}

/// Central second difference of `u ↦ u·Λ(β(1/u))` at `u_G` with step `h`.
pub fn sigma2_d_with_step(geom: &HalfSpaceGeom, model: &dyn JumpModel, h: f64) -> Result<f64> {
    let u = geom.u_g;
    let f = |x: f64| geom.d_u_half_space(model, x);
    let v = (f(u + h)? - 2.0 * f(u)? + f(u - h)?) / (h * h);
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonPositiveCurvature(format!(
            "σ²_D = {v} with step {h}"
        )))
    }
}

/// `σ²_D` with step `10⁻³·u_G`.
pub fn sigma2_d(geom: &HalfSpaceGeom, model: &dyn JumpModel) -> Result<f64> {
    sigma2_d_with_step(geom, model, SIGMA2_REL_STEP * geom.u_g)
}

/// `a = κᵀ A κ`.
pub fn a_coeff(kappa: &Vector, a: &crate::Matrix) -> f64 {
    (a * kappa).dot(kappa)
}

pub fn laplace_quantities(
    geom: &HalfSpaceGeom,
    model: &dyn JumpModel,
) -> Result<LaplaceQuantities> {
    let h = SIGMA2_REL_STEP * geom.u_g;
    let s2 = sigma2_d_with_step(geom, model, h)?;
    let s2_half = sigma2_d_with_step(geom, model, 0.5 * h)?;
    let a = a_coeff(&geom.kappa, &geom.lambda_hess);
    let det = geom.tilted_cov.determinant();
    if !(det > 0.0) {
        return Err(Error::SingularHessian(format!("det ∇²K(N) = {det}")));
    }
    Ok(LaplaceQuantities {
        sigma2_d: s2,
        sigma2_d_half_step: s2_half,
        a_ug: a,
        sigma_star_d: libm::sqrt(s2 + a / geom.u_g),
        sigma_alpha: libm::sqrt(det),
    })
}

/// `A = E / ((2π)^{(d-1)/2} · u_G^{d/2} · σ*_D · σ_α)`.
pub fn constant_a(e: f64, u_g: f64, sigma_star_d: f64, sigma_alpha: f64, d: usize) -> f64 {
    let df = d as f64;
    e / (libm::pow(2.0 * PI, 0.5 * (df - 1.0))
        * libm::pow(u_g, 0.5 * df)
        * sigma_star_d
        * sigma_alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AProvenance {
    Estimated,
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticModel {
    pub d_g: f64,
    pub a: f64,
    pub provenance: AProvenance,
    pub dim: usize,
}

impl AsymptoticModel {
    /// `A·s^{-(d-1)/2}·e^{-s·D_G}`.
    pub fn predict(&self, s: f64) -> f64 {
        self.a * libm::pow(s, -0.5 * (self.dim as f64 - 1.0)) * libm::exp(-s * self.d_g)
    }
}

// ---------------------------------------------------------------------------
// p and q

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbEstimate {
    pub value: f64,
    pub std_error: f64,
}

fn bernoulli(hits: u64, n: u64) -> ProbEstimate {
    if n == 0 {
        return ProbEstimate {
            value: 0.0,
            std_error: 0.0,
        };
    }
    let p = hits as f64 / n as f64;
    let var = if n > 1 {
        p * (1.0 - p) / (n as f64 - 1.0)
    } else {
        0.0
    };
    ProbEstimate {
        value: p,
        std_error: libm::sqrt(var),
    }
}

/// Positive root of `K(ν e_i) = 0`, when the `i`-th mean is negative.
pub fn coordinate_lundberg(model: &dyn JumpModel, i: usize) -> Option<f64> {
    if !(model.mean()[i] < 0.0) {
        return None;
    }
    let d = model.dim();
    let k = |nu: f64| -> Option<f64> {
        let mut l = Vector::zeros(d);
        l[i] = nu;
        if model.in_domain(&l) {
            model.cumulant(&l).ok()
        } else {
            None
        }
    };
    let mut lo = 0.0;
    let mut hi = 1e-3;
    loop {
        match k(hi) {
            Some(v) if v < 0.0 => {
                lo = hi;
                hi *= 2.0;
                if hi > 1e9 {
                    return None;
                }
            }
            Some(_) => break,
            None => return None,
        }
    }
    for _ in 0..200 {
        let m = 0.5 * (lo + hi);
        match k(m) {
            Some(v) if v < 0.0 => lo = m,
            _ => hi = m,
        }
    }
    // The lower end keeps the bound e^{ν z_i} valid.
    Some(lo)
}

/// Monte Carlo for `p(z)` under the untilted law.
pub struct PEstimator {
    sampler: alloc::boxed::Box<dyn StepSampler>,
    n: Vector,
    nu: Vec<Option<f64>>,
    horizon: usize,
}

impl PEstimator {
    pub fn new(model: &dyn JumpModel, n: &Vector, horizon: usize) -> Result<Self> {
        Ok(Self {
            sampler: model.sampler()?,
            n: n.clone(),
            nu: (0..model.dim())
                .map(|i| coordinate_lundberg(model, i))
                .collect(),
            horizon,
        })
    }

    /// Log of the best available bound on `p(x)`.
    fn log_bound(&self, x: &[f64]) -> f64 {
        let mut b = crate::linalg::dot(self.n.as_slice(), x);
        for (xi, nu) in x.iter().zip(&self.nu) {
            if let Some(nu) = nu {
                if *xi < 0.0 {
                    b = b.min(nu * xi);
                }
            }
        }
        b
    }

    pub fn estimate(&self, z: &[f64], n_samples: u64, rng: &mut dyn RngCore) -> ProbEstimate {
        if in_closed_orthant(z) {
            return ProbEstimate {
                value: 1.0,
                std_error: 0.0,
            };
        }
        let d = z.len();
        let mut x = vec![0.0; d];
        let mut step = vec![0.0; d];
        let mut hits = 0;
        for _ in 0..n_samples {
            x.copy_from_slice(z);
            for _ in 0..self.horizon {
                self.sampler.sample_into(rng, &mut step);
                for (a, b) in x.iter_mut().zip(&step) {
                    *a += b;
                }
                if in_closed_orthant(&x) {
                    hits += 1;
                    break;
                }
                if self.log_bound(&x) < -P_LOG_CUT {
                    break;
                }
            }
        }
        bernoulli(hits, n_samples)
    }
}

/// `p(z)` from `n_samples` walks of at most `horizon` steps.
pub fn estimate_p(
    model: &dyn JumpModel,
    geom: &HalfSpaceGeom,
    z: &Vector,
    n_samples: u64,
    horizon: usize,
    seed: u64,
) -> Result<ProbEstimate> {
    let est = PEstimator::new(model, &geom.n, horizon)?;
    let mut rng = trajectory_rng(seed ^ P_SALT, 0);
    Ok(est.estimate(z.as_slice(), n_samples, &mut rng))
}

/// Sample of `min_{1≤n≤H} ⟨N, S⁽ᴺ⁾(n)⟩` for the walk tilted at `N`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    minima: Vec<f64>,
    horizon: usize,
    max_threshold: f64,
}

impl QTable {
    /// Horizon: smallest `n` with `drift·n ≥ threshold + 6·sd·√n`, where
    /// drift and sd are the mean and spread of one projected tilted step.
    pub fn horizon_for(geom: &HalfSpaceGeom, threshold: f64) -> usize {
        let drift = geom.r_g * geom.g.dot(&geom.n);
        let sd = libm::sqrt((&geom.tilted_cov * &geom.n).dot(&geom.n));
        let thr = threshold.max(0.0);
        let root = (3.0 * sd + libm::sqrt(9.0 * sd * sd + drift * thr)) / drift;
        (libm::ceil(root * root) as usize).max(1)
    }

    /// Simulates `n_samples` paths; thresholds up to `max_threshold` are
    /// resolved. Paths stop once `Q_LOG_CUT` above it.
    pub fn build(
        model: &dyn JumpModel,
        geom: &HalfSpaceGeom,
        n_samples: u64,
        max_threshold: f64,
        horizon: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let sampler = model.tilted_sampler(&geom.n)?;
        let horizon = horizon.unwrap_or_else(|| Self::horizon_for(geom, max_threshold));
        let n = geom.n.as_slice();
        let d = n.len();
        let mut step = vec![0.0; d];
        let mut minima = Vec::with_capacity(n_samples as usize);
        let mut rng = trajectory_rng(seed ^ Q_SALT, 0);
        for _ in 0..n_samples {
            let mut w = 0.0;
            let mut m = f64::INFINITY;
            for _ in 0..horizon {
                sampler.sample_into(&mut rng, &mut step);
                w += crate::linalg::dot(n, &step);
                m = m.min(w);
                if w >= max_threshold + Q_LOG_CUT {
                    break;
                }
            }
            minima.push(m);
        }
        minima.sort_by(f64::total_cmp);
        Ok(Self {
            minima,
            horizon,
            max_threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.minima.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minima.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn minima(&self) -> &[f64] {
        &self.minima
    }

    /// Fraction of paths whose infimum is at least `threshold`.
    pub fn prob_at_least(&self, threshold: f64) -> ProbEstimate {
        let below = self.minima.partition_point(|m| *m < threshold);
        bernoulli((self.minima.len() - below) as u64, self.minima.len() as u64)
    }
}

/// `q(z) = P(inf_{n≥1} ⟨N, S⁽ᴺ⁾(n)⟩ ≥ ⟨N, z⟩)`.
pub fn estimate_q(
    model: &dyn JumpModel,
    geom: &HalfSpaceGeom,
    z: &Vector,
    n_samples: u64,
    horizon: Option<usize>,
    seed: u64,
) -> Result<ProbEstimate> {
    let thr = geom.n.dot(z);
    let table = QTable::build(model, geom, n_samples, thr, horizon, seed)?;
    Ok(table.prob_at_least(thr))
}

// ---------------------------------------------------------------------------
// The E-integral

/// Budgets for [`EPlan`].
#[derive(Debug, Clone, PartialEq)]
pub struct EIntegralSettings {
    pub p_samples: u64,
    pub q_samples: u64,
    pub p_horizon: usize,
    /// Gauss–Legendre nodes per panel.
    pub order: usize,
    pub panel_width: f64,
    /// Absolute bound on the truncated envelope mass.
    pub tail_tol: f64,
    pub max_radius: f64,
    pub seed: u64,
    /// Replace `p` and `q` by 1; needs `tangential_radius`.
    pub unit_mode: bool,
    pub tangential_radius: Option<f64>,
    pub normal_radius: Option<f64>,
}

impl Default for EIntegralSettings {
    fn default() -> Self {
        Self {
            p_samples: 256,
            q_samples: 100_000,
            p_horizon: 10_000,
            order: 3,
            panel_width: 0.5,
            tail_tol: 1e-3,
            max_radius: 200.0,
            seed: 0,
            unit_mode: false,
            tangential_radius: None,
            normal_radius: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EIntegralEstimate {
    pub value: f64,
    pub std_error: f64,
    pub tangential_radius: f64,
    pub normal_radius: f64,
    pub n_nodes: usize,
    /// Nodes where `p` was simulated.
    pub n_simulated: usize,
    /// Certified bound on the neglected envelope mass.
    pub tail_bound: f64,
    pub settings: EIntegralSettings,
}

/// Exponential envelope of the integrand.
///
/// `p(Jᵀt + yζ) ≤ min(1, e^{b·y − a‖t‖})` and
/// `q(y) ≤ min(1, ψ((1+θ)N)·e^{−θ‖N‖y})`.
#[derive(Debug, Clone)]
struct Envelope {
    d: usize,
    norm_n: f64,
    a: f64,
    b: f64,
    chernoff: Vec<(f64, f64)>,
    nu: Vec<Option<f64>>,
}

impl Envelope {
    fn new(model: &dyn JumpModel, geom: &HalfSpaceGeom) -> Result<Self> {
        let d = geom.dim();
        let nu: Vec<Option<f64>> = (0..d).map(|i| coordinate_lundberg(model, i)).collect();
        let frame = &geom.frame;
        let zeta = &geom.zeta;
        // Decay rate of the coordinate bound along tangential directions.
        let a = if d == 1 {
            f64::INFINITY
        } else if d == 2 {
            let j0 = frame.row(0).transpose();
            let rate = |sgn: f64| {
                (0..2)
                    .filter_map(|i| nu[i].map(|n| n * (-sgn * j0[i])))
                    .fold(0.0, f64::max)
            };
            rate(1.0).min(rate(-1.0))
        } else if nu.iter().all(|n| n.is_some()) {
            // min_i (Jᵀt)_i ≤ −c‖t‖ because Jᵀt ⟂ ζ > 0.
            let zmin = zeta.min();
            let zsum: f64 = zeta.iter().sum();
            let c = 1.0 / (libm::sqrt(d as f64) * (zsum / zmin).max(1.0));
            let nmin = nu.iter().map(|n| n.unwrap()).fold(f64::INFINITY, f64::min);
            nmin * c
        } else {
            0.0
        };
        if !(a > 0.0) {
            return Err(Error::TruncationBudgetExceeded(
                "p does not decay along every tangential direction".into(),
            ));
        }
        let b = (0..d)
            .filter_map(|i| nu[i].map(|n| n * zeta[i]))
            .fold(0.0, f64::max);
        let mut chernoff = Vec::new();
        for th in [0.25, 0.5, 1.0, 2.0, 4.0] {
            let l = &geom.n * (1.0 + th);
            if model.in_domain(&l) {
                if let Ok(k) = model.cumulant(&l) {
                    chernoff.push((th, k));
                }
            }
        }
        Ok(Self {
            d,
            norm_n: geom.n.norm(),
            a,
            b,
            chernoff,
            nu,
        })
    }

    fn q_bound(&self, y: f64) -> f64 {
        self.chernoff
            .iter()
            .map(|(th, k)| libm::exp(k - th * self.norm_n * y))
            .fold(1.0, f64::min)
    }

    /// Pointwise bound on `p(z)`.
    fn p_bound(&self, z: &[f64]) -> f64 {
        let mut lb: f64 = 0.0;
        for (zi, nu) in z.iter().zip(&self.nu) {
            if let (Some(nu), true) = (nu, *zi < 0.0) {
                lb = lb.min(nu * zi);
            }
        }
        libm::exp(lb)
    }

    /// `∫_{‖t‖>R} min(1, e^{b·y − a‖t‖}) dt` over `ℝ^{d−1}`.
    fn tangential_tail(&self, r: f64, y: f64) -> f64 {
        let k = self.d - 1;
        if k == 0 {
            return 0.0;
        }
        let kf = k as f64;
        // Surface of the unit sphere in ℝᵏ and volume of the unit ball.
        let surf = 2.0 * libm::pow(PI, 0.5 * kf) / libm::tgamma(0.5 * kf);
        let vol = surf / kf;
        let rho = (self.b * y / self.a).max(0.0);
        // ∫_c^∞ r^{k−1} e^{−a(r−c)} dr for c ≥ 0.
        let radial = |c: f64| -> f64 {
            let mut s = 0.0;
            let mut fact = 1.0;
            // Σ_{j=0}^{k−1} (k−1)!/j! · c^j / a^{k−j}
            let m = k - 1;
            let mut mfact = 1.0;
            for i in 1..=m {
                mfact *= i as f64;
            }
            for j in 0..=m {
                if j > 0 {
                    fact *= j as f64;
                }
                s += mfact / fact * libm::pow(c, j as f64) / libm::pow(self.a, (k - j) as f64);
            }
            s
        };
        if r >= rho {
            surf * libm::exp(self.b * y - self.a * r) * radial(r)
        } else {
            vol * (libm::pow(rho, kf) - libm::pow(r, kf)) + surf * radial(rho)
        }
    }

    fn y_weight(&self, y: f64) -> f64 {
        libm::exp(-self.norm_n * y) * self.q_bound(y)
    }

    /// Envelope mass beyond `y > Y` plus mass with `‖t‖ > T`, `y ≤ Y`.
    fn tail(&self, t: f64, y: f64) -> (f64, f64) {
        let upper = y + 80.0 / self.norm_n;
        let beyond = CompositeRule::new(y, upper, 160, 8)
            .integrate(|s| self.y_weight(s) * self.tangential_tail(0.0, s));
        let side = CompositeRule::new(0.0, y.max(1e-12), 64.max((4.0 * y) as usize), 8)
            .integrate(|s| self.y_weight(s) * self.tangential_tail(t, s));
        (beyond, side)
    }
}

#[derive(Debug, Clone)]
struct ENode {
    z: Vec<f64>,
    /// Tangential quadrature weight.
    wt: f64,
    /// Index into the normal rule.
    iy: usize,
    simulate: bool,
}

/// Evaluated node: estimate of `p` and its variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeValue {
    pub p: f64,
    pub var: f64,
}

/// Quadrature nodes and Monte Carlo state for `E`, evaluable node by node.
pub struct EPlan {
    settings: EIntegralSettings,
    y_nodes: Vec<f64>,
    /// Normal weight times `e^{−‖N‖y}`.
    y_weights: Vec<f64>,
    nodes: Vec<ENode>,
    p: Option<PEstimator>,
    q: Option<QTable>,
    norm_n: f64,
    t_radius: f64,
    y_radius: f64,
    tail_bound: f64,
}

impl EPlan {
    pub fn new(
        model: &dyn JumpModel,
        geom: &HalfSpaceGeom,
        settings: &EIntegralSettings,
    ) -> Result<Self> {
        let d = geom.dim();
        let norm_n = geom.n.norm();
        if settings.order == 0 || !(settings.panel_width > 0.0) {
            return Err(Error::Config(
                "quadrature order and panel width must be positive".into(),
            ));
        }
        let env = if settings.unit_mode {
            None
        } else {
            Some(Envelope::new(model, geom)?)
        };

        let (t_radius, y_radius, mut tail_bound) = if settings.unit_mode {
            let t = settings.tangential_radius.ok_or_else(|| {
                Error::Config("unit mode needs an explicit tangential radius".into())
            })?;
            (t, settings.normal_radius.unwrap_or(40.0 / norm_n), 0.0)
        } else {
            let env = env.as_ref().unwrap();
            let half = 0.5 * settings.tail_tol;
            let y = match settings.normal_radius {
                Some(y) => y,
                None => {
                    let mut y = 1.0 / norm_n;
                    while env.tail(0.0, y).0 > half {
                        y += 1.0 / norm_n;
                        if y > settings.max_radius {
                            return Err(Error::TruncationBudgetExceeded(format!(
                                "normal radius above {}",
                                settings.max_radius
                            )));
                        }
                    }
                    y
                }
            };
            let t = match settings.tangential_radius {
                Some(t) => t,
                None => {
                    let mut t = 1.0;
                    while env.tail(t, y).1 > half {
                        t += 1.0;
                        if t > settings.max_radius {
                            return Err(Error::TruncationBudgetExceeded(format!(
                                "tangential radius above {}",
                                settings.max_radius
                            )));
                        }
                    }
                    t
                }
            };
            let (a, b) = env.tail(t, y);
            (t, y, a + b)
        };

        let panels = |len: f64| (libm::ceil(len / settings.panel_width) as usize).max(1);
        let yr = CompositeRule::new(0.0, y_radius, panels(y_radius), settings.order);
        let y_nodes = yr.nodes.clone();
        let y_weights: Vec<f64> = yr
            .nodes
            .iter()
            .zip(&yr.weights)
            .map(|(y, w)| w * libm::exp(-norm_n * y))
            .collect();

        let k = d - 1;
        let frame = &geom.frame;
        let point = |t: &[f64], y: f64| -> Vec<f64> {
            let mut z: Vec<f64> = geom.zeta.iter().map(|v| v * y).collect();
            for (kk, tk) in t.iter().enumerate() {
                for (i, zi) in z.iter_mut().enumerate() {
                    *zi += tk * frame[(kk, i)];
                }
            }
            z
        };
        let mut nodes = Vec::new();
        for (iy, &y) in y_nodes.iter().enumerate() {
            let tensor: Vec<(Vec<f64>, f64)> = if k == 0 {
                vec![(Vec::new(), 1.0)]
            } else if k == 1 {
                // Panel edges where the point crosses a face of the orthant.
                let breaks: Vec<f64> = (0..d)
                    .filter(|&i| frame[(0, i)] != 0.0)
                    .map(|i| -y * geom.zeta[i] / frame[(0, i)])
                    .collect();
                let r = CompositeRule::with_breaks(
                    -t_radius,
                    t_radius,
                    settings.panel_width,
                    settings.order,
                    &breaks,
                );
                r.nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(t, w)| (vec![*t], *w))
                    .collect()
            } else {
                let r =
                    CompositeRule::new(-t_radius, t_radius, panels(2.0 * t_radius), settings.order);
                let mut out = vec![(Vec::new(), 1.0)];
                for _ in 0..k {
                    let mut next = Vec::with_capacity(out.len() * r.len());
                    for (t, w) in &out {
                        for (x, wx) in r.nodes.iter().zip(&r.weights) {
                            let mut t2 = t.clone();
                            t2.push(*x);
                            next.push((t2, w * wx));
                        }
                    }
                    out = next;
                }
                out
            };
            for (t, wt) in tensor {
                let z = point(&t, y);
                nodes.push(ENode {
                    z,
                    wt,
                    iy,
                    simulate: !settings.unit_mode,
                });
            }
        }

        // Nodes whose envelope contribution is negligible are set to zero
        // and their mass added to the certified bound.
        if let Some(env) = &env {
            let budget = 0.25 * settings.tail_tol / nodes.len().max(1) as f64;
            for n in nodes.iter_mut() {
                let y = y_nodes[n.iy];
                let c = n.wt * y_weights[n.iy] * env.q_bound(y) * env.p_bound(&n.z);
                if c < budget {
                    n.simulate = false;
                    tail_bound += c;
                }
            }
        }

        let (p, q) = if settings.unit_mode {
            (None, None)
        } else {
            let p = PEstimator::new(model, &geom.n, settings.p_horizon)?;
            let q = QTable::build(
                model,
                geom,
                settings.q_samples,
                norm_n * y_radius,
                None,
                settings.seed,
            )?;
            (Some(p), Some(q))
        };
        Ok(Self {
            settings: settings.clone(),
            y_nodes,
            y_weights,
            nodes,
            p,
            q,
            norm_n,
            t_radius,
            y_radius,
            tail_bound,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn q_table(&self) -> Option<&QTable> {
        self.q.as_ref()
    }

    /// `p` at node `i`, from its own RNG stream.
    pub fn eval_node(&self, i: usize) -> NodeValue {
        let node = &self.nodes[i];
        match &self.p {
            None => NodeValue { p: 1.0, var: 0.0 },
            Some(_) if !node.simulate => NodeValue { p: 0.0, var: 0.0 },
            Some(pe) => {
                let mut rng = trajectory_rng(self.settings.seed ^ P_SALT, i as u64);
                let e = pe.estimate(&node.z, self.settings.p_samples, &mut rng);
                NodeValue {
                    p: e.value,
                    var: e.std_error * e.std_error,
                }
            }
        }
    }

    /// Assembles `E`; node values must arrive in node order.
    pub fn finish<I: IntoIterator<Item = NodeValue>>(&self, values: I) -> EIntegralEstimate {
        let ny = self.y_nodes.len();
        // c_y = w_y e^{−‖N‖y} Σ_t w_t p(t, y), and its p-variance.
        let mut c = vec![0.0; ny];
        let mut var_p = vec![0.0; ny];
        for (node, v) in self.nodes.iter().zip(values) {
            c[node.iy] += node.wt * v.p;
            var_p[node.iy] += node.wt * node.wt * v.var;
        }
        for iy in 0..ny {
            c[iy] *= self.y_weights[iy];
            var_p[iy] *= self.y_weights[iy] * self.y_weights[iy];
        }
        let (value, variance) = match &self.q {
            None => (c.iter().sum(), 0.0),
            Some(q) => {
                let qs: Vec<f64> = self
                    .y_nodes
                    .iter()
                    .map(|y| q.prob_at_least(self.norm_n * y).value)
                    .collect();
                let value: f64 = c.iter().zip(&qs).map(|(c, q)| c * q).sum();
                let vp: f64 = var_p.iter().zip(&qs).map(|(v, q)| v * q * q).sum();
                // q enters through one empirical sample of infima, so its
                // contribution is the variance of X_j = Σ_y c_y 1{M_j ≥ ‖N‖y}.
                let mut order: Vec<usize> = (0..ny).collect();
                order.sort_by(|a, b| self.y_nodes[*a].total_cmp(&self.y_nodes[*b]));
                let mut cum = Vec::with_capacity(ny);
                let mut acc = 0.0;
                for &i in &order {
                    acc += c[i];
                    cum.push(acc);
                }
                let ys: Vec<f64> = order
                    .iter()
                    .map(|&i| self.norm_n * self.y_nodes[i])
                    .collect();
                let n = q.len() as f64;
                let (mut s1, mut s2) = (0.0, 0.0);
                for m in q.minima() {
                    let k = ys.partition_point(|y| y <= m);
                    let x = if k == 0 { 0.0 } else { cum[k - 1] };
                    s1 += x;
                    s2 += x * x;
                }
                let mean = s1 / n;
                let vq = if n > 1.0 {
                    ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0) / n
                } else {
                    0.0
                };
                (value, vp + vq)
            }
        };
        EIntegralEstimate {
            value,
            std_error: libm::sqrt(variance),
            tangential_radius: self.t_radius,
            normal_radius: self.y_radius,
            n_nodes: self.nodes.len(),
            n_simulated: self.nodes.iter().filter(|n| n.simulate).count(),
            tail_bound: self.tail_bound,
            settings: self.settings.clone(),
        }
    }

    /// Evaluates every node on the current thread.
    pub fn run(&self) -> EIntegralEstimate {
        self.finish((0..self.nodes.len()).map(|i| self.eval_node(i)))
    }
}

/// Sequential `E` with the given settings.
pub fn estimate_e_integral(
    model: &dyn JumpModel,
    geom: &HalfSpaceGeom,
    settings: &EIntegralSettings,
) -> Result<EIntegralEstimate> {
    Ok(EPlan::new(model, geom, settings)?.run())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_formula_plug_in() {
        let a = constant_a(1.0, 1.0, 1.0, 1.0, 2);
        assert!((a - 1.0 / libm::sqrt(2.0 * PI)).abs() < 1e-15);
        assert!((constant_a(2.0, 1.0, 1.0, 1.0, 2) - 2.0 * a).abs() < 1e-15);
    }

    #[test]
    fn predict_ratio_and_shape() {
        let m = AsymptoticModel {
            d_g: 2.22939,
            a: 0.3396,
            provenance: AProvenance::Fitted,
            dim: 2,
        };
        let s = 10.0;
        let r = m.predict(s) / m.predict(s + 1.0);
        let exact = libm::sqrt((s + 1.0) / s) * libm::exp(2.22939);
        assert!((r / exact - 1.0).abs() < 1e-12);
        assert!((m.predict(10.0) - 2.2e-11).abs() < 0.1e-11);
        let one = AsymptoticModel { dim: 1, ..m };
        assert!((one.predict(3.0) - 0.3396 * libm::exp(-3.0 * 2.22939)).abs() < 1e-18);
    }

    #[test]
    fn a_coeff_is_quadratic() {
        let a = crate::Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let k = Vector::from_vec(vec![0.4, -0.2]);
        assert_eq!(a_coeff(&Vector::zeros(2), &a), 0.0);
        assert!((a_coeff(&(&k * 2.0), &a) - 4.0 * a_coeff(&k, &a)).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_edges() {
        assert_eq!(bernoulli(0, 0).value, 0.0);
        assert_eq!(bernoulli(5, 5).std_error, 0.0);
    }
}
