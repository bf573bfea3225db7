//! Trajectory simulation for `P(η(sG) < ∞)`.
//!
//! Under a tilt λ with `ψ(λ) = 1` and `∇K(λ) ∈ Q⁺`, the walk hits every `sG`
//! almost surely and
//!
//! ```text
//! P(η(sG) < ∞) = E_λ exp(−⟨λ, S(η(sG))⟩).
//! ```
//!
//! One trajectory serves a whole ascending grid of `s`: at step `n` every
//! unhit `s ≤ s*(n) = min_i S_i(n)/g_i` is hit. The naive estimator is the
//! same kernel at `λ = 0` with unit weights.
//!
//! Trajectory `i` draws from its own ChaCha8 stream `(seed, i)`, and sums are
//! formed per chunk of [`CHUNK`] trajectories and then combined in chunk
//! order, so results do not depend on how chunks are scheduled.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::MppReport;
use crate::jump::{JumpModel, SparreAndersenModel, StepSampler};
use crate::linalg::{dot, in_closed_orthant, in_open_orthant};
use crate::rate::RateEvaluator;
use crate::stats::{Moments, Z_99};
use crate::{Error, OrthantTarget, Result, Vector};

/// Trajectories per reduction chunk.
pub const CHUNK: u64 = 512;
/// `|ψ(λ) − 1|` above which an importance-sampling run is refused.
pub const TILT_TOLERANCE: f64 = 1e-4;
/// Hit fraction below which a run carries a [`BudgetWarning`].
pub const BUDGET_HIT_FRACTION: f64 = 0.999;
/// Log-probability cut for the certified early stop of naive trajectories.
pub const CERTIFIED_LOG_CUT: f64 = 40.0;

/// RNG stream for one trajectory.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltSource {
    DualOptimal,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TiltSpec {
    pub lambda: Vector,
    pub source: TiltSource,
}

impl TiltSpec {
    pub fn user(lambda: Vector) -> Self {
        Self {
            lambda,
            source: TiltSource::UserSupplied,
        }
    }

    /// Checks `|ψ(λ) − 1| ≤ tol` and `∇K(λ) ∈ Q⁺`.
    pub fn validate(&self, model: &dyn JumpModel, tol: f64) -> Result<()> {
        if self.lambda.len() != model.dim() {
            return Err(Error::InvalidTilt(format!(
                "λ has dimension {}, model has {}",
                self.lambda.len(),
                model.dim()
            )));
        }
        if !model.in_domain(&self.lambda) {
            return Err(Error::InvalidTilt(format!(
                "λ = {:?} outside the MGF domain",
                self.lambda.as_slice()
            )));
        }
        let psi = model.psi(&self.lambda)?;
        if !((psi - 1.0).abs() <= tol) {
            return Err(Error::InvalidTilt(format!(
                "ψ(λ) − 1 = {:e} exceeds {tol:e}",
                psi - 1.0
            )));
        }
        let m = model.cumulant_grad(&self.lambda)?;
        if !in_open_orthant(m.as_slice()) {
            return Err(Error::InvalidTilt(format!(
                "tilted mean {:?} is not in the open orthant",
                m.as_slice()
            )));
        }
        Ok(())
    }
}

/// The dominating-point tilt `λ = N(r_G)`.
pub fn default_tilt(report: &MppReport, model: &dyn JumpModel) -> Result<TiltSpec> {
    report.require_c3()?;
    let t = TiltSpec {
        lambda: report.n.clone(),
        source: TiltSource::DualOptimal,
    };
    t.validate(model, 1e-6)?;
    Ok(t)
}

/// Estimate at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct McRun {
    pub s: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// 99% normal-approximation interval, clipped at zero.
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_traj: u64,
    /// Trajectories that reached `sG` within the step budget.
    pub n_hit: u64,
    pub seed: u64,
}

impl McRun {
    pub fn from_moments(s: f64, m: &Moments, n_traj: u64, seed: u64) -> Self {
        let (estimate, std_error) = m.mean_se(n_traj);
        Self {
            s,
            estimate,
            std_error,
            ci_low: (estimate - Z_99 * std_error).max(0.0),
            ci_high: estimate + Z_99 * std_error,
            n_traj,
            n_hit: m.hits,
            seed,
        }
    }

    pub fn hit_fraction(&self) -> f64 {
        if self.n_traj == 0 {
            0.0
        } else {
            self.n_hit as f64 / self.n_traj as f64
        }
    }
}

/// Some trajectories ran out of steps before reaching `sG`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetWarning {
    /// Grid point with the smallest hit fraction.
    pub s: f64,
    pub hit_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HittingEstimate {
    pub runs: Vec<McRun>,
    pub warning: Option<BudgetWarning>,
}

/// A validated simulation, split into independently runnable chunks.
pub struct HittingPlan {
    sampler: Box<dyn StepSampler>,
    /// Weight `exp(−⟨λ, S⟩)`; `None` for unit weights.
    weight_lambda: Option<Vector>,
    /// Certified early stop: with `ψ(c) = 1`, `c ≥ 0`, the chance of ever
    /// reaching `sG` from `x` is at most `exp(⟨c, x⟩ − s⟨c, g⟩)`.
    stop_normal: Option<Vector>,
    g: Vector,
    s_grid: Vec<f64>,
    n_traj: u64,
    max_steps: usize,
    seed: u64,
    warn_budget: bool,
}

fn check_grid(g: &Vector, model: &dyn JumpModel, s_grid: &[f64]) -> Result<()> {
    if g.len() != model.dim() || !in_open_orthant(g.as_slice()) {
        return Err(Error::Config(format!(
            "g must be a positive vector of dimension {}",
            model.dim()
        )));
    }
    if s_grid.is_empty() {
        return Err(Error::Config("s grid is empty".into()));
    }
    if s_grid.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::Config(
            "s grid values must be finite and non-negative".into(),
        ));
    }
    if s_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("s grid must be sorted ascending".into()));
    }
    Ok(())
}

impl HittingPlan {
    /// Importance-sampling run under the tilt.
    pub fn importance(
        model: &dyn JumpModel,
        g: &Vector,
        tilt: &TiltSpec,
        s_grid: &[f64],
        n_traj: u64,
        max_steps: usize,
        seed: u64,
    ) -> Result<Self> {
        check_grid(g, model, s_grid)?;
        if n_traj == 0 {
            return Err(Error::Config("n_traj must be positive".into()));
        }
        tilt.validate(model, TILT_TOLERANCE)?;
        Ok(Self {
            sampler: model.tilted_sampler(&tilt.lambda)?,
            weight_lambda: Some(tilt.lambda.clone()),
            stop_normal: None,
            g: g.clone(),
            s_grid: s_grid.to_vec(),
            n_traj,
            max_steps,
            seed,
            warn_budget: true,
        })
    }

    /// Plain simulation under the original law.
    ///
    /// `certified_stop` is an optional `c ≥ 0` with `ψ(c) = 1`; trajectories
    /// whose bound `exp(⟨c, S⟩ − s⟨c, g⟩)` drops below `e^{-40}` are
    /// abandoned as misses.
    pub fn naive(
        model: &dyn JumpModel,
        g: &Vector,
        s_grid: &[f64],
        n_traj: u64,
        horizon: usize,
        seed: u64,
        certified_stop: Option<&Vector>,
    ) -> Result<Self> {
        check_grid(g, model, s_grid)?;
        if n_traj == 0 {
            return Err(Error::Config("n_traj must be positive".into()));
        }
        if let Some(c) = certified_stop {
            if c.len() != model.dim() || !in_closed_orthant(c.as_slice()) {
                return Err(Error::InvalidTilt(
                    "stop normal must be non-negative".into(),
                ));
            }
            let psi = model.psi(c)?;
            if !((psi - 1.0).abs() <= 1e-8) {
                return Err(Error::InvalidTilt(format!(
                    "stop normal has ψ − 1 = {:e}",
                    psi - 1.0
                )));
            }
        }
        Ok(Self {
            sampler: model.sampler()?,
            weight_lambda: None,
            stop_normal: certified_stop.cloned(),
            g: g.clone(),
            s_grid: s_grid.to_vec(),
            n_traj,
            max_steps: horizon,
            seed,
            warn_budget: false,
        })
    }

    pub fn n_chunks(&self) -> usize {
        self.n_traj.div_ceil(CHUNK) as usize
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    /// Per-grid-point sums over the trajectories of one chunk, in index order.
    pub fn run_chunk(&self, chunk: usize) -> Vec<Moments> {
        let mut acc = vec![Moments::default(); self.s_grid.len()];
        let d = self.g.len();
        let mut pos = vec![0.0; d];
        let mut step = vec![0.0; d];
        let lo = chunk as u64 * CHUNK;
        let hi = (lo + CHUNK).min(self.n_traj);
        for i in lo..hi {
            let mut rng = trajectory_rng(self.seed, i);
            pos.iter_mut().for_each(|x| *x = 0.0);
            self.trajectory(&mut rng, &mut pos, &mut step, &mut acc);
        }
        acc
    }

    fn trajectory(
        &self,
        rng: &mut ChaCha8Rng,
        pos: &mut [f64],
        step: &mut [f64],
        acc: &mut [Moments],
    ) {
        let grid = &self.s_grid;
        let g = self.g.as_slice();
        let stop_g = self.stop_normal.as_ref().map(|c| dot(c.as_slice(), g));
        let mut k = 0;
        let mut n = 0;
        loop {
            let s_star = pos
                .iter()
                .zip(g)
                .map(|(x, gi)| x / gi)
                .fold(f64::INFINITY, f64::min);
            if s_star >= grid[k] {
                let w = match &self.weight_lambda {
                    Some(l) => libm::exp(-dot(l.as_slice(), pos)),
                    None => 1.0,
                };
                while k < grid.len() && grid[k] <= s_star {
                    if let Some(l) = &self.weight_lambda {
                        if in_closed_orthant(l.as_slice()) {
                            let bound = libm::exp(-grid[k] * dot(l.as_slice(), g));
                            debug_assert!(
                                w <= bound * (1.0 + 1e-9),
                                "weight {w} above bound {bound}"
                            );
                        }
                    }
                    acc[k].push(w);
                    k += 1;
                }
                if k == grid.len() {
                    return;
                }
            }
            if n == self.max_steps {
                return;
            }
            if let (Some(c), Some(cg)) = (&self.stop_normal, stop_g) {
                if dot(c.as_slice(), pos) - grid[k] * cg < -CERTIFIED_LOG_CUT {
                    return;
                }
            }
            self.sampler.sample_into(rng, step);
            for (x, dx) in pos.iter_mut().zip(step.iter()) {
                *x += dx;
            }
            n += 1;
        }
    }

    /// Combines chunk sums, which must arrive in chunk order.
    pub fn finish<I: IntoIterator<Item = Vec<Moments>>>(&self, chunks: I) -> HittingEstimate {
        let mut total = vec![Moments::default(); self.s_grid.len()];
        for c in chunks {
            for (t, m) in total.iter_mut().zip(&c) {
                t.merge(m);
            }
        }
        let runs: Vec<McRun> = self
            .s_grid
            .iter()
            .zip(&total)
            .map(|(s, m)| McRun::from_moments(*s, m, self.n_traj, self.seed))
            .collect();
        let warning = if self.warn_budget {
            runs.iter()
                .filter(|r| r.hit_fraction() < BUDGET_HIT_FRACTION)
                .min_by(|a, b| a.hit_fraction().total_cmp(&b.hit_fraction()))
                .map(|r| BudgetWarning {
                    s: r.s,
                    hit_fraction: r.hit_fraction(),
                })
        } else {
            None
        };
        HittingEstimate { runs, warning }
    }

    /// Runs every chunk on the current thread.
    pub fn run(&self) -> HittingEstimate {
        self.finish((0..self.n_chunks()).map(|c| self.run_chunk(c)))
    }
}

/// Importance-sampling estimates of `P(η(sG) < ∞)` over an ascending grid.
pub fn is_hitting_prob(
    model: &dyn JumpModel,
    g: &Vector,
    tilt: &TiltSpec,
    s_grid: &[f64],
    n_traj: u64,
    max_steps: usize,
    seed: u64,
) -> Result<HittingEstimate> {
    Ok(HittingPlan::importance(model, g, tilt, s_grid, n_traj, max_steps, seed)?.run())
}

/// Fraction of untilted trajectories entering `sG` within `horizon` steps.
pub fn naive_hitting_prob(
    model: &dyn JumpModel,
    g: &Vector,
    s: f64,
    n_traj: u64,
    horizon: usize,
    seed: u64,
) -> Result<McRun> {
    let plan = HittingPlan::naive(model, g, &[s], n_traj, horizon, seed, None)?;
    Ok(plan.run().runs.remove(0))
}

/// Budgets for [`simulate_ruin`].
#[derive(Debug, Clone, PartialEq)]
pub struct RuinSettings {
    pub n_traj: u64,
    pub max_steps: usize,
    pub seed: u64,
    /// Tilt override; the dominating-point tilt when `None`.
    pub tilt: Option<Vector>,
}

/// The ruin problem for `s·g = u`, written as a plan so callers can run the
/// chunks in parallel. `None` means `u = 0`, where ruin is certain.
pub fn ruin_plan(
    model: &SparreAndersenModel,
    u: &Vector,
    settings: &RuinSettings,
) -> Result<Option<(f64, HittingPlan)>> {
    if u.len() != model.dim() {
        return Err(Error::Config(format!(
            "initial reserve has dimension {}, model has {}",
            u.len(),
            model.dim()
        )));
    }
    if u.iter().all(|&x| x == 0.0) {
        return Ok(None);
    }
    if !in_open_orthant(u.as_slice()) {
        return Err(Error::Config(
            "initial reserve must be zero or strictly positive".into(),
        ));
    }
    let s = u.max();
    let g = u / s;
    let tilt = match &settings.tilt {
        Some(l) => TiltSpec::user(l.clone()),
        None => {
            let ev = RateEvaluator::new(model);
            let report = OrthantTarget::new(g.clone(), model)?.mpp(&ev)?;
            default_tilt(&report, model)?
        }
    };
    let plan = HittingPlan::importance(
        model,
        &g,
        &tilt,
        &[s],
        settings.n_traj,
        settings.max_steps,
        settings.seed,
    )?;
    Ok(Some((s, plan)))
}

/// Simultaneous ruin probability with initial reserve `u`, through the
/// embedded walk: ruin happens iff the walk enters `u + cl(Q⁺)`.
pub fn simulate_ruin(
    model: &SparreAndersenModel,
    u: &Vector,
    settings: &RuinSettings,
) -> Result<McRun> {
    match ruin_plan(model, u, settings)? {
        None => Ok(certain_ruin(settings)),
        Some((_, plan)) => Ok(plan.run().runs.remove(0)),
    }
}

/// The run reported for `u = 0`.
pub fn certain_ruin(settings: &RuinSettings) -> McRun {
    McRun {
        s: 0.0,
        estimate: 1.0,
        std_error: 0.0,
        ci_low: 1.0,
        ci_high: 1.0,
        n_traj: settings.n_traj,
        n_hit: settings.n_traj,
        seed: settings.seed,
    }
}
