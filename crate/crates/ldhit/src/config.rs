//! JSON run configuration.

use std::path::Path;

use ldhit_core::asymptotics::EIntegralSettings;
use ldhit_core::jump::build_sparre_andersen;
use ldhit_core::{
    ClaimModel, GaussianJumpModel, JumpModel, Matrix, ScalarDist, SparreAndersenModel, Vector,
};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Orthant vertex.
    pub g: Vec<f64>,
    #[serde(default)]
    pub s_grid: Option<GridSpec>,
    #[serde(default = "default_n_traj")]
    pub n_traj: u64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tilt: TiltConfig,
    /// Points tabulated by `rates`; defaults to `g` and the mean jump.
    #[serde(default)]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub e_integral: EConfig,
    #[serde(default)]
    pub asym: AsymConfig,
    #[serde(default)]
    pub ruin: Option<RuinConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_n_traj() -> u64 {
    50_000
}

fn default_max_steps() -> usize {
    350
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Gaussian {
        mu: Vec<f64>,
        sigma: Vec<Vec<f64>>,
    },
    SparreAndersen {
        premium: Vec<f64>,
        claims: ClaimSpec,
        interarrival: DistSpec,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClaimSpec {
    /// `J = weights · J₀` for a scalar claim `J₀`.
    Proportional {
        weights: Vec<f64>,
        dist: DistSpec,
    },
    Independent {
        components: Vec<DistSpec>,
    },
    Constant {
        value: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Constant { value: f64 },
}

impl From<DistSpec> for ScalarDist {
    fn from(d: DistSpec) -> Self {
        match d {
            DistSpec::Exponential { rate } => ScalarDist::Exponential { rate },
            DistSpec::Gamma { shape, rate } => ScalarDist::Gamma { shape, rate },
            DistSpec::Constant { value } => ScalarDist::Constant { value },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Range { start: f64, stop: f64, step: f64 },
    List(Vec<f64>),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum TiltConfig {
    #[default]
    #[serde(skip)]
    DualOptimalDefault,
    Named(TiltName),
    Lambda {
        lambda: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltName {
    DualOptimal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EConfig {
    pub p_samples: u64,
    pub q_samples: u64,
    pub p_horizon: usize,
    pub order: usize,
    pub panel_width: f64,
    pub tail_tol: f64,
    pub max_radius: f64,
}

impl Default for EConfig {
    fn default() -> Self {
        let d = EIntegralSettings::default();
        Self {
            p_samples: d.p_samples,
            q_samples: d.q_samples,
            p_horizon: d.p_horizon,
            order: d.order,
            panel_width: d.panel_width,
            tail_tol: d.tail_tol,
            max_radius: d.max_radius,
        }
    }
}

impl EConfig {
    pub fn settings(&self, seed: u64) -> EIntegralSettings {
        EIntegralSettings {
            p_samples: self.p_samples,
            q_samples: self.q_samples,
            p_horizon: self.p_horizon,
            order: self.order,
            panel_width: self.panel_width,
            tail_tol: self.tail_tol,
            max_radius: self.max_radius,
            seed,
            ..EIntegralSettings::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsymConfig {
    /// Existing `simulate` output to fit; simulated inline when absent.
    pub simulate_csv: Option<String>,
    /// Also estimate `A` directly through the E-integral.
    pub estimate_a: bool,
}

impl Default for AsymConfig {
    fn default() -> Self {
        Self {
            simulate_csv: None,
            estimate_a: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuinConfig {
    /// Initial reserves.
    pub u: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "ldhit-out".into(),
        }
    }
}

/// A model built from its configuration block, keeping the Sparre Andersen form available.
pub enum BuiltModel {
    Gaussian(GaussianJumpModel),
    SparreAndersen(SparreAndersenModel),
}

impl BuiltModel {
    pub fn as_dyn(&self) -> &dyn JumpModel {
        match self {
            BuiltModel::Gaussian(m) => m,
            BuiltModel::SparreAndersen(m) => m,
        }
    }
}

fn bad(key: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {why}"))
}

fn finite(key: &str, v: &[f64]) -> Result<(), CliError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(bad(key, "values must be finite"))
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<BuiltModel, CliError> {
        match self {
            ModelSpec::Gaussian { mu, sigma } => {
                finite("model.mu", mu)?;
                let d = mu.len();
                if d == 0 {
                    return Err(bad("model.mu", "must not be empty"));
                }
                if sigma.len() != d || sigma.iter().any(|r| r.len() != d) {
                    return Err(bad("model.sigma", format!("must be a {d}×{d} matrix")));
                }
                let flat: Vec<f64> = sigma.iter().flatten().copied().collect();
                finite("model.sigma", &flat)?;
                GaussianJumpModel::new(
                    Vector::from_vec(mu.clone()),
                    Matrix::from_row_slice(d, d, &flat),
                )
                .map(BuiltModel::Gaussian)
                .map_err(|e| bad("model.sigma", e))
            }
            ModelSpec::SparreAndersen {
                premium,
                claims,
                interarrival,
            } => {
                finite("model.premium", premium)?;
                let claims = match claims {
                    ClaimSpec::Proportional { weights, dist } => {
                        finite("model.claims.weights", weights)?;
                        ClaimModel::Proportional {
                            weights: Vector::from_vec(weights.clone()),
                            dist: (*dist).into(),
                        }
                    }
                    ClaimSpec::Independent { components } => ClaimModel::Independent {
                        components: components.iter().map(|c| (*c).into()).collect(),
                    },
                    ClaimSpec::Constant { value } => {
                        finite("model.claims.value", value)?;
                        ClaimModel::Constant {
                            value: Vector::from_vec(value.clone()),
                        }
                    }
                };
                build_sparre_andersen(
                    Vector::from_vec(premium.clone()),
                    claims,
                    (*interarrival).into(),
                )
                .map(BuiltModel::SparreAndersen)
                .map_err(|e| bad("model", e))
            }
        }
    }
}

impl GridSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        match self {
            GridSpec::Range { start, stop, step } => {
                if !(*step > 0.0) || !step.is_finite() {
                    return Err(bad("s_grid.step", "must be positive"));
                }
                if !(start.is_finite() && stop.is_finite()) || *start < 0.0 {
                    return Err(bad("s_grid.start", "must be finite and non-negative"));
                }
                if stop < start {
                    return Err(bad("s_grid.stop", "must not be below start"));
                }
                // Index-based so 7 + 0.02k lands on the intended points.
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok((0..=n).map(|k| start + step * k as f64).collect())
            }
            GridSpec::List(v) => {
                if v.is_empty() {
                    return Err(bad("s_grid", "must not be empty"));
                }
                if v.iter().any(|s| !s.is_finite() || *s < 0.0) {
                    return Err(bad("s_grid", "values must be finite and non-negative"));
                }
                if v.windows(2).any(|w| w[1] < w[0]) {
                    return Err(bad("s_grid", "must be sorted ascending"));
                }
                Ok(v.clone())
            }
        }
    }
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Schema-level checks that do not need the model.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.g.is_empty() || self.g.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(bad("g", "must be a non-empty vector of positive numbers"));
        }
        if self.n_traj == 0 {
            return Err(bad("n_traj", "must be positive"));
        }
        if self.max_steps == 0 {
            return Err(bad("max_steps", "must be positive"));
        }
        if let Some(grid) = &self.s_grid {
            grid.values()?;
        }
        if let TiltConfig::Lambda { lambda } = &self.tilt {
            finite("tilt.lambda", lambda)?;
            if lambda.len() != self.g.len() {
                return Err(bad("tilt.lambda", "dimension differs from g"));
            }
        }
        if let Some(points) = &self.points {
            for p in points {
                finite("points", p)?;
                if p.len() != self.g.len() {
                    return Err(bad("points", "dimension differs from g"));
                }
            }
        }
        let e = &self.e_integral;
        if e.p_samples == 0 || e.q_samples == 0 || e.p_horizon == 0 || e.order == 0 {
            return Err(bad(
                "e_integral",
                "sample counts, horizon and order must be positive",
            ));
        }
        if !(e.panel_width > 0.0) || !(e.tail_tol > 0.0) || !(e.max_radius > 0.0) {
            return Err(bad(
                "e_integral",
                "panel_width, tail_tol and max_radius must be positive",
            ));
        }
        if let Some(r) = &self.ruin {
            finite("ruin.u", &r.u)?;
            if r.u.len() != self.g.len() || r.u.iter().any(|x| *x < 0.0) {
                return Err(bad(
                    "ruin.u",
                    "must be a non-negative vector of the model dimension",
                ));
            }
        }
        if self.output.dir.is_empty() {
            return Err(bad("output.dir", "must not be empty"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Vec<f64>, CliError> {
        self.s_grid
            .as_ref()
            .ok_or_else(|| bad("s_grid", "required by this command"))?
            .values()
    }

    /// The model, with `g` checked against its dimension.
    pub fn build_model(&self) -> Result<BuiltModel, CliError> {
        let m = self.model.build()?;
        if m.as_dyn().dim() != self.g.len() {
            return Err(bad(
                "g",
                format!(
                    "dimension {} differs from the model's {}",
                    self.g.len(),
                    m.as_dyn().dim()
                ),
            ));
        }
        Ok(m)
    }
}
