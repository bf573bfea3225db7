//! Fitting `P(s) ≈ A·s^{-(d-1)/2}·e^{-sD}` to Monte Carlo estimates.
//!
//! With `y(s) = ln P̂(s) + ((d−1)/2)·ln s` the model is affine, `y = b − D·s`,
//! and each point is weighted by the inverse delta-method variance of
//! `ln P̂`, `(P̂/SE)²`.

use alloc::format;
use alloc::vec::Vec;

use crate::simulation::McRun;
use crate::{Error, Result};

/// Fewest usable grid points accepted by [`fit_asymptote`].
pub const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AsymptoteFit {
    pub a_fit: f64,
    pub d_fit: f64,
    pub b: f64,
    /// Covariance of `(b, D)`.
    pub cov: [[f64; 2]; 2],
    pub se_a: f64,
    pub se_d: f64,
    /// `y(s) − (b − D s)` for every point used, in input order.
    pub residuals: Vec<(f64, f64)>,
    /// True when every SE was zero and the points were weighted equally.
    pub equal_weights: bool,
    pub n_points: usize,
}

/// Fits the grid of runs, skipping points with a zero estimate.
pub fn fit_asymptote(runs: &[McRun], d: usize) -> Result<AsymptoteFit> {
    let pts: Vec<(f64, f64, f64)> = runs
        .iter()
        .filter(|r| r.estimate > 0.0 && r.s > 0.0)
        .map(|r| (r.s, r.estimate, r.std_error))
        .collect();
    fit_points(&pts, d)
}

/// Fits `(s, P̂, SE)` triples.
pub fn fit_points(pts: &[(f64, f64, f64)], d: usize) -> Result<AsymptoteFit> {
    if pts.len() < MIN_POINTS {
        return Err(Error::DegenerateFit(format!(
            "{} usable points, need at least {MIN_POINTS}",
            pts.len()
        )));
    }
    if pts
        .iter()
        .any(|(s, p, se)| !(*s > 0.0) || !(*p > 0.0) || !(*se >= 0.0))
    {
        return Err(Error::DegenerateFit(
            "points need s > 0, P̂ > 0 and SE ≥ 0".into(),
        ));
    }
    let half = 0.5 * (d as f64 - 1.0);
    let equal_weights = pts.iter().any(|(_, _, se)| *se == 0.0);
    let rows: Vec<(f64, f64, f64)> = pts
        .iter()
        .map(|&(s, p, se)| {
            let y = libm::log(p) + half * libm::log(s);
            let w = if equal_weights {
                1.0
            } else {
                (p / se) * (p / se)
            };
            (s, y, w)
        })
        .collect();

    // Normal equations for y = b + c·s, c = −D, centred on the weighted mean
    // of s for conditioning.
    let sw: f64 = rows.iter().map(|r| r.2).sum();
    let s_bar = rows.iter().map(|r| r.2 * r.0).sum::<f64>() / sw;
    let y_bar = rows.iter().map(|r| r.2 * r.1).sum::<f64>() / sw;
    let sxx: f64 = rows
        .iter()
        .map(|r| r.2 * (r.0 - s_bar) * (r.0 - s_bar))
        .sum();
    let sxy: f64 = rows
        .iter()
        .map(|r| r.2 * (r.0 - s_bar) * (r.1 - y_bar))
        .sum();
    let spread = rows.iter().map(|r| (r.0 - s_bar).abs()).fold(0.0, f64::max);
    if !(sxx > 0.0) || spread <= 1e-12 * s_bar.abs().max(1.0) {
        return Err(Error::DegenerateFit("all grid points share one s".into()));
    }
    let c = sxy / sxx;
    let b = y_bar - c * s_bar;
    let residuals: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1 - (b + c * r.0))).collect();

    // (XᵀWX)⁻¹, rescaled by the residual variance when weights carry no scale.
    let scale = if equal_weights {
        let n = rows.len() as f64;
        let rss: f64 = rows
            .iter()
            .zip(&residuals)
            .map(|(r, e)| r.2 * e.1 * e.1)
            .sum();
        rss / (n - 2.0)
    } else {
        1.0
    };
    let var_c = scale / sxx;
    let var_b = scale * (1.0 / sw + s_bar * s_bar / sxx);
    let cov_bc = -scale * s_bar / sxx;
    let a_fit = libm::exp(b);
    Ok(AsymptoteFit {
        a_fit,
        d_fit: -c,
        b,
        cov: [[var_b, -cov_bc], [-cov_bc, var_c]],
        se_a: a_fit * libm::sqrt(var_b),
        se_d: libm::sqrt(var_c),
        residuals,
        equal_weights,
        n_points: rows.len(),
    })
}

/// Fit of `y = b − D·s + c/s`, a first-order finite-`s` correction to the
/// asymptotic form. A diagnostic: over a short grid at moderate `s` the
/// two-parameter fit absorbs the `c/s` term into `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedFit {
    pub a_fit: f64,
    pub d_fit: f64,
    pub c: f64,
    pub se_d: f64,
}

impl CorrectedFit {
    pub fn predict(&self, s: f64, d: usize) -> f64 {
        self.a_fit * libm::pow(s, -0.5 * (d as f64 - 1.0)) * libm::exp(-self.d_fit * s + self.c / s)
    }
}

/// Weighted fit with the extra `c/s` column; weights as in [`fit_points`].
pub fn fit_with_correction(runs: &[McRun], d: usize) -> Result<CorrectedFit> {
    use crate::Matrix;
    let pts: Vec<(f64, f64, f64)> = runs
        .iter()
        .filter(|r| r.estimate > 0.0 && r.s > 0.0)
        .map(|r| (r.s, r.estimate, r.std_error))
        .collect();
    if pts.len() < MIN_POINTS {
        return Err(Error::DegenerateFit(format!("{} usable points", pts.len())));
    }
    let half = 0.5 * (d as f64 - 1.0);
    let equal = pts.iter().any(|p| p.2 == 0.0);
    // Centre s so the normal matrix stays well conditioned.
    let s0 = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let mut xtx = Matrix::zeros(3, 3);
    let mut xty = crate::Vector::zeros(3);
    for &(s, p, se) in &pts {
        let w = if equal { 1.0 } else { (p / se) * (p / se) };
        let x = [1.0, s - s0, 1.0 / s];
        let y = libm::log(p) + half * libm::log(s);
        for i in 0..3 {
            xty[i] += w * x[i] * y;
            for j in 0..3 {
                xtx[(i, j)] += w * x[i] * x[j];
            }
        }
    }
    let inv = xtx
        .try_inverse()
        .ok_or_else(|| Error::DegenerateFit("normal matrix is singular".into()))?;
    let beta = &inv * xty;
    let slope = beta[1];
    Ok(CorrectedFit {
        a_fit: libm::exp(beta[0] - slope * s0),
        d_fit: -slope,
        c: beta[2],
        se_d: libm::sqrt(inv[(1, 1)].max(0.0)),
    })
}
