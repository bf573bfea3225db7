//! CSV and JSON writers. Floats in CSV carry 17 significant digits.

use std::fs;
use std::path::Path;

use ldhit_core::McRun;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const RUN_HEADER: [&str; 8] = [
    "s",
    "estimate",
    "std_error",
    "ci_low",
    "ci_high",
    "n_traj",
    "n_hit",
    "seed",
];

/// Scientific notation with 17 significant digits, enough to round-trip.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_runs(path: &Path, runs: &[McRun]) -> Result<(), CliError> {
    let header: Vec<String> = RUN_HEADER.iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                fmt17(r.s),
                fmt17(r.estimate),
                fmt17(r.std_error),
                fmt17(r.ci_low),
                fmt17(r.ci_high),
                r.n_traj.to_string(),
                r.n_hit.to_string(),
                r.seed.to_string(),
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}

#[derive(Debug, Deserialize)]
struct RunRow {
    s: f64,
    estimate: f64,
    std_error: f64,
    ci_low: f64,
    ci_high: f64,
    n_traj: u64,
    n_hit: u64,
    seed: u64,
}

pub fn read_runs(path: &Path) -> Result<Vec<McRun>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| {
        CliError::Config(format!(
            "asym.simulate_csv: cannot open {}: {e}",
            path.display()
        ))
    })?;
    let mut out = Vec::new();
    for row in r.deserialize::<RunRow>() {
        let row = row.map_err(|e| CliError::Config(format!("asym.simulate_csv: {e}")))?;
        out.push(McRun {
            s: row.s,
            estimate: row.estimate,
            std_error: row.std_error,
            ci_low: row.ci_low,
            ci_high: row.ci_high,
            n_traj: row.n_traj,
            n_hit: row.n_hit,
            seed: row.seed,
        });
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::Config(format!("json: {e}")))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct C3Json {
    pub normal_positive: bool,
    pub in_cramer_range: bool,
    pub negative_drift: bool,
    pub status: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[allow(non_snake_case)]
pub struct MppJson {
    pub u_G: f64,
    pub r_G: f64,
    pub alpha_star: Vec<f64>,
    pub N: Vec<f64>,
    pub zeta: Vec<f64>,
    pub D_G: f64,
    pub c3: C3Json,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[allow(non_snake_case)]
pub struct AsymJson {
    pub D_G: f64,
    pub A_fitted: f64,
    pub A_estimated: Option<f64>,
    pub sigma2_D: f64,
    pub a_uG: f64,
    pub sigma_star_D: f64,
    pub E_value: Option<f64>,
    pub E_se: Option<f64>,
    pub D_fit: f64,
    pub A_fitted_se: f64,
    pub D_fit_se: f64,
    pub E_tail_bound: Option<f64>,
}
