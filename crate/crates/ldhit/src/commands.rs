//! The five subcommands. Each writes its files under the output directory
//! and returns a short summary for the terminal.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use ldhit_core::asymptotics::{constant_a, laplace_quantities, EPlan};
use ldhit_core::fit::fit_asymptote;
use ldhit_core::simulation::{certain_ruin, default_tilt, ruin_plan, HittingPlan, RuinSettings};
use ldhit_core::{
    C3Status, HalfSpaceGeom, JumpModel, McRun, MppReport, OrthantTarget, RateEvaluator, TiltSpec,
    Vector,
};

use crate::config::{BuiltModel, RunConfig, TiltConfig};
use crate::error::CliError;
use crate::output::{self, fmt17, AsymJson, C3Json, MppJson};
use crate::parallel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rates,
    Mpp,
    Simulate,
    Asym,
    Ruin,
}

/// A validated configuration plus command-line overrides.
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub threads: usize,
}

impl Context {
    pub fn new(
        mut config: RunConfig,
        seed: Option<u64>,
        threads: Option<usize>,
        out: Option<PathBuf>,
    ) -> Self {
        if let Some(s) = seed {
            config.seed = s;
        }
        let out_dir = out.unwrap_or_else(|| PathBuf::from(&config.output.dir));
        Self {
            config,
            out_dir,
            threads: threads.unwrap_or_else(parallel::default_threads),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

pub fn run(cmd: Command, ctx: &Context) -> Result<String, CliError> {
    let model = ctx.config.build_model()?;
    fs::create_dir_all(&ctx.out_dir)?;
    let pool = parallel::pool(ctx.threads)?;
    pool.install(|| match cmd {
        Command::Rates => rates(ctx, model.as_dyn()),
        Command::Mpp => mpp(ctx, model.as_dyn()),
        Command::Simulate => simulate(ctx, model.as_dyn()),
        Command::Asym => asym(ctx, model.as_dyn()),
        Command::Ruin => ruin(ctx, &model),
    })
}

fn g_vec(ctx: &Context) -> Vector {
    Vector::from_vec(ctx.config.g.clone())
}

fn report(ctx: &Context, model: &dyn JumpModel) -> Result<MppReport, CliError> {
    let ev = RateEvaluator::new(model);
    Ok(OrthantTarget::new(g_vec(ctx), model)?.mpp(&ev)?)
}

fn tilt(ctx: &Context, model: &dyn JumpModel) -> Result<TiltSpec, CliError> {
    match &ctx.config.tilt {
        TiltConfig::Lambda { lambda } => Ok(TiltSpec::user(Vector::from_vec(lambda.clone()))),
        _ => Ok(default_tilt(&report(ctx, model)?, model)?),
    }
}

fn cols(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |i| format!("{prefix}_{i}"))
}

fn rates(ctx: &Context, model: &dyn JumpModel) -> Result<String, CliError> {
    let d = model.dim();
    let points: Vec<Vector> = match &ctx.config.points {
        Some(p) => p.iter().map(|v| Vector::from_vec(v.clone())).collect(),
        None => vec![g_vec(ctx), model.mean()],
    };
    let ev = RateEvaluator::new(model);
    let mut header: Vec<String> = cols("point", d).collect();
    header.push("Lambda".into());
    header.extend(cols("lambda", d));
    header.push("D".into());
    header.push("t".into());
    header.extend(cols("lambda_opt", d));
    let mut rows = Vec::new();
    let mut summary = String::new();
    for p in &points {
        let lambda = ev.lambda_of_alpha(p)?;
        let big = ev.rate(p)?;
        let sr = ev.second_rate(p)?;
        let dual = ev.second_rate_dual_from(p, sr.lambda_opt.clone())?;
        let mut row: Vec<String> = p.iter().map(|x| fmt17(*x)).collect();
        row.push(fmt17(big));
        row.extend(lambda.iter().map(|x| fmt17(*x)));
        row.push(fmt17(sr.d));
        row.push(fmt17(sr.t));
        row.extend(dual.lambda_opt.iter().map(|x| fmt17(*x)));
        rows.push(row);
        let _ = writeln!(
            summary,
            "point {:?}: Λ = {big:.6}, D = {:.6}, t = {:.6}",
            p.as_slice(),
            sr.d,
            sr.t
        );
    }
    output::write_csv(&ctx.path("rates.csv"), &header, &rows)?;
    Ok(summary)
}

fn status_name(s: C3Status) -> &'static str {
    match s {
        C3Status::Satisfied => "satisfied",
        C3Status::Marginal => "marginal",
        C3Status::Violated => "violated",
    }
}

fn mpp(ctx: &Context, model: &dyn JumpModel) -> Result<String, CliError> {
    let rep = report(ctx, model)?;
    let json = MppJson {
        u_G: rep.u_g,
        r_G: rep.r_g,
        alpha_star: rep.alpha_star.as_slice().to_vec(),
        N: rep.n.as_slice().to_vec(),
        zeta: rep.zeta.as_slice().to_vec(),
        D_G: rep.d_g,
        c3: C3Json {
            normal_positive: rep.c3.normal_positive,
            in_cramer_range: rep.c3.in_cramer_range,
            negative_drift: rep.c3.negative_drift,
            status: status_name(rep.status).into(),
        },
    };
    output::write_json(&ctx.path("mpp.json"), &json)?;
    rep.require_c3()?;
    Ok(format!(
        "D(G) = {:.6}, u_G = {:.6}, r_G = {:.7}, N = {:?}\n",
        rep.d_g,
        rep.u_g,
        rep.r_g,
        rep.n.as_slice()
    ))
}

fn simulate_runs(ctx: &Context, model: &dyn JumpModel) -> Result<(Vec<McRun>, String), CliError> {
    let c = &ctx.config;
    let t = tilt(ctx, model)?;
    let plan = HittingPlan::importance(
        model,
        &g_vec(ctx),
        &t,
        &c.grid()?,
        c.n_traj,
        c.max_steps,
        c.seed,
    )?;
    let est = parallel::run_hitting(&plan);
    let mut note = String::new();
    if let Some(w) = est.warning {
        let _ = writeln!(
            note,
            "warning: only {:.4}% of trajectories reached s = {} within {} steps; raise max_steps",
            100.0 * w.hit_fraction,
            w.s,
            c.max_steps
        );
    }
    Ok((est.runs, note))
}

fn simulate(ctx: &Context, model: &dyn JumpModel) -> Result<String, CliError> {
    let (runs, note) = simulate_runs(ctx, model)?;
    output::write_runs(&ctx.path("simulate.csv"), &runs)?;
    eprint!("{note}");
    Ok(format!(
        "{} grid points, {} trajectories each, seed {}\n",
        runs.len(),
        ctx.config.n_traj,
        ctx.config.seed
    ))
}

fn asym(ctx: &Context, model: &dyn JumpModel) -> Result<String, CliError> {
    let c = &ctx.config;
    let ev = RateEvaluator::new(model);
    let rep = report(ctx, model)?;
    rep.require_c3()?;
    let runs = match &c.asym.simulate_csv {
        Some(p) => output::read_runs(std::path::Path::new(p))?,
        None => {
            let (runs, note) = simulate_runs(ctx, model)?;
            output::write_runs(&ctx.path("simulate.csv"), &runs)?;
            eprint!("{note}");
            runs
        }
    };
    let fit = fit_asymptote(&runs, model.dim())?;
    let geom = HalfSpaceGeom::new(&rep, &ev)?;
    let lq = laplace_quantities(&geom, model)?;
    let e = if c.asym.estimate_a {
        let plan = EPlan::new(model, &geom, &c.e_integral.settings(c.seed))?;
        Some(parallel::run_e(&plan))
    } else {
        None
    };
    let a_est = e.as_ref().map(|e| {
        constant_a(
            e.value,
            geom.u_g,
            lq.sigma_star_d,
            lq.sigma_alpha,
            model.dim(),
        )
    });
    let json = AsymJson {
        D_G: rep.d_g,
        A_fitted: fit.a_fit,
        A_estimated: a_est,
        sigma2_D: lq.sigma2_d,
        a_uG: lq.a_ug,
        sigma_star_D: lq.sigma_star_d,
        E_value: e.as_ref().map(|e| e.value),
        E_se: e.as_ref().map(|e| e.std_error),
        D_fit: fit.d_fit,
        A_fitted_se: fit.se_a,
        D_fit_se: fit.se_d,
        E_tail_bound: e.as_ref().map(|e| e.tail_bound),
    };
    output::write_json(&ctx.path("asym.json"), &json)?;

    let model_fit = ldhit_core::asymptotics::AsymptoticModel {
        d_g: rep.d_g,
        a: fit.a_fit,
        provenance: ldhit_core::asymptotics::AProvenance::Fitted,
        dim: model.dim(),
    };
    let pred_header = vec!["s".to_string(), "predicted".to_string()];
    let pred_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| vec![fmt17(r.s), fmt17(model_fit.predict(r.s))])
        .collect();
    output::write_csv(&ctx.path("prediction.csv"), &pred_header, &pred_rows)?;

    let ratio_header: Vec<String> = [
        "s",
        "estimate",
        "ci_low",
        "ci_high",
        "predicted",
        "ratio",
        "ratio_ci_low",
        "ratio_ci_high",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut inside = 0;
    let ratio_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            let p = model_fit.predict(r.s);
            if p >= r.ci_low && p <= r.ci_high {
                inside += 1;
            }
            // Ratio predicted/measured; the CI ends swap under inversion.
            let lo = if r.ci_high > 0.0 {
                p / r.ci_high
            } else {
                f64::INFINITY
            };
            let hi = if r.ci_low > 0.0 {
                p / r.ci_low
            } else {
                f64::INFINITY
            };
            vec![
                fmt17(r.s),
                fmt17(r.estimate),
                fmt17(r.ci_low),
                fmt17(r.ci_high),
                fmt17(p),
                fmt17(p / r.estimate),
                fmt17(lo),
                fmt17(hi),
            ]
        })
        .collect();
    output::write_csv(&ctx.path("ratio.csv"), &ratio_header, &ratio_rows)?;

    let mut s = format!(
        "D(G) = {:.6}, fitted D = {:.6} ± {:.1e}, fitted A = {:.4} ± {:.1e}\n",
        rep.d_g, fit.d_fit, fit.se_d, fit.a_fit, fit.se_a
    );
    if let (Some(a), Some(e)) = (a_est, &e) {
        let _ = writeln!(
            s,
            "estimated A = {a:.4} (E = {:.4} ± {:.1e})",
            e.value, e.std_error
        );
    }
    let _ = writeln!(
        s,
        "prediction inside the 99% CI at {inside} of {} grid points",
        runs.len()
    );
    Ok(s)
}

fn ruin(ctx: &Context, model: &BuiltModel) -> Result<String, CliError> {
    let sa = match model {
        BuiltModel::SparreAndersen(m) => m,
        _ => {
            return Err(CliError::Config(
                "model.type: ruin needs a sparre_andersen model".into(),
            ))
        }
    };
    let c = &ctx.config;
    let u = c
        .ruin
        .as_ref()
        .ok_or_else(|| CliError::Config("ruin: section required by this command".into()))?;
    let settings = RuinSettings {
        n_traj: c.n_traj,
        max_steps: c.max_steps,
        seed: c.seed,
        tilt: match &c.tilt {
            TiltConfig::Lambda { lambda } => Some(Vector::from_vec(lambda.clone())),
            _ => None,
        },
    };
    let u = Vector::from_vec(u.u.clone());
    let run = match ruin_plan(sa, &u, &settings)? {
        None => certain_ruin(&settings),
        Some((_, plan)) => {
            let est = parallel::run_hitting(&plan);
            if let Some(w) = est.warning {
                eprintln!(
                    "warning: only {:.4}% of trajectories reached the target within {} steps",
                    100.0 * w.hit_fraction,
                    c.max_steps
                );
            }
            est.runs.into_iter().next().expect("one grid point")
        }
    };
    output::write_runs(&ctx.path("ruin.csv"), std::slice::from_ref(&run))?;
    Ok(format!(
        "ruin probability for u = {:?}: {:.6e} ± {:.1e}\n",
        u.as_slice(),
        run.estimate,
        run.std_error
    ))
}
