//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails. Tolerances are the constants below.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use privreg::audit::{run_audit, AuditRequest};
use privreg::config::{ExperimentSpec, PaymentPolicy};
use privreg::experiment::{run_experiment, ExperimentReport};
use privreg_core::data_gen::{sample_unit_ball, NoiseSpec, PriorSpec};
use privreg_core::linalg::{dot, Matrix};
use privreg_core::mechanism::run_algorithm_1;
use privreg_core::payments::{brier, BrierParams, PosteriorOracle};
use privreg_core::privacy::{radial_goodness_of_fit, radial_moments, ridge_sensitivity, sensitivity_trial, AuditSetup};
use privreg_core::random::{seeded, stream};
use privreg_core::regression::ridge;
use privreg_core::stats::mean_stderr;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Standard errors allowed between a Monte Carlo mean and its target.
const MEAN_SE: f64 = 5.0;
/// Standard errors of slack on the bound-domination checks.
const BOUND_SE: f64 = 3.0;
const EXTREMAL_TOL: f64 = 1e-9;
const HAND_TOL: f64 = 1e-12;
/// Goodness-of-fit p-value below which the radial law is rejected.
const GOF_ALPHA: f64 = 1e-3;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn config_path(name: &str) -> String {
    format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn sensitivity_never_violated() -> Verdict {
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0;
    let mut cells = 0;
    for n in [100, 1000] {
        for d in [1, 2, 5] {
            for gamma in [10.0, 100.0] {
                let setup = AuditSetup {
                    n,
                    d,
                    gamma,
                    bound_b: 1.0,
                    half_width_m: 1.0,
                };
                let bound = ridge_sensitivity(1.0, 1.0, gamma);
                let obs: Vec<f64> = (0..10_000u64)
                    .into_par_iter()
                    .map(|t| sensitivity_trial(&setup, 1, &mut stream(101, cells, t)).unwrap())
                    .collect();
                violations += obs.iter().filter(|v| **v > bound).count();
                worst_ratio = obs.iter().fold(worst_ratio, |m, v| m.max(v / bound));
                cells += 1;
            }
        }
    }
    verdict(
        violations == 0,
        format!("{cells} settings x 10^4 audits, violations {violations}, max observed/bound {worst_ratio:.4}"),
    )
}

fn density_ratio_bounded() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for (eps, gamma) in [(0.1, 10.0), (1.0, 100.0)] {
        let out = run_audit(&AuditRequest {
            trials: 10_000,
            n: 100,
            d: 2,
            gamma,
            epsilon: eps,
            bound_b: 1.0,
            half_width_m: 1.0,
            changed: 1,
            seed: 102,
        })
        .unwrap();
        let rec = out.density_ratio;
        let extremal_err = (out.extremal_log_ratio - eps).abs();
        ok &= rec.violations == 0 && rec.max_observed <= eps && extremal_err <= EXTREMAL_TOL;
        parts.push(format!(
            "eps {eps}: max |log ratio| {:.6}, violations {}, extremal error {extremal_err:.1e}",
            rec.max_observed, rec.violations
        ));
    }
    verdict(ok, parts.join("; "))
}

fn brier_properness() -> Verdict {
    let reach = 2.0;
    let grid: Vec<f64> = (0..201).map(|k| -reach + 2.0 * reach * k as f64 / 200.0).collect();
    let mut misses = 0;
    for params in [BrierParams { a: 0.0, b: 1.0 }, BrierParams { a: 1.0, b: 1e-3 }] {
        for (k, &p) in grid.iter().enumerate() {
            let best = (0..grid.len())
                .max_by(|i, j| brier(params, p, grid[*i]).total_cmp(&brier(params, p, grid[*j])))
                .unwrap();
            misses += (best != k) as usize;
        }
    }
    verdict(misses == 0, format!("2 x 201 grid points, argmax misses {misses}"))
}

fn unbiasedness_and_ridge_bias() -> Verdict {
    let (n, d, draws) = (200, 3, 100_000u64);
    let x = sample_unit_ball(n, d, &mut seeded(104)).unwrap();
    let theta = [0.5, -0.4, 0.3];
    let noise = NoiseSpec::Uniform { half_width: 1.0 };
    let xm = DMatrix::from_row_slice(n, d, x.as_slice());
    let signal: Vec<f64> = x.iter_rows().map(|r| dot(&theta, r)).collect();
    let mut worst: f64 = 0.0;
    for gamma in [0.0, 1.0, 50.0] {
        let a = xm.transpose() * &xm + DMatrix::identity(d, d) * gamma;
        let bias_target = -(a.try_inverse().unwrap() * DVector::from_column_slice(&theta)) * gamma;
        let fits: Vec<Vec<f64>> = (0..draws)
            .into_par_iter()
            .map(|t| {
                let mut rng = stream(104, 1, t);
                let y: Vec<f64> = signal.iter().map(|s| s + noise.sample(&mut rng)).collect();
                ridge(&x, &y, gamma).unwrap().theta_hat
            })
            .collect();
        for k in 0..d {
            let err: Vec<f64> = fits.iter().map(|f| f[k] - theta[k]).collect();
            let m = mean_stderr(&err);
            worst = worst.max((m.mean - bias_target[k]).abs() / m.std_err);
        }
    }
    verdict(
        worst <= MEAN_SE,
        format!("gamma in {{0, 1, 50}}, 10^5 draws, worst deviation {worst:.2} SE (limit {MEAN_SE})"),
    )
}

fn unit_ball_covariance() -> Verdict {
    let mut worst: f64 = 0.0;
    for d in [2, 5] {
        let x = sample_unit_ball(100_000, d, &mut seeded(105 + d as u64)).unwrap();
        let target = 1.0 / (d as f64 + 2.0);
        for i in 0..d {
            for j in 0..d {
                let prods: Vec<f64> = x.iter_rows().map(|r| r[i] * r[j]).collect();
                let m = mean_stderr(&prods);
                let want = if i == j { target } else { 0.0 };
                worst = worst.max((m.mean - want).abs() / m.std_err);
            }
        }
    }
    verdict(
        worst <= MEAN_SE,
        format!("d in {{2, 5}}, 10^5 draws, worst entry {worst:.2} SE (limit {MEAN_SE})"),
    )
}

fn noise_moments() -> Verdict {
    let s = 0.7;
    let m1 = radial_moments(1, s, 1_000_000, &mut seeded(106));
    let z_norm = (m1.norm.mean - s).abs() / m1.norm.std_err;
    let z_sq = (m1.norm_sq.mean - 2.0 * s * s).abs() / m1.norm_sq.std_err;
    let m3 = radial_moments(3, s, 200_000, &mut seeded(107));
    let fit = radial_goodness_of_fit(3, s, 200_000, 50, &mut seeded(108));
    let p = 1.0
        - ChiSquared::new(fit.degrees_of_freedom as f64)
            .unwrap()
            .cdf(fit.statistic);
    verdict(
        z_norm <= MEAN_SE && z_sq <= MEAN_SE && p > GOF_ALPHA,
        format!(
            "d=1: E|v| off by {z_norm:.2} SE, E[v^2] off by {z_sq:.2} SE; d=3: E||v|| = {:.4} +/- {:.4} vs scale {:.4} and 3*scale {:.4}; radial chi2 p = {p:.3}",
            m3.norm.mean, m3.norm.std_err, m3.dimension_free_norm, m3.density_norm
        ),
    )
}

fn scaling_report() -> (ExperimentSpec, ExperimentReport) {
    let spec = ExperimentSpec::load(Path::new(&config_path("scaling.json"))).unwrap();
    let report = run_experiment(&spec).unwrap();
    (spec, report)
}

fn accuracy_domination(report: &ExperimentReport) -> Verdict {
    let mut ok = report.quarantined.is_empty();
    let mut parts = Vec::new();
    for row in &report.rows {
        let (mse, se) = (row.mse.unwrap(), row.mse_stderr.unwrap());
        ok &= mse <= row.accuracy_bound + BOUND_SE * se;
        parts.push(format!(
            "n={}: mse {mse:.2} (se {se:.2}) vs bound {:.2}",
            row.n, row.accuracy_bound
        ));
    }
    let slope = report.slopes.mse.unwrap();
    ok &= slope.slope < 0.0 && slope.ci_high < 0.0;
    parts.push(format!(
        "slope {:.3} [{:.3}, {:.3}]",
        slope.slope, slope.ci_low, slope.ci_high
    ));
    verdict(ok, parts.join("; "))
}

fn budget_behaviour(report: &ExperimentReport) -> Verdict {
    let rows = &report.rows;
    let every_trial = rows
        .iter()
        .all(|r| r.budget_bound_violations == 0 && r.trials_failed == 0 && r.budget_max.unwrap() <= r.budget_bound);
    let means: Vec<f64> = rows.iter().map(|r| r.budget_mean.unwrap()).collect();
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let detail = rows
        .iter()
        .map(|r| {
            format!(
                "n={}: mean {:.4}, max {:.4}, bound {:.4}",
                r.n,
                r.budget_mean.unwrap(),
                r.budget_max.unwrap(),
                r.budget_bound
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    verdict(every_trial && decreasing, detail)
}

fn individual_rationality(spec: &ExperimentSpec, report: &ExperimentReport) -> Verdict {
    let setup_ok =
        spec.payments == PaymentPolicy::MinIr && spec.misreport == privreg_core::agents::MisreportModel::ClampExtreme;
    let players: usize = report.rows.iter().map(|r| r.below_threshold_players).sum();
    let violations: f64 = report
        .rows
        .iter()
        .map(|r| r.ir_violation_fraction.unwrap() * r.below_threshold_players as f64)
        .sum();
    let realized: f64 = report
        .rows
        .iter()
        .map(|r| r.ir_realized_fraction.unwrap() * r.below_threshold_players as f64)
        .sum();
    verdict(
        setup_ok && violations == 0.0 && report.quarantined.is_empty(),
        format!(
            "{players} below-threshold player-trials, expected-utility violations {violations:.0} (realized-payment violations {realized:.0})"
        ),
    )
}

fn truthfulness_gap() -> Verdict {
    let spec = ExperimentSpec::load(Path::new(&config_path("deviation.json"))).unwrap();
    let report = run_experiment(&spec).unwrap();
    let row = &report.rows[0];
    let ok = row.n == 2000
        && row.deviation.len() == 5
        && row
            .deviation
            .iter()
            .all(|p| p.trials == 2000 && p.gain <= row.eta_bound + BOUND_SE * p.std_err)
        && report.quarantined.is_empty();
    let worst = row.deviation.iter().map(|p| p.gain).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        ok,
        format!(
            "{} players x 2000 paired trials, largest gain {worst:.3e} vs eta {:.3e}",
            row.deviation.len(),
            row.eta_bound
        ),
    )
}

fn peer_prediction_by_hand() -> Verdict {
    // θ ∈ {−1/2, 1/2} equally likely, noise uniform on [−1, 1]. Residuals
    // beyond 1 rule a support point out: player 0 only fits +1/2, player 1
    // fits both, player 2 only fits −1/2.
    let x = Matrix::from_rows(&[vec![0.5], vec![-0.8], vec![1.0]]).unwrap();
    let y = [0.9, 0.1, -0.7];
    let prior = PriorSpec::uniform_discrete(vec![vec![-0.5], vec![0.5]], 0.25).unwrap();
    let oracle = PosteriorOracle::exact(&prior, NoiseSpec::Uniform { half_width: 1.0 }).unwrap();
    let out = run_algorithm_1(&x, &y, 1.0, 1.0, &oracle).unwrap();
    // Σx² = 1.89, Σxy = −0.33. Leave-one-out slopes are −0.78/1.64, −0.2,
    // 0.37/0.89; predictions q are 0.25, 0, −0.5; pay 1 − (p − 2pq + q²).
    let want = [0.9375 + 0.195 / 1.64, 0.84, 0.75 - 0.74 / 0.89];
    let worst = out
        .ledger
        .payments
        .iter()
        .zip(want)
        .map(|(got, w)| (got - w).abs())
        .fold(0.0, f64::max);
    let release_err = (out.released.theta_private[0] + 0.33 / 1.89).abs();
    verdict(
        worst <= HAND_TOL && release_err <= HAND_TOL,
        format!("max payment error {worst:.1e}, release error {release_err:.1e} (limit {HAND_TOL:.0e})"),
    )
}

fn run_cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_privreg")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "privreg {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn reproducible_cli() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.json");
    let mut spec: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(config_path("scaling.json")).unwrap()).unwrap();
    spec["n_grid"] = serde_json::json!([60, 120]);
    spec["trials"] = serde_json::json!(8);
    spec["deviation"] = serde_json::json!({"players": 2, "trials": 20});
    std::fs::write(&cfg, spec.to_string()).unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let cfg = cfg.to_string_lossy().into_owned();
    let mut checks = Vec::new();
    for format in ["csv", "json"] {
        let (a, b) = (p(&format!("a.{format}")), p(&format!("b.{format}")));
        run_cli(&[
            "experiment",
            "--config",
            &cfg,
            "--out",
            &a,
            "--format",
            format,
            "--seed",
            "9",
            "--jobs",
            "1",
        ]);
        run_cli(&[
            "experiment",
            "--config",
            &cfg,
            "--out",
            &b,
            "--format",
            format,
            "--seed",
            "9",
            "--jobs",
            "3",
        ]);
        checks.push((
            format!("experiment {format}"),
            std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap(),
        ));
    }
    let (a, b) = (p("audit_a.json"), p("audit_b.json"));
    for out in [&a, &b] {
        run_cli(&[
            "audit", "--trials", "500", "--n", "50", "--d", "2", "--gamma", "5", "--seed", "4", "--out", out,
        ]);
    }
    checks.push(("audit".into(), std::fs::read(&a).unwrap() == std::fs::read(&b).unwrap()));
    let sched = || run_cli(&["schedule", "--n", "256", "--delta", "0.25"]).stdout;
    checks.push(("schedule".into(), sched() == sched()));
    let ok = checks.iter().all(|c| c.1);
    let detail = checks
        .iter()
        .map(|(name, same)| format!("{name}: {}", if *same { "identical" } else { "DIFFERENT" }))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(ok, detail)
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, start: Instant, v: Verdict| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        failed += (!v.pass) as usize;
        println!(
            "[{tag}] {id:>2} {name}: {} ({:.1}s)",
            v.detail,
            start.elapsed().as_secs_f64()
        );
    };
    let t = Instant::now();
    report(1, "ridge sensitivity", t, sensitivity_never_violated());
    let t = Instant::now();
    report(2, "privacy log-density ratio", t, density_ratio_bounded());
    let t = Instant::now();
    report(3, "scoring rule properness", t, brier_properness());
    let t = Instant::now();
    report(
        4,
        "least-squares unbiasedness and ridge bias",
        t,
        unbiasedness_and_ridge_bias(),
    );
    let t = Instant::now();
    report(5, "unit-ball covariance", t, unit_ball_covariance());
    let t = Instant::now();
    report(6, "perturbation noise moments", t, noise_moments());
    let t = Instant::now();
    let (spec, scaling) = scaling_report();
    report(7, "accuracy bound and error decay", t, accuracy_domination(&scaling));
    let t = Instant::now();
    report(8, "budget bound and decay", t, budget_behaviour(&scaling));
    let t = Instant::now();
    report(9, "individual rationality", t, individual_rationality(&spec, &scaling));
    let t = Instant::now();
    report(10, "truthfulness gap", t, truthfulness_gap());
    let t = Instant::now();
    report(11, "peer prediction hand instance", t, peer_prediction_by_hand());
    let t = Instant::now();
    report(12, "CLI reproducibility", t, reproducible_cli());
    println!("acceptance: {} of 12 criteria passed", 12 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
