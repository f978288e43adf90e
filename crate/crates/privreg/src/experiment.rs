//! Monte Carlo experiment runner.
//!
//! Every trial draws from its own stream keyed by `(seed, n, trial)`, trials
//! run on the rayon pool, and results are reduced in trial order, so a report
//! is a pure function of the spec whatever the thread count. A trial that
//! errors is quarantined and listed in the report instead of aborting the run.

use privreg_core::agents::{
    apply_strategy, eta_bound, DeviationProbe, PlayerData, PosteriorWorldSampler, StrategyProfile, DEVIATION_TAG,
};
use privreg_core::data_gen::{sample_world, PriorShape};
use privreg_core::linalg::distance;
use privreg_core::mechanism::{accuracy_bound, budget_bound, ir_report, run_algorithm_2, MechanismConfig};
use privreg_core::payments::PosteriorOracle;
use privreg_core::privacy::PrivacyAccount;
use privreg_core::random::stream;
use privreg_core::stats::{mean_stderr, ols_slope, sorted_quantile};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentSpec, OracleChoice, StrategyChoice};
use crate::ConfigError;

pub const TRIAL_TAG: u64 = 0x7121;
pub const DEVIATION_SETUP_TAG: u64 = 0xDE50;
pub const BOOTSTRAP_TAG: u64 = 0xB007;
pub const ORACLE_TAG: u64 = 0x0AC1;
pub const BOOTSTRAP_RESAMPLES: usize = 500;
/// Prior draws behind the Monte Carlo oracle when the config does not say.
pub const DEFAULT_MC_SAMPLES: usize = 4000;

/// Metrics of one simulated world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    /// `‖θ̂^P − θ‖²` of the published estimate.
    pub squared_error: f64,
    pub budget: f64,
    pub below_threshold: usize,
    pub expected_ir_violations: usize,
    pub realized_ir_violations: usize,
    pub oracle_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantinedTrial {
    pub n: usize,
    /// `None` for a failed deviation probe; `player` is `None` too when the
    /// probe's anchor world could not be drawn.
    pub trial: Option<usize>,
    pub player: Option<usize>,
    pub error: String,
}

/// Best deviation found for one probed player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerDeviation {
    pub player: usize,
    pub cost: f64,
    pub best_delta: f64,
    pub gain: f64,
    pub std_err: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub mse: Option<f64>,
    pub mse_stderr: Option<f64>,
    pub budget_mean: Option<f64>,
    pub budget_stderr: Option<f64>,
    /// Expected-utility IR violations over all below-threshold players in all
    /// completed trials.
    pub ir_violation_fraction: Option<f64>,
    /// Largest estimated gain over the probed players.
    pub deviation_gain: Option<f64>,
    pub deviation_gain_stderr: Option<f64>,
    pub eta_bound: f64,
    pub accuracy_bound: f64,
    pub budget_bound: f64,
    pub epsilon_total: f64,
    pub trials_completed: usize,
    pub trials_failed: usize,
    pub budget_max: Option<f64>,
    /// Trials whose realized budget exceeded `budget_bound`.
    pub budget_bound_violations: usize,
    /// IR violations judged on realized rather than expected payments.
    pub ir_realized_fraction: Option<f64>,
    pub below_threshold_players: usize,
    pub oracle_fallbacks: usize,
    pub deviation: Vec<PlayerDeviation>,
    pub config: MechanismConfig,
}

/// OLS slope of `log metric` on `log n` with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Resamples that produced a usable slope.
    pub resamples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Slopes {
    pub mse: Option<SlopeFit>,
    pub budget: Option<SlopeFit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub rows: Vec<ReportRow>,
    pub slopes: Slopes,
    pub quarantined: Vec<QuarantinedTrial>,
    pub warnings: Vec<String>,
}

fn work_index(n: usize, slot: usize, t: usize) -> u64 {
    ((n as u64) << 32) | ((slot as u64) << 24) | t as u64
}

pub fn build_oracle(spec: &ExperimentSpec) -> Result<PosteriorOracle, ConfigError> {
    let discrete = matches!(spec.prior.shape, PriorShape::Discrete { .. });
    let oracle = match spec.oracle {
        OracleChoice::Exact => PosteriorOracle::exact(&spec.prior, spec.noise)?,
        OracleChoice::Auto if discrete => PosteriorOracle::exact(&spec.prior, spec.noise)?,
        OracleChoice::Auto => PosteriorOracle::monte_carlo(
            &spec.prior,
            spec.noise,
            DEFAULT_MC_SAMPLES,
            &mut stream(spec.seed, ORACLE_TAG, 0),
        )?,
        OracleChoice::MonteCarlo { samples } => {
            PosteriorOracle::monte_carlo(&spec.prior, spec.noise, samples, &mut stream(spec.seed, ORACLE_TAG, 0))?
        }
    };
    Ok(oracle)
}

fn profile(spec: &ExperimentSpec, config: &MechanismConfig) -> StrategyProfile {
    match spec.strategy {
        StrategyChoice::Truthful => StrategyProfile::Truthful,
        StrategyChoice::Threshold => StrategyProfile::Threshold {
            tau: config.tau,
            misreport: spec.misreport,
        },
    }
}

/// One world at population size `config.n`, drawn from trial `t`'s stream.
pub fn run_trial(
    spec: &ExperimentSpec,
    config: &MechanismConfig,
    oracle: &PosteriorOracle,
    t: usize,
) -> privreg_core::Result<TrialResult> {
    let n = config.n;
    let mut rng = stream(spec.seed, TRIAL_TAG, work_index(n, 0, t));
    let world = sample_world(&spec.prior, &spec.noise, &spec.cost, n, spec.d, &mut rng)?;
    let reports = apply_strategy(
        &profile(spec, config),
        &world,
        config.bound_b + config.half_width_m,
        &mut rng,
    )?;
    let outcome = run_algorithm_2(&world.features, &reports, config, oracle, &mut rng)?;
    let err = distance(&outcome.released.theta_private, &world.theta);
    let ir = ir_report(&outcome, &world, config)?;
    Ok(TrialResult {
        trial: t,
        squared_error: err * err,
        budget: outcome.ledger.budget,
        below_threshold: ir.below_threshold,
        expected_ir_violations: ir.expected_violations_below_threshold,
        realized_ir_violations: ir.violations_below_threshold,
        oracle_fallbacks: outcome.ledger.fallbacks,
    })
}

/// Paired deviation search for up to `players` randomly chosen
/// below-threshold players of an anchor world.
fn probe_deviations(
    spec: &ExperimentSpec,
    config: &MechanismConfig,
    oracle: &PosteriorOracle,
    quarantined: &mut Vec<QuarantinedTrial>,
) -> Result<Vec<PlayerDeviation>, ConfigError> {
    let Some(dev) = &spec.deviation else {
        return Ok(Vec::new());
    };
    let n = config.n;
    let mut rng = stream(spec.seed, DEVIATION_SETUP_TAG, n as u64);
    let anchor = match sample_world(&spec.prior, &spec.noise, &spec.cost, n, spec.d, &mut rng) {
        Ok(w) => w,
        Err(e) => {
            quarantined.push(QuarantinedTrial {
                n,
                trial: None,
                player: None,
                error: e.to_string(),
            });
            return Ok(Vec::new());
        }
    };
    let eligible: Vec<usize> = (0..n).filter(|i| anchor.costs[*i] <= config.tau).collect();
    let k = dev.players.min(eligible.len());
    let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|j| eligible[j])
        .collect();
    chosen.sort_unstable();
    let sampler = PosteriorWorldSampler {
        oracle,
        cost: spec.cost,
    };
    let mut out = Vec::with_capacity(k);
    for (slot, &player) in chosen.iter().enumerate() {
        let attempt = DeviationProbe::new(
            oracle,
            PlayerData::from_world(&anchor, player),
            player,
            dev.grid.clone(),
        )
        .and_then(|probe| {
            let refs = (0..dev.trials)
                .into_par_iter()
                .map(|t| {
                    let mut r = stream(spec.seed, DEVIATION_TAG, work_index(n, slot, t));
                    probe.trial(config, &sampler, spec.misreport, &mut r)
                })
                .collect::<privreg_core::Result<Vec<f64>>>()?;
            Ok(probe.summarize(config.brier(), &refs))
        });
        match attempt {
            Ok(rep) => out.push(PlayerDeviation {
                player,
                cost: anchor.costs[player],
                best_delta: rep.best_delta,
                gain: rep.gain,
                std_err: rep.std_err,
                trials: rep.trials,
            }),
            Err(e) => quarantined.push(QuarantinedTrial {
                n,
                trial: None,
                player: Some(player),
                error: e.to_string(),
            }),
        }
    }
    Ok(out)
}

fn aggregate(
    n: usize,
    config: MechanismConfig,
    results: &[TrialResult],
    failed: usize,
    deviation: Vec<PlayerDeviation>,
) -> ReportRow {
    let nonempty = |v: f64| (!results.is_empty()).then_some(v);
    let sq: Vec<f64> = results.iter().map(|r| r.squared_error).collect();
    let budgets: Vec<f64> = results.iter().map(|r| r.budget).collect();
    let mse = mean_stderr(&sq);
    let budget = mean_stderr(&budgets);
    let bound = budget_bound(&config);
    let below: usize = results.iter().map(|r| r.below_threshold).sum();
    let frac = |k: usize| if below == 0 { 0.0 } else { k as f64 / below as f64 };
    let expected: usize = results.iter().map(|r| r.expected_ir_violations).sum();
    let realized: usize = results.iter().map(|r| r.realized_ir_violations).sum();
    let worst = deviation.iter().reduce(|a, b| if b.gain > a.gain { b } else { a });
    ReportRow {
        n,
        mse: nonempty(mse.mean),
        mse_stderr: nonempty(mse.std_err),
        budget_mean: nonempty(budget.mean),
        budget_stderr: nonempty(budget.std_err),
        ir_violation_fraction: nonempty(frac(expected)),
        deviation_gain: worst.map(|w| w.gain),
        deviation_gain_stderr: worst.map(|w| w.std_err),
        eta_bound: eta_bound(&config),
        accuracy_bound: accuracy_bound(&config),
        budget_bound: bound,
        epsilon_total: PrivacyAccount::private_mechanism(config.epsilon).total_epsilon,
        trials_completed: results.len(),
        trials_failed: failed,
        budget_max: budgets.iter().copied().reduce(f64::max),
        budget_bound_violations: budgets.iter().filter(|b| **b > bound).count(),
        ir_realized_fraction: nonempty(frac(realized)),
        below_threshold_players: below,
        oracle_fallbacks: results.iter().map(|r| r.oracle_fallbacks).sum(),
        deviation,
        config,
    }
}

/// Log-log slope of per-`n` means, with a trial-level bootstrap. `None`
/// unless at least two sizes have completed trials and positive means.
pub fn fit_slope(sizes: &[usize], samples: &[Vec<f64>], seed: u64, tag: u64) -> Option<SlopeFit> {
    let keep: Vec<usize> = (0..sizes.len()).filter(|i| !samples[*i].is_empty()).collect();
    if keep.len() < 2 {
        return None;
    }
    let log_n: Vec<f64> = keep.iter().map(|i| (sizes[*i] as f64).ln()).collect();
    let slope_of = |means: &[f64]| -> Option<f64> {
        if means.iter().any(|m| m.is_nan() || *m <= 0.0) {
            return None;
        }
        let log_m: Vec<f64> = means.iter().map(|m| m.ln()).collect();
        let s = ols_slope(&log_n, &log_m);
        s.is_finite().then_some(s)
    };
    let point: Vec<f64> = keep.iter().map(|i| mean_stderr(&samples[*i]).mean).collect();
    let slope = slope_of(&point)?;
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .filter_map(|r| {
            let mut rng = stream(seed, tag, r as u64);
            let means: Vec<f64> = keep
                .iter()
                .map(|i| {
                    let xs = &samples[*i];
                    let draw: Vec<f64> = (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).collect();
                    mean_stderr(&draw).mean
                })
                .collect();
            slope_of(&means)
        })
        .collect();
    if boot.is_empty() {
        return None;
    }
    boot.sort_by(f64::total_cmp);
    Some(SlopeFit {
        slope,
        ci_low: sorted_quantile(&boot, 0.025),
        ci_high: sorted_quantile(&boot, 0.975),
        resamples: boot.len(),
    })
}

/// Runs `trial` for every index in parallel and splits the outcomes in index
/// order into results and quarantine records.
pub fn collect_trials<F>(n: usize, trials: usize, quarantined: &mut Vec<QuarantinedTrial>, trial: F) -> Vec<TrialResult>
where
    F: Fn(usize) -> privreg_core::Result<TrialResult> + Sync,
{
    let outcomes: Vec<_> = (0..trials).into_par_iter().map(&trial).collect();
    let mut results = Vec::with_capacity(trials);
    for (t, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => results.push(r),
            Err(e) => quarantined.push(QuarantinedTrial {
                n,
                trial: Some(t),
                player: None,
                error: e.to_string(),
            }),
        }
    }
    results
}

/// Runs every `(n, trial)` world in the spec and aggregates the report.
/// Uses the ambient rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport, ConfigError> {
    spec.validate()?;
    let oracle = build_oracle(spec)?;
    let deviation_sizes = spec.deviation_sizes();
    let mut rows = Vec::with_capacity(spec.n_grid.len());
    let mut quarantined = Vec::new();
    let mut sq_samples = Vec::with_capacity(spec.n_grid.len());
    let mut budget_samples = Vec::with_capacity(spec.n_grid.len());
    for &n in &spec.n_grid {
        let config = spec.mechanism_config(n)?;
        let results = collect_trials(n, spec.trials, &mut quarantined, |t| {
            run_trial(spec, &config, &oracle, t)
        });
        let deviation = if deviation_sizes.contains(&n) {
            probe_deviations(spec, &config, &oracle, &mut quarantined)?
        } else {
            Vec::new()
        };
        sq_samples.push(results.iter().map(|r| r.squared_error).collect::<Vec<_>>());
        budget_samples.push(results.iter().map(|r| r.budget).collect::<Vec<_>>());
        let failed = spec.trials - results.len();
        rows.push(aggregate(n, config, &results, failed, deviation));
    }
    let slopes = Slopes {
        mse: fit_slope(&spec.n_grid, &sq_samples, spec.seed, BOOTSTRAP_TAG),
        budget: fit_slope(&spec.n_grid, &budget_samples, spec.seed, BOOTSTRAP_TAG + 1),
    };
    Ok(ExperimentReport {
        seed: spec.seed,
        rows,
        slopes,
        quarantined,
        warnings: spec.warnings(),
    })
}

/// Runs [`run_experiment`] on a dedicated pool of `jobs` threads.
pub fn run_experiment_with_jobs(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentReport, ConfigError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ConfigError::Invalid {
            field: "jobs",
            reason: e.to_string(),
        })?;
    pool.install(|| run_experiment(spec))
}
