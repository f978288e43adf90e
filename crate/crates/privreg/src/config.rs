//! Experiment configuration files.
//!
//! A config is a single JSON object. Unknown keys are rejected everywhere:
//! a misspelt knob in a privacy experiment should stop the run, not be
//! silently ignored.

use std::path::{Path, PathBuf};

use privreg_core::agents::{geometric_delta_grid, MisreportModel};
use privreg_core::data_gen::{CostSpec, NoiseSpec, PriorSpec};
use privreg_core::mechanism::MechanismConfig;
use privreg_core::schedule::{corollary_schedule, max_delta, ScheduleInputs};
use serde::{Deserialize, Serialize};

use crate::ConfigError;

/// Largest supported per-n trial count; trial indices share a 64-bit stream
/// id with the population size.
pub const MAX_TRIALS: usize = 1 << 24;

/// How the other players behave in every simulated world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyChoice {
    Truthful,
    /// Truthful iff the cost is at most the schedule's threshold.
    #[default]
    Threshold,
}

/// Where the payment intercept `a` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PaymentPolicy {
    /// `a` and `b` exactly as the schedule sets them.
    #[default]
    Schedule,
    /// Schedule `b`, with `a` lowered to the smallest value that keeps
    /// below-threshold players individually rational.
    MinIr,
    /// Fixed values at every `n`.
    Fixed { a: f64, b: f64 },
}

/// Which posterior oracle prices the players' predictions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleChoice {
    /// Exact for discrete priors, Monte Carlo with 4000 draws otherwise.
    #[default]
    Auto,
    Exact,
    MonteCarlo {
        samples: usize,
    },
}

/// Deviation search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationSpec {
    /// Number of below-threshold players probed.
    pub players: usize,
    /// Paired trials per probed player.
    pub trials: usize,
    /// Report shifts tried; defaults to the 17-point geometric grid.
    #[serde(default = "geometric_delta_grid")]
    pub grid: Vec<f64>,
    /// Population sizes at which to probe; defaults to the largest `n`.
    #[serde(default)]
    pub at: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n_grid: Vec<usize>,
    pub d: usize,
    pub delta: f64,
    pub trials: usize,
    pub seed: u64,
    pub prior: PriorSpec,
    pub noise: NoiseSpec,
    pub cost: CostSpec,
    #[serde(default)]
    pub strategy: StrategyChoice,
    #[serde(default)]
    pub misreport: MisreportModel,
    #[serde(default)]
    pub payments: PaymentPolicy,
    #[serde(default)]
    pub oracle: OracleChoice,
    #[serde(default)]
    pub deviation: Option<DeviationSpec>,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let spec: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    /// Schedule inputs shared by every `n`. `B`, `M`, `σ²` and the tail
    /// exponent come from the prior, noise and cost specs.
    pub fn schedule_inputs(&self) -> ScheduleInputs {
        ScheduleInputs {
            d: self.d,
            delta: self.delta,
            bound_b: self.prior.bound,
            half_width_m: self.noise.half_width(),
            sigma2: self.noise.variance(),
            p: self.cost.tail_exponent,
        }
    }

    /// Mechanism configuration at population size `n` after the payment
    /// policy is applied.
    pub fn mechanism_config(&self, n: usize) -> Result<MechanismConfig, ConfigError> {
        let mut config = corollary_schedule(n, &self.schedule_inputs())?;
        match self.payments {
            PaymentPolicy::Schedule => {}
            PaymentPolicy::MinIr => config.a = privreg_core::mechanism::min_a_for_ir(&config),
            PaymentPolicy::Fixed { a, b } => {
                config.a = a;
                config.b = b;
            }
        }
        config.validate_private()?;
        Ok(config)
    }

    /// Population sizes at which deviation search runs.
    pub fn deviation_sizes(&self) -> Vec<usize> {
        match &self.deviation {
            None => Vec::new(),
            Some(dev) => match &dev.at {
                Some(at) => at.clone(),
                None => self.n_grid.last().copied().into_iter().collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &'static str, reason: &str| {
            Err(ConfigError::Invalid {
                field,
                reason: reason.to_string(),
            })
        };
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return bad("n_grid", "must be strictly increasing");
        }
        if self.d == 0 {
            return bad("d", "must be at least 1");
        }
        if !(1..=MAX_TRIALS).contains(&self.trials) {
            return bad("trials", "must be between 1 and 2^24");
        }
        if self.n_grid.iter().any(|n| *n > u32::MAX as usize) {
            return bad("n_grid", "population sizes must fit in 32 bits");
        }
        self.prior.validate()?;
        self.noise.validate()?;
        self.cost.validate()?;
        if self.prior.dim() != self.d {
            return bad("prior", "dimension differs from d");
        }
        let p = self.cost.tail_exponent;
        if !(self.delta > 0.0 && self.delta < max_delta(p)) {
            return bad("delta", "must lie in (0, p/(2+2p)) for the cost tail exponent p");
        }
        if let PaymentPolicy::Fixed { a, b } = self.payments {
            if !a.is_finite() || !(b >= 0.0 && b.is_finite()) {
                return bad("payments", "need finite a and finite b >= 0");
            }
        }
        match self.oracle {
            OracleChoice::Exact if !matches!(self.prior.shape, privreg_core::data_gen::PriorShape::Discrete { .. }) => {
                return bad("oracle", "the exact oracle needs a discrete prior");
            }
            OracleChoice::MonteCarlo { samples } if samples < privreg_core::payments::MIN_MC_SAMPLES => {
                return bad("oracle", "Monte Carlo oracle needs at least 1000 samples");
            }
            _ => {}
        }
        if let Some(dev) = &self.deviation {
            if dev.players == 0 || dev.players > 255 {
                return bad("deviation.players", "must be between 1 and 255");
            }
            if !(1..=MAX_TRIALS).contains(&dev.trials) {
                return bad("deviation.trials", "must be between 1 and 2^24");
            }
            if dev.grid.is_empty() || dev.grid.iter().any(|g| !g.is_finite()) {
                return bad("deviation.grid", "must be a non-empty list of finite shifts");
            }
            if let Some(at) = &dev.at {
                if at.iter().any(|n| !self.n_grid.contains(n)) {
                    return bad("deviation.at", "every entry must appear in n_grid");
                }
            }
        }
        for &n in &self.n_grid {
            self.mechanism_config(n)?;
        }
        Ok(())
    }

    /// Non-fatal findings about the spec.
    pub fn warnings(&self) -> Vec<String> {
        self.n_grid
            .iter()
            .filter_map(|&n| {
                let eps = (n as f64).powf(-1.0 + self.delta);
                (eps > 1.0).then(|| {
                    format!("n = {n}: epsilon = {eps:.4} exceeds 1; privacy-cost guarantees assume epsilon <= 1")
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "n_grid": [100, 200],
            "d": 2,
            "delta": 0.25,
            "trials": 3,
            "seed": 7,
            "prior": {"shape": {"kind": "discrete", "support": [[0.5, 0.0], [-0.5, 0.0]], "weights": [0.5, 0.5]}, "bound": 1.0},
            "noise": {"kind": "uniform", "half_width": 1.0},
            "cost": {"tail_exponent": 2.0}
        })
    }

    #[test]
    fn minimal_spec_loads_with_defaults() {
        let spec = ExperimentSpec::from_json(&base().to_string()).unwrap();
        assert_eq!(spec.strategy, StrategyChoice::Threshold);
        assert_eq!(spec.misreport, MisreportModel::ClampExtreme);
        assert_eq!(spec.payments, PaymentPolicy::Schedule);
        assert!(spec.deviation_sizes().is_empty());
        let inputs = spec.schedule_inputs();
        assert_eq!(inputs.bound_b, 1.0);
        assert!((inputs.sigma2 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = base();
        v["gamma"] = serde_json::json!(3.0);
        assert!(matches!(
            ExperimentSpec::from_json(&v.to_string()),
            Err(ConfigError::Parse(_))
        ));
        let mut v = base();
        v["noise"]["halfwidth"] = serde_json::json!(1.0);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn grid_must_increase() {
        let mut v = base();
        v["n_grid"] = serde_json::json!([200, 200]);
        assert!(matches!(
            ExperimentSpec::from_json(&v.to_string()),
            Err(ConfigError::Invalid { field: "n_grid", .. })
        ));
    }

    #[test]
    fn delta_range_depends_on_tail() {
        let mut v = base();
        v["delta"] = serde_json::json!(0.34);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
        v["cost"]["tail_exponent"] = serde_json::json!(5.0);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_ok());
    }

    #[test]
    fn zero_trials_rejected() {
        let mut v = base();
        v["trials"] = serde_json::json!(0);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn deviation_defaults_to_largest_n() {
        let mut v = base();
        v["deviation"] = serde_json::json!({"players": 2, "trials": 10});
        let spec = ExperimentSpec::from_json(&v.to_string()).unwrap();
        assert_eq!(spec.deviation_sizes(), vec![200]);
        assert_eq!(spec.deviation.unwrap().grid.len(), 17);
        v["deviation"]["at"] = serde_json::json!([150]);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn payment_policies_shape_the_config() {
        let mut v = base();
        v["payments"] = serde_json::json!({"kind": "fixed", "a": 0.0, "b": 0.0});
        let spec = ExperimentSpec::from_json(&v.to_string()).unwrap();
        let c = spec.mechanism_config(100).unwrap();
        assert_eq!((c.a, c.b), (0.0, 0.0));
        v["payments"] = serde_json::json!({"kind": "min-ir"});
        let spec = ExperimentSpec::from_json(&v.to_string()).unwrap();
        let c = spec.mechanism_config(100).unwrap();
        assert_eq!(c.a, privreg_core::mechanism::min_a_for_ir(&c));
    }

    #[test]
    fn schedule_epsilon_stays_below_one() {
        let mut v = base();
        v["n_grid"] = serde_json::json!([2, 3, 100]);
        let spec = ExperimentSpec::from_json(&v.to_string()).unwrap();
        assert!(spec.warnings().is_empty());
    }

    #[test]
    fn prior_dimension_must_match() {
        let mut v = base();
        v["d"] = serde_json::json!(3);
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
    }
}
