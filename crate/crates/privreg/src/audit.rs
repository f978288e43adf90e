//! Parallel sensitivity and density-ratio audits with JSON records.

use privreg_core::privacy::{density_ratio_trial, extremal_log_ratio, sensitivity_trial, AuditRecord, AuditSetup};
use privreg_core::random::stream;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ConfigError;

pub const SENSITIVITY_TAG: u64 = 0x5E45;
pub const DENSITY_TAG: u64 = 0xD425;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRequest {
    pub trials: usize,
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub bound_b: f64,
    pub half_width_m: f64,
    /// Players changed between neighbouring worlds in the sensitivity audit.
    pub changed: usize,
    pub seed: u64,
}

impl AuditRequest {
    pub fn setup(&self) -> AuditSetup {
        AuditSetup {
            n: self.n,
            d: self.d,
            gamma: self.gamma,
            bound_b: self.bound_b,
            half_width_m: self.half_width_m,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.setup().validate()?;
        let bad = |field: &'static str, reason: &str| {
            Err(ConfigError::Invalid {
                field,
                reason: reason.into(),
            })
        };
        if self.trials == 0 {
            return bad("trials", "must be at least 1");
        }
        if self.changed == 0 || self.changed > self.n {
            return bad("changed", "must be between 1 and n");
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon", "must be positive and finite");
        }
        Ok(())
    }
}

/// Serialized form of one audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditJson {
    pub bound: f64,
    pub max_observed: f64,
    pub violations: usize,
    pub trials: usize,
    pub seed: u64,
}

impl AuditJson {
    fn new(rec: AuditRecord, seed: u64) -> Self {
        Self {
            bound: rec.bound,
            max_observed: rec.max_observed,
            violations: rec.violations,
            trials: rec.trials,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditOutput {
    pub sensitivity: AuditJson,
    pub density_ratio: AuditJson,
    /// Log ratio of the worst-case output; equals `epsilon` up to rounding.
    pub extremal_log_ratio: f64,
}

impl AuditOutput {
    pub fn violated(&self) -> bool {
        self.sensitivity.violations > 0 || self.density_ratio.violations > 0
    }
}

/// Trial `i` of each audit draws from its own stream, so the records do not
/// depend on the thread count.
pub fn run_audit(req: &AuditRequest) -> Result<AuditOutput, ConfigError> {
    req.validate()?;
    let setup = req.setup();
    let sens = (0..req.trials)
        .into_par_iter()
        .map(|i| sensitivity_trial(&setup, req.changed, &mut stream(req.seed, SENSITIVITY_TAG, i as u64)))
        .collect::<privreg_core::Result<Vec<f64>>>()?;
    let dens = (0..req.trials)
        .into_par_iter()
        .map(|i| density_ratio_trial(&setup, req.epsilon, &mut stream(req.seed, DENSITY_TAG, i as u64)))
        .collect::<privreg_core::Result<Vec<f64>>>()?;
    Ok(AuditOutput {
        sensitivity: AuditJson::new(
            AuditRecord::from_observations(req.changed as f64 * setup.sensitivity(), &sens),
            req.seed,
        ),
        density_ratio: AuditJson::new(AuditRecord::from_observations(req.epsilon, &dens), req.seed),
        extremal_log_ratio: extremal_log_ratio(req.d, setup.sensitivity(), req.epsilon),
    })
}
