//! Parameter schedule that drives every mechanism knob as a power of `n`.

use crate::agents::tau_threshold;
use crate::error::{invalid, Result};
use crate::mechanism::MechanismConfig;

/// Inputs that stay fixed as the population grows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleInputs {
    pub d: usize,
    /// Rate exponent, in `(0, p/(2+2p))`.
    pub delta: f64,
    pub bound_b: f64,
    pub half_width_m: f64,
    pub sigma2: f64,
    /// Cost tail exponent.
    pub p: f64,
}

/// Upper end of the admissible rate exponents for tail exponent `p`.
pub fn max_delta(p: f64) -> f64 {
    p / (2.0 + 2.0 * p)
}

/// `γ = n^{1−δ/2}`, `ε = n^{−1+δ}`, `a = (6B+2M)(1+B)²n^{−3/2} + n^{−3/2+δ}`,
/// `b = n^{−3/2}`, `α = n^{−δ}`, `β = n^{−p/2+δ(1+p)}`, `ξ = 1/2`, and the
/// matching cost threshold.
pub fn corollary_schedule(n: usize, inputs: &ScheduleInputs) -> Result<MechanismConfig> {
    let ScheduleInputs {
        d,
        delta,
        bound_b,
        half_width_m,
        sigma2,
        p,
    } = *inputs;
    if !(p > 1.0) {
        return Err(invalid("p", "tail exponent must exceed 1"));
    }
    if !(delta > 0.0 && delta < max_delta(p)) {
        return Err(invalid("delta", "must lie in (0, p/(2+2p))"));
    }
    if n < 2 || d == 0 {
        return Err(invalid("n, d", "need n >= 2 and d >= 1"));
    }
    let nf = n as f64;
    let pw = |e: f64| libm::pow(nf, e);
    let alpha = pw(-delta);
    let beta = pw(-p / 2.0 + delta * (1.0 + p));
    let config = MechanismConfig {
        n,
        d,
        gamma: pw(1.0 - delta / 2.0),
        epsilon: pw(-1.0 + delta),
        a: (6.0 * bound_b + 2.0 * half_width_m) * (1.0 + bound_b) * (1.0 + bound_b) * pw(-1.5) + pw(-1.5 + delta),
        b: pw(-1.5),
        bound_b,
        half_width_m,
        sigma2,
        alpha,
        beta,
        xi: 0.5,
        tau: tau_threshold(alpha, beta.min(1.0), p)?,
    };
    config.validate()?;
    Ok(config)
}
