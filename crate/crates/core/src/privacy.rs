//! Output perturbation with the radial Laplace law `P_L(v) ∝ exp(−‖v‖₂/s)`,
//! privacy accounting, and empirical audits of the sensitivity bound and of
//! the analytic density ratio.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{distance, dot, Matrix};
use crate::random::{gamma_integer, unit_direction};
use crate::regression::{NormalEquations, RidgeEstimate};
use crate::stats::{mean_stderr, MeanEstimate};

/// L2 sensitivity of the ridge estimator to one player's data: `(4B+2M)/γ`.
pub fn ridge_sensitivity(bound_b: f64, half_width_m: f64, gamma: f64) -> f64 {
    (4.0 * bound_b + 2.0 * half_width_m) / gamma
}

/// Scale `s = (4B+2M)/(γε)` of the perturbation noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseScale {
    pub scale: f64,
    pub bound_b: f64,
    pub half_width_m: f64,
    pub gamma: f64,
    pub epsilon: f64,
}

impl NoiseScale {
    pub fn new(bound_b: f64, half_width_m: f64, gamma: f64, epsilon: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid("gamma", "output perturbation needs gamma > 0"));
        }
        if !(epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !(bound_b > 0.0) || !(half_width_m > 0.0) {
            return Err(invalid("B, M", "bounds must be positive"));
        }
        Ok(Self {
            scale: ridge_sensitivity(bound_b, half_width_m, gamma) / epsilon,
            bound_b,
            half_width_m,
            gamma,
            epsilon,
        })
    }

    pub fn sensitivity(&self) -> f64 {
        ridge_sensitivity(self.bound_b, self.half_width_m, self.gamma)
    }
}

/// Draws `v ∈ R^d` with density proportional to `exp(−‖v‖₂/scale)`: a uniform
/// direction times a `Gamma(d, scale)` radius.
pub fn sample_pl<R: Rng + ?Sized>(d: usize, scale: f64, rng: &mut R) -> Vec<f64> {
    let mut v = vec![0.0; d];
    unit_direction(rng, &mut v);
    let r = gamma_integer(rng, d, scale);
    v.iter_mut().for_each(|c| *c *= r);
    v
}

/// Unnormalized log density of `P_L`.
#[inline]
pub fn pl_log_kernel(v: &[f64], scale: f64) -> f64 {
    -libm::sqrt(dot(v, v)) / scale
}

/// A released estimate: ridge output plus the recorded noise draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivateEstimate {
    pub theta_private: Vec<f64>,
    pub theta_ridge: Vec<f64>,
    pub noise: Vec<f64>,
}

impl PrivateEstimate {
    /// A noiseless release, for the non-private mechanism.
    pub fn exact(theta: Vec<f64>) -> Self {
        Self {
            noise: vec![0.0; theta.len()],
            theta_private: theta.clone(),
            theta_ridge: theta,
        }
    }
}

/// Adds `P_L` noise at scale `(4B+2M)/(γε)` to a ridge estimate.
pub fn perturb<R: Rng + ?Sized>(
    est: &RidgeEstimate,
    bound_b: f64,
    half_width_m: f64,
    epsilon: f64,
    rng: &mut R,
) -> Result<PrivateEstimate> {
    let ns = NoiseScale::new(bound_b, half_width_m, est.gamma, epsilon)?;
    let noise = sample_pl(est.theta_hat.len(), ns.scale, rng);
    let theta_private = est.theta_hat.iter().zip(&noise).map(|(t, v)| t + v).collect();
    Ok(PrivateEstimate {
        theta_private,
        theta_ridge: est.theta_hat.clone(),
        noise,
    })
}

/// Joint-privacy budget of one run of the private mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyAccount {
    pub per_release_epsilon: f64,
    pub total_epsilon: f64,
}

impl PrivacyAccount {
    /// The two group releases touch disjoint players and compose in
    /// parallel; together with the full-data release the total is `2ε`.
    pub fn private_mechanism(epsilon: f64) -> Self {
        Self {
            per_release_epsilon: epsilon,
            total_epsilon: 2.0 * epsilon,
        }
    }
}

/// Outcome of an empirical bound audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub bound: f64,
    pub max_observed: f64,
    pub violations: usize,
    pub trials: usize,
}

impl AuditRecord {
    /// Folds per-trial observations into a record, in order.
    pub fn from_observations(bound: f64, observed: &[f64]) -> Self {
        Self {
            bound,
            max_observed: observed.iter().copied().fold(0.0, f64::max),
            violations: observed.iter().filter(|v| **v > bound).count(),
            trials: observed.len(),
        }
    }
}

/// Shape of the random worlds used by the audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSetup {
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    pub bound_b: f64,
    pub half_width_m: f64,
}

impl AuditSetup {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n, d", "must be positive"));
        }
        NoiseScale::new(self.bound_b, self.half_width_m, self.gamma, 1.0).map(|_| ())
    }

    pub fn sensitivity(&self) -> f64 {
        ridge_sensitivity(self.bound_b, self.half_width_m, self.gamma)
    }

    /// A legal world: `‖θ‖² ≤ B`, unit-ball rows, uniform noise on `[−M, M]`.
    fn world<R: Rng + ?Sized>(&self, rng: &mut R) -> (Matrix, Vec<f64>) {
        let mut theta = vec![0.0; self.d];
        unit_direction(rng, &mut theta);
        let r = libm::sqrt(self.bound_b) * libm::pow(rng.random::<f64>(), 1.0 / self.d as f64);
        theta.iter_mut().for_each(|t| *t *= r);
        let x = crate::data_gen::sample_unit_ball(self.n, self.d, rng).expect("validated sizes");
        let y = x
            .iter_rows()
            .map(|row| dot(&theta, row) + self.half_width_m * (2.0 * rng.random::<f64>() - 1.0))
            .collect();
        (x, y)
    }

    /// Ridge estimates on a random world and on a neighbour in which
    /// `changed` distinct players were redrawn anywhere in the legal domain.
    fn neighbours<R: Rng + ?Sized>(&self, changed: usize, rng: &mut R) -> Result<(RidgeEstimate, RidgeEstimate)> {
        let (x, y) = self.world(rng);
        let mut ne = NormalEquations::new(&x, &y)?;
        let before = ne.solve(self.gamma)?;
        let reach = self.bound_b + self.half_width_m;
        let mut idx: Vec<usize> = (0..self.n).collect();
        let mut row = vec![0.0; self.d];
        for k in 0..changed.min(self.n) {
            let j = rng.random_range(k..self.n);
            idx.swap(k, j);
            let i = idx[k];
            unit_direction(rng, &mut row);
            let r = libm::pow(rng.random::<f64>(), 1.0 / self.d as f64);
            row.iter_mut().for_each(|c| *c *= r);
            let y_new = reach * (2.0 * rng.random::<f64>() - 1.0);
            ne.replace(x.row(i), y[i], &row, y_new);
        }
        Ok((before, ne.solve(self.gamma)?))
    }
}

/// One sensitivity trial: `‖θ̂^R − θ̂^R′‖₂` after changing `changed` players.
pub fn sensitivity_trial<R: Rng + ?Sized>(setup: &AuditSetup, changed: usize, rng: &mut R) -> Result<f64> {
    let (a, b) = setup.neighbours(changed, rng)?;
    Ok(distance(&a.theta_hat, &b.theta_hat))
}

/// Audits the bound `k(4B+2M)/γ` over `trials` random neighbouring worlds
/// that differ in `changed = k` players.
pub fn sensitivity_audit<R: Rng + ?Sized>(
    setup: &AuditSetup,
    changed: usize,
    trials: usize,
    rng: &mut R,
) -> Result<AuditRecord> {
    setup.validate()?;
    if trials == 0 || changed == 0 {
        return Err(invalid("trials, changed", "must be at least 1"));
    }
    let obs = (0..trials)
        .map(|_| sensitivity_trial(setup, changed, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditRecord::from_observations(
        changed as f64 * setup.sensitivity(),
        &obs,
    ))
}

/// `ln h(out | D) − ln h(out | D′)` where the releases centre on `centre`
/// and `centre_neighbour`.
pub fn log_density_ratio(out: &[f64], centre: &[f64], centre_neighbour: &[f64], scale: f64) -> f64 {
    (distance(out, centre_neighbour) - distance(out, centre)) / scale
}

/// One density-ratio trial: absolute log ratio at an output drawn from the
/// release on the first of two neighbouring worlds.
pub fn density_ratio_trial<R: Rng + ?Sized>(setup: &AuditSetup, epsilon: f64, rng: &mut R) -> Result<f64> {
    let (a, b) = setup.neighbours(1, rng)?;
    let scale = setup.sensitivity() / epsilon;
    let v = sample_pl(setup.d, scale, rng);
    let out: Vec<f64> = a.theta_hat.iter().zip(&v).map(|(t, n)| t + n).collect();
    Ok(libm::fabs(log_density_ratio(&out, &a.theta_hat, &b.theta_hat, scale)))
}

/// Audits `|ln h(out|D)/h(out|D′)| ≤ ε` over `pairs` neighbouring worlds.
pub fn density_ratio_audit<R: Rng + ?Sized>(
    setup: &AuditSetup,
    epsilon: f64,
    pairs: usize,
    rng: &mut R,
) -> Result<AuditRecord> {
    setup.validate()?;
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "must be positive"));
    }
    if pairs == 0 {
        return Err(invalid("pairs", "must be at least 1"));
    }
    let obs = (0..pairs)
        .map(|_| density_ratio_trial(setup, epsilon, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(AuditRecord::from_observations(epsilon, &obs))
}

/// Log ratio in the worst case: estimates a full sensitivity apart and an
/// output collinear with them, beyond the first.
pub fn extremal_log_ratio(d: usize, sensitivity: f64, epsilon: f64) -> f64 {
    let scale = sensitivity / epsilon;
    let centre = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    shifted[0] = sensitivity;
    let mut out = vec![0.0; d];
    out[0] = -sensitivity;
    log_density_ratio(&out, &centre, &shifted, scale)
}

/// Measured radial moments of `P_L` beside the two competing closed forms:
/// `E‖v‖ = s, E‖v‖² = 2s²` (dimension free) and the values implied by the
/// `Gamma(d, s)` radius, `E‖v‖ = ds, E‖v‖² = d(d+1)s²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialMoments {
    pub norm: MeanEstimate,
    pub norm_sq: MeanEstimate,
    pub dimension_free_norm: f64,
    pub dimension_free_norm_sq: f64,
    pub density_norm: f64,
    pub density_norm_sq: f64,
}

pub fn radial_moments<R: Rng + ?Sized>(d: usize, scale: f64, draws: usize, rng: &mut R) -> RadialMoments {
    let mut norms = Vec::with_capacity(draws);
    let mut sq = Vec::with_capacity(draws);
    for _ in 0..draws {
        let v = sample_pl(d, scale, rng);
        let s = dot(&v, &v);
        sq.push(s);
        norms.push(libm::sqrt(s));
    }
    let df = d as f64;
    RadialMoments {
        norm: mean_stderr(&norms),
        norm_sq: mean_stderr(&sq),
        dimension_free_norm: scale,
        dimension_free_norm_sq: 2.0 * scale * scale,
        density_norm: df * scale,
        density_norm_sq: df * (df + 1.0) * scale * scale,
    }
}

/// CDF of `Gamma(k, 1)` for integer `k`: `1 − e^{−x} Σ_{j<k} x^j/j!`.
pub fn gamma_integer_cdf(k: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..k {
        term *= x / j as f64;
        sum += term;
    }
    (1.0 - libm::exp(-x) * sum).clamp(0.0, 1.0)
}

/// Pearson goodness-of-fit statistic of sampled radii against the density
/// `r^{d−1} e^{−r/s}`, on `bins` equiprobable bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialFit {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub counts: Vec<u64>,
}

pub fn radial_goodness_of_fit<R: Rng + ?Sized>(
    d: usize,
    scale: f64,
    draws: usize,
    bins: usize,
    rng: &mut R,
) -> RadialFit {
    assert!(bins >= 2, "need at least two bins");
    // interior edges of equiprobable bins in units of `scale`
    let edges: Vec<f64> = (1..bins)
        .map(|b| {
            let target = b as f64 / bins as f64;
            let (mut lo, mut hi) = (0.0, 1.0);
            while gamma_integer_cdf(d, hi) < target {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if gamma_integer_cdf(d, mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        })
        .collect();
    let mut counts = vec![0u64; bins];
    for _ in 0..draws {
        let v = sample_pl(d, scale, rng);
        let r = libm::sqrt(dot(&v, &v)) / scale;
        let b = edges.partition_point(|e| *e < r);
        counts[b] += 1;
    }
    let expected = draws as f64 / bins as f64;
    let statistic = counts
        .iter()
        .map(|c| {
            let diff = *c as f64 - expected;
            diff * diff / expected
        })
        .sum();
    RadialFit {
        statistic,
        degrees_of_freedom: bins - 1,
        counts,
    }
}
