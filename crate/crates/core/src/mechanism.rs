//! The two regression mechanisms and the closed-form guarantees that go with
//! the private one.
//!
//! The non-private mechanism pays each player against the least-squares fit
//! computed without that player. The private mechanism splits the players into two
//! halves, releases noisy ridge estimates of the whole population and of each
//! half, and pays every player against the estimate of the *other* half.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_gen::World;
use crate::error::{check_dim, invalid, Result};
use crate::linalg::{dot, Matrix};
use crate::payments::{brier, BrierParams, PosteriorOracle};
use crate::privacy::{perturb, PrivateEstimate};
use crate::regression::{ridge, LeaveOneOut, NormalEquations};

/// Every knob of the private mechanism, plus the analysis parameters the
/// bounds are stated in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismConfig {
    pub n: usize,
    pub d: usize,
    pub gamma: f64,
    pub epsilon: f64,
    pub a: f64,
    pub b: f64,
    /// `B`: `‖θ‖² ≤ B`.
    pub bound_b: f64,
    /// `M`: noise support is `[−M, M]`.
    pub half_width_m: f64,
    pub sigma2: f64,
    /// Fraction of players allowed to misreport.
    pub alpha: f64,
    /// Probability that more than `αn` players exceed the cost threshold.
    pub beta: f64,
    /// Width of the spectral band around `n/(d+2)`.
    pub xi: f64,
    /// Cost threshold below which players report truthfully.
    pub tau: f64,
}

impl MechanismConfig {
    pub fn brier(&self) -> BrierParams {
        BrierParams { a: self.a, b: self.b }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n, d", "must be positive"));
        }
        if !(self.gamma >= 0.0) || !(self.epsilon >= 0.0) {
            return Err(invalid("gamma, epsilon", "must be non-negative"));
        }
        if !(self.a >= 0.0) || !(self.b >= 0.0) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(invalid("a, b", "must be finite and non-negative"));
        }
        if !(self.bound_b > 0.0) || !(self.half_width_m > 0.0) || !(self.sigma2 > 0.0) {
            return Err(invalid("B, M, sigma2", "must be positive"));
        }
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(invalid("xi", "must lie in (0, 1)"));
        }
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) || !(self.tau >= 0.0) {
            return Err(invalid("alpha, beta, tau", "must be non-negative"));
        }
        Ok(())
    }

    pub fn validate_private(&self) -> Result<()> {
        self.validate()?;
        if !(self.gamma > 0.0) {
            return Err(invalid("gamma", "the private mechanism needs gamma > 0"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "the private mechanism needs epsilon > 0"));
        }
        if self.n < 2 {
            return Err(invalid("n", "the private mechanism needs two players"));
        }
        Ok(())
    }

    /// `4B + 2M`.
    fn reach(&self) -> f64 {
        4.0 * self.bound_b + 2.0 * self.half_width_m
    }

    /// `γ + (1−ξ)n/(d+2)`, the lower edge of the regularized spectrum.
    fn spectral_floor(&self) -> f64 {
        self.gamma + (1.0 - self.xi) * self.n as f64 / (self.d as f64 + 2.0)
    }

    /// `αn(4B+2M)/γ`: how far `αn` misreports can move a ridge estimate.
    fn misreport_shift(&self) -> f64 {
        self.alpha * self.n as f64 / self.gamma * self.reach()
    }
}

/// Distance bound between the expected released estimate and θ:
/// `αn(4B+2M)/γ + γB/(γ + (1−ξ)n/(d+2))`.
pub fn estimate_error_bound(config: &MechanismConfig) -> f64 {
    config.misreport_shift() + config.gamma * config.bound_b / config.spectral_floor()
}

/// Smallest offset `a` for which truthful players with cost at most `τ`
/// have non-negative expected utility.
pub fn min_a_for_ir(config: &MechanismConfig) -> f64 {
    let (b, bb) = (config.b, config.bound_b);
    (estimate_error_bound(config) + bb) * (b + 2.0 * b * bb)
        + b * bb * bb
        + config.tau * config.epsilon * config.epsilon
}

/// Upper bound on the total payments of one run.
pub fn budget_bound(config: &MechanismConfig) -> f64 {
    let (b, bb) = (config.b, config.bound_b);
    config.n as f64 * (config.a + (estimate_error_bound(config) + bb) * (b + 2.0 * b * bb))
}

/// Upper bound on `E‖θ̂^P − θ‖²` under threshold play: misreport shift,
/// perturbation noise, ridge bias, ridge variance, and the cross term.
pub fn accuracy_bound(config: &MechanismConfig) -> f64 {
    let shift = config.misreport_shift();
    let noise = config.reach() / (config.gamma * config.epsilon);
    let floor = config.spectral_floor();
    let n = config.n as f64;
    let bias = config.gamma * config.bound_b / floor;
    let ceiling = (1.0 + config.xi) * n / (config.d as f64 + 2.0);
    let variance = config.sigma2 * config.sigma2 * (ceiling / (floor * floor)) * (ceiling / (floor * floor));
    let cross = 2.0 * (shift + noise) * (config.gamma * config.bound_b + config.half_width_m * n) / floor;
    shift * shift + 2.0 * noise * noise + bias * bias + variance + cross
}

/// Payments of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentLedger {
    pub payments: Vec<f64>,
    /// Group of each player; empty for the non-private mechanism.
    pub groups: Vec<u8>,
    pub budget: f64,
    /// `estimatorᵀx_i` each player was scored against.
    pub references: Vec<f64>,
    /// `E[θ | x_i, ŷ_i]ᵀx_i`.
    pub predictions: Vec<f64>,
    /// Players whose report no prior atom explained; they were scored with
    /// the prior mean.
    pub fallbacks: usize,
}

impl PaymentLedger {
    fn assemble(
        params: BrierParams,
        groups: Vec<u8>,
        references: Vec<f64>,
        predictions: Vec<f64>,
        fallbacks: usize,
    ) -> Self {
        let payments: Vec<f64> = references
            .iter()
            .zip(&predictions)
            .map(|(p, q)| brier(params, *p, *q))
            .collect();
        let budget = payments.iter().sum();
        Self {
            payments,
            groups,
            budget,
            references,
            predictions,
            fallbacks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismOutcome {
    pub released: PrivateEstimate,
    /// Private estimates of group 0 and group 1.
    pub group_estimates: Option<[PrivateEstimate; 2]>,
    pub ledger: PaymentLedger,
}

fn check_inputs(x: &Matrix, reports: &[f64], oracle: &PosteriorOracle) -> Result<()> {
    check_dim(x.rows(), reports.len())?;
    check_dim(oracle.dim(), x.cols())?;
    if reports.iter().any(|y| !y.is_finite()) {
        return Err(invalid("reports", "must be finite"));
    }
    Ok(())
}

fn predictions(x: &Matrix, reports: &[f64], oracle: &PosteriorOracle) -> Result<(Vec<f64>, usize)> {
    let mut fallbacks = 0;
    let q = x
        .iter_rows()
        .zip(reports)
        .map(|(row, y)| {
            let (m, fell_back) = oracle.posterior_mean_or_prior(row, *y)?;
            fallbacks += fell_back as usize;
            Ok(dot(&m, row))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((q, fallbacks))
}

/// Non-private peer prediction: release least squares on all reports and
/// pay player `i` by how well `E[θ|x_i, ŷ_i]ᵀx_i` predicts the fit that
/// leaves the player out, `θ̂_{−i}ᵀx_i`.
pub fn run_algorithm_1(
    x: &Matrix,
    reports: &[f64],
    a: f64,
    b: f64,
    oracle: &PosteriorOracle,
) -> Result<MechanismOutcome> {
    check_inputs(x, reports, oracle)?;
    let params = BrierParams { a, b };
    params.validate()?;
    if x.rows() < x.cols() + 2 {
        return Err(invalid("n", "need at least d + 2 players"));
    }
    let released = ridge(x, reports, 0.0)?;
    let loo = LeaveOneOut::new(x, reports, 0.0)?;
    let references = x
        .iter_rows()
        .enumerate()
        .map(|(i, row)| Ok(dot(&loo.without(i, row, reports[i])?.theta_hat, row)))
        .collect::<Result<Vec<_>>>()?;
    let (q, fallbacks) = predictions(x, reports, oracle)?;
    Ok(MechanismOutcome {
        released: PrivateEstimate::exact(released.theta_hat),
        group_estimates: None,
        ledger: PaymentLedger::assemble(params, Vec::new(), references, q, fallbacks),
    })
}

/// Uniform random split into groups of sizes `⌈n/2⌉` (group 0) and `⌊n/2⌋`.
pub fn partition<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut groups = vec![1u8; n];
    for &i in &idx[..n.div_ceil(2)] {
        groups[i] = 0;
    }
    groups
}

/// The three noisy releases of the private mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateRelease {
    pub full: PrivateEstimate,
    pub groups: [PrivateEstimate; 2],
    pub assignment: Vec<u8>,
}

/// Partition, then perturb the full-data and both group ridge estimates with
/// independent noise. Randomness is consumed in that order.
pub fn private_release<R: Rng + ?Sized>(
    x: &Matrix,
    reports: &[f64],
    config: &MechanismConfig,
    rng: &mut R,
) -> Result<PrivateRelease> {
    config.validate_private()?;
    check_dim(x.rows(), reports.len())?;
    if x.rows() < 2 {
        return Err(invalid("n", "the private mechanism needs two players"));
    }
    let assignment = partition(x.rows(), rng);
    let members: [Vec<usize>; 2] = [0u8, 1].map(|g| (0..x.rows()).filter(|i| assignment[*i] == g).collect());
    let full_fit = NormalEquations::new(x, reports)?.solve(config.gamma)?;
    let group_fits = [
        NormalEquations::subset(x, reports, &members[0])?.solve(config.gamma)?,
        NormalEquations::subset(x, reports, &members[1])?.solve(config.gamma)?,
    ];
    let (bb, m, eps) = (config.bound_b, config.half_width_m, config.epsilon);
    let full = perturb(&full_fit, bb, m, eps, rng)?;
    let g0 = perturb(&group_fits[0], bb, m, eps, rng)?;
    let g1 = perturb(&group_fits[1], bb, m, eps, rng)?;
    Ok(PrivateRelease {
        full,
        groups: [g0, g1],
        assignment,
    })
}

/// Private regression mechanism. A player in group `j` is paid
/// `B_{a,b}(θ̂^P_{1−j}ᵀx_i, E[θ|x_i,ŷ_i]ᵀx_i)`; the full-data release is
/// published and never enters a payment.
pub fn run_algorithm_2<R: Rng + ?Sized>(
    x: &Matrix,
    reports: &[f64],
    config: &MechanismConfig,
    oracle: &PosteriorOracle,
    rng: &mut R,
) -> Result<MechanismOutcome> {
    check_inputs(x, reports, oracle)?;
    let release = private_release(x, reports, config, rng)?;
    let references = x
        .iter_rows()
        .zip(&release.assignment)
        .map(|(row, g)| dot(&release.groups[1 - *g as usize].theta_private, row))
        .collect();
    let (q, fallbacks) = predictions(x, reports, oracle)?;
    Ok(MechanismOutcome {
        released: release.full,
        group_estimates: Some(release.groups),
        ledger: PaymentLedger::assemble(config.brier(), release.assignment, references, q, fallbacks),
    })
}

/// Individual-rationality check for players with cost at most `τ`.
///
/// `violations_below_threshold` uses realized payments. The expected counts
/// integrate out the perturbation noise, which is exact because the Brier
/// rule is affine in its first argument and the noise has mean zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrReport {
    pub below_threshold: usize,
    pub violations_below_threshold: usize,
    pub fraction: f64,
    pub expected_violations_below_threshold: usize,
    pub expected_fraction: f64,
}

pub fn ir_report(outcome: &MechanismOutcome, world: &World, config: &MechanismConfig) -> Result<IrReport> {
    let n = world.n();
    let ledger = &outcome.ledger;
    check_dim(n, ledger.payments.len())?;
    let cost_unit = config.epsilon * config.epsilon;
    let params = config.brier();
    let (mut below, mut realized, mut expected) = (0, 0, 0);
    for i in 0..n {
        let c = world.costs[i];
        if c > config.tau {
            continue;
        }
        below += 1;
        let cost = c * cost_unit;
        if ledger.payments[i] - cost < 0.0 {
            realized += 1;
        }
        let mean_payment = match &outcome.group_estimates {
            Some(groups) => {
                let other = &groups[1 - ledger.groups[i] as usize];
                brier(
                    params,
                    dot(&other.theta_ridge, world.features.row(i)),
                    ledger.predictions[i],
                )
            }
            None => ledger.payments[i],
        };
        if mean_payment - cost < 0.0 {
            expected += 1;
        }
    }
    let frac = |k: usize| if below == 0 { 0.0 } else { k as f64 / below as f64 };
    Ok(IrReport {
        below_threshold: below,
        violations_below_threshold: realized,
        fraction: frac(realized),
        expected_violations_below_threshold: expected,
        expected_fraction: frac(expected),
    })
}
