//! Players: the quadratic privacy cost, the cost threshold, reporting
//! strategies, utilities, and a paired-sample search for profitable
//! unilateral deviations.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_gen::{sample_players, CostSpec, World};
use crate::error::{check_dim, invalid, Result};
use crate::linalg::dot;
use crate::mechanism::{estimate_error_bound, private_release, MechanismConfig, MechanismOutcome};
use crate::payments::{brier, BrierParams, PosteriorOracle};
use crate::random::stream;
use crate::stats::{mean_stderr, MeanEstimate};

/// `c·ε²`, the privacy cost of a player with coefficient `c`.
pub fn privacy_cost(c: f64, epsilon: f64) -> Result<f64> {
    if !(c >= 0.0) || !(epsilon >= 0.0) {
        return Err(invalid("c, epsilon", "must be non-negative"));
    }
    Ok(c * epsilon * epsilon)
}

/// Cost threshold `max{(αβ)^{−1/p}, α^{−1/p}}` under the tail
/// `Pr[c > τ] ≤ τ^{−p}`: with probability at least `1−β`, at least `(1−α)n`
/// players have cost at most the threshold.
pub fn tau_threshold(alpha: f64, beta: f64, p: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("alpha", "must lie in (0, 1]"));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid("beta", "must lie in (0, 1]"));
    }
    if !(p > 1.0) {
        return Err(invalid("p", "tail exponent must exceed 1"));
    }
    let inv = -1.0 / p;
    Ok(libm::pow(alpha * beta, inv).max(libm::pow(alpha, inv)))
}

/// What a player above the threshold reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MisreportModel {
    Zero,
    /// Uniform on `[−(B+M), B+M]`.
    UniformRandom,
    /// `−sign(θᵀx_i)·(B+M)`: as far from the truth as the domain allows.
    #[default]
    ClampExtreme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategyProfile {
    Truthful,
    /// Truthful iff `c_i ≤ tau`.
    Threshold {
        tau: f64,
        #[serde(default)]
        misreport: MisreportModel,
    },
    /// Everyone truthful except `player`, who adds `delta`.
    SingleDeviation {
        player: usize,
        delta: f64,
    },
}

impl StrategyProfile {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            StrategyProfile::Truthful => Ok(()),
            StrategyProfile::Threshold { tau, .. } if !(tau >= 0.0) => Err(invalid("tau", "must be non-negative")),
            StrategyProfile::Threshold { .. } => Ok(()),
            StrategyProfile::SingleDeviation { player, delta } => {
                if player >= n {
                    return Err(invalid("player", "index out of range"));
                }
                if !delta.is_finite() {
                    return Err(invalid("delta", "must be finite"));
                }
                Ok(())
            }
        }
    }

    /// Whether player `i` with cost `c` reports truthfully.
    pub fn is_truthful(&self, i: usize, c: f64) -> bool {
        match *self {
            StrategyProfile::Truthful => true,
            StrategyProfile::Threshold { tau, .. } => c <= tau,
            StrategyProfile::SingleDeviation { player, .. } => i != player,
        }
    }
}

/// Reports `ŷ` produced by `profile` on `world`. `report_bound` is `B + M`.
pub fn apply_strategy<R: Rng + ?Sized>(
    profile: &StrategyProfile,
    world: &World,
    report_bound: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    profile.validate(world.n())?;
    let mut reports = world.responses.clone();
    match *profile {
        StrategyProfile::Truthful => {}
        StrategyProfile::Threshold { tau, misreport } => {
            for i in 0..world.n() {
                if world.costs[i] <= tau {
                    continue;
                }
                reports[i] = match misreport {
                    MisreportModel::Zero => 0.0,
                    MisreportModel::UniformRandom => report_bound * (2.0 * rng.random::<f64>() - 1.0),
                    MisreportModel::ClampExtreme => {
                        let signal = dot(&world.theta, world.features.row(i));
                        if signal >= 0.0 {
                            -report_bound
                        } else {
                            report_bound
                        }
                    }
                };
            }
        }
        StrategyProfile::SingleDeviation { player, delta } => reports[player] += delta,
    }
    Ok(reports)
}

/// `utility = payment − privacy_cost`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityRecord {
    pub payment: f64,
    pub privacy_cost: f64,
    pub utility: f64,
}

impl UtilityRecord {
    pub fn new(payment: f64, privacy_cost: f64) -> Self {
        Self {
            payment,
            privacy_cost,
            utility: payment - privacy_cost,
        }
    }
}

/// Realized utilities of every player in one run at privacy level `epsilon`.
pub fn utilities(outcome: &MechanismOutcome, world: &World, epsilon: f64) -> Result<Vec<UtilityRecord>> {
    check_dim(world.n(), outcome.ledger.payments.len())?;
    outcome
        .ledger
        .payments
        .iter()
        .zip(&world.costs)
        .map(|(p, c)| Ok(UtilityRecord::new(*p, privacy_cost(*c, epsilon)?)))
        .collect()
}

/// Approximation slack of truthful reporting as an equilibrium:
/// `b·(αn(4B+2M)/γ + γB/(γ+(1−ξ)n/(d+2)))² + τε²`.
pub fn eta_bound(config: &MechanismConfig) -> f64 {
    let s = estimate_error_bound(config);
    config.b * s * s + config.tau * config.epsilon * config.epsilon
}

/// One player's private data, held fixed while everything else is redrawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerData {
    pub x: Vec<f64>,
    pub y: f64,
    pub cost: f64,
}

impl PlayerData {
    pub fn from_world(world: &World, i: usize) -> Self {
        Self {
            x: world.features.row(i).to_vec(),
            y: world.responses[i],
            cost: world.costs[i],
        }
    }
}

/// Draws the rest of the world from a player's point of view.
pub trait WorldSampler {
    /// A world of `n` players in which row `player` is exactly `anchor` and
    /// everything else is drawn from its conditional law.
    fn resample_around<R: Rng + ?Sized>(
        &self,
        anchor: &PlayerData,
        player: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<World>;
}

/// θ from the posterior given the anchor's data, the other players fresh
/// from the model.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorWorldSampler<'a> {
    pub oracle: &'a PosteriorOracle,
    pub cost: CostSpec,
}

impl WorldSampler for PosteriorWorldSampler<'_> {
    fn resample_around<R: Rng + ?Sized>(
        &self,
        anchor: &PlayerData,
        player: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<World> {
        if player >= n {
            return Err(invalid("player", "index out of range"));
        }
        let theta = self.oracle.sample_posterior(&anchor.x, anchor.y, rng)?;
        let mut w = sample_players(&theta, &self.oracle.noise(), &self.cost, n, rng)?;
        w.features.row_mut(player).copy_from_slice(&anchor.x);
        w.responses[player] = anchor.y;
        w.noise[player] = anchor.y - dot(&theta, &anchor.x);
        w.costs[player] = anchor.cost;
        Ok(w)
    }
}

/// Gain of one deviation `ŷ_i = y_i + δ` over truthful reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationEntry {
    pub delta: f64,
    pub gain: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub best_delta: f64,
    pub gain: f64,
    pub std_err: f64,
    pub trials: usize,
    pub entries: Vec<DeviationEntry>,
}

/// A fixed player and deviation grid.
///
/// The player's report moves only the player's own posterior prediction;
/// the estimate the player is scored against comes from the other group and
/// does not see the report. Every arm of the grid is therefore scored against
/// the same draw of that estimate, and the privacy cost cancels between arms.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationProbe {
    pub anchor: PlayerData,
    pub player: usize,
    pub grid: Vec<f64>,
    /// `E[θ | x, y+δ]ᵀx` for each grid entry.
    predictions: Vec<f64>,
    truthful_prediction: f64,
}

impl DeviationProbe {
    pub fn new(oracle: &PosteriorOracle, anchor: PlayerData, player: usize, grid: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(invalid("delta_grid", "must not be empty"));
        }
        let predict = |y: f64| -> Result<f64> { Ok(dot(&oracle.posterior_mean_or_prior(&anchor.x, y)?.0, &anchor.x)) };
        let truthful_prediction = predict(anchor.y)?;
        let predictions = grid.iter().map(|d| predict(anchor.y + d)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            anchor,
            player,
            grid,
            predictions,
            truthful_prediction,
        })
    }

    /// One paired trial: redraw the world, let the others play the threshold
    /// strategy, run the releases, and return the reference `θ̂^P_{1−j}ᵀx`.
    pub fn trial<S: WorldSampler, R: Rng + ?Sized>(
        &self,
        config: &MechanismConfig,
        sampler: &S,
        misreport: MisreportModel,
        rng: &mut R,
    ) -> Result<f64> {
        let world = sampler.resample_around(&self.anchor, self.player, config.n, rng)?;
        let profile = StrategyProfile::Threshold {
            tau: config.tau,
            misreport,
        };
        let mut reports = apply_strategy(&profile, &world, config.bound_b + config.half_width_m, rng)?;
        reports[self.player] = self.anchor.y;
        let release = private_release(&world.features, &reports, config, rng)?;
        let other = 1 - release.assignment[self.player] as usize;
        Ok(dot(&release.groups[other].theta_private, &self.anchor.x))
    }

    /// Per-arm mean payment gains over the paired references.
    pub fn summarize(&self, params: BrierParams, references: &[f64]) -> DeviationReport {
        let q0 = self.truthful_prediction;
        let entries: Vec<DeviationEntry> = self
            .grid
            .iter()
            .zip(&self.predictions)
            .map(|(delta, q)| {
                let diffs: Vec<f64> = references
                    .iter()
                    .map(|p| {
                        if *q == q0 {
                            0.0
                        } else {
                            brier(params, *p, *q) - brier(params, *p, q0)
                        }
                    })
                    .collect();
                let MeanEstimate { mean, std_err, .. } = mean_stderr(&diffs);
                DeviationEntry {
                    delta: *delta,
                    gain: mean,
                    std_err,
                }
            })
            .collect();
        let best = entries
            .iter()
            .copied()
            .reduce(|a, b| if b.gain > a.gain { b } else { a })
            .expect("grid is non-empty");
        DeviationReport {
            best_delta: best.delta,
            gain: best.gain,
            std_err: best.std_err,
            trials: references.len(),
            entries,
        }
    }
}

/// Stream tag for deviation trials.
pub const DEVIATION_TAG: u64 = 0xDE71;

/// Estimates the best payment gain over `delta_grid` for `player` of
/// `world`, with trial `t` drawing from `stream(seed, DEVIATION_TAG, t)`.
#[allow(clippy::too_many_arguments)]
pub fn deviation_gain<S: WorldSampler>(
    config: &MechanismConfig,
    sampler: &S,
    oracle: &PosteriorOracle,
    world: &World,
    player: usize,
    misreport: MisreportModel,
    delta_grid: &[f64],
    trials: usize,
    seed: u64,
) -> Result<DeviationReport> {
    if trials == 0 {
        return Err(invalid("trials", "must be at least 1"));
    }
    if player >= world.n() {
        return Err(invalid("player", "index out of range"));
    }
    config.validate_private()?;
    let probe = DeviationProbe::new(
        oracle,
        PlayerData::from_world(world, player),
        player,
        delta_grid.to_vec(),
    )?;
    let refs = (0..trials as u64)
        .map(|t| probe.trial(config, sampler, misreport, &mut stream(seed, DEVIATION_TAG, t)))
        .collect::<Result<Vec<_>>>()?;
    Ok(probe.summarize(config.brier(), &refs))
}

/// The default geometric grid: `0` and `±2^k/100` for `k = 0..8`.
pub fn geometric_delta_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    for k in 0..8 {
        let step = libm::ldexp(0.01, k);
        g.push(step);
        g.push(-step);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_gen::{sample_world, NoiseSpec, PriorSpec};
    use crate::random::seeded;

    fn world(n: usize, seed: u64) -> (World, PosteriorOracle) {
        let prior = PriorSpec::uniform_discrete(vec![vec![0.7, 0.0], vec![-0.7, 0.0], vec![0.0, 0.7]], 1.0).unwrap();
        let noise = NoiseSpec::Uniform { half_width: 1.0 };
        let w = sample_world(&prior, &noise, &CostSpec::pareto(2.0), n, 2, &mut seeded(seed)).unwrap();
        (w, PosteriorOracle::exact(&prior, noise).unwrap())
    }

    #[test]
    fn privacy_cost_examples() {
        assert_eq!(privacy_cost(3.0, 0.5).unwrap(), 0.75);
        assert_eq!(privacy_cost(7.0, 0.0).unwrap(), 0.0);
        assert!((privacy_cost(2.0, 0.1).unwrap() - 0.02).abs() < 1e-17);
        assert!(privacy_cost(-1.0, 0.1).is_err());
    }

    #[test]
    fn tau_examples() {
        assert!((tau_threshold(0.01, 1.0, 2.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((tau_threshold(0.04, 0.25, 2.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(tau_threshold(0.0, 0.5, 2.0).is_err());
        assert!(tau_threshold(0.5, 0.5, 1.0).is_err());
    }

    #[test]
    fn strategy_examples() {
        let (w, _) = world(40, 1);
        let mut rng = seeded(2);
        assert_eq!(
            apply_strategy(&StrategyProfile::Truthful, &w, 2.0, &mut rng).unwrap(),
            w.responses
        );
        let open = StrategyProfile::Threshold {
            tau: f64::INFINITY,
            misreport: MisreportModel::ClampExtreme,
        };
        assert_eq!(apply_strategy(&open, &w, 2.0, &mut rng).unwrap(), w.responses);
        let closed = StrategyProfile::Threshold {
            tau: 0.0,
            misreport: MisreportModel::Zero,
        };
        assert!(apply_strategy(&closed, &w, 2.0, &mut rng)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
        let dev = StrategyProfile::SingleDeviation { player: 3, delta: 0.5 };
        let r = apply_strategy(&dev, &w, 2.0, &mut rng).unwrap();
        assert_eq!(r[3], w.responses[3] + 0.5);
        assert!(apply_strategy(
            &StrategyProfile::SingleDeviation { player: 40, delta: 0.0 },
            &w,
            2.0,
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn misreporters_are_exactly_the_expensive_players() {
        let (w, _) = world(500, 3);
        let tau = 1.5;
        for model in [
            MisreportModel::Zero,
            MisreportModel::UniformRandom,
            MisreportModel::ClampExtreme,
        ] {
            let r = apply_strategy(
                &StrategyProfile::Threshold { tau, misreport: model },
                &w,
                2.0,
                &mut seeded(4),
            )
            .unwrap();
            for i in 0..w.n() {
                if w.costs[i] <= tau {
                    assert_eq!(r[i], w.responses[i]);
                } else {
                    assert!(r[i].abs() <= 2.0);
                }
            }
        }
    }

    #[test]
    fn utility_identity() {
        let u = UtilityRecord::new(0.3, 0.125);
        assert_eq!(u.utility, 0.3 - 0.125);
    }

    #[test]
    fn tau_monotone() {
        let base = tau_threshold(0.2, 0.3, 2.0).unwrap();
        assert!(tau_threshold(0.3, 0.3, 2.0).unwrap() <= base);
        assert!(tau_threshold(0.2, 0.4, 2.0).unwrap() <= base);
        assert!(tau_threshold(0.2, 0.3, 3.0).unwrap() <= base);
    }

    fn small_config(n: usize) -> MechanismConfig {
        MechanismConfig {
            n,
            d: 2,
            gamma: 20.0,
            epsilon: 0.5,
            a: 0.0,
            b: 0.01,
            bound_b: 1.0,
            half_width_m: 1.0,
            sigma2: 1.0 / 3.0,
            alpha: 0.1,
            beta: 0.1,
            xi: 0.5,
            tau: 3.0,
        }
    }

    #[test]
    fn zero_slope_means_zero_gain() {
        let (w, oracle) = world(60, 5);
        let mut c = small_config(60);
        c.b = 0.0;
        let sampler = PosteriorWorldSampler {
            oracle: &oracle,
            cost: CostSpec::pareto(2.0),
        };
        let r = deviation_gain(
            &c,
            &sampler,
            &oracle,
            &w,
            0,
            MisreportModel::ClampExtreme,
            &geometric_delta_grid(),
            20,
            1,
        )
        .unwrap();
        assert!(r.entries.iter().all(|e| e.gain == 0.0));
    }

    #[test]
    fn zero_delta_is_zero_by_construction() {
        let (w, oracle) = world(60, 6);
        let c = small_config(60);
        let sampler = PosteriorWorldSampler {
            oracle: &oracle,
            cost: CostSpec::pareto(2.0),
        };
        let grid = geometric_delta_grid();
        assert_eq!(grid.len(), 17);
        let r = deviation_gain(&c, &sampler, &oracle, &w, 2, MisreportModel::Zero, &grid, 30, 2).unwrap();
        let zero = r.entries.iter().find(|e| e.delta == 0.0).unwrap();
        assert_eq!(zero.gain, 0.0);
        assert_eq!(zero.std_err, 0.0);
        assert!(r.gain >= 0.0);
    }

    #[test]
    fn resampled_world_keeps_anchor() {
        let (w, oracle) = world(30, 7);
        let sampler = PosteriorWorldSampler {
            oracle: &oracle,
            cost: CostSpec::pareto(2.0),
        };
        let anchor = PlayerData::from_world(&w, 4);
        let r = sampler.resample_around(&anchor, 4, 30, &mut seeded(8)).unwrap();
        assert_eq!(r.features.row(4), w.features.row(4));
        assert_eq!(r.responses[4], w.responses[4]);
    }

    #[test]
    fn eta_degenerate() {
        let mut c = small_config(100);
        c.b = 0.0;
        c.tau = 0.0;
        assert_eq!(eta_bound(&c), 0.0);
    }
}
