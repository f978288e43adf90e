//! The rescaled Brier rule and the posterior-mean oracles that turn a
//! player's `(x_i, ŷ_i)` into a prediction of the estimator's output.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_gen::{sample_theta, NoiseSpec, PriorShape, PriorSpec};
use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::{axpy, dot};
use crate::stats::column_means;

/// Offset `a` and slope `b` of `B_{a,b}(p, q) = a − b(p − 2pq + q²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrierParams {
    pub a: f64,
    pub b: f64,
}

impl BrierParams {
    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(invalid("a, b", "a must be finite and b non-negative"));
        }
        Ok(())
    }
}

/// `a − b(p − 2pq + q²)`. For fixed `p` the unique maximizer over `q` is
/// `q = p` whenever `b > 0`.
#[inline]
pub fn brier(params: BrierParams, p: f64, q: f64) -> f64 {
    params.a - params.b * (p - 2.0 * p * q + q * q)
}

/// Scores the prediction `posteriorᵀx` against the estimator's `estimatorᵀx`.
#[inline]
pub fn payment(params: BrierParams, estimator: &[f64], x: &[f64], posterior: &[f64]) -> f64 {
    brier(params, dot(estimator, x), dot(posterior, x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    ExactDiscrete,
    MonteCarlo,
}

/// Smallest Monte Carlo sample the oracle accepts.
pub const MIN_MC_SAMPLES: usize = 1000;

/// Posterior mean `E[θ | x, ŷ]` under a known prior and noise law.
///
/// The exact variant applies Bayes' rule over a finite support. The Monte
/// Carlo variant reweights prior draws by the noise likelihood smoothed with a
/// gaussian kernel of bandwidth `M·N^{−1/5}`, which keeps the weights usable
/// when the noise density jumps at `±M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorOracle {
    kind: OracleKind,
    prior: PriorSpec,
    noise: NoiseSpec,
    mc_samples: usize,
    atoms: Vec<Vec<f64>>,
    atom_weights: Vec<f64>,
    bandwidth: f64,
    prior_mean: Vec<f64>,
}

/// A posterior mean with its per-coordinate Monte Carlo standard error
/// (zero for the exact oracle).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
}

impl PosteriorOracle {
    pub fn exact(prior: &PriorSpec, noise: NoiseSpec) -> Result<Self> {
        prior.validate()?;
        noise.validate()?;
        let PriorShape::Discrete { support, weights } = &prior.shape else {
            return Err(invalid("oracle", "the exact oracle needs a discrete prior"));
        };
        Ok(Self {
            kind: OracleKind::ExactDiscrete,
            prior: prior.clone(),
            noise,
            mc_samples: 0,
            atoms: support.clone(),
            atom_weights: weights.clone(),
            bandwidth: 0.0,
            prior_mean: prior.mean().expect("discrete priors have a mean"),
        })
    }

    pub fn monte_carlo<R: Rng + ?Sized>(
        prior: &PriorSpec,
        noise: NoiseSpec,
        mc_samples: usize,
        rng: &mut R,
    ) -> Result<Self> {
        prior.validate()?;
        noise.validate()?;
        if mc_samples < MIN_MC_SAMPLES {
            return Err(invalid("mc_samples", "need at least 1000 prior draws"));
        }
        let atoms = (0..mc_samples)
            .map(|_| sample_theta(prior, rng))
            .collect::<Result<Vec<_>>>()?;
        let prior_mean = column_means(&atoms);
        Ok(Self {
            kind: OracleKind::MonteCarlo,
            prior: prior.clone(),
            noise,
            mc_samples,
            atom_weights: vec![1.0 / mc_samples as f64; mc_samples],
            atoms,
            bandwidth: noise.half_width() * libm::pow(mc_samples as f64, -0.2),
            prior_mean,
        })
    }

    pub fn kind(&self) -> OracleKind {
        self.kind
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn noise(&self) -> NoiseSpec {
        self.noise
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    pub fn dim(&self) -> usize {
        self.prior_mean.len()
    }

    /// Prior mean (sample mean of the draws for the Monte Carlo oracle).
    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    fn likelihood(&self, r: f64) -> f64 {
        match self.kind {
            OracleKind::ExactDiscrete => self.noise.likelihood(r),
            OracleKind::MonteCarlo => self.noise.smoothed_likelihood(r, self.bandwidth),
        }
    }

    fn posterior_weights(&self, x: &[f64], y: f64) -> Result<(Vec<f64>, f64)> {
        check_dim(self.dim(), x.len())?;
        if dot(x, x) > 1.0 + 1e-12 {
            return Err(invalid("x", "features must lie in the unit ball"));
        }
        let w: Vec<f64> = self
            .atoms
            .iter()
            .zip(&self.atom_weights)
            .map(|(t, pw)| pw * self.likelihood(y - dot(t, x)))
            .collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroLikelihood);
        }
        Ok((w, total))
    }

    /// `E[θ | x, ŷ]`; [`Error::ZeroLikelihood`] when no prior atom explains
    /// the report.
    pub fn posterior_mean(&self, x: &[f64], y: f64) -> Result<Vec<f64>> {
        let (w, total) = self.posterior_weights(x, y)?;
        let mut m = vec![0.0; self.dim()];
        for (t, wk) in self.atoms.iter().zip(&w) {
            axpy(wk / total, t, &mut m);
        }
        Ok(m)
    }

    /// Posterior mean with the self-normalized importance-sampling standard
    /// error.
    pub fn posterior_summary(&self, x: &[f64], y: f64) -> Result<PosteriorSummary> {
        let mean = self.posterior_mean(x, y)?;
        let mut std_err = vec![0.0; self.dim()];
        if self.kind == OracleKind::MonteCarlo {
            let (w, total) = self.posterior_weights(x, y)?;
            for (t, wk) in self.atoms.iter().zip(&w) {
                let wn = wk / total;
                for j in 0..std_err.len() {
                    let dev = t[j] - mean[j];
                    std_err[j] += wn * wn * dev * dev;
                }
            }
            std_err.iter_mut().for_each(|v| *v = libm::sqrt(*v));
        }
        Ok(PosteriorSummary { mean, std_err })
    }

    /// Posterior mean, or the prior mean for a report no atom explains. The
    /// flag is `true` when the fallback was taken.
    pub fn posterior_mean_or_prior(&self, x: &[f64], y: f64) -> Result<(Vec<f64>, bool)> {
        match self.posterior_mean(x, y) {
            Ok(m) => Ok((m, false)),
            Err(Error::ZeroLikelihood) => Ok((self.prior_mean.clone(), true)),
            Err(e) => Err(e),
        }
    }

    /// Draws `θ` from the (smoothed) posterior given `(x, y)`.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, x: &[f64], y: f64, rng: &mut R) -> Result<Vec<f64>> {
        let (w, total) = self.posterior_weights(x, y)?;
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (t, wk) in self.atoms.iter().zip(&w) {
            acc += wk;
            if u < acc {
                return Ok(t.clone());
            }
        }
        let last = w.iter().rposition(|v| *v > 0.0).expect("positive total weight");
        Ok(self.atoms[last].clone())
    }
}
