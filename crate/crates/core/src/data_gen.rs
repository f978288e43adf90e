//! Synthetic worlds: a parameter drawn from a bounded prior, features uniform
//! on the unit ball, bounded zero-mean response noise, and Pareto-tailed
//! privacy-cost coefficients drawn independently of the data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm2, Matrix};
use crate::random::{open_unit, standard_normal, unit_direction};
use crate::stats::{normal_cdf, normal_pdf};

const MAX_REJECTIONS: usize = 1_000_000;

/// Shape of the prior over the true parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorShape {
    /// Finite support with probability weights.
    Discrete { support: Vec<Vec<f64>>, weights: Vec<f64> },
    /// Isotropic gaussian around `mean`, conditioned on `‖θ‖₂ ≤ radius`.
    TruncatedGaussian { mean: Vec<f64>, stddev: f64, radius: f64 },
}

/// Prior over θ together with the bound `B` such that `‖θ‖₂² ≤ B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub shape: PriorShape,
    pub bound: f64,
}

impl PriorSpec {
    /// Uniform prior over a finite support.
    pub fn uniform_discrete(support: Vec<Vec<f64>>, bound: f64) -> Result<Self> {
        let k = support.len();
        let weights = vec![1.0 / k.max(1) as f64; k];
        let p = Self {
            shape: PriorShape::Discrete { support, weights },
            bound,
        };
        p.validate()?;
        Ok(p)
    }

    /// Point mass at `theta`; `B` is taken as `‖θ‖²` (or 1 at the origin).
    pub fn point_mass(theta: Vec<f64>) -> Self {
        let b = dot(&theta, &theta);
        Self {
            shape: PriorShape::Discrete {
                support: vec![theta],
                weights: vec![1.0],
            },
            bound: if b > 0.0 { b } else { 1.0 },
        }
    }

    pub fn truncated_gaussian(mean: Vec<f64>, stddev: f64, radius: f64, bound: f64) -> Result<Self> {
        let p = Self {
            shape: PriorShape::TruncatedGaussian { mean, stddev, radius },
            bound,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            PriorShape::Discrete { support, .. } => support.first().map_or(0, Vec::len),
            PriorShape::TruncatedGaussian { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(invalid("prior.bound", "B must be positive and finite"));
        }
        let slack = self.bound * (1.0 + 1e-12);
        match &self.shape {
            PriorShape::Discrete { support, weights } => {
                if support.is_empty() {
                    return Err(invalid("prior.support", "empty support"));
                }
                if support.len() != weights.len() {
                    return Err(invalid("prior.weights", "one weight per support point"));
                }
                let d = support[0].len();
                if d == 0 {
                    return Err(invalid("prior.support", "zero-dimensional support point"));
                }
                for p in support {
                    if p.len() != d {
                        return Err(invalid("prior.support", "support points differ in dimension"));
                    }
                    if p.iter().any(|v| !v.is_finite()) || dot(p, p) > slack {
                        return Err(invalid(
                            "prior.support",
                            format!("support point violates ‖θ‖² ≤ {}", self.bound),
                        ));
                    }
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(invalid("prior.weights", "weights must be non-negative"));
                }
                let total: f64 = weights.iter().sum();
                if libm::fabs(total - 1.0) > 1e-9 {
                    return Err(invalid("prior.weights", format!("weights sum to {total}, not 1")));
                }
            }
            PriorShape::TruncatedGaussian { mean, stddev, radius } => {
                if mean.is_empty() {
                    return Err(invalid("prior.mean", "zero-dimensional mean"));
                }
                if !(*stddev > 0.0) || !stddev.is_finite() {
                    return Err(invalid("prior.stddev", "must be positive"));
                }
                if !(*radius > 0.0) {
                    return Err(invalid("prior.radius", "must be positive"));
                }
                if radius * radius > slack {
                    return Err(invalid("prior.radius", "radius² exceeds B"));
                }
            }
        }
        Ok(())
    }

    /// Prior mean, when available in closed form (discrete priors and
    /// origin-centred gaussians).
    pub fn mean(&self) -> Option<Vec<f64>> {
        match &self.shape {
            PriorShape::Discrete { support, weights } => {
                let mut m = vec![0.0; self.dim()];
                for (p, w) in support.iter().zip(weights) {
                    crate::linalg::axpy(*w, p, &mut m);
                }
                Some(m)
            }
            PriorShape::TruncatedGaussian { mean, .. } => mean.iter().all(|v| *v == 0.0).then(|| vec![0.0; mean.len()]),
        }
    }
}

fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    // rounding can leave u marginally above the last partial sum
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Draws θ from the prior. Every draw satisfies `‖θ‖₂² ≤ B`.
pub fn sample_theta<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> Result<Vec<f64>> {
    prior.validate()?;
    match &prior.shape {
        PriorShape::Discrete { support, weights } => Ok(support[sample_categorical(weights, rng)].clone()),
        PriorShape::TruncatedGaussian { mean, stddev, radius } => {
            let mut theta = vec![0.0; mean.len()];
            for _ in 0..MAX_REJECTIONS {
                for (t, m) in theta.iter_mut().zip(mean) {
                    *t = m + stddev * standard_normal(rng);
                }
                if norm2(&theta) <= *radius {
                    return Ok(theta);
                }
            }
            Err(invalid("prior", "truncation region has negligible gaussian mass"))
        }
    }
}

/// Law of the response noise `z`; always symmetric on `[-M, M]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Uniform on `[-M, M]`.
    Uniform { half_width: f64 },
    /// `N(0, (M/2)²)` conditioned on `[-M, M]`.
    TruncatedGaussian { half_width: f64 },
    /// `±M` with probability one half each.
    SymmetricDiscrete { half_width: f64 },
}

/// Standard deviations at which the truncated-gaussian noise is cut.
const TRUNCATION_SIGMAS: f64 = 2.0;

impl NoiseSpec {
    pub fn half_width(&self) -> f64 {
        match *self {
            NoiseSpec::Uniform { half_width }
            | NoiseSpec::TruncatedGaussian { half_width }
            | NoiseSpec::SymmetricDiscrete { half_width } => half_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.half_width();
        if !(m > 0.0) || !m.is_finite() {
            return Err(invalid("noise.half_width", "M must be positive and finite"));
        }
        Ok(())
    }

    fn gaussian_parts(m: f64) -> (f64, f64) {
        let s = m / TRUNCATION_SIGMAS;
        let z = normal_cdf(TRUNCATION_SIGMAS) - normal_cdf(-TRUNCATION_SIGMAS);
        (s, z)
    }

    /// Variance σ² of the noise.
    pub fn variance(&self) -> f64 {
        match *self {
            NoiseSpec::Uniform { half_width } => half_width * half_width / 3.0,
            NoiseSpec::TruncatedGaussian { half_width } => {
                let (s, z) = Self::gaussian_parts(half_width);
                let a = TRUNCATION_SIGMAS;
                s * s * (1.0 - 2.0 * a * normal_pdf(a) / z)
            }
            NoiseSpec::SymmetricDiscrete { half_width } => half_width * half_width,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseSpec::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            NoiseSpec::TruncatedGaussian { half_width } => {
                let s = half_width / TRUNCATION_SIGMAS;
                loop {
                    let z = s * standard_normal(rng);
                    if libm::fabs(z) <= half_width {
                        return z;
                    }
                }
            }
            NoiseSpec::SymmetricDiscrete { half_width } => {
                if rng.random::<bool>() {
                    half_width
                } else {
                    -half_width
                }
            }
        }
    }

    /// Likelihood of residual `r`: the density for continuous laws, the
    /// probability mass for the discrete law (atoms matched to a relative
    /// tolerance of 1e-9).
    pub fn likelihood(&self, r: f64) -> f64 {
        match *self {
            NoiseSpec::Uniform { half_width } => {
                if libm::fabs(r) <= half_width {
                    0.5 / half_width
                } else {
                    0.0
                }
            }
            NoiseSpec::TruncatedGaussian { half_width } => {
                if libm::fabs(r) > half_width {
                    return 0.0;
                }
                let (s, z) = Self::gaussian_parts(half_width);
                normal_pdf(r / s) / (s * z)
            }
            NoiseSpec::SymmetricDiscrete { half_width } => {
                let tol = 1e-9 * half_width.max(1.0);
                if libm::fabs(libm::fabs(r) - half_width) <= tol {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    /// Noise density convolved with a `N(0, h²)` kernel, in closed form.
    pub fn smoothed_likelihood(&self, r: f64, h: f64) -> f64 {
        match *self {
            NoiseSpec::Uniform { half_width: m } => (normal_cdf((m - r) / h) - normal_cdf((-m - r) / h)) / (2.0 * m),
            NoiseSpec::TruncatedGaussian { half_width: m } => {
                let (s, z) = Self::gaussian_parts(m);
                let v = s * s + h * h;
                let sd = libm::sqrt(v);
                let centre = r * s * s / v;
                let spread = s * h / sd;
                let mass = normal_cdf((m - centre) / spread) - normal_cdf((-m - centre) / spread);
                normal_pdf(r / sd) / sd * mass / z
            }
            NoiseSpec::SymmetricDiscrete { half_width: m } => {
                0.5 * (normal_pdf((r - m) / h) + normal_pdf((r + m) / h)) / h
            }
        }
    }
}

/// Pareto law of the privacy-cost coefficients:
/// `Pr[c ≤ τ] = 1 − (scale/τ)^p` for `τ ≥ scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    pub tail_exponent: f64,
    #[serde(default = "default_cost_scale")]
    pub scale: f64,
}

fn default_cost_scale() -> f64 {
    1.0
}

impl CostSpec {
    pub fn pareto(tail_exponent: f64) -> Self {
        Self {
            tail_exponent,
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tail_exponent > 1.0) || !self.tail_exponent.is_finite() {
            return Err(invalid("cost.tail_exponent", "p must exceed 1"));
        }
        // scale ≤ 1 keeps the tail at or below τ^{-p}
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(invalid("cost.scale", "scale must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn cdf(&self, tau: f64) -> f64 {
        if tau < self.scale {
            0.0
        } else {
            1.0 - libm::pow(self.scale / tau, self.tail_exponent)
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.scale * libm::pow(open_unit(rng), -1.0 / self.tail_exponent)
    }
}

/// One sampled instance of the regression game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub theta: Vec<f64>,
    pub features: Matrix,
    pub responses: Vec<f64>,
    pub noise: Vec<f64>,
    pub costs: Vec<f64>,
}

impl World {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn d(&self) -> usize {
        self.features.cols()
    }
}

/// `n` rows drawn i.i.d. uniformly from the unit ball in `R^d`: a uniform
/// direction scaled by `u^{1/d}`.
pub fn sample_unit_ball<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Matrix> {
    if n == 0 || d == 0 {
        return Err(invalid("n, d", "both must be at least 1"));
    }
    let mut x = Matrix::zeros(n, d);
    let inv_d = 1.0 / d as f64;
    for i in 0..n {
        let row = x.row_mut(i);
        unit_direction(rng, row);
        let r = libm::pow(rng.random::<f64>(), inv_d);
        row.iter_mut().for_each(|v| *v *= r);
    }
    Ok(x)
}

/// Draws `n` players for a fixed θ: features, noise, responses, costs.
pub fn sample_players<R: Rng + ?Sized>(
    theta: &[f64],
    noise: &NoiseSpec,
    cost: &CostSpec,
    n: usize,
    rng: &mut R,
) -> Result<World> {
    noise.validate()?;
    cost.validate()?;
    let features = sample_unit_ball(n, theta.len(), rng)?;
    let z: Vec<f64> = (0..n).map(|_| noise.sample(rng)).collect();
    let responses = features.iter_rows().zip(&z).map(|(x, zi)| dot(theta, x) + zi).collect();
    let costs = (0..n).map(|_| cost.sample(rng)).collect();
    Ok(World {
        theta: theta.to_vec(),
        features,
        responses,
        noise: z,
        costs,
    })
}

/// Full world: θ from the prior, then the players.
pub fn sample_world<R: Rng + ?Sized>(
    prior: &PriorSpec,
    noise: &NoiseSpec,
    cost: &CostSpec,
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<World> {
    if prior.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: prior.dim(),
        });
    }
    let theta = sample_theta(prior, rng)?;
    sample_players(&theta, noise, cost, n, rng)
}
