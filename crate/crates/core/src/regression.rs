//! Closed-form least squares and ridge regression, the regularized loss, and
//! analytic bias/covariance plus spectral diagnostics of the design.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::linalg::{add_outer, axpy, dot, Cholesky, Matrix};

/// Condition estimate above which the unregularized system counts as
/// singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

/// A fitted (ridge) regression vector. `gamma = 0` is ordinary least squares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeEstimate {
    pub theta_hat: Vec<f64>,
    pub gamma: f64,
}

/// Sufficient statistics `XᵀX` and `Xᵀy`. Cheap to edit one player at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalEquations {
    gram: Matrix,
    xty: Vec<f64>,
    rows: usize,
}

impl NormalEquations {
    pub fn new(x: &Matrix, y: &[f64]) -> Result<Self> {
        check_dim(x.rows(), y.len())?;
        Ok(Self {
            gram: x.gram(),
            xty: x.t_mul_vec(y),
            rows: x.rows(),
        })
    }

    /// Statistics of the rows listed in `idx` only.
    pub fn subset(x: &Matrix, y: &[f64], idx: &[usize]) -> Result<Self> {
        check_dim(x.rows(), y.len())?;
        let d = x.cols();
        let mut gram = Matrix::zeros(d, d);
        let mut xty = vec![0.0; d];
        for &i in idx {
            let row = x.row(i);
            add_outer(&mut gram, row, 1.0);
            axpy(y[i], row, &mut xty);
        }
        Ok(Self {
            gram,
            xty,
            rows: idx.len(),
        })
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn xty(&self) -> &[f64] {
        &self.xty
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Swaps one observation `(x_old, y_old)` for `(x_new, y_new)`.
    pub fn replace(&mut self, x_old: &[f64], y_old: f64, x_new: &[f64], y_new: f64) {
        add_outer(&mut self.gram, x_old, -1.0);
        add_outer(&mut self.gram, x_new, 1.0);
        axpy(-y_old, x_old, &mut self.xty);
        axpy(y_new, x_new, &mut self.xty);
    }

    /// Solves `(γI + XᵀX) θ = Xᵀy`.
    pub fn solve(&self, gamma: f64) -> Result<RidgeEstimate> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(invalid("gamma", "must be finite and non-negative"));
        }
        let mut a = self.gram.clone();
        a.add_diagonal(gamma);
        if gamma == 0.0 {
            let ev = symmetric_eigenvalues(&a);
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
            if !(condition <= SINGULAR_CONDITION) {
                return Err(Error::Singular { condition });
            }
        }
        let ch = Cholesky::factor(&a).ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        Ok(RidgeEstimate {
            theta_hat: ch.solve(&self.xty),
            gamma,
        })
    }
}

/// `θ̂ = (γI + XᵀX)⁻¹ Xᵀy`. With `gamma = 0` the design must be well
/// conditioned, otherwise [`Error::Singular`] asks the caller to regularize.
pub fn ridge(x: &Matrix, y: &[f64], gamma: f64) -> Result<RidgeEstimate> {
    NormalEquations::new(x, y)?.solve(gamma)
}

/// `Σ (y_i − θᵀx_i)² + γ‖θ‖²`.
pub fn loss(theta: &[f64], x: &Matrix, y: &[f64], gamma: f64) -> f64 {
    let fit: f64 = x
        .iter_rows()
        .zip(y)
        .map(|(row, yi)| {
            let r = yi - dot(theta, row);
            r * r
        })
        .sum();
    fit + gamma * dot(theta, theta)
}

/// Analytic bias and covariance of the ridge estimator at a fixed design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCovReport {
    pub bias: Vec<f64>,
    pub covariance: Matrix,
    pub covariance_trace: f64,
    /// Smallest and largest eigenvalue of `γI + XᵀX`.
    pub conditioning: (f64, f64),
}

/// Bias `−γ(γI+XᵀX)⁻¹θ` and covariance `σ²(γI+XᵀX)⁻¹XᵀX(γI+XᵀX)⁻¹`.
pub fn bias_cov(x: &Matrix, theta: &[f64], sigma2: f64, gamma: f64) -> Result<BiasCovReport> {
    check_dim(x.cols(), theta.len())?;
    let gram = x.gram();
    let mut a = gram.clone();
    a.add_diagonal(gamma);
    let ev = symmetric_eigenvalues(&a);
    let conditioning = (ev[0], ev[ev.len() - 1]);
    if gamma == 0.0 && !(conditioning.0 > 0.0 && conditioning.1 / conditioning.0 <= SINGULAR_CONDITION) {
        return Err(Error::Singular {
            condition: conditioning.1 / conditioning.0,
        });
    }
    let ch = Cholesky::factor(&a).ok_or(Error::Singular {
        condition: f64::INFINITY,
    })?;
    let mut bias = ch.solve(theta);
    bias.iter_mut().for_each(|b| *b *= -gamma);

    let inv = ch.inverse();
    let d = theta.len();
    let mut left = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            left[(i, j)] = (0..d).map(|k| inv[(i, k)] * gram[(k, j)]).sum();
        }
    }
    let mut covariance = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            covariance[(i, j)] = sigma2 * (0..d).map(|k| left[(i, k)] * inv[(k, j)]).sum::<f64>();
        }
    }
    Ok(BiasCovReport {
        bias,
        covariance_trace: covariance.trace(),
        covariance,
        conditioning,
    })
}

/// Smallest eigenvalue of the loss Hessian `2XᵀX + 2γI`; at least `2γ`.
pub fn strong_convexity_margin(x: &Matrix, gamma: f64) -> f64 {
    let mut h = x.gram();
    h.add_diagonal(gamma);
    symmetric_eigenvalues(&h)[0] * 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    /// `‖XᵀX‖₂`, the largest eigenvalue.
    pub gram_norm: f64,
    /// `‖(XᵀX)⁻¹‖₂`; infinite when `XᵀX` is singular.
    pub inverse_norm: f64,
    pub lambda_min: f64,
    pub band: (f64, f64),
    pub in_band: bool,
}

/// Checks whether every eigenvalue of `XᵀX` lies in
/// `[(1−ξ)n/(d+2), (1+ξ)n/(d+2)]`, the concentration band for unit-ball rows.
pub fn spectral_report(x: &Matrix, xi: f64) -> Result<SpectralReport> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(invalid("xi", "must lie in (0, 1)"));
    }
    let ev = symmetric_eigenvalues(&x.gram());
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let centre = x.rows() as f64 / (x.cols() as f64 + 2.0);
    let band = ((1.0 - xi) * centre, (1.0 + xi) * centre);
    Ok(SpectralReport {
        gram_norm: hi,
        inverse_norm: if lo > 0.0 { 1.0 / lo } else { f64::INFINITY },
        lambda_min: lo,
        band,
        in_band: lo >= band.0 && hi <= band.1,
    })
}

/// Least-squares fits with one player held out, by rank-one downdates of a
/// single factorization of `γI + XᵀX`.
#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    factor: Cholesky,
    xty: Vec<f64>,
    gamma: f64,
}

impl LeaveOneOut {
    pub fn new(x: &Matrix, y: &[f64], gamma: f64) -> Result<Self> {
        let ne = NormalEquations::new(x, y)?;
        let mut a = ne.gram.clone();
        a.add_diagonal(gamma);
        let factor = Cholesky::factor(&a).ok_or(Error::Singular {
            condition: f64::INFINITY,
        })?;
        Ok(Self {
            factor,
            xty: ne.xty,
            gamma,
        })
    }

    /// Estimate computed without observation `(x_i, y_i)` of player `player`.
    pub fn without(&self, player: usize, x_i: &[f64], y_i: f64) -> Result<RidgeEstimate> {
        let mut f = self.factor.clone();
        f.rank_one_downdate(x_i)
            .map_err(|_| Error::SingularLeaveOneOut { player })?;
        if self.gamma == 0.0 && f.condition_proxy() > SINGULAR_CONDITION {
            return Err(Error::SingularLeaveOneOut { player });
        }
        let mut rhs = self.xty.clone();
        axpy(-y_i, x_i, &mut rhs);
        Ok(RidgeEstimate {
            theta_hat: f.solve(&rhs),
            gamma: self.gamma,
        })
    }
}
