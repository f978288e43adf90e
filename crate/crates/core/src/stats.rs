//! Order-stable summaries: compensated sums, mean with standard error,
//! least-squares slopes, and the normal CDF.

use alloc::vec::Vec;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if libm::fabs(self.sum) >= libm::fabs(v) {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut s = CompensatedSum::default();
    it.into_iter().for_each(|v| s.add(v));
    s.value()
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub count: usize,
}

/// Two-pass mean/standard error over a slice; fixed reduction order.
pub fn mean_stderr(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_err: f64::NAN,
            count: 0,
        };
    }
    let mean = compensated_sum(xs.iter().copied()) / n as f64;
    if n == 1 {
        return MeanEstimate {
            mean,
            std_err: 0.0,
            count: 1,
        };
    }
    let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    let var = ss / (n - 1) as f64;
    MeanEstimate {
        mean,
        std_err: libm::sqrt(var / n as f64),
        count: n,
    }
}

/// Ordinary least-squares slope of `y` on `x`. `NaN` for fewer than two
/// points or constant `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = compensated_sum(x[..n].iter().copied()) / n as f64;
    let my = compensated_sum(y[..n].iter().copied()) / n as f64;
    let sxy = compensated_sum((0..n).map(|i| (x[i] - mx) * (y[i] - my)));
    let sxx = compensated_sum((0..n).map(|i| (x[i] - mx) * (x[i] - mx)));
    if sxx == 0.0 {
        return f64::NAN;
    }
    sxy / sxx
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Standard normal density.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(core::f64::consts::TAU)
}

/// Linear-interpolated empirical quantile of an already sorted slice.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Column means of equally long sample vectors.
pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows.first().map_or(0, Vec::len);
    (0..d)
        .map(|j| compensated_sum(rows.iter().map(|r| r[j])) / rows.len() as f64)
        .collect()
}
