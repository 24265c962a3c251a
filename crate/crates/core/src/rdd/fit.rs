use serde::{Deserialize, Serialize};

use super::RddError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Inclusive frame range of the side window for cut `c`.
    pub fn window(self, cut: usize, bandwidth: usize) -> (i64, i64) {
        let (c, w) = (cut as i64, bandwidth as i64);
        match self {
            Side::Left => (c - w, c - 1),
            Side::Right => (c, c + w - 1),
        }
    }
}

/// Ordinary least squares line over one side window, parameterized around the
/// cut: `y = intercept_at_cut + slope * (t - cut)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub cut: usize,
    pub intercept_at_cut: f64,
    pub slope: f64,
    /// RSS / (n − 2); zero for two points.
    pub residual_variance: f64,
    pub se_intercept: f64,
    pub n: usize,
    /// Mean of `t - cut` over the window.
    pub x_mean: f64,
    /// Centered sum of squares of `t - cut`.
    pub sxx: f64,
}

impl LinearFit {
    /// Fitted value at (possibly fractional) frame `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.intercept_at_cut + self.slope * (t - self.cut as f64)
    }

    /// Standard error of the fitted value at `t`.
    pub fn se_at(&self, t: f64) -> f64 {
        let d = t - self.cut as f64 - self.x_mean;
        (self.residual_variance * (1.0 / self.n as f64 + d * d / self.sxx)).sqrt()
    }
}

/// Fits the side window of `cut`; `points` are `(frame, value)` pairs sorted by
/// frame.
pub fn local_linear_fit(
    points: &[(usize, f64)],
    cut: usize,
    side: Side,
    bandwidth: usize,
) -> Result<LinearFit, RddError> {
    let (lo, hi) = side.window(cut, bandwidth);
    let start = points.partition_point(|p| (p.0 as i64) < lo);
    let end = points.partition_point(|p| (p.0 as i64) <= hi);
    fit_window(&points[start..end], cut, side)
}

pub(crate) fn fit_window(window: &[(usize, f64)], cut: usize, side: Side) -> Result<LinearFit, RddError> {
    let n = window.len();
    if n < 2 {
        return Err(RddError::InsufficientData { cut, side, points: n });
    }
    let c = cut as f64;
    let nf = n as f64;
    let x_mean = window.iter().map(|p| p.0 as f64 - c).sum::<f64>() / nf;
    let y_mean = window.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(t, y) in window {
        let dx = t as f64 - c - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(RddError::DegenerateDesign { cut, side });
    }
    let slope = sxy / sxx;
    let intercept_at_cut = y_mean - slope * x_mean;
    let rss: f64 = window
        .iter()
        .map(|&(t, y)| {
            let r = y - (intercept_at_cut + slope * (t as f64 - c));
            r * r
        })
        .sum();
    let residual_variance = if n > 2 { rss / (nf - 2.0) } else { 0.0 };
    let se_intercept = (residual_variance * (1.0 / nf + x_mean * x_mean / sxx)).sqrt();
    Ok(LinearFit { cut, intercept_at_cut, slope, residual_variance, se_intercept, n, x_mean, sxx })
}
