//! Sharp regression discontinuity on time series.
//!
//! A cut `c` sits between frames `c - 1` and `c`. Each side is fit by
//! uniform-kernel local linear regression over `bandwidth` frames: the left
//! window is `[c - w, c - 1]` and the right window `[c, c + w - 1]`. The jump
//! τ is the difference of the two fitted lines at the boundary `c - ½`, which
//! keeps the estimator exactly symmetric under time reversal.

mod assoc;
mod fit;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assoc::{AssociationEvidence, associate};
pub use fit::{LinearFit, Side, local_linear_fit};

use crate::ingest::{IngestError, io_err};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RddError {
    #[error("cut {cut}: {side:?} window has {points} point(s), need at least 2")]
    InsufficientData { cut: usize, side: Side, points: usize },
    #[error("cut {cut}: all {side:?} window points share one frame")]
    DegenerateDesign { cut: usize, side: Side },
    #[error("series of length {len} is too short for bandwidth {bandwidth} (need {needed})")]
    SeriesTooShort { len: usize, bandwidth: usize, needed: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Relative size below which τ and its standard error count as rounding noise.
const NUMERICAL_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscontinuityEstimate {
    pub series_name: String,
    pub cutpoint: usize,
    pub tau: f64,
    pub se_tau: f64,
    /// `tau / se_tau`; ±∞ when a nonzero jump has no residual noise.
    #[serde(with = "crate::json::float")]
    pub t_stat: f64,
    pub bandwidth: usize,
}

impl DiscontinuityEstimate {
    /// The boundary position at which both side fits are compared.
    pub fn boundary(&self) -> f64 {
        self.cutpoint as f64 - 0.5
    }
}

fn check_bandwidth(bandwidth: usize) -> Result<(), RddError> {
    if bandwidth < 2 {
        return Err(RddError::InvalidParameter(format!("bandwidth must be at least 2, got {bandwidth}")));
    }
    Ok(())
}

/// Both side fits at a cut.
pub fn side_fits(points: &[(usize, f64)], cut: usize, bandwidth: usize) -> Result<(LinearFit, LinearFit), RddError> {
    check_bandwidth(bandwidth)?;
    Ok((local_linear_fit(points, cut, Side::Left, bandwidth)?, local_linear_fit(points, cut, Side::Right, bandwidth)?))
}

fn estimate(points: &[(usize, f64)], cut: usize, bandwidth: usize) -> Result<(f64, f64, f64), RddError> {
    let (lo, hi) = (cut as i64 - bandwidth as i64, cut as i64 + bandwidth as i64 - 1);
    let start = points.partition_point(|p| (p.0 as i64) < lo);
    let mid = points.partition_point(|p| p.0 < cut);
    let end = points.partition_point(|p| (p.0 as i64) <= hi);
    let left = fit::fit_window(&points[start..mid], cut, Side::Left)?;
    let right = fit::fit_window(&points[mid..end], cut, Side::Right)?;

    let b = cut as f64 - 0.5;
    let mut tau = right.value_at(b) - left.value_at(b);
    let mut se = right.se_at(b).hypot(left.se_at(b));
    let scale = points[start..end].iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    if tau.abs() <= NUMERICAL_FLOOR * scale {
        tau = 0.0;
    }
    if se <= NUMERICAL_FLOOR * scale {
        se = 0.0;
    }
    let t = if se > 0.0 {
        tau / se
    } else if tau == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(tau)
    };
    Ok((tau, se, t))
}

/// The jump at `cut`, right limit minus left limit.
pub fn discontinuity_at(
    name: &str,
    points: &[(usize, f64)],
    cut: usize,
    bandwidth: usize,
) -> Result<DiscontinuityEstimate, RddError> {
    check_bandwidth(bandwidth)?;
    let (tau, se_tau, t_stat) = estimate(points, cut, bandwidth)?;
    Ok(DiscontinuityEstimate { series_name: name.to_string(), cutpoint: cut, tau, se_tau, t_stat, bandwidth })
}

/// Cuts whose two side windows fit inside the series.
pub fn admissible_cuts(points: &[(usize, f64)], bandwidth: usize) -> Result<std::ops::RangeInclusive<usize>, RddError> {
    check_bandwidth(bandwidth)?;
    let needed = 2 * bandwidth;
    let too_short = RddError::SeriesTooShort { len: points.len(), bandwidth, needed };
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return Err(too_short);
    };
    if points.len() < needed || last.0 + 1 < first.0 + needed {
        return Err(too_short);
    }
    Ok(first.0 + bandwidth..=last.0 + 1 - bandwidth)
}

/// Every estimate over the admissible cuts, in cut order.
pub fn estimate_all(
    name: &str,
    points: &[(usize, f64)],
    bandwidth: usize,
) -> Result<Vec<DiscontinuityEstimate>, RddError> {
    let cuts: Vec<usize> = admissible_cuts(points, bandwidth)?.collect();
    cuts.into_par_iter().map(|c| discontinuity_at(name, points, c, bandwidth)).collect()
}

/// Keeps candidates with `|t| >= t_threshold` and applies non-maximum
/// suppression: a candidate closer than `min_separation` frames to an
/// accepted stronger one is dropped. Output is sorted by descending `|t|`,
/// earlier cuts first on ties.
pub fn suppress(
    mut candidates: Vec<DiscontinuityEstimate>,
    t_threshold: f64,
    min_separation: usize,
) -> Vec<DiscontinuityEstimate> {
    candidates.retain(|e| e.t_stat.abs() >= t_threshold && e.t_stat != 0.0);
    candidates.sort_by(|a, b| b.t_stat.abs().total_cmp(&a.t_stat.abs()).then(a.cutpoint.cmp(&b.cutpoint)));
    let mut accepted: Vec<DiscontinuityEstimate> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|a| a.cutpoint.abs_diff(c.cutpoint) >= min_separation) {
            accepted.push(c);
        }
    }
    accepted
}

pub fn scan_discontinuities(
    name: &str,
    points: &[(usize, f64)],
    bandwidth: usize,
    t_threshold: f64,
    min_separation: usize,
) -> Result<Vec<DiscontinuityEstimate>, RddError> {
    if min_separation == 0 {
        return Err(RddError::InvalidParameter("min_separation must be at least 1".into()));
    }
    Ok(suppress(estimate_all(name, points, bandwidth)?, t_threshold, min_separation))
}

/// Largest `|t|` over all admissible cuts.
pub fn max_abs_t(points: &[(usize, f64)], bandwidth: usize) -> Result<f64, RddError> {
    let mut best = 0.0f64;
    for c in admissible_cuts(points, bandwidth)? {
        best = best.max(estimate(points, c, bandwidth)?.2.abs());
    }
    Ok(best)
}

/// Gaussian white noise of length `n` drawn from stream `stream` of `seed`.
pub fn white_noise(n: usize, seed: u64, stream: u64) -> Vec<(usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..n).map(|t| (t, StandardNormal.sample(&mut rng))).collect()
}

/// The `(1 - alpha)` quantile of the scan maximum `|t|` under white noise.
///
/// Series `i` uses stream `i` of `seed`, so the result does not depend on the
/// number of threads.
pub fn null_threshold(n: usize, bandwidth: usize, alpha: f64, n_sims: usize, seed: u64) -> Result<f64, RddError> {
    if n_sims < 100 {
        return Err(RddError::InvalidParameter(format!("need at least 100 simulations, got {n_sims}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(RddError::InvalidParameter(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    check_bandwidth(bandwidth)?;
    if n < 2 * bandwidth {
        return Err(RddError::SeriesTooShort { len: n, bandwidth, needed: 2 * bandwidth });
    }
    let mut maxima: Vec<f64> = (0..n_sims)
        .into_par_iter()
        .map(|i| max_abs_t(&white_noise(n, seed, i as u64), bandwidth))
        .collect::<Result<_, _>>()?;
    maxima.sort_by(f64::total_cmp);
    // the small offset keeps (1 - 0.05) * 500 from rounding up past 475
    let rank = ((1.0 - alpha) * n_sims as f64 - 1e-9).ceil() as i64 - 1;
    Ok(maxima[rank.clamp(0, n_sims as i64 - 1) as usize])
}

/// Writes `rdd_<series>.json` into `dir`.
pub fn write_scan_results(dir: &Path, series: &str, estimates: &[DiscontinuityEstimate]) -> Result<(), IngestError> {
    write_json(dir, &format!("rdd_{series}.json"), estimates)
}

/// Writes `evidence.json` into `dir`.
pub fn write_evidence(dir: &Path, evidence: &[AssociationEvidence]) -> Result<(), IngestError> {
    write_json(dir, "evidence.json", evidence)
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, file: &str, value: &T) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(file);
    let text = serde_json::to_string_pretty(value).expect("results serialize");
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}
