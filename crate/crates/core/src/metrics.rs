//! Evaluation metrics: counting-error classes, windowed correct rate, box
//! matching and spatial error heatmaps.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::{BBox, IngestError, PredictionLog, io_err, write_frame_value_csv};
use crate::kpi::Region;

/// Per-frame counting error. Serialized as −1, 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorClass {
    Undercount,
    Correct,
    Overcount,
}

impl ErrorClass {
    pub fn value(self) -> i8 {
        match self {
            ErrorClass::Undercount => -1,
            ErrorClass::Correct => 0,
            ErrorClass::Overcount => 1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            -1 => Some(ErrorClass::Undercount),
            0 => Some(ErrorClass::Correct),
            1 => Some(ErrorClass::Overcount),
            _ => None,
        }
    }

    pub fn negate(self) -> Self {
        match self {
            ErrorClass::Undercount => ErrorClass::Overcount,
            ErrorClass::Correct => ErrorClass::Correct,
            ErrorClass::Overcount => ErrorClass::Undercount,
        }
    }
}

impl Serialize for ErrorClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.value())
    }
}

impl<'de> Deserialize<'de> for ErrorClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        ErrorClass::from_value(v)
            .ok_or_else(|| serde::de::Error::custom(format!("error class must be -1, 0 or 1, got {v}")))
    }
}

pub fn count_error_class(det_count: usize, gt_count: usize) -> ErrorClass {
    match det_count.cmp(&gt_count) {
        std::cmp::Ordering::Less => ErrorClass::Undercount,
        std::cmp::Ordering::Equal => ErrorClass::Correct,
        std::cmp::Ordering::Greater => ErrorClass::Overcount,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ErrorClass,
    CorrectRate,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub name: String,
    pub points: Vec<(usize, f64)>,
    pub kind: MetricKind,
}

impl MetricSeries {
    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    pub fn export_csv(&self, path: &Path) -> Result<(), IngestError> {
        write_frame_value_csv(path, &self.points)
    }
}

/// Per-frame error class of `label` counts, one point per frame.
pub fn error_series(pred: &PredictionLog, gt: &PredictionLog, label: &str) -> MetricSeries {
    let n = pred.frame_count().max(gt.frame_count());
    let points = (0..n)
        .into_par_iter()
        .map(|t| {
            let class = count_error_class(pred.labeled(t, label).count(), gt.labeled(t, label).count());
            (t, class.value() as f64)
        })
        .collect();
    MetricSeries { name: "count_error".into(), points, kind: MetricKind::ErrorClass }
}

/// Fraction of correct frames in each trailing window of `w` frames.
///
/// # Panics
/// When `w` is 0.
pub fn correct_rate(errors: &MetricSeries, w: usize) -> MetricSeries {
    assert!(w >= 1, "correct-rate window must be at least 1");
    let correct: Vec<bool> = errors.points.iter().map(|p| p.1 == 0.0).collect();
    let points = if correct.len() < w {
        Vec::new()
    } else {
        (w - 1..correct.len())
            .map(|i| {
                let hits = correct[i + 1 - w..=i].iter().filter(|&&c| c).count();
                (errors.points[i].0, hits as f64 / w as f64)
            })
            .collect()
    };
    MetricSeries { name: "correct_rate".into(), points, kind: MetricKind::CorrectRate }
}

/// Intersection over union of two pixel rectangles.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let ix = (a.x + a.w).min(b.x + b.w).saturating_sub(a.x.max(b.x)) as u64;
    let iy = (a.y + a.h).min(b.y + b.h).saturating_sub(a.y.max(b.y)) as u64;
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union == 0 { 0.0 } else { inter as f64 / union as f64 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `(gt_id, det_id, iou)`, ids being indices into the input slices.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_det: Vec<usize>,
}

/// Greedy matching by descending IoU, ties broken by `(gt_id, det_id)`.
///
/// # Panics
/// When the threshold is outside `(0, 1]`.
pub fn match_boxes(gt: &[BBox], det: &[BBox], iou_threshold: f64) -> Matching {
    assert!(iou_threshold > 0.0 && iou_threshold <= 1.0, "IoU threshold must lie in (0, 1]");
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, d) in det.iter().enumerate() {
            let v = iou(g, d);
            if v >= iou_threshold {
                candidates.push((i, j, v));
            }
        }
    }
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut gt_used = vec![false; gt.len()];
    let mut det_used = vec![false; det.len()];
    let mut pairs = Vec::new();
    for (i, j, v) in candidates {
        if !gt_used[i] && !det_used[j] {
            gt_used[i] = true;
            det_used[j] = true;
            pairs.push((i, j, v));
        }
    }
    let unused = |used: &[bool]| used.iter().enumerate().filter(|(_, u)| !**u).map(|(i, _)| i).collect();
    Matching { pairs, unmatched_gt: unused(&gt_used), unmatched_det: unused(&det_used) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapKind {
    Overcount,
    Undercount,
}

impl HeatmapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeatmapKind::Overcount => "overcount",
            HeatmapKind::Undercount => "undercount",
        }
    }
}

impl std::str::FromStr for HeatmapKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "overcount" => Ok(HeatmapKind::Overcount),
            "undercount" => Ok(HeatmapKind::Undercount),
            _ => Err(format!("heatmap kind must be overcount or undercount, got `{s}`")),
        }
    }
}

/// How raw per-cell counts become heat values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatNormalization {
    /// Count divided by the number of frames.
    #[default]
    PerFrame,
    /// The raw count.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapParams {
    pub rows: usize,
    pub cols: usize,
    pub iou_threshold: f64,
    pub normalization: HeatNormalization,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        Self { rows: 4, cols: 4, iou_threshold: 0.5, normalization: HeatNormalization::PerFrame }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub kind: HeatmapKind,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub cells: Vec<Vec<f64>>,
    /// Unmatched-box counts per cell before normalization.
    pub counts: Vec<Vec<u64>>,
    pub frame_count: usize,
    pub normalization: HeatNormalization,
}

impl Heatmap {
    pub fn total_count(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// `(row, col)` of the largest count; the first in row-major order wins ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (r, row) in self.counts.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                if v > self.counts[best.0][best.1] {
                    best = (r, c);
                }
            }
        }
        best
    }

    /// Writes `heatmap_<kind>.json` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(format!("heatmap_{}.json", self.kind.as_str()));
        let text = serde_json::to_string_pretty(self).expect("heatmap serializes");
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}

/// Overcount and undercount heatmaps from the centers of unmatched boxes.
///
/// # Panics
/// When the grid has zero rows or columns.
pub fn error_heatmap(
    pred: &PredictionLog,
    gt: &PredictionLog,
    label: &str,
    width: usize,
    height: usize,
    params: &HeatmapParams,
) -> (Heatmap, Heatmap) {
    assert!(params.rows >= 1 && params.cols >= 1, "heatmap grid must be at least 1x1");
    let (rows, cols) = (params.rows, params.cols);
    let cells: Vec<Region> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| (r, c)))
        .map(|(r, c)| Region::grid_cell(width, height, rows, cols, r, c).expect("indices in range"))
        .collect();
    let cell_of = |b: &BBox| -> Option<usize> {
        let (cx, cy) = b.center();
        cells.iter().position(|cell| cell.contains_point(cx, cy))
    };
    let n = pred.frame_count().max(gt.frame_count());
    let (over, under) = (0..n)
        .into_par_iter()
        .map(|t| {
            let g: Vec<BBox> = gt.labeled(t, label).cloned().collect();
            let d: Vec<BBox> = pred.labeled(t, label).cloned().collect();
            let m = match_boxes(&g, &d, params.iou_threshold);
            let mut over = vec![0u64; rows * cols];
            let mut under = vec![0u64; rows * cols];
            m.unmatched_det.iter().filter_map(|&j| cell_of(&d[j])).for_each(|k| over[k] += 1);
            m.unmatched_gt.iter().filter_map(|&i| cell_of(&g[i])).for_each(|k| under[k] += 1);
            (over, under)
        })
        .reduce(
            || (vec![0u64; rows * cols], vec![0u64; rows * cols]),
            |mut a, b| {
                a.0.iter_mut().zip(&b.0).for_each(|(x, y)| *x += y);
                a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
                a
            },
        );
    let build = |kind, flat: Vec<u64>| {
        let counts: Vec<Vec<u64>> = flat.chunks(cols).map(|c| c.to_vec()).collect();
        let cells = counts
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&c| match params.normalization {
                        HeatNormalization::PerFrame if n > 0 => c as f64 / n as f64,
                        HeatNormalization::PerFrame => 0.0,
                        HeatNormalization::Raw => c as f64,
                    })
                    .collect()
            })
            .collect();
        Heatmap {
            kind,
            grid_rows: rows,
            grid_cols: cols,
            cells,
            counts,
            frame_count: n,
            normalization: params.normalization,
        }
    };
    (build(HeatmapKind::Overcount, over), build(HeatmapKind::Undercount, under))
}
