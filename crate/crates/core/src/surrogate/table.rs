use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SurrogateError;
use crate::image::{Frame, Pixels};
use crate::ingest::{BBox, PredictionLog, io_err};
use crate::kpi::{CannyParams, Region, RegionFeatures, box_region_features, region_features};
use crate::metrics::{ErrorClass, count_error_class};

/// Number of feature columns.
pub const FEATURE_COUNT: usize = 95;
const GRID: usize = 4;
const FEATURES: [&str; 5] = ["avg_r", "avg_g", "avg_b", "luminosity", "edge_fraction"];

/// Column names in table order: whole-frame features, then the 4×4 grid
/// cells row by row, then averages over ground-truth boxes and over detected
/// boxes. Each block lists avg_r, avg_g, avg_b, luminosity, edge_fraction.
pub fn column_names() -> Vec<String> {
    let mut prefixes = vec!["whole".to_string()];
    for r in 0..GRID {
        for c in 0..GRID {
            prefixes.push(format!("cell_{r}_{c}"));
        }
    }
    prefixes.push("gt".into());
    prefixes.push("det".into());
    prefixes.iter().flat_map(|p| FEATURES.iter().map(move |f| format!("{p}_{f}"))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub scene_id: String,
    pub features: Vec<f64>,
    pub label: ErrorClass,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
}

fn push(out: &mut Vec<f64>, f: &RegionFeatures) {
    out.extend_from_slice(&f.avg_color);
    out.push(f.luminosity);
    out.push(f.edge_fraction);
}

/// One row per `stride`-th frame, starting at frame 0.
///
/// Box averages use boxes carrying `label`; a frame without such boxes gets
/// the whole-frame values, as for box-region KPIs.
pub fn build_feature_table(
    frames: &[Frame],
    predictions: &PredictionLog,
    ground_truth: &PredictionLog,
    label: &str,
    stride: usize,
    scene_id: &str,
    canny: &CannyParams,
) -> Result<FeatureTable, SurrogateError> {
    if stride == 0 {
        return Err(SurrogateError::InvalidParameter("stride must be at least 1".into()));
    }
    let n = frames.len().min(predictions.frame_count()).min(ground_truth.frame_count());
    let labeled = |log: &PredictionLog, t: usize| -> Vec<BBox> { log.labeled(t, label).cloned().collect() };
    let rows = (0..n)
        .step_by(stride)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&t| {
            let img = &frames[t];
            let (w, h) = (img.width(), img.height());
            let mut features = Vec::with_capacity(FEATURE_COUNT);
            push(&mut features, &region_features(img, &Region::whole(w, h), canny)?);
            for r in 0..GRID {
                for c in 0..GRID {
                    push(&mut features, &region_features(img, &Region::grid_cell(w, h, GRID, GRID, r, c)?, canny)?);
                }
            }
            let gt = labeled(ground_truth, t);
            let det = labeled(predictions, t);
            push(&mut features, &box_region_features(img, &gt, canny)?.features);
            push(&mut features, &box_region_features(img, &det, canny)?.features);
            Ok(FeatureRow { scene_id: scene_id.to_string(), features, label: count_error_class(det.len(), gt.len()) })
        })
        .collect::<Result<Vec<_>, SurrogateError>>()?;
    Ok(FeatureTable { rows })
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<ErrorClass> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Rows whose scene is listed in `scenes`.
    pub fn select(&self, scenes: &[String]) -> FeatureTable {
        FeatureTable { rows: self.rows.iter().filter(|r| scenes.contains(&r.scene_id)).cloned().collect() }
    }

    pub fn scene_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.rows.iter().map(|r| r.scene_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Writes the 95 feature columns and a `label` column.
    pub fn write_csv(&self, path: &Path) -> Result<(), SurrogateError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        let mut header = column_names();
        header.push("label".into());
        w.write_record(&header).map_err(|e| io_err(path, e))?;
        for row in &self.rows {
            let mut rec: Vec<String> = row.features.iter().map(|v| format!("{v:?}")).collect();
            rec.push(row.label.value().to_string());
            w.write_record(&rec).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
        Ok(())
    }

    /// Reads a table written by [`FeatureTable::write_csv`]; every row gets
    /// `scene_id`.
    pub fn read_csv(path: &Path, scene_id: &str) -> Result<Self, SurrogateError> {
        let bad = |m: String| SurrogateError::InvalidTable(format!("{}: {m}", path.display()));
        let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
        let mut expected = column_names();
        expected.push("label".into());
        let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
        if header != expected {
            return Err(bad("header does not match the feature columns".into()));
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
            let features = rec
                .iter()
                .take(FEATURE_COUNT)
                .map(|s| num(s).ok_or_else(|| bad(format!("row {}: bad value `{s}`", i + 1))))
                .collect::<Result<Vec<_>, _>>()?;
            let label = rec
                .get(FEATURE_COUNT)
                .and_then(|s| s.trim().parse::<i64>().ok())
                .and_then(ErrorClass::from_value)
                .ok_or_else(|| bad(format!("row {}: label must be -1, 0 or 1", i + 1)))?;
            rows.push(FeatureRow { scene_id: scene_id.to_string(), features, label });
        }
        Ok(FeatureTable { rows })
    }
}
