//! Windowed KPI time series.
//!
//! A KPI applies a per-frame feature (the lambda) over a region selector and
//! aggregates it over a trailing window of `window` frames. The value for a
//! window is stamped at its last frame, so a series starts at frame
//! `window - 1`.

mod canny;
mod features;
mod region;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canny::{BLUR_RADIUS, CannyParams, EdgeMask, canny, luma};
pub use features::{
    BoxFeatures, RegionFeatures, average_color, box_region_features, detection_count, edge_fraction, luminosity,
    region_features,
};
pub use region::{Region, RegionKind};

use crate::image::Frame;
use crate::ingest::{ExternalSeries, IngestError, Manifest, PredictionLog, write_frame_value_csv};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KpiError {
    #[error("region is empty")]
    EmptyRegion,
    #[error("region extends past the frame")]
    RegionOutOfBounds,
    #[error("region {w}x{h} is smaller than the 5x5 blur kernel")]
    RegionTooSmall { w: usize, h: usize },
    #[error("unknown external series `{0}`")]
    UnknownExternal(String),
    #[error("external series `{0}` has no samples")]
    EmptyExternal(String),
    #[error("KPI `{0}` needs decoded frames, but the project is log-only")]
    FramesUnavailable(String),
    #[error("KPI `{0}` needs a detection log the project does not have")]
    LogUnavailable(String),
    #[error("invalid KPI definition: {0}")]
    InvalidDefinition(String),
    #[error("KPI `{name}` produced {value} at frame {frame}, outside its range")]
    ValueOutOfRange { name: String, frame: usize, value: f64 },
    #[error(transparent)]
    Io(#[from] IngestError),
}

/// The per-frame feature a KPI tracks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    Luminosity,
    AvgR,
    AvgG,
    AvgB,
    EdgeFraction,
    DetectionCount,
    External(String),
}

impl Lambda {
    /// Inclusive value range, `None` when unbounded.
    pub fn range(&self) -> Option<(f64, f64)> {
        match self {
            Lambda::Luminosity | Lambda::AvgR | Lambda::AvgG | Lambda::AvgB => Some((0.0, 255.0)),
            Lambda::EdgeFraction => Some((0.0, 1.0)),
            Lambda::DetectionCount => Some((0.0, f64::INFINITY)),
            Lambda::External(_) => None,
        }
    }

    fn is_visual(&self) -> bool {
        !matches!(self, Lambda::DetectionCount | Lambda::External(_))
    }
}

fn default_grid() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionSelector {
    #[default]
    WholeFrame,
    GridCell {
        row: usize,
        col: usize,
        #[serde(default = "default_grid")]
        rows: usize,
        #[serde(default = "default_grid")]
        cols: usize,
    },
    GtBoxes,
    DetectedBoxes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Mean,
    Min,
    Max,
}

impl Aggregator {
    fn apply(&self, window: &[f64]) -> f64 {
        match self {
            Aggregator::Mean => window.iter().sum::<f64>() / window.len() as f64,
            Aggregator::Min => window.iter().copied().fold(f64::INFINITY, f64::min),
            Aggregator::Max => window.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

fn default_window() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiDefinition {
    pub name: String,
    pub lambda: Lambda,
    #[serde(default)]
    pub region: RegionSelector,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default)]
    pub aggregator: Aggregator,
}

impl KpiDefinition {
    /// Whole-frame, per-frame mean of `lambda`.
    pub fn simple(name: &str, lambda: Lambda) -> Self {
        Self {
            name: name.to_string(),
            lambda,
            region: RegionSelector::WholeFrame,
            window: 1,
            aggregator: Aggregator::Mean,
        }
    }

    pub fn with_window(mut self, window: usize) -> Self {
        self.window = window;
        self
    }

    pub fn validate(&self) -> Result<(), KpiError> {
        if !crate::query::is_identifier(&self.name) {
            return Err(KpiError::InvalidDefinition(format!("`{}` is not an identifier", self.name)));
        }
        if self.window == 0 {
            return Err(KpiError::InvalidDefinition(format!("KPI `{}` has window 0", self.name)));
        }
        if let RegionSelector::GridCell { row, col, rows, cols } = self.region {
            if rows == 0 || cols == 0 || row >= rows || col >= cols {
                return Err(KpiError::InvalidDefinition(format!(
                    "KPI `{}`: cell ({row}, {col}) outside a {rows}x{cols} grid",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// The KPIs every project offers without configuration. Visual KPIs are only
/// listed when frames are available.
pub fn default_definitions(has_frames: bool, has_predictions: bool) -> Vec<KpiDefinition> {
    let mut defs = Vec::new();
    if has_frames {
        defs.extend([
            KpiDefinition::simple("luminosity", Lambda::Luminosity),
            KpiDefinition::simple("avg_r", Lambda::AvgR),
            KpiDefinition::simple("avg_g", Lambda::AvgG),
            KpiDefinition::simple("avg_b", Lambda::AvgB),
            KpiDefinition::simple("edge_fraction", Lambda::EdgeFraction),
        ]);
    }
    if has_predictions {
        defs.push(KpiDefinition::simple("detection_count", Lambda::DetectionCount));
    }
    defs
}

/// Reads a KPI configuration file: a JSON array of definitions.
pub fn load_definitions(path: &Path) -> Result<Vec<KpiDefinition>, KpiError> {
    let text = std::fs::read_to_string(path).map_err(|e| crate::ingest::io_err(path, e))?;
    let defs: Vec<KpiDefinition> =
        serde_json::from_str(&text).map_err(|e| KpiError::InvalidDefinition(e.to_string()))?;
    for d in &defs {
        d.validate()?;
    }
    let mut names: Vec<&str> = defs.iter().map(|d| d.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(KpiError::InvalidDefinition(format!("KPI `{}` defined twice", w[0])));
    }
    Ok(defs)
}

/// Everything a KPI may read from a project.
#[derive(Clone, Copy)]
pub struct KpiInputs<'a> {
    pub manifest: &'a Manifest,
    pub frames: Option<&'a [Frame]>,
    pub predictions: Option<&'a PredictionLog>,
    pub ground_truth: Option<&'a PredictionLog>,
    pub externals: &'a BTreeMap<String, ExternalSeries>,
    pub canny: &'a CannyParams,
}

/// Provenance stored next to an exported series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub definition: KpiDefinition,
    pub canny: Option<CannyParams>,
    pub label: String,
    /// Frames where a box-region feature fell back to the whole frame.
    pub sentinel_frames: usize,
    pub frame_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSeries {
    pub definition: KpiDefinition,
    /// `(window_end_frame, value)`, strictly increasing in frame.
    pub points: Vec<(usize, f64)>,
    pub meta: SeriesMeta,
}

impl KpiSeries {
    pub fn name(&self) -> &str {
        &self.definition.name
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Writes `series/<name>.csv` and its `.meta.json` sidecar under `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), KpiError> {
        std::fs::create_dir_all(dir).map_err(|e| crate::ingest::io_err(dir, e))?;
        write_frame_value_csv(&dir.join(format!("{}.csv", self.name())), &self.points)?;
        let meta_path = dir.join(format!("{}.meta.json", self.name()));
        let text = serde_json::to_string_pretty(&self.meta).expect("metadata serializes");
        std::fs::write(&meta_path, text).map_err(|e| crate::ingest::io_err(&meta_path, e))?;
        Ok(())
    }
}

/// Per-frame raw feature values (window 1) for a definition.
pub fn per_frame_values(def: &KpiDefinition, inputs: &KpiInputs<'_>) -> Result<(Vec<f64>, usize), KpiError> {
    def.validate()?;
    let manifest = inputs.manifest;
    let n = manifest.frame_count;
    let label = manifest.label_of_interest.as_str();

    if let Lambda::External(series_name) = &def.lambda {
        let series = inputs.externals.get(series_name).ok_or_else(|| KpiError::UnknownExternal(series_name.clone()))?;
        return Ok((resample_locf(series, n)?, 0));
    }

    if def.lambda == Lambda::DetectionCount {
        let log = match def.region {
            RegionSelector::GtBoxes => inputs.ground_truth,
            _ => inputs.predictions,
        }
        .ok_or_else(|| KpiError::LogUnavailable(def.name.clone()))?;
        let cell = match def.region {
            RegionSelector::GridCell { row, col, rows, cols } => {
                Some(Region::grid_cell(manifest.width, manifest.height, rows, cols, row, col)?)
            }
            _ => None,
        };
        let values = (0..n)
            .map(|t| {
                log.labeled(t, label)
                    .filter(|b| {
                        cell.is_none_or(|c| {
                            let (cx, cy) = b.center();
                            c.contains_point(cx, cy)
                        })
                    })
                    .count() as f64
            })
            .collect();
        return Ok((values, 0));
    }

    let frames = inputs.frames.ok_or_else(|| KpiError::FramesUnavailable(def.name.clone()))?;
    let canny = inputs.canny;
    let pick = |f: &RegionFeatures| -> f64 {
        match def.lambda {
            Lambda::Luminosity => f.luminosity,
            Lambda::AvgR => f.avg_color[0],
            Lambda::AvgG => f.avg_color[1],
            Lambda::AvgB => f.avg_color[2],
            Lambda::EdgeFraction => f.edge_fraction,
            _ => unreachable!("non-visual lambdas handled above"),
        }
    };
    let single = |frame: &Frame, region: &Region| -> Result<f64, KpiError> {
        match def.lambda {
            Lambda::Luminosity => luminosity(frame, region),
            Lambda::AvgR | Lambda::AvgG | Lambda::AvgB => {
                let c = average_color(frame, region)?;
                Ok(match def.lambda {
                    Lambda::AvgR => c[0],
                    Lambda::AvgG => c[1],
                    _ => c[2],
                })
            }
            Lambda::EdgeFraction => edge_fraction(frame, region, canny),
            _ => unreachable!("non-visual lambdas handled above"),
        }
    };
    let per_frame: Vec<Result<(f64, bool), KpiError>> = frames
        .par_iter()
        .map(|frame| match def.region {
            RegionSelector::WholeFrame => {
                single(frame, &Region::whole(manifest.width, manifest.height)).map(|v| (v, false))
            }
            RegionSelector::GridCell { row, col, rows, cols } => {
                let cell = Region::grid_cell(manifest.width, manifest.height, rows, cols, row, col)?;
                single(frame, &cell).map(|v| (v, false))
            }
            RegionSelector::GtBoxes | RegionSelector::DetectedBoxes => {
                let log = if def.region == RegionSelector::GtBoxes { inputs.ground_truth } else { inputs.predictions }
                    .ok_or_else(|| KpiError::LogUnavailable(def.name.clone()))?;
                let boxes: Vec<_> = log.labeled(frame.index, label).cloned().collect();
                let bf = box_region_features(frame, &boxes, canny)?;
                Ok((pick(&bf.features), bf.sentinel))
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n);
    let mut sentinels = 0;
    for r in per_frame {
        let (v, s) = r?;
        values.push(v);
        sentinels += s as usize;
    }
    Ok((values, sentinels))
}

/// Last observation carried forward onto frames `0..n`. Frames before the
/// first sample take the first sample's value.
fn resample_locf(series: &ExternalSeries, n: usize) -> Result<Vec<f64>, KpiError> {
    let first = series.samples.first().ok_or_else(|| KpiError::EmptyExternal(series.name.clone()))?;
    let mut out = Vec::with_capacity(n);
    let mut current = first.1;
    let mut next = 0;
    for t in 0..n {
        while next < series.samples.len() && series.samples[next].0 <= t {
            current = series.samples[next].1;
            next += 1;
        }
        out.push(current);
    }
    Ok(out)
}

/// Aggregates per-frame values over trailing windows; each window is
/// recomputed from scratch so long series accumulate no drift.
pub fn window_values(values: &[f64], window: usize, aggregator: Aggregator) -> Vec<(usize, f64)> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    (window - 1..values.len()).map(|t| (t, aggregator.apply(&values[t + 1 - window..=t]))).collect()
}

pub fn compute_kpi_series(def: &KpiDefinition, inputs: &KpiInputs<'_>) -> Result<KpiSeries, KpiError> {
    let (values, sentinel_frames) = per_frame_values(def, inputs)?;
    let points = window_values(&values, def.window, def.aggregator);
    if let Some((lo, hi)) = def.lambda.range() {
        // windowed means can land a rounding step outside an exact bound
        let slack = 1e-9 * hi.abs().max(1.0).min(1e6);
        if let Some(&(frame, value)) = points.iter().find(|(_, v)| !(*v >= lo - slack && *v <= hi + slack)) {
            return Err(KpiError::ValueOutOfRange { name: def.name.clone(), frame, value });
        }
    }
    Ok(KpiSeries {
        definition: def.clone(),
        points,
        meta: SeriesMeta {
            definition: def.clone(),
            canny: def.lambda.is_visual().then_some(*inputs.canny),
            label: inputs.manifest.label_of_interest.clone(),
            sentinel_frames,
            frame_count: inputs.manifest.frame_count,
        },
    })
}
