//! An immutable project snapshot with compute-once series caches.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::image::Frame;
use crate::ingest::{
    ExternalSeries, IngestError, Manifest, PredictionLog, load_detection_log, load_external_series, load_frames,
    load_ground_truth,
};
use crate::kpi::{
    CannyParams, KpiDefinition, KpiError, KpiInputs, KpiSeries, Lambda, compute_kpi_series, default_definitions,
    load_definitions,
};
use crate::metrics::{Heatmap, HeatmapParams, MetricKind, MetricSeries, correct_rate, error_heatmap, error_series};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Kpi(#[from] KpiError),
    #[error("unknown KPI `{0}`")]
    UnknownKpi(String),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("the project has no {0} log")]
    MissingLog(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn default_correct_rate_window() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectConfig {
    /// KPI definitions file; `kpis.json` in the project root is used when absent.
    #[serde(default)]
    pub kpi_config: Option<PathBuf>,
    #[serde(default)]
    pub canny: CannyParams,
    #[serde(default = "default_correct_rate_window")]
    pub correct_rate_window: usize,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self { kpi_config: None, canny: CannyParams::default(), correct_rate_window: default_correct_rate_window() }
    }
}

/// Parts of a project, for building one in memory.
#[derive(Debug, Clone)]
pub struct ProjectParts {
    pub manifest: Manifest,
    pub frames: Option<Vec<Frame>>,
    pub predictions: Option<PredictionLog>,
    pub ground_truth: Option<PredictionLog>,
    pub externals: Vec<ExternalSeries>,
    /// Definitions added to, or replacing, the defaults.
    pub kpis: Vec<KpiDefinition>,
}

type Slot<T> = Arc<OnceLock<Result<Arc<T>, ProjectError>>>;

/// Computes each value once, even under concurrent first requests.
struct Memo<T> {
    slots: Mutex<HashMap<String, Slot<T>>>,
}

impl<T> Memo<T> {
    fn new() -> Self {
        Self { slots: Mutex::new(HashMap::new()) }
    }

    fn get(&self, key: &str, compute: impl FnOnce() -> Result<T, ProjectError>) -> Result<Arc<T>, ProjectError> {
        let slot = self.slots.lock().expect("cache lock").entry(key.to_string()).or_default().clone();
        slot.get_or_init(|| compute().map(Arc::new)).clone()
    }
}

pub const METRIC_COUNT_ERROR: &str = "count_error";
pub const METRIC_CORRECT_RATE: &str = "correct_rate";

pub struct Project {
    root: Option<PathBuf>,
    manifest: Manifest,
    frames: Option<Vec<Frame>>,
    predictions: Option<PredictionLog>,
    ground_truth: Option<PredictionLog>,
    externals: BTreeMap<String, ExternalSeries>,
    kpis: BTreeMap<String, KpiDefinition>,
    config: ProjectConfig,
    kpi_cache: Memo<KpiSeries>,
    metric_cache: Memo<MetricSeries>,
}

impl std::fmt::Debug for Project {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Project")
            .field("root", &self.root)
            .field("manifest", &self.manifest)
            .field("frames", &self.frames.as_ref().map(Vec::len))
            .field("kpis", &self.kpis.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

/// Short stable id for a project directory: the first 8 hex digits of the
/// SHA-256 of its canonical path.
pub fn project_id(root: &Path) -> String {
    let canonical = root.canonicalize().unwrap_or_else(|_| root.to_path_buf());
    let digest = Sha256::digest(canonical.to_string_lossy().as_bytes());
    hex::encode(digest)[..8].to_string()
}

/// Loads a project directory. Frames are optional: without a `frames/`
/// directory the project runs log-only and visual KPIs are unavailable.
pub fn load_project(root: &Path, config: &ProjectConfig) -> Result<Project, ProjectError> {
    let manifest = Manifest::load(&root.join("manifest.json"))?;
    let frames = if root.join("frames").is_dir() { Some(load_frames(root, &manifest)?) } else { None };
    let log = |file: &str, gt: bool| -> Result<Option<PredictionLog>, IngestError> {
        let path = root.join("logs").join(file);
        if !path.is_file() {
            return Ok(None);
        }
        (if gt { load_ground_truth(&path, &manifest) } else { load_detection_log(&path, &manifest) }).map(Some)
    };
    let predictions = log("predictions.jsonl", false)?;
    let ground_truth = log("ground_truth.jsonl", true)?;
    let externals = load_externals(&root.join("series"))?;

    let config_path = config.kpi_config.clone().or_else(|| Some(root.join("kpis.json")).filter(|p| p.is_file()));
    let kpis = match config_path {
        Some(p) => load_definitions(&p)?,
        None => Vec::new(),
    };
    Project::assemble(
        Some(root.to_path_buf()),
        ProjectParts { manifest, frames, predictions, ground_truth, externals, kpis },
        config.clone(),
    )
}

/// External series are the CSV files in `series/` that have no `.meta.json`
/// sidecar; files with a sidecar were exported by this tool.
fn load_externals(dir: &Path) -> Result<Vec<ExternalSeries>, IngestError> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| crate::ingest::io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if dir.join(format!("{stem}.meta.json")).exists() || !crate::query::is_identifier(&stem) {
            continue;
        }
        out.push(load_external_series(&p, &stem)?);
    }
    Ok(out)
}

impl Project {
    pub fn from_parts(parts: ProjectParts, config: ProjectConfig) -> Result<Self, ProjectError> {
        Self::assemble(None, parts, config)
    }

    fn assemble(root: Option<PathBuf>, parts: ProjectParts, config: ProjectConfig) -> Result<Self, ProjectError> {
        parts.manifest.validate()?;
        config.canny.validate()?;
        if config.correct_rate_window == 0 {
            return Err(ProjectError::InvalidConfig("correct_rate_window must be at least 1".into()));
        }
        let mut externals = BTreeMap::new();
        for e in parts.externals {
            if externals.insert(e.name.clone(), e.clone()).is_some() {
                return Err(ProjectError::InvalidConfig(format!("external series `{}` loaded twice", e.name)));
            }
        }
        let mut kpis: BTreeMap<String, KpiDefinition> =
            default_definitions(parts.frames.is_some(), parts.predictions.is_some())
                .into_iter()
                .map(|d| (d.name.clone(), d))
                .collect();
        for name in externals.keys() {
            kpis.entry(name.clone()).or_insert_with(|| KpiDefinition::simple(name, Lambda::External(name.clone())));
        }
        for d in parts.kpis {
            d.validate()?;
            if let Lambda::External(ext) = &d.lambda {
                if !externals.contains_key(ext) {
                    return Err(KpiError::UnknownExternal(ext.clone()).into());
                }
            }
            kpis.insert(d.name.clone(), d);
        }
        Ok(Self {
            root,
            manifest: parts.manifest,
            frames: parts.frames,
            predictions: parts.predictions,
            ground_truth: parts.ground_truth,
            externals,
            kpis,
            config,
            kpi_cache: Memo::new(),
            metric_cache: Memo::new(),
        })
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn results_dir(&self) -> Option<PathBuf> {
        self.root.as_ref().map(|r| r.join("results"))
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.config
    }

    pub fn frame_count(&self) -> usize {
        self.manifest.frame_count
    }

    pub fn frames(&self) -> Option<&[Frame]> {
        self.frames.as_deref()
    }

    pub fn predictions(&self) -> Option<&PredictionLog> {
        self.predictions.as_ref()
    }

    pub fn ground_truth(&self) -> Option<&PredictionLog> {
        self.ground_truth.as_ref()
    }

    pub fn externals(&self) -> &BTreeMap<String, ExternalSeries> {
        &self.externals
    }

    pub fn kpi_definitions(&self) -> impl Iterator<Item = &KpiDefinition> {
        self.kpis.values()
    }

    pub fn kpi_names(&self) -> Vec<String> {
        self.kpis.keys().cloned().collect()
    }

    pub fn has_kpi(&self, name: &str) -> bool {
        self.kpis.contains_key(name)
    }

    pub fn metric_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        if self.predictions.is_some() && self.ground_truth.is_some() {
            names.push(METRIC_COUNT_ERROR.to_string());
            names.push(METRIC_CORRECT_RATE.to_string());
        }
        names.extend(self.externals.keys().cloned());
        names
    }

    pub fn has_metric(&self, name: &str) -> bool {
        self.metric_names().iter().any(|n| n == name)
    }

    fn inputs(&self) -> KpiInputs<'_> {
        KpiInputs {
            manifest: &self.manifest,
            frames: self.frames.as_deref(),
            predictions: self.predictions.as_ref(),
            ground_truth: self.ground_truth.as_ref(),
            externals: &self.externals,
            canny: &self.config.canny,
        }
    }

    pub fn kpi_series(&self, name: &str) -> Result<Arc<KpiSeries>, ProjectError> {
        let def = self.kpis.get(name).ok_or_else(|| ProjectError::UnknownKpi(name.to_string()))?;
        self.kpi_cache.get(name, || Ok(compute_kpi_series(def, &self.inputs())?))
    }

    /// Computes a series for a definition that is not part of the project.
    pub fn compute_adhoc(&self, def: &KpiDefinition) -> Result<KpiSeries, ProjectError> {
        Ok(compute_kpi_series(def, &self.inputs())?)
    }

    fn logs(&self) -> Result<(&PredictionLog, &PredictionLog), ProjectError> {
        Ok((
            self.predictions.as_ref().ok_or(ProjectError::MissingLog("prediction"))?,
            self.ground_truth.as_ref().ok_or(ProjectError::MissingLog("ground truth"))?,
        ))
    }

    pub fn metric_series(&self, name: &str) -> Result<Arc<MetricSeries>, ProjectError> {
        if !self.has_metric(name) {
            return Err(ProjectError::UnknownMetric(name.to_string()));
        }
        self.metric_cache.get(name, || match name {
            METRIC_COUNT_ERROR => {
                let (pred, gt) = self.logs()?;
                Ok(error_series(pred, gt, &self.manifest.label_of_interest))
            }
            METRIC_CORRECT_RATE => {
                let errors = self.metric_series(METRIC_COUNT_ERROR)?;
                Ok(correct_rate(&errors, self.config.correct_rate_window))
            }
            _ => {
                let def = KpiDefinition::simple(name, Lambda::External(name.to_string()));
                let series = compute_kpi_series(&def, &self.inputs())?;
                Ok(MetricSeries { name: name.to_string(), points: series.points, kind: MetricKind::Custom })
            }
        })
    }

    pub fn heatmaps(&self, params: &HeatmapParams) -> Result<(Heatmap, Heatmap), ProjectError> {
        let (pred, gt) = self.logs()?;
        if params.rows == 0 || params.cols == 0 {
            return Err(ProjectError::InvalidConfig("heatmap grid must be at least 1x1".into()));
        }
        Ok(error_heatmap(pred, gt, &self.manifest.label_of_interest, self.manifest.width, self.manifest.height, params))
    }
}
