//! Synthetic projects with planted causal structure.
//!
//! A scenario renders gray frames with bright "people" rectangles walking on
//! seeded paths, a ground-truth log with their true boxes, and a prediction
//! log from a detector whose miss rate depends on the background level and on
//! spatial failure zones. [`PlantedTruth`] records what a correct analysis
//! should find, and [`score_recovery`] grades a query result against it.

mod generate;
mod spec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use generate::{Scenario, generate_scenario};
pub use spec::{Decoy, DetectorModel, EventFeature, PeopleModel, ScenarioSpec, StepEvent, Zone};

use crate::kpi::CannyParams;
use crate::project::ProjectError;
use crate::query::{QueryResult, Sign};
use crate::surrogate::{FeatureTable, SurrogateError, build_feature_table};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

/// A KPI/metric pair whose discontinuity was planted at `cut`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub kpi: String,
    pub metric: String,
    pub cut: usize,
    pub sign: Sign,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub pairs: Vec<PlantedPair>,
    /// KPIs with no planted discontinuity.
    pub null_kpis: Vec<String>,
    /// Grid cells `(row, col)` with elevated miss probability.
    pub zones: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// Fraction of planted pairs found by some window.
    pub hit_rate: f64,
    /// Fraction of null KPIs named by some window.
    pub false_alarm_rate: f64,
    /// Whether the top-ranked window recovers a planted pair.
    pub top_hit: bool,
    pub hits: Vec<bool>,
    pub false_alarms: Vec<bool>,
    pub window_count: usize,
}

/// Grades a query result: a planted pair is hit when a window names its KPI
/// and comes within `tolerance` frames of its cut; a null KPI is a false
/// alarm when any window names it. Rates over empty sets are 0.
pub fn score_recovery(planted: &PlantedTruth, result: &QueryResult, tolerance: usize) -> RecoveryReport {
    let near = |w: &crate::query::EvidenceWindow, cut: usize| {
        w.start_frame.saturating_sub(tolerance) <= cut && cut <= w.end_frame + tolerance
    };
    let hits: Vec<bool> =
        planted.pairs.iter().map(|p| result.windows.iter().any(|w| w.names(&p.kpi) && near(w, p.cut))).collect();
    let false_alarms: Vec<bool> = planted.null_kpis.iter().map(|k| result.windows.iter().any(|w| w.names(k))).collect();
    let top_hit =
        result.windows.first().is_some_and(|w| planted.pairs.iter().any(|p| w.names(&p.kpi) && near(w, p.cut)));
    let rate = |v: &[bool]| if v.is_empty() { 0.0 } else { v.iter().filter(|&&b| b).count() as f64 / v.len() as f64 };
    RecoveryReport {
        hit_rate: rate(&hits),
        false_alarm_rate: rate(&false_alarms),
        top_hit,
        hits,
        false_alarms,
        window_count: result.windows.len(),
    }
}

/// Identifiers of the three cross-scene scenes; the first two train.
pub const CROSS_SCENES: [&str; 3] = ["scene0", "scene1", "scene2"];

/// Feature tables for the three cross-scene scenes under one seed.
pub fn cross_scene_tables(seed: u64, stride: usize, canny: &CannyParams) -> Result<Vec<FeatureTable>, SynthError> {
    CROSS_SCENES
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let s = generate_scenario(&ScenarioSpec::cross_scene(i, seed))?;
            Ok(build_feature_table(&s.frames, &s.predictions, &s.ground_truth, &s.spec.label, stride, id, canny)?)
        })
        .collect()
}
