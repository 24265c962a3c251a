//! Decision-tree surrogate baseline.
//!
//! Per-frame visual features go into a depth-limited tree that predicts the
//! counting error class. Training on some scenes and testing on others shows
//! how well such a surrogate generalizes.

mod table;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::{FEATURE_COUNT, FeatureRow, FeatureTable, build_feature_table, column_names};
pub use tree::{TreeModel, TreeNode, balanced_accuracy, class_weights, gini, midpoint, split_impurity, train_tree};

use crate::ingest::IngestError;
use crate::kpi::KpiError;

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("invalid feature table: {0}")]
    InvalidTable(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Kpi(#[from] KpiError),
    #[error(transparent)]
    Io(#[from] IngestError),
}

pub const DEFAULT_MAX_DEPTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub train_scenes: Vec<String>,
    pub test_scenes: Vec<String>,
    pub train_rows: usize,
    pub test_rows: usize,
    pub max_depth: usize,
    pub tree_depth: usize,
    pub leaves: usize,
    pub train_balanced_accuracy: f64,
    pub test_balanced_accuracy: f64,
    pub split: String,
}

/// Trains on the rows of `train_scenes` and scores balanced accuracy on the
/// training rows and on the rows of `test_scenes`.
pub fn evaluate_split(
    tables: &[FeatureTable],
    train_scenes: &[String],
    test_scenes: &[String],
    max_depth: usize,
    seed: u64,
) -> Result<BaselineReport, SurrogateError> {
    if train_scenes.iter().any(|s| test_scenes.contains(s)) && train_scenes != test_scenes {
        return Err(SurrogateError::InvalidParameter("train and test scenes overlap".into()));
    }
    let all = FeatureTable { rows: tables.iter().flat_map(|t| t.rows.iter().cloned()).collect() };
    let train = all.select(train_scenes);
    let test = all.select(test_scenes);
    if test.is_empty() {
        return Err(SurrogateError::InvalidParameter("no rows in the test scenes".into()));
    }
    let model = train_tree(&train, max_depth, seed)?;
    Ok(BaselineReport {
        train_scenes: train_scenes.to_vec(),
        test_scenes: test_scenes.to_vec(),
        train_rows: train.len(),
        test_rows: test.len(),
        max_depth,
        tree_depth: model.root.depth(),
        leaves: model.root.leaf_count(),
        train_balanced_accuracy: balanced_accuracy(&model.predict(&train), &train.labels()),
        test_balanced_accuracy: balanced_accuracy(&model.predict(&test), &test.labels()),
        split: format!("train on {} / test on {}", train_scenes.join("+"), test_scenes.join("+")),
    })
}

#[cfg(test)]
mod tests;
