use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FeatureTable, SurrogateError};
use crate::metrics::ErrorClass;

const CLASSES: [ErrorClass; 3] = [ErrorClass::Undercount, ErrorClass::Correct, ErrorClass::Overcount];

fn class_index(c: ErrorClass) -> usize {
    (c.value() + 1) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        class: ErrorClass,
        /// Class-weighted votes for undercount, correct and overcount.
        votes: [f64; 3],
    },
    Split {
        column: usize,
        /// Rows with `value <= threshold` go left.
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub max_depth: usize,
    pub feature_count: usize,
    /// Weight of each class in the split criterion, inversely proportional
    /// to its training frequency.
    pub class_weights: [f64; 3],
    pub root: TreeNode,
}

impl TreeModel {
    pub fn predict_row(&self, features: &[f64]) -> ErrorClass {
        let mut node = &self.root;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split { column, threshold, left, right } => {
                    node = if features[*column] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, table: &FeatureTable) -> Vec<ErrorClass> {
        table.rows.iter().map(|r| self.predict_row(&r.features)).collect()
    }
}

/// Balanced class weights `n / (k * n_c)` over the `k` classes present.
pub fn class_weights(labels: &[ErrorClass]) -> [f64; 3] {
    let mut counts = [0usize; 3];
    for &l in labels {
        counts[class_index(l)] += 1;
    }
    let k = counts.iter().filter(|&&c| c > 0).count() as f64;
    counts.map(|c| if c == 0 { 0.0 } else { labels.len() as f64 / (k * c as f64) })
}

/// Weighted Gini impurity of a node from its per-class row counts, and the
/// node's total weight.
pub fn gini(counts: &[usize; 3], weights: &[f64; 3]) -> (f64, f64) {
    let w: [f64; 3] = [counts[0] as f64 * weights[0], counts[1] as f64 * weights[1], counts[2] as f64 * weights[2]];
    let total = w[0] + w[1] + w[2];
    if total == 0.0 {
        return (0.0, 0.0);
    }
    let sq = (w[0] / total).powi(2) + (w[1] / total).powi(2) + (w[2] / total).powi(2);
    (1.0 - sq, total)
}

/// Weight-averaged child impurity of a split.
pub fn split_impurity(left: &[usize; 3], right: &[usize; 3], weights: &[f64; 3]) -> f64 {
    let (gl, wl) = gini(left, weights);
    let (gr, wr) = gini(right, weights);
    (wl * gl + wr * gr) / (wl + wr)
}

/// Midpoint between adjacent distinct values, or `None` when rounding puts
/// it outside `[a, b)` so that it would not separate them.
pub fn midpoint(a: f64, b: f64) -> Option<f64> {
    let m = a + (b - a) / 2.0;
    (m >= a && m < b).then_some(m)
}

/// Majority class under the class weights; ties go to the lower class value.
fn leaf(counts: &[usize; 3], weights: &[f64; 3]) -> TreeNode {
    let votes = [counts[0] as f64 * weights[0], counts[1] as f64 * weights[1], counts[2] as f64 * weights[2]];
    let mut best = 0;
    for i in 1..3 {
        if votes[i] > votes[best] {
            best = i;
        }
    }
    TreeNode::Leaf { class: CLASSES[best], votes }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    impurity: f64,
    column: usize,
    threshold: f64,
}

fn better(a: &Candidate, b: &Candidate) -> Ordering {
    a.impurity.total_cmp(&b.impurity).then(a.column.cmp(&b.column)).then(a.threshold.total_cmp(&b.threshold))
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    weights: [f64; 3],
    max_depth: usize,
    columns: usize,
}

impl Grower<'_> {
    fn counts(&self, rows: &[usize]) -> [usize; 3] {
        let mut c = [0; 3];
        for &r in rows {
            c[self.y[r]] += 1;
        }
        c
    }

    /// Best threshold on one column by a sorted sweep.
    fn best_on_column(&self, rows: &[usize], column: usize, total: &[usize; 3]) -> Option<Candidate> {
        let mut order: Vec<usize> = rows.to_vec();
        order.sort_by(|&a, &b| self.x[a][column].total_cmp(&self.x[b][column]));
        let mut left = [0usize; 3];
        let mut best: Option<Candidate> = None;
        for i in 0..order.len() - 1 {
            left[self.y[order[i]]] += 1;
            let (a, b) = (self.x[order[i]][column], self.x[order[i + 1]][column]);
            if a == b {
                continue;
            }
            let Some(threshold) = midpoint(a, b) else { continue };
            let right = [total[0] - left[0], total[1] - left[1], total[2] - left[2]];
            let c = Candidate { impurity: split_impurity(&left, &right, &self.weights), column, threshold };
            if best.is_none_or(|b| better(&c, &b) == Ordering::Less) {
                best = Some(c);
            }
        }
        best
    }

    fn grow(&self, rows: &[usize], depth: usize) -> TreeNode {
        let counts = self.counts(rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.max_depth {
            return leaf(&counts, &self.weights);
        }
        let best =
            (0..self.columns).into_par_iter().filter_map(|c| self.best_on_column(rows, c, &counts)).min_by(better);
        let Some(split) = best else { return leaf(&counts, &self.weights) };
        let (l, r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&row| self.x[row][split.column] <= split.threshold);
        TreeNode::Split {
            column: split.column,
            threshold: split.threshold,
            left: Box::new(self.grow(&l, depth + 1)),
            right: Box::new(self.grow(&r, depth + 1)),
        }
    }
}

/// Grows a CART tree with balanced class weights and Gini impurity.
///
/// Every node that is impure, above `max_depth` and has a column with two
/// distinct values is split at the candidate with the lowest
/// (impurity, column, threshold), even when the split does not reduce
/// impurity. The search is exhaustive, so `seed` does not influence the
/// result; it is accepted for interface stability.
pub fn train_tree(table: &FeatureTable, max_depth: usize, seed: u64) -> Result<TreeModel, SurrogateError> {
    let _ = seed;
    if table.len() < 2 {
        return Err(SurrogateError::DegenerateLabels("need at least 2 rows".into()));
    }
    let labels = table.labels();
    let y: Vec<usize> = labels.iter().map(|&l| class_index(l)).collect();
    if y.iter().all(|&c| c == y[0]) {
        return Err(SurrogateError::DegenerateLabels("need at least 2 distinct labels".into()));
    }
    let columns = table.rows[0].features.len();
    if table.rows.iter().any(|r| r.features.len() != columns) {
        return Err(SurrogateError::InvalidTable("rows have different column counts".into()));
    }
    if table.rows.iter().any(|r| r.features.iter().any(|v| !v.is_finite())) {
        return Err(SurrogateError::InvalidTable("features must be finite".into()));
    }
    let x: Vec<Vec<f64>> = table.rows.iter().map(|r| r.features.clone()).collect();
    let weights = class_weights(&labels);
    let grower = Grower { x: &x, y: &y, weights, max_depth, columns };
    let rows: Vec<usize> = (0..x.len()).collect();
    Ok(TreeModel { max_depth, feature_count: columns, class_weights: weights, root: grower.grow(&rows, 0) })
}

/// Unweighted mean of per-class recall over the classes present in `labels`.
///
/// Panics when the slices differ in length or are empty.
pub fn balanced_accuracy(predictions: &[ErrorClass], labels: &[ErrorClass]) -> f64 {
    assert_eq!(predictions.len(), labels.len(), "predictions and labels differ in length");
    assert!(!labels.is_empty(), "balanced accuracy of an empty set");
    let mut hit = [0usize; 3];
    let mut total = [0usize; 3];
    for (&p, &l) in predictions.iter().zip(labels) {
        total[class_index(l)] += 1;
        hit[class_index(l)] += (p == l) as usize;
    }
    let present: Vec<f64> = (0..3).filter(|&c| total[c] > 0).map(|c| hit[c] as f64 / total[c] as f64).collect();
    present.iter().sum::<f64>() / present.len() as f64
}
