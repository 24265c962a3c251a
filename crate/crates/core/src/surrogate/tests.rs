use super::*;
use crate::image::Frame;
use crate::ingest::{BBox, PredictionLog, Provenance};
use crate::kpi::CannyParams;
use crate::metrics::ErrorClass::{self, Correct, Overcount, Undercount};

fn row(scene: &str, features: Vec<f64>, label: ErrorClass) -> FeatureRow {
    FeatureRow { scene_id: scene.into(), features, label }
}

fn table(rows: &[(f64, ErrorClass)]) -> FeatureTable {
    FeatureTable { rows: rows.iter().map(|&(x, l)| row("a", vec![x], l)).collect() }
}

#[test]
fn column_layout() {
    let names = column_names();
    assert_eq!(names.len(), FEATURE_COUNT);
    assert_eq!(names[0], "whole_avg_r");
    assert_eq!(names[4], "whole_edge_fraction");
    assert_eq!(names[5], "cell_0_0_avg_r");
    assert_eq!(names[84], "cell_3_3_edge_fraction");
    assert_eq!(names[85], "gt_avg_r");
    assert_eq!(names[94], "det_edge_fraction");
}

#[test]
fn stride_sets_row_count() {
    let frames: Vec<Frame> = (0..10).map(|i| Frame::filled(i, 32, 32, [90, 90, 90])).collect();
    let empty = PredictionLog::empty(Provenance::Prediction, 10);
    let gt = PredictionLog::empty(Provenance::GroundTruth, 10);
    let t = build_feature_table(&frames, &empty, &gt, "person", 5, "s", &CannyParams::default()).unwrap();
    assert_eq!(t.len(), 2);
    for r in &t.rows {
        assert_eq!(r.features.len(), FEATURE_COUNT);
        assert_eq!(r.label, Correct);
        for (i, v) in r.features.iter().enumerate() {
            if i % 5 == 4 {
                assert_eq!(*v, 0.0);
            } else {
                assert!((v - 90.0).abs() < 1e-9);
            }
        }
    }
    assert!(build_feature_table(&frames, &empty, &gt, "person", 0, "s", &CannyParams::default()).is_err());
}

#[test]
fn labels_follow_box_counts() {
    let frames = vec![Frame::filled(0, 32, 32, [10, 10, 10]), Frame::filled(1, 32, 32, [10, 10, 10])];
    let mut pred = PredictionLog::empty(Provenance::Prediction, 2);
    let mut gt = PredictionLog::empty(Provenance::GroundTruth, 2);
    gt.frames[0].push(BBox::new(0, 0, 8, 8, "person", 1.0));
    pred.frames[1].push(BBox::new(0, 0, 8, 8, "person", 1.0));
    pred.frames[1].push(BBox::new(8, 8, 8, 8, "car", 1.0));
    let t = build_feature_table(&frames, &pred, &gt, "person", 1, "s", &CannyParams::default()).unwrap();
    assert_eq!(t.labels(), vec![Undercount, Overcount]);
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let t = FeatureTable {
        rows: vec![
            row("x", (0..95).map(|i| i as f64 * 0.1).collect(), Undercount),
            row("x", (0..95).map(|i| 1.0 / (i + 1) as f64).collect(), Overcount),
        ],
    };
    t.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap().split(',').count(), 96);
    assert_eq!(FeatureTable::read_csv(&path, "x").unwrap(), t);
    std::fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(matches!(FeatureTable::read_csv(&path, "x"), Err(SurrogateError::InvalidTable(_))));
}

#[test]
fn separable_data_gives_depth_one_tree() {
    let t = table(&[(-3.0, Undercount), (-1.0, Undercount), (-0.5, Undercount), (0.0, Correct), (2.0, Correct)]);
    let m = train_tree(&t, DEFAULT_MAX_DEPTH, 0).unwrap();
    assert_eq!(m.root.depth(), 1);
    match &m.root {
        TreeNode::Split { column, threshold, .. } => {
            assert_eq!(*column, 0);
            assert_eq!(*threshold, -0.25);
        }
        leaf => panic!("expected a split, got {leaf:?}"),
    }
    assert_eq!(balanced_accuracy(&m.predict(&t), &t.labels()), 1.0);
}

#[test]
fn identical_rows_give_weighted_majority_leaf() {
    // three undercounts and one correct: balanced weights tie, lower class wins
    let t = table(&[(1.0, Undercount), (1.0, Undercount), (1.0, Undercount), (1.0, Correct)]);
    let m = train_tree(&t, DEFAULT_MAX_DEPTH, 0).unwrap();
    match m.root {
        TreeNode::Leaf { class, votes } => {
            assert_eq!(class, Undercount);
            assert!((votes[0] - votes[1]).abs() < 1e-12);
        }
        split => panic!("expected a leaf, got {split:?}"),
    }
}

#[test]
fn degenerate_labels_are_rejected() {
    assert!(matches!(
        train_tree(&table(&[(1.0, Correct), (2.0, Correct)]), 10, 0),
        Err(SurrogateError::DegenerateLabels(_))
    ));
    assert!(matches!(train_tree(&table(&[(1.0, Correct)]), 10, 0), Err(SurrogateError::DegenerateLabels(_))));
}

#[test]
fn depth_is_capped() {
    let rows: Vec<(f64, ErrorClass)> =
        (0..64).map(|i| (i as f64, [Undercount, Correct, Overcount][(i * 7 + i / 3) % 3])).collect();
    let t = table(&rows);
    for d in [0, 1, 3] {
        assert!(train_tree(&t, d, 0).unwrap().root.depth() <= d);
    }
}

#[test]
fn seed_does_not_change_the_tree() {
    let rows: Vec<(f64, ErrorClass)> = (0..30).map(|i| ((i * 13 % 30) as f64, [Undercount, Correct][i % 2])).collect();
    let t = table(&rows);
    let a = serde_json::to_string(&train_tree(&t, 10, 1).unwrap()).unwrap();
    let b = serde_json::to_string(&train_tree(&t, 10, 99).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn balanced_accuracy_examples() {
    let labels = [Undercount, Correct, Correct, Overcount];
    assert_eq!(balanced_accuracy(&labels, &labels), 1.0);
    // recalls 1.0, 0.5, 0.0
    assert_eq!(balanced_accuracy(&[Undercount, Correct, Overcount, Correct], &labels), 0.5);
    assert!((balanced_accuracy(&[Correct; 4], &labels) - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn gini_of_pure_and_even_nodes() {
    let w = [1.0, 1.0, 1.0];
    assert_eq!(gini(&[5, 0, 0], &w).0, 0.0);
    assert!((gini(&[2, 2, 2], &w).0 - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(class_weights(&[Undercount, Correct, Correct, Correct]), [2.0, 2.0 / 3.0, 0.0]);
    assert_eq!(midpoint(1.0, 2.0), Some(1.5));
    assert_eq!(midpoint(1.0, f64::from_bits(1.0f64.to_bits() + 1)), Some(1.0));
}

#[test]
fn same_scene_train_and_test_agree() {
    let t = FeatureTable {
        rows: (0..40)
            .map(|i| row("s", vec![(i % 7) as f64, (i % 5) as f64], [Undercount, Correct, Overcount][i % 3]))
            .collect(),
    };
    let s = vec!["s".to_string()];
    let r = evaluate_split(&[t], &s, &s, 10, 0).unwrap();
    assert_eq!(r.train_balanced_accuracy, r.test_balanced_accuracy);
    assert_eq!(r.train_rows, 40);
}

#[test]
fn overlapping_or_empty_splits_are_rejected() {
    let t = FeatureTable {
        rows: vec![row("a", vec![0.0], Correct), row("a", vec![1.0], Undercount), row("b", vec![0.0], Correct)],
    };
    let a = || vec!["a".to_string()];
    assert!(evaluate_split(&[t.clone()], &a(), &["a".into(), "b".into()], 10, 0).is_err());
    assert!(evaluate_split(&[t], &a(), &["c".into()], 10, 0).is_err());
}
