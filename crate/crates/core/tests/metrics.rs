mod oracles;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vizex_core::ingest::{BBox, PredictionLog, Provenance};
use vizex_core::metrics::{
    ErrorClass, HeatNormalization, HeatmapParams, correct_rate, error_heatmap, error_series, match_boxes,
};
use vizex_core::synth::{ScenarioSpec, generate_scenario};

const W: usize = 48;
const H: usize = 32;

fn random_box(rng: &mut ChaCha8Rng, label: &str) -> BBox {
    let w = rng.random_range(2..12);
    let h = rng.random_range(2..12);
    BBox::new(
        rng.random_range(0..=(W - w) as u32),
        rng.random_range(0..=(H - h) as u32),
        w as u32,
        h as u32,
        label,
        0.9,
    )
}

fn random_logs(seed: u64, frames: usize) -> (PredictionLog, PredictionLog) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gt = PredictionLog::empty(Provenance::GroundTruth, frames);
    let mut pred = PredictionLog::empty(Provenance::Prediction, frames);
    for t in 0..frames {
        for _ in 0..rng.random_range(0..5) {
            let b = random_box(&mut rng, "person");
            // most detections sit near a true box
            if rng.random_bool(0.7) {
                let dx = rng.random_range(0..=1);
                pred.frames[t].push(BBox::new((b.x + dx).min((W as u32) - b.w), b.y, b.w, b.h, "person", 0.8));
            }
            gt.frames[t].push(b);
        }
        for _ in 0..rng.random_range(0..3) {
            let label = if rng.random_bool(0.5) { "person" } else { "car" };
            pred.frames[t].push(random_box(&mut rng, label));
        }
    }
    (pred, gt)
}

fn key(b: &BBox) -> (u32, u32, u32, u32) {
    (b.x, b.y, b.w, b.h)
}

#[test]
fn heat_mass_equals_unmatched_counts() {
    for seed in 0..50 {
        let (pred, gt) = random_logs(seed, 30);
        let params = HeatmapParams { rows: 3, cols: 4, ..HeatmapParams::default() };
        let (over, under) = error_heatmap(&pred, &gt, "person", W, H, &params);
        let (mut ug, mut ud) = (0, 0);
        for t in 0..30 {
            let g: Vec<_> = gt.labeled(t, "person").map(key).collect();
            let d: Vec<_> = pred.labeled(t, "person").map(key).collect();
            let (a, b) = oracles::unmatched_counts(&g, &d, params.iou_threshold);
            ug += a;
            ud += b;
        }
        assert_eq!(under.total_count(), ug as u64, "seed {seed}");
        assert_eq!(over.total_count(), ud as u64, "seed {seed}");
        let mass: f64 = under.cells.iter().flatten().sum();
        assert!((mass * 30.0 - ug as f64).abs() < 1e-9);
    }
}

#[test]
fn planted_zone_is_the_hottest_undercount_cell() {
    let s = generate_scenario(&ScenarioSpec::planted_zone(4)).unwrap();
    let params = HeatmapParams::default();
    let (_, under) = error_heatmap(&s.predictions, &s.ground_truth, "person", 64, 64, &params);
    assert_eq!(under.argmax(), (1, 3));
    let right: u64 = under.counts.iter().map(|r| r[2] + r[3]).sum();
    let left: u64 = under.counts.iter().map(|r| r[0] + r[1]).sum();
    assert!(right > left);
}

#[test]
fn error_series_matches_recount() {
    let (pred, gt) = random_logs(99, 200);
    let s = error_series(&pred, &gt, "person");
    for (t, v) in &s.points {
        let d = pred.frames[*t].iter().filter(|b| b.label == "person").count() as i64;
        let g = gt.frames[*t].iter().filter(|b| b.label == "person").count() as i64;
        assert_eq!(*v, (d - g).signum() as f64);
    }
    let rate = correct_rate(&s, 10);
    let naive = oracles::naive_window(
        &s.points.iter().map(|p| if p.1 == 0.0 { 1.0 } else { 0.0 }).collect::<Vec<_>>(),
        10,
        "mean",
    );
    for (a, b) in rate.points.iter().zip(&naive) {
        assert_eq!(a.0, b.0);
        assert!((a.1 - b.1).abs() < 1e-12);
    }
}

#[test]
fn raw_and_per_frame_normalization_differ_by_frame_count() {
    let (pred, gt) = random_logs(5, 40);
    let raw = HeatmapParams { normalization: HeatNormalization::Raw, ..HeatmapParams::default() };
    let (o_raw, _) = error_heatmap(&pred, &gt, "person", W, H, &raw);
    let (o_pf, _) = error_heatmap(&pred, &gt, "person", W, H, &HeatmapParams::default());
    for (a, b) in o_raw.cells.iter().flatten().zip(o_pf.cells.iter().flatten()) {
        assert!((a / 40.0 - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matching_is_permutation_invariant_and_conserves_boxes(seed in any::<u64>(), rot in 0usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt: Vec<BBox> = (0..rng.random_range(0..6)).map(|_| random_box(&mut rng, "person")).collect();
        let det: Vec<BBox> = (0..rng.random_range(0..6)).map(|_| random_box(&mut rng, "person")).collect();
        let m = match_boxes(&gt, &det, 0.3);
        prop_assert_eq!(m.pairs.len() + m.unmatched_gt.len(), gt.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_det.len(), det.len());
        let mut det2 = det.clone();
        if !det2.is_empty() {
            let k = rot % det2.len();
            det2.rotate_left(k);
        }
        prop_assert_eq!(match_boxes(&gt, &det2, 0.3).pairs.len(), m.pairs.len());
    }

    #[test]
    fn swapping_logs_negates_errors_and_swaps_heatmaps(seed in 0u64..1000) {
        let (pred, gt) = random_logs(seed, 8);
        let swapped_pred = PredictionLog { provenance: Provenance::Prediction, frames: gt.frames.clone() };
        let swapped_gt = PredictionLog { provenance: Provenance::GroundTruth, frames: pred.frames.clone() };
        let a = error_series(&pred, &gt, "person");
        let b = error_series(&swapped_pred, &swapped_gt, "person");
        for (x, y) in a.points.iter().zip(&b.points) {
            let cx = ErrorClass::from_value(x.1 as i64).unwrap();
            prop_assert_eq!(cx.negate().value() as f64, y.1);
        }
        let params = HeatmapParams::default();
        let (o1, u1) = error_heatmap(&pred, &gt, "person", W, H, &params);
        let (o2, u2) = error_heatmap(&swapped_pred, &swapped_gt, "person", W, H, &params);
        prop_assert_eq!(o1.counts, u2.counts);
        prop_assert_eq!(u1.counts, o2.counts);
    }
}
