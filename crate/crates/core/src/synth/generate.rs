use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::spec::{BORDER, EventFeature, ScenarioSpec};
use super::{PlantedPair, PlantedTruth, SynthError};
use crate::image::Frame;
use crate::ingest::{BBox, Fps, Manifest, PredictionLog, Provenance, io_err};
use crate::kpi::Region;
use crate::project::{Project, ProjectConfig, ProjectParts};
use crate::query::Sign;

/// A generated project held in memory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub manifest: Manifest,
    pub frames: Vec<Frame>,
    pub ground_truth: PredictionLog,
    pub predictions: PredictionLog,
    pub truth: PlantedTruth,
}

const LAYOUT: u64 = 1;
const PIXELS: u64 = 2;
const DETECTOR: u64 = 3;

/// Counter-based streams: each (purpose, frame) pair draws from its own stream.
fn rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream((purpose << 32) | index);
    r
}

/// Position along a back-and-forth path of length `span`.
fn ping_pong(u: f64, span: f64) -> f64 {
    if span <= 0.0 {
        return 0.0;
    }
    let m = u.rem_euclid(2.0 * span);
    if m <= span { m } else { 2.0 * span - m }
}

struct Walker {
    top: usize,
    phase: f64,
    speed: f64,
}

impl Scenario {
    pub fn into_project(self, config: ProjectConfig) -> Result<Project, SynthError> {
        Project::from_parts(
            ProjectParts {
                manifest: self.manifest,
                frames: Some(self.frames),
                predictions: Some(self.predictions),
                ground_truth: Some(self.ground_truth),
                externals: Vec::new(),
                kpis: Vec::new(),
            },
            config,
        )
        .map_err(SynthError::Project)
    }

    /// Writes an ingest-compatible project directory plus `scenario.json`
    /// and `truth.json`.
    pub fn write(&self, dir: &Path) -> Result<(), SynthError> {
        let io = |e: crate::ingest::IngestError| SynthError::Io(e.to_string());
        let write = |path: &Path, bytes: &[u8]| std::fs::write(path, bytes).map_err(|e| io(io_err(path, e)));
        for sub in ["frames", "logs", "series", "results"] {
            let d = dir.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| io(io_err(&d, e)))?;
        }
        write(&dir.join("manifest.json"), pretty(&self.manifest).as_bytes())?;
        write(&dir.join("scenario.json"), pretty(&self.spec).as_bytes())?;
        write(&dir.join("truth.json"), pretty(&self.truth).as_bytes())?;
        for f in &self.frames {
            write(&dir.join(self.manifest.frame_path(f.index)), &f.to_ppm())?;
        }
        self.ground_truth.write_jsonl(&dir.join("logs/ground_truth.jsonl")).map_err(io)?;
        self.predictions.write_jsonl(&dir.join("logs/predictions.jsonl")).map_err(io)?;
        Ok(())
    }
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("scenario types serialize") + "\n"
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario, SynthError> {
    spec.validate()?;
    let n = spec.frame_count;
    let manifest = Manifest {
        width: spec.width,
        height: spec.height,
        frame_count: n,
        fps: Fps::default(),
        frame_pattern: "frames/%06d.ppm".into(),
        label_of_interest: spec.label.clone(),
    };

    let p = &spec.people;
    let span = (spec.width - 2 * BORDER - p.width) as f64;
    let mut layout = rng(spec.seed, LAYOUT, 0);
    let walkers: Vec<Walker> = spec
        .lane_tops()
        .into_iter()
        .map(|top| Walker {
            top,
            phase: layout.random::<f64>() * 2.0 * span,
            speed: p.min_speed + layout.random::<f64>() * (p.max_speed - p.min_speed),
        })
        .collect();
    let zone_cells: Vec<(Region, f64)> = spec
        .zones
        .iter()
        .map(|z| {
            let cell = Region::grid_cell(spec.width, spec.height, spec.zone_grid, spec.zone_grid, z.row, z.col)
                .expect("zones validated");
            (cell, z.miss_prob)
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");

    let mut frames = Vec::with_capacity(n);
    let mut gt = PredictionLog::empty(Provenance::GroundTruth, n);
    let mut pred = PredictionLog::empty(Provenance::Prediction, n);
    let mut plane = vec![0.0f64; spec.width * spec.height];
    for t in 0..n {
        let level = spec.background_at(t);
        plane.fill(level);
        let mut people = Vec::with_capacity(walkers.len());
        for w in &walkers {
            let x = BORDER + ping_pong(w.phase + w.speed * t as f64, span).round() as usize;
            people.push(BBox::new(x as u32, w.top as u32, p.width as u32, p.height as u32, &spec.label, 1.0));
            add_rect(&mut plane, spec.width, x, w.top, p.width, p.height, p.contrast);
        }
        for d in &spec.decoys {
            add_rect(&mut plane, spec.width, d.x, d.y, d.w, d.h, d.contrast);
        }
        frames.push(render(t, spec, &plane, &noise));

        let mut det_rng = rng(spec.seed, DETECTOR, t as u64);
        let base = if level >= spec.detector.luminosity_knee {
            spec.detector.base_detect_prob
        } else {
            spec.detector.degraded_detect_prob
        };
        for b in &people {
            let (cx, cy) = b.center();
            let miss =
                zone_cells.iter().filter(|(c, _)| c.contains_point(cx, cy)).fold(1.0, |keep, (_, m)| keep * (1.0 - m));
            let detected = det_rng.random::<f64>() < base * miss;
            let score = 0.5 + 0.5 * det_rng.random::<f64>();
            let (dx, dy) = (det_rng.random_range(-1i64..=1), det_rng.random_range(-1i64..=1));
            if detected {
                pred.frames[t].push(jittered(b, dx, dy, spec.width, spec.height, score));
            }
        }
        for d in &spec.decoys {
            let fires = det_rng.random::<f64>() < d.fire_prob;
            let score = 0.3 + 0.5 * det_rng.random::<f64>();
            if fires {
                pred.frames[t].push(BBox::new(d.x as u32, d.y as u32, d.w as u32, d.h as u32, &spec.label, score));
            }
        }
        if spec.detector.false_positive_rate > 0.0 {
            let k =
                Poisson::new(spec.detector.false_positive_rate).expect("positive rate").sample(&mut det_rng) as usize;
            for _ in 0..k {
                let w = p.width.min(spec.width);
                let h = p.height.min(spec.height);
                let x = det_rng.random_range(0..=spec.width - w);
                let y = det_rng.random_range(0..=spec.height - h);
                let score = 0.3 + 0.4 * det_rng.random::<f64>();
                pred.frames[t].push(BBox::new(x as u32, y as u32, w as u32, h as u32, &spec.label, score));
            }
        }
        gt.frames[t] = people;
    }

    Ok(Scenario {
        truth: planted_truth(spec),
        spec: spec.clone(),
        manifest,
        frames,
        ground_truth: gt,
        predictions: pred,
    })
}

fn add_rect(plane: &mut [f64], width: usize, x: usize, y: usize, w: usize, h: usize, v: f64) {
    for row in y..y + h {
        for px in &mut plane[row * width + x..row * width + x + w] {
            *px += v;
        }
    }
}

fn render(t: usize, spec: &ScenarioSpec, plane: &[f64], noise: &Normal<f64>) -> Frame {
    let mut r = rng(spec.seed, PIXELS, t as u64);
    let mut data = Vec::with_capacity(plane.len() * 3);
    for &v in plane {
        let e = if spec.noise_sigma > 0.0 { noise.sample(&mut r) } else { 0.0 };
        for tint in spec.tint {
            data.push((v + tint + e).round().clamp(0.0, 255.0) as u8);
        }
    }
    Frame::from_rgb(t, spec.width, spec.height, data)
}

fn jittered(b: &BBox, dx: i64, dy: i64, width: usize, height: usize, score: f64) -> BBox {
    let x = (b.x as i64 + dx).clamp(0, (width - b.w as usize) as i64) as u32;
    let y = (b.y as i64 + dy).clamp(0, (height - b.h as usize) as i64) as u32;
    BBox::new(x, y, b.w, b.h, &b.label, score)
}

fn planted_truth(spec: &ScenarioSpec) -> PlantedTruth {
    let pairs = spec
        .events
        .iter()
        .filter(|e| e.feature == EventFeature::LuminosityBackground)
        .filter(|e| {
            let before = spec.background_at(e.frame - 1);
            let after = spec.background_at(e.frame + e.ramp);
            (before >= spec.detector.luminosity_knee) != (after >= spec.detector.luminosity_knee)
        })
        .map(|e| PlantedPair {
            kpi: "luminosity".into(),
            metric: "count_error".into(),
            cut: e.frame,
            sign: if e.magnitude < 0.0 { Sign::Falling } else { Sign::Rising },
        })
        .collect();
    PlantedTruth {
        pairs,
        null_kpis: vec!["edge_fraction".into()],
        zones: spec.zones.iter().map(|z| (z.row, z.col)).collect(),
    }
}
