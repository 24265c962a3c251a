use serde::{Deserialize, Serialize};

use super::SynthError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventFeature {
    /// Shifts the background gray level by `magnitude`.
    LuminosityBackground,
    /// A placebo event that changes nothing.
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub frame: usize,
    pub feature: EventFeature,
    /// Gray levels added to the background from `frame` on.
    pub magnitude: f64,
    /// Frames over which the change ramps in linearly; 0 for a step.
    #[serde(default)]
    pub ramp: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    pub base_detect_prob: f64,
    /// Below this background level a person is detected with the degraded
    /// probability.
    pub luminosity_knee: f64,
    pub degraded_detect_prob: f64,
    /// Mean number of spurious boxes per frame.
    pub false_positive_rate: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self { base_detect_prob: 0.95, luminosity_knee: 90.0, degraded_detect_prob: 0.45, false_positive_rate: 0.0 }
    }
}

/// A grid cell where people are missed with extra probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub row: usize,
    pub col: usize,
    pub miss_prob: f64,
}

/// A static person-shaped rectangle the detector sometimes reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoy {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
    /// Gray levels added on top of the background.
    pub contrast: f64,
    pub fire_prob: f64,
}

/// People walk back and forth, one per horizontal lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeopleModel {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Gray levels added on top of the background inside a person.
    pub contrast: f64,
    pub min_speed: f64,
    pub max_speed: f64,
}

impl Default for PeopleModel {
    fn default() -> Self {
        Self { count: 4, width: 6, height: 8, contrast: 80.0, min_speed: 0.3, max_speed: 1.5 }
    }
}

fn default_background() -> f64 {
    140.0
}
fn default_grid() -> usize {
    4
}
fn default_bandwidth() -> usize {
    20
}
fn default_label() -> String {
    "person".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub frame_count: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
    #[serde(default = "default_background")]
    pub background: f64,
    /// Per-channel offset added to the background.
    #[serde(default)]
    pub tint: [f64; 3],
    #[serde(default)]
    pub events: Vec<StepEvent>,
    #[serde(default)]
    pub detector: DetectorModel,
    #[serde(default)]
    pub zones: Vec<Zone>,
    #[serde(default = "default_grid")]
    pub zone_grid: usize,
    #[serde(default)]
    pub decoys: Vec<Decoy>,
    #[serde(default)]
    pub people: PeopleModel,
    /// Standard deviation of per-pixel gray noise.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Events must lie strictly inside `(bandwidth, frame_count - bandwidth)`.
    #[serde(default = "default_bandwidth")]
    pub bandwidth: usize,
    #[serde(default = "default_label")]
    pub label: String,
}

/// Margin kept between people and the frame border.
pub(crate) const BORDER: usize = 4;

impl ScenarioSpec {
    /// A lit room that goes dark: background 140 drops to 60 at frame 1000 of
    /// 2000, and detection degrades below gray level 90.
    pub fn lighting(seed: u64) -> Self {
        Self {
            frame_count: 2000,
            width: 64,
            height: 64,
            seed,
            background: 140.0,
            tint: [0.0; 3],
            events: vec![StepEvent {
                frame: 1000,
                feature: EventFeature::LuminosityBackground,
                magnitude: -80.0,
                ramp: 0,
            }],
            detector: DetectorModel::default(),
            zones: Vec::new(),
            zone_grid: 4,
            decoys: Vec::new(),
            people: PeopleModel::default(),
            noise_sigma: 8.0,
            bandwidth: 20,
            label: "person".into(),
        }
    }

    /// One of three scenes whose errors come from scene-specific failure
    /// zones and decoys. Scenes 0 and 1 are the training scenes; scene 2 has
    /// a different look and different failure places.
    pub fn cross_scene(scene: usize, seed: u64) -> Self {
        let (background, tint, zones, decoy): (f64, [f64; 3], &[(usize, usize)], (usize, usize, f64)) = match scene % 3
        {
            0 => (150.0, [10.0, 0.0, -10.0], &[(0, 1), (2, 3)], (0, 21, 40.0)),
            1 => (160.0, [-10.0, 5.0, 10.0], &[(1, 0), (3, 2)], (60, 35, 40.0)),
            _ => (70.0, [0.0, -10.0, 15.0], &[(0, 3), (1, 2), (2, 0)], (60, 7, 110.0)),
        };
        Self {
            frame_count: 600,
            width: 64,
            height: 64,
            seed: seed.wrapping_mul(3).wrapping_add(scene as u64),
            background,
            tint,
            events: Vec::new(),
            detector: DetectorModel {
                base_detect_prob: 0.97,
                luminosity_knee: 0.0,
                degraded_detect_prob: 0.97,
                false_positive_rate: 0.0,
            },
            zones: zones.iter().map(|&(row, col)| Zone { row, col, miss_prob: 0.9 }).collect(),
            zone_grid: 4,
            decoys: vec![Decoy { x: decoy.0, y: decoy.1, w: 4, h: 8, contrast: decoy.2, fire_prob: 0.3 }],
            people: PeopleModel::default(),
            noise_sigma: 6.0,
            bandwidth: 20,
            label: "person".into(),
        }
    }

    /// Constant lighting with one failure zone in the right half, cell
    /// `(1, 3)` of the 4×4 grid.
    pub fn planted_zone(seed: u64) -> Self {
        Self {
            frame_count: 400,
            events: Vec::new(),
            zones: vec![Zone { row: 1, col: 3, miss_prob: 0.9 }],
            noise_sigma: 4.0,
            ..Self::lighting(seed)
        }
    }

    /// Background gray level at frame `t`.
    pub fn background_at(&self, t: usize) -> f64 {
        let mut level = self.background;
        for e in self.events.iter().filter(|e| e.feature == EventFeature::LuminosityBackground) {
            let progress = if t < e.frame {
                0.0
            } else if e.ramp == 0 || t >= e.frame + e.ramp {
                1.0
            } else {
                (t - e.frame) as f64 / e.ramp as f64
            };
            level += e.magnitude * progress;
        }
        level
    }

    /// Top edge of each person's lane.
    pub(crate) fn lane_tops(&self) -> Vec<usize> {
        let n = self.people.count;
        let pitch = (self.height - 2 * BORDER) / n.max(1);
        (0..n).map(|i| BORDER + i * pitch + (pitch - self.people.height) / 2).collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.frame_count == 0 || self.width == 0 || self.height == 0 {
            return bad("frame_count, width and height must be positive".into());
        }
        for e in &self.events {
            if e.frame <= self.bandwidth || e.frame + self.bandwidth >= self.frame_count {
                return bad(format!(
                    "event at frame {} must lie strictly inside ({}, {})",
                    e.frame,
                    self.bandwidth,
                    self.frame_count.saturating_sub(self.bandwidth)
                ));
            }
            if e.feature != EventFeature::None && (e.magnitude == 0.0 || !e.magnitude.is_finite()) {
                return bad(format!("event at frame {} needs a nonzero magnitude", e.frame));
            }
        }
        let d = &self.detector;
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(d.base_detect_prob) || !prob(d.degraded_detect_prob) || d.degraded_detect_prob > d.base_detect_prob {
            return bad("detection probabilities must satisfy 0 <= degraded <= base <= 1".into());
        }
        if !(d.false_positive_rate >= 0.0 && d.false_positive_rate.is_finite()) {
            return bad("false_positive_rate must be a finite non-negative rate".into());
        }
        if self.zone_grid == 0
            || self.zones.iter().any(|z| z.row >= self.zone_grid || z.col >= self.zone_grid || !prob(z.miss_prob))
        {
            return bad("zones must lie inside the grid with miss_prob in [0, 1]".into());
        }
        let p = &self.people;
        if p.count > 0 {
            if p.width < 1 || p.height < 1 || self.width < 2 * BORDER + p.width + 1 {
                return bad("people do not fit the frame".into());
            }
            if self.height < 2 * BORDER || (self.height - 2 * BORDER) / p.count < p.height + 2 {
                return bad(format!("{} lanes of height {} do not fit the frame", p.count, p.height));
            }
            if !(p.min_speed >= 0.0 && p.max_speed >= p.min_speed) {
                return bad("person speeds must satisfy 0 <= min <= max".into());
            }
        }
        for dc in &self.decoys {
            if dc.w == 0 || dc.h == 0 || dc.x + dc.w > self.width || dc.y + dc.h > self.height || !prob(dc.fire_prob) {
                return bad("decoys must be non-empty, inside the frame, with fire_prob in [0, 1]".into());
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be finite and non-negative".into());
        }
        // the rendered scene must stay inside [0, 255] before noise
        let mut lo = self.background;
        let mut hi = self.background;
        let mut level = self.background;
        for e in self.events.iter().filter(|e| e.feature == EventFeature::LuminosityBackground) {
            level += e.magnitude;
            lo = lo.min(level);
            hi = hi.max(level);
        }
        let tint_lo = self.tint.iter().copied().fold(0.0f64, f64::min);
        let tint_hi = self.tint.iter().copied().fold(0.0f64, f64::max);
        let extra = self.decoys.iter().map(|d| d.contrast).fold(if p.count > 0 { p.contrast } else { 0.0 }, f64::max);
        let extra_lo =
            self.decoys.iter().map(|d| d.contrast).fold(if p.count > 0 { p.contrast } else { 0.0 }, f64::min).min(0.0);
        if lo + tint_lo + extra_lo < 0.0 || hi + tint_hi + extra.max(0.0) > 255.0 {
            return bad("background, tint and contrasts leave the 0..=255 range".into());
        }
        if self.label.is_empty() {
            return bad("label must be non-empty".into());
        }
        Ok(())
    }
}
