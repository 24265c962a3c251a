//! Project manifests, frame sequences, detection logs and external series.
//!
//! On-disk layout of a project directory:
//!
//! ```text
//! manifest.json
//! frames/            one PPM (P6) or PGM (P5) file per frame
//! logs/predictions.jsonl
//! logs/ground_truth.jsonl
//! series/*.csv       external series (`frame,value`); files with a
//!                    `.meta.json` sidecar are exported KPI/metric series
//! results/*.json
//! ```

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::image::{Frame, Pixels as _, decode_pnm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("frame {0} is missing")]
    MissingFrame(usize),
    #[error("frame {0} does not match the manifest dimensions")]
    DimensionMismatch(usize),
    #[error("malformed image {path}: {reason}")]
    MalformedImage { path: PathBuf, reason: String },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("line {line}: frame {frame} is outside the manifest range")]
    FrameOutOfRange { line: usize, frame: i64 },
    #[error("duplicate sample for frame {0}")]
    DuplicateFrame(usize),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

pub(crate) fn io_err(path: &Path, e: impl fmt::Display) -> IngestError {
    IngestError::Io { path: path.to_path_buf(), message: e.to_string() }
}

/// Frames per second as a positive rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fps {
    pub num: u64,
    pub den: u64,
}

impl Default for Fps {
    fn default() -> Self {
        Self { num: 1, den: 1 }
    }
}

impl Fps {
    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl Serialize for Fps {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.den == 1 { s.serialize_u64(self.num) } else { s.serialize_str(&format!("{}/{}", self.num, self.den)) }
    }
}

impl<'de> Deserialize<'de> for Fps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(num) => Ok(Fps { num, den: 1 }),
            Raw::Text(t) => {
                let (n, dn) = t.split_once('/').unwrap_or((t.as_str(), "1"));
                let parse = |s: &str| s.trim().parse::<u64>().map_err(serde::de::Error::custom);
                Ok(Fps { num: parse(n)?, den: parse(dn)? })
            }
        }
    }
}

fn default_label() -> String {
    "person".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    #[serde(default)]
    pub fps: Fps,
    pub frame_pattern: String,
    #[serde(default = "default_label")]
    pub label_of_interest: String,
}

impl Manifest {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::MalformedManifest(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be at least 1");
        }
        if self.frame_count == 0 {
            return bad("frame_count must be at least 1");
        }
        if self.fps.num == 0 || self.fps.den == 0 {
            return bad("fps must be positive");
        }
        let pattern = FramePattern::parse(&self.frame_pattern)?;
        if pattern.width.is_none() && self.frame_count > 1 {
            return bad("frame_pattern needs a %d placeholder for more than one frame");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| IngestError::MalformedManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    /// Relative path of frame `index`.
    pub fn frame_path(&self, index: usize) -> String {
        FramePattern::parse(&self.frame_pattern).expect("manifest validated").render(index)
    }
}

/// A printf-style filename template with at most one `%d` / `%0Nd` slot.
struct FramePattern {
    prefix: String,
    suffix: String,
    /// `Some(pad)` when a placeholder is present.
    width: Option<usize>,
}

impl FramePattern {
    fn parse(pattern: &str) -> Result<Self, IngestError> {
        let bad = |m: &str| IngestError::MalformedManifest(format!("frame_pattern {pattern:?}: {m}"));
        let mut prefix = String::new();
        let mut suffix = String::new();
        let mut width = None;
        let mut chars = pattern.chars().peekable();
        while let Some(c) = chars.next() {
            let out = if width.is_some() { &mut suffix } else { &mut prefix };
            if c != '%' {
                out.push(c);
                continue;
            }
            if chars.peek() == Some(&'%') {
                chars.next();
                out.push('%');
                continue;
            }
            if width.is_some() {
                return Err(bad("more than one placeholder"));
            }
            let mut digits = String::new();
            while let Some(d) = chars.peek().copied().filter(char::is_ascii_digit) {
                digits.push(d);
                chars.next();
            }
            if chars.next() != Some('d') {
                return Err(bad("only %d and %0Nd placeholders are supported"));
            }
            width = Some(digits.trim_start_matches('0').parse().unwrap_or(0));
        }
        Ok(Self { prefix, suffix, width })
    }

    fn render(&self, index: usize) -> String {
        match self.width {
            Some(pad) => format!("{}{:0pad$}{}", self.prefix, index, self.suffix),
            None => self.prefix.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub manifest: Manifest,
    pub frames: Vec<Frame>,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Loads every frame named by the manifest. Frame paths are resolved
/// relative to the manifest's directory.
pub fn load_frame_sequence(manifest_path: &Path) -> Result<FrameSequence, IngestError> {
    let manifest = Manifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    load_frames(root, &manifest).map(|frames| FrameSequence { manifest, frames })
}

pub(crate) fn load_frames(root: &Path, manifest: &Manifest) -> Result<Vec<Frame>, IngestError> {
    let decoded: Vec<Result<Frame, IngestError>> = (0..manifest.frame_count)
        .into_par_iter()
        .map(|i| {
            let path = root.join(manifest.frame_path(i));
            let bytes = fs::read(&path).map_err(|_| IngestError::MissingFrame(i))?;
            let frame =
                decode_pnm(i, &bytes).map_err(|e| IngestError::MalformedImage { path: path.clone(), reason: e.0 })?;
            if frame.width() != manifest.width || frame.height() != manifest.height {
                return Err(IngestError::DimensionMismatch(i));
            }
            Ok(frame)
        })
        .collect();
    // report the lowest-index failure regardless of scheduling
    decoded.into_iter().collect()
}

/// An axis-aligned box in integer pixels, already clipped to the frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub label: String,
    pub score: f64,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32, label: &str, score: f64) -> Self {
        Self { x, y, w, h, label: label.to_string(), score }
    }

    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x as f64 + self.w as f64 / 2.0, self.y as f64 + self.h as f64 / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Prediction,
    GroundTruth,
}

/// Per-frame boxes. Frames without a record hold an empty list.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLog {
    pub provenance: Provenance,
    pub frames: Vec<Vec<BBox>>,
}

impl PredictionLog {
    pub fn empty(provenance: Provenance, frame_count: usize) -> Self {
        Self { provenance, frames: vec![Vec::new(); frame_count] }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn boxes(&self, frame: usize) -> &[BBox] {
        &self.frames[frame]
    }

    pub fn labeled<'a>(&'a self, frame: usize, label: &'a str) -> impl Iterator<Item = &'a BBox> + 'a {
        self.frames[frame].iter().filter(move |b| b.label == label)
    }

    /// Writes the log as JSON Lines, one record per non-empty frame.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), IngestError> {
        let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(|e| io_err(path, e))?);
        for (frame, boxes) in self.frames.iter().enumerate().filter(|(_, b)| !b.is_empty()) {
            let line = serde_json::to_string(&RawRecord {
                frame: frame as i64,
                boxes: boxes
                    .iter()
                    .map(|b| RawBox {
                        x: b.x as i64,
                        y: b.y as i64,
                        w: b.w as i64,
                        h: b.h as i64,
                        label: b.label.clone(),
                        score: Some(b.score),
                    })
                    .collect(),
            })
            .expect("records serialize");
            writeln!(out, "{line}").map_err(|e| io_err(path, e))?;
        }
        out.flush().map_err(|e| io_err(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    frame: i64,
    #[serde(default)]
    boxes: Vec<RawBox>,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    x: i64,
    y: i64,
    w: i64,
    h: i64,
    label: String,
    #[serde(default)]
    score: Option<f64>,
}

pub fn load_detection_log(path: &Path, manifest: &Manifest) -> Result<PredictionLog, IngestError> {
    load_log(path, manifest, Provenance::Prediction)
}

/// Same format as detection logs; scores are forced to 1.0.
pub fn load_ground_truth(path: &Path, manifest: &Manifest) -> Result<PredictionLog, IngestError> {
    load_log(path, manifest, Provenance::GroundTruth)
}

fn load_log(path: &Path, manifest: &Manifest, provenance: Provenance) -> Result<PredictionLog, IngestError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut log = PredictionLog::empty(provenance, manifest.frame_count);
    let mut seen = vec![false; manifest.frame_count];
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| IngestError::MalformedRecord { line: line_no, reason };
        let record: RawRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if record.frame < 0 || record.frame as usize >= manifest.frame_count {
            return Err(IngestError::FrameOutOfRange { line: line_no, frame: record.frame });
        }
        let frame = record.frame as usize;
        if std::mem::replace(&mut seen[frame], true) {
            return Err(malformed(format!("second record for frame {frame}")));
        }
        for raw in record.boxes {
            let score = match provenance {
                Provenance::GroundTruth => 1.0,
                Provenance::Prediction => raw.score.unwrap_or(1.0),
            };
            if !(0.0..=1.0).contains(&score) {
                return Err(malformed(format!("score {score} outside [0, 1]")));
            }
            if raw.w <= 0 || raw.h <= 0 {
                return Err(malformed("box extents must be positive".into()));
            }
            let bbox = clip_box(&raw, manifest.width, manifest.height, score)
                .ok_or_else(|| malformed("box lies outside the frame".into()))?;
            log.frames[frame].push(bbox);
        }
    }
    Ok(log)
}

fn clip_box(raw: &RawBox, width: usize, height: usize, score: f64) -> Option<BBox> {
    let x0 = raw.x.max(0);
    let y0 = raw.y.max(0);
    let x1 = (raw.x + raw.w).min(width as i64);
    let y1 = (raw.y + raw.h).min(height as i64);
    (x1 > x0 && y1 > y0).then(|| BBox {
        x: x0 as u32,
        y: y0 as u32,
        w: (x1 - x0) as u32,
        h: (y1 - y0) as u32,
        label: raw.label.clone(),
        score,
    })
}

/// A sensor stream aligned to frame indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSeries {
    pub name: String,
    pub samples: Vec<(usize, f64)>,
}

pub fn load_external_series(path: &Path, name: &str) -> Result<ExternalSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io_err(path, e))?;
    let headers = reader.headers().map_err(|e| IngestError::MalformedRow { line: 1, reason: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != ["frame", "value"] {
        return Err(IngestError::MalformedRow { line: 1, reason: "header must be `frame,value`".into() });
    }
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IngestError::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: &str| IngestError::MalformedRow { line, reason: reason.to_string() };
        let frame: usize = record[0].parse().map_err(|_| bad("frame must be a non-negative integer"))?;
        let value: f64 = record[1].parse().map_err(|_| bad("value must be a real number"))?;
        if !value.is_finite() {
            return Err(bad("value must be finite"));
        }
        samples.push((frame, value));
    }
    samples.sort_by_key(|s| s.0);
    if let Some(w) = samples.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateFrame(w[0].0));
    }
    Ok(ExternalSeries { name: name.to_string(), samples })
}

/// Writes `frame,value` CSV, the format shared by external, KPI and metric series.
pub fn write_frame_value_csv(path: &Path, points: &[(usize, f64)]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(["frame", "value"]).map_err(|e| io_err(path, e))?;
    for (frame, value) in points {
        w.write_record([frame.to_string(), value.to_string()]).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}
