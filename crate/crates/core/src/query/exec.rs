//! Query execution over a project snapshot.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::ast::{QueryAst, Sign};
use super::parser::{SyntaxError, parse};
use crate::project::{Project, ProjectError};
use crate::rdd::{
    AssociationEvidence, DiscontinuityEstimate, RddError, associate, null_threshold, scan_discontinuities, side_fits,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("syntax error: {0}")]
    Syntax(#[from] SyntaxError),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("unknown KPI `{0}`")]
    UnknownKpi(String),
    #[error("series `{series}` has {len} points; the smallest bandwidth needs {needed}")]
    SeriesTooShort { series: String, len: usize, needed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Project(ProjectError),
    #[error(transparent)]
    Rdd(#[from] RddError),
}

impl From<ProjectError> for QueryError {
    fn from(e: ProjectError) -> Self {
        match e {
            ProjectError::UnknownKpi(n) => QueryError::UnknownKpi(n),
            ProjectError::UnknownMetric(n) => QueryError::UnknownMetric(n),
            other => QueryError::Project(other),
        }
    }
}

/// Execution parameters. `WITH` options in a query override the matching
/// fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryConfig {
    /// Bandwidths scanned, each independently.
    pub bandwidths: Vec<usize>,
    /// Largest KPI/metric cut distance, in frames, that still pairs.
    pub delta: usize,
    /// Family-wise false-alarm level of each KPI scan.
    pub alpha: f64,
    /// Simulations behind each null threshold.
    pub null_sims: usize,
    pub seed: u64,
    pub samples_per_window: usize,
    /// Suppression radius of the scans; the bandwidth when unset.
    pub min_separation: Option<usize>,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            bandwidths: vec![10, 20, 40],
            delta: 15,
            alpha: 0.05,
            null_sims: 500,
            seed: 0x5eed,
            samples_per_window: 4,
            min_separation: None,
        }
    }
}

impl QueryConfig {
    /// This configuration with a query's `WITH` options applied.
    pub fn effective(&self, ast: &QueryAst) -> QueryConfig {
        let mut c = self.clone();
        if let Some(b) = ast.options.bandwidth {
            c.bandwidths = vec![b];
        }
        if let Some(d) = ast.options.delta {
            c.delta = d;
        }
        if let Some(a) = ast.options.alpha {
            c.alpha = a;
        }
        c.bandwidths.sort_unstable();
        c.bandwidths.dedup();
        c
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        let bad = |m: String| Err(QueryError::InvalidConfig(m));
        if self.bandwidths.is_empty() || self.bandwidths.iter().any(|&b| b < 2) {
            return bad(format!("bandwidths must be non-empty and at least 2, got {:?}", self.bandwidths));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if self.null_sims < 100 {
            return bad(format!("null_sims must be at least 100, got {}", self.null_sims));
        }
        if self.min_separation == Some(0) {
            return bad("min_separation must be at least 1".into());
        }
        Ok(())
    }
}

type ThresholdKey = (usize, usize, u64, usize, u64);

/// Null thresholds are shared process-wide; each is simulated once.
pub fn cached_null_threshold(n: usize, bandwidth: usize, alpha: f64, sims: usize, seed: u64) -> Result<f64, RddError> {
    static CACHE: OnceLock<Mutex<HashMap<ThresholdKey, Arc<OnceLock<Result<f64, RddError>>>>>> = OnceLock::new();
    let key = (n, bandwidth, alpha.to_bits(), sims, seed);
    let slot =
        CACHE.get_or_init(Default::default).lock().expect("threshold cache lock").entry(key).or_default().clone();
    slot.get_or_init(|| null_threshold(n, bandwidth, alpha, sims, seed)).clone()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedAtom {
    pub kpi_name: String,
    /// Index of the BECAUSE disjunct that matched.
    pub disjunct: usize,
    /// Atoms sharing a group matched together; the window score is the max
    /// over groups of the min over each group's evidence scores.
    pub group: usize,
    pub sign: Sign,
    pub evidence: AssociationEvidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceWindow {
    pub start_frame: usize,
    pub end_frame: usize,
    #[serde(with = "crate::json::float")]
    pub score: f64,
    pub matched_atoms: Vec<MatchedAtom>,
    pub sample_frames: Vec<usize>,
}

impl EvidenceWindow {
    /// Score recomputed from the matched atoms.
    pub fn recomputed_score(&self) -> f64 {
        let mut groups: Vec<(usize, f64)> = Vec::new();
        for a in &self.matched_atoms {
            match groups.iter_mut().find(|g| g.0 == a.group) {
                Some(g) => g.1 = g.1.min(a.evidence.score),
                None => groups.push((a.group, a.evidence.score)),
            }
        }
        groups.iter().map(|g| g.1).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, frame: usize) -> bool {
        (self.start_frame..=self.end_frame).contains(&frame)
    }

    pub fn names(&self, kpi: &str) -> bool {
        self.matched_atoms.iter().any(|a| a.kpi_name == kpi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotRole {
    Kpi,
    Metric,
    /// 1 where the WHERE predicate holds on the metric, else 0.
    Regime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSegment {
    pub name: String,
    pub role: PlotRole,
    pub frames: Vec<usize>,
    pub values: Vec<f64>,
}

/// The two local fits at a cut, as line endpoints meeting the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitLines {
    pub series: String,
    pub role: PlotRole,
    pub cutpoint: usize,
    pub bandwidth: usize,
    pub left: [[f64; 2]; 2],
    pub right: [[f64; 2]; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPlot {
    pub window: usize,
    pub series: Vec<SeriesSegment>,
    pub fits: Vec<FitLines>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiSummary {
    pub kpi: String,
    pub windows: usize,
    /// Mean |τ| over this KPI's matched atoms.
    #[serde(with = "crate::json::float_opt")]
    pub mean_abs_tau: Option<f64>,
    /// Mean evidence score over this KPI's matched atoms.
    #[serde(with = "crate::json::float_opt")]
    pub mean_score: Option<f64>,
    /// Index of the highest-ranked window naming this KPI.
    pub strongest_window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    /// Canonical query text.
    pub query: String,
    pub hash: String,
    pub config: QueryConfig,
    pub windows: Vec<EvidenceWindow>,
    pub summary: Vec<KpiSummary>,
    pub plot_data: Vec<WindowPlot>,
}

/// Content hash of a query under a configuration.
pub fn query_hash(ast: &QueryAst, config: &QueryConfig) -> String {
    let mut h = Sha256::new();
    h.update(ast.to_string().as_bytes());
    h.update(b"\n");
    h.update(serde_json::to_string(&config.effective(ast)).expect("config serializes").as_bytes());
    hex::encode(h.finalize())[..16].to_string()
}

struct Match {
    bandwidth: usize,
    metric_cut: usize,
    disjunct: usize,
    atoms: Vec<AssociationEvidence>,
    signs: Vec<Sign>,
    score: f64,
}

pub fn run(text: &str, project: &Project, config: &QueryConfig) -> Result<QueryResult, QueryError> {
    execute(&parse(text)?, project, config)
}

pub fn execute(ast: &QueryAst, project: &Project, config: &QueryConfig) -> Result<QueryResult, QueryError> {
    let cfg = config.effective(ast);
    cfg.validate()?;
    let kpi_names = ast.kpi_names();
    if !project.has_metric(&ast.predicate.metric) {
        return Err(QueryError::UnknownMetric(ast.predicate.metric.clone()));
    }
    if let Some(missing) = kpi_names.iter().find(|k| !project.has_kpi(k)) {
        return Err(QueryError::UnknownKpi(missing.to_string()));
    }

    let metric = project.metric_series(&ast.predicate.metric)?;
    let regime: Vec<(usize, f64)> =
        metric.points.iter().map(|&(t, v)| (t, if ast.predicate.holds(v) { 1.0 } else { 0.0 })).collect();
    let kpis: Vec<_> = kpi_names.iter().map(|k| project.kpi_series(k)).collect::<Result<_, _>>()?;

    let shortest = kpis
        .iter()
        .map(|k| (k.name().to_string(), k.points.len()))
        .chain([(metric.name.clone(), regime.len())])
        .min_by_key(|s| s.1)
        .expect("metric is always present");
    let usable: Vec<usize> = cfg.bandwidths.iter().copied().filter(|&b| shortest.1 >= 2 * b).collect();
    if usable.is_empty() {
        return Err(QueryError::SeriesTooShort { series: shortest.0, len: shortest.1, needed: 2 * cfg.bandwidths[0] });
    }

    let regime_name = format!("{} {} {}", ast.predicate.metric, ast.predicate.cmp.symbol(), ast.predicate.value);
    let mut matches = Vec::new();
    for &b in &usable {
        let min_sep = cfg.min_separation.unwrap_or(b);
        // a single-cut calibration: the metric leg tests one location at a time
        let metric_threshold = cached_null_threshold(2 * b, b, cfg.alpha, cfg.null_sims, cfg.seed)?;
        let metric_discs: Vec<DiscontinuityEstimate> =
            scan_discontinuities(&metric.name, &regime, b, metric_threshold, min_sep)?
                .into_iter()
                .filter(|d| regime_holds_near(&regime, d.cutpoint, b))
                .collect();
        let mut evidence: HashMap<&str, Vec<AssociationEvidence>> = HashMap::new();
        for k in &kpis {
            let threshold = cached_null_threshold(k.points.len(), b, cfg.alpha, cfg.null_sims, cfg.seed)?;
            let discs = scan_discontinuities(k.name(), &k.points, b, threshold, min_sep)?;
            evidence.insert(k.name(), associate(&discs, &metric_discs, cfg.delta));
        }
        for m in &metric_discs {
            for (d, conj) in ast.because.iter().enumerate() {
                let options: Vec<Vec<&AssociationEvidence>> = conj
                    .iter()
                    .map(|atom| {
                        evidence[atom.kpi.as_str()]
                            .iter()
                            .filter(|e| e.metric_disc.cutpoint == m.cutpoint && atom.sign.admits(e.kpi_disc.tau))
                            .collect()
                    })
                    .collect();
                if let Some((score, atoms)) = best_combination(&options, cfg.delta) {
                    let signs = conj.iter().map(|a| a.sign).collect();
                    matches.push(Match { bandwidth: b, metric_cut: m.cutpoint, disjunct: d, atoms, signs, score });
                }
            }
        }
    }

    let n = project.frame_count();
    let windows = build_windows(matches, n, cfg.samples_per_window);
    let summary = summarize_windows(&kpi_names, &windows);
    let plot_data = windows
        .iter()
        .enumerate()
        .map(|(i, w)| plot_window(i, w, ast, &kpis, &metric.name, &metric.points, &regime_name, &regime))
        .collect::<Result<_, _>>()?;
    Ok(QueryResult { query: ast.to_string(), hash: query_hash(ast, config), config: cfg, windows, summary, plot_data })
}

fn regime_holds_near(regime: &[(usize, f64)], cut: usize, b: usize) -> bool {
    let lo = cut.saturating_sub(b);
    regime.iter().any(|&(t, v)| v == 1.0 && t >= lo && t < cut + b)
}

/// The pick of one evidence per atom maximizing the weakest score, with all
/// KPI cuts pairwise within `delta`. Earlier options win ties.
fn best_combination(options: &[Vec<&AssociationEvidence>], delta: usize) -> Option<(f64, Vec<AssociationEvidence>)> {
    fn go<'a>(
        options: &[Vec<&'a AssociationEvidence>],
        delta: usize,
        chosen: &mut Vec<&'a AssociationEvidence>,
        best: &mut Option<(f64, Vec<&'a AssociationEvidence>)>,
    ) {
        if chosen.len() == options.len() {
            let score = chosen.iter().map(|e| e.score).fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|b| score > b.0) {
                *best = Some((score, chosen.clone()));
            }
            return;
        }
        for &e in &options[chosen.len()] {
            if chosen.iter().all(|c| c.kpi_disc.cutpoint.abs_diff(e.kpi_disc.cutpoint) <= delta) {
                chosen.push(e);
                go(options, delta, chosen, best);
                chosen.pop();
            }
        }
    }
    let mut best = None;
    go(options, delta, &mut Vec::new(), &mut best);
    best.map(|(s, atoms)| (s, atoms.into_iter().cloned().collect()))
}

fn build_windows(mut matches: Vec<Match>, frame_count: usize, k: usize) -> Vec<EvidenceWindow> {
    let last = frame_count.saturating_sub(1);
    let span = |m: &Match| (m.metric_cut.saturating_sub(m.bandwidth), (m.metric_cut + m.bandwidth).min(last));
    matches.sort_by_key(|m| (span(m), m.bandwidth, m.metric_cut, m.disjunct));
    let mut windows: Vec<EvidenceWindow> = Vec::new();
    for m in matches {
        let (start, end) = span(&m);
        let merge = windows.last().is_some_and(|w| start <= w.end_frame);
        if !merge {
            windows.push(EvidenceWindow {
                start_frame: start,
                end_frame: end,
                score: f64::NEG_INFINITY,
                matched_atoms: Vec::new(),
                sample_frames: Vec::new(),
            });
        }
        let w = windows.last_mut().expect("just ensured");
        w.end_frame = w.end_frame.max(end);
        w.score = w.score.max(m.score);
        let group = w.matched_atoms.last().map_or(0, |a| a.group + 1);
        w.matched_atoms.extend(m.atoms.into_iter().zip(m.signs).map(|(e, sign)| MatchedAtom {
            kpi_name: e.kpi_disc.series_name.clone(),
            disjunct: m.disjunct,
            group,
            sign,
            evidence: e,
        }));
    }
    for w in &mut windows {
        w.sample_frames = sample_frames(w.start_frame, w.end_frame, k);
    }
    windows.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.start_frame.cmp(&b.start_frame)));
    windows
}

/// Up to `k` frames evenly spaced over `[start, end]`, endpoints included.
pub fn sample_frames(start: usize, end: usize, k: usize) -> Vec<usize> {
    let len = end - start + 1;
    match k {
        0 => Vec::new(),
        _ if len <= k => (start..=end).collect(),
        1 => vec![start + (len - 1) / 2],
        _ => (0..k).map(|i| start + ((i * (len - 1)) as f64 / (k - 1) as f64).round() as usize).collect(),
    }
}

fn summarize_windows(kpis: &[&str], windows: &[EvidenceWindow]) -> Vec<KpiSummary> {
    kpis.iter()
        .map(|&kpi| {
            let atoms: Vec<&MatchedAtom> =
                windows.iter().flat_map(|w| &w.matched_atoms).filter(|a| a.kpi_name == kpi).collect();
            let mean = |f: &dyn Fn(&MatchedAtom) -> f64| {
                (!atoms.is_empty()).then(|| atoms.iter().map(|a| f(a)).sum::<f64>() / atoms.len() as f64)
            };
            KpiSummary {
                kpi: kpi.to_string(),
                windows: windows.iter().filter(|w| w.names(kpi)).count(),
                mean_abs_tau: mean(&|a| a.evidence.kpi_disc.tau.abs()),
                mean_score: mean(&|a| a.evidence.score),
                strongest_window: windows.iter().position(|w| w.names(kpi)),
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn plot_window(
    index: usize,
    window: &EvidenceWindow,
    ast: &QueryAst,
    kpis: &[Arc<crate::kpi::KpiSeries>],
    metric_name: &str,
    metric: &[(usize, f64)],
    regime_name: &str,
    regime: &[(usize, f64)],
) -> Result<WindowPlot, QueryError> {
    let mut fits: Vec<FitLines> = Vec::new();
    let mut lo = window.start_frame;
    let mut hi = window.end_frame;
    let mut fit = |disc: &DiscontinuityEstimate, role: PlotRole, name: &str, points: &[(usize, f64)]| {
        if fits.iter().any(|f| f.series == name && f.cutpoint == disc.cutpoint && f.bandwidth == disc.bandwidth) {
            return Ok::<(), QueryError>(());
        }
        let (l, r) = side_fits(points, disc.cutpoint, disc.bandwidth)?;
        let (c, b) = (disc.cutpoint as f64, disc.bandwidth as f64);
        let mid = disc.boundary();
        fits.push(FitLines {
            series: name.to_string(),
            role,
            cutpoint: disc.cutpoint,
            bandwidth: disc.bandwidth,
            left: [[c - b, l.value_at(c - b)], [mid, l.value_at(mid)]],
            right: [[mid, r.value_at(mid)], [c + b - 1.0, r.value_at(c + b - 1.0)]],
        });
        lo = lo.min(disc.cutpoint - disc.bandwidth);
        hi = hi.max(disc.cutpoint + disc.bandwidth - 1);
        Ok(())
    };
    for atom in &window.matched_atoms {
        let e = &atom.evidence;
        if ast.select.includes(&atom.kpi_name) {
            let k = kpis.iter().find(|k| k.name() == atom.kpi_name).expect("matched KPIs were scanned");
            fit(&e.kpi_disc, PlotRole::Kpi, &atom.kpi_name, &k.points)?;
        }
        if ast.select.includes(metric_name) {
            fit(&e.metric_disc, PlotRole::Regime, regime_name, regime)?;
        }
    }
    let segment = |name: &str, role, points: &[(usize, f64)]| {
        let inside: Vec<&(usize, f64)> = points.iter().filter(|p| p.0 >= lo && p.0 <= hi).collect();
        SeriesSegment {
            name: name.to_string(),
            role,
            frames: inside.iter().map(|p| p.0).collect(),
            values: inside.iter().map(|p| p.1).collect(),
        }
    };
    let mut series = Vec::new();
    for k in kpis {
        if window.names(k.name()) && ast.select.includes(k.name()) {
            series.push(segment(k.name(), PlotRole::Kpi, &k.points));
        }
    }
    if ast.select.includes(metric_name) {
        series.push(segment(metric_name, PlotRole::Metric, metric));
        series.push(segment(regime_name, PlotRole::Regime, regime));
    }
    Ok(WindowPlot { window: index, series, fits })
}

/// A plain-text table of the per-KPI summary.
pub fn summarize(result: &QueryResult) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    let _ = writeln!(out, "query: {}", result.query);
    if result.windows.is_empty() {
        out.push_str("0 evidence windows\n");
        return out;
    }
    let _ = writeln!(out, "{} evidence window(s)", result.windows.len());
    let _ = writeln!(out, "{:<24} {:>8} {:>12} {:>12}  strongest", "kpi", "windows", "mean |tau|", "mean score");
    let num = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
    for s in &result.summary {
        let strongest = s.strongest_window.map_or("-".to_string(), |i| {
            let w = &result.windows[i];
            format!("#{i} [{}, {}]", w.start_frame, w.end_frame)
        });
        let _ = writeln!(
            out,
            "{:<24} {:>8} {:>12} {:>12}  {}",
            s.kpi,
            s.windows,
            num(s.mean_abs_tau),
            num(s.mean_score),
            strongest
        );
    }
    out
}
