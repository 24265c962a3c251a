//! Command-line entry points.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use vizex_core::kpi::{CannyParams, load_definitions};
use vizex_core::metrics::HeatmapParams;
use vizex_core::project::{Project, ProjectConfig, ProjectError, load_project};
use vizex_core::query::{QueryConfig, QueryError, summarize};
use vizex_core::rdd::{RddError, null_threshold, scan_discontinuities, write_scan_results};
use vizex_core::surrogate::{DEFAULT_MAX_DEPTH, FeatureTable, build_feature_table, evaluate_split};
use vizex_core::synth::{CROSS_SCENES, ScenarioSpec, cross_scene_tables, generate_scenario};

use crate::api::{self, ApiError, AppState, ProjectHandle};

pub const DEFAULT_PORT: u16 = 8650;

#[derive(Debug, Parser)]
#[command(name = "vizex", version, about = "Explain video-analytics errors with KPI discontinuities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    /// Project directory.
    #[arg(long)]
    pub project: PathBuf,
    /// KPI definitions file; defaults to <project>/kpis.json when present.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ProjectArgs {
    fn load(&self) -> Result<Project, CliError> {
        let config = ProjectConfig { kpi_config: self.config.clone(), ..ProjectConfig::default() };
        Ok(load_project(&self.project, &config)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a project and print what it contains.
    Ingest(ProjectArgs),
    /// Compute KPI series and export them to <project>/series/.
    Kpi {
        #[command(flatten)]
        project: ProjectArgs,
        /// KPIs to compute; all when omitted.
        #[arg(long, value_delimiter = ',')]
        names: Vec<String>,
    },
    /// Compute error series and heatmaps into <project>/results/eval/.
    Eval {
        #[command(flatten)]
        project: ProjectArgs,
        #[arg(long, default_value_t = 4)]
        grid: usize,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Scan one series for discontinuities.
    Scan {
        #[command(flatten)]
        project: ProjectArgs,
        #[arg(long)]
        series: String,
        #[arg(long, default_value_t = 20)]
        bandwidth: usize,
        /// |t| threshold; calibrated from simulated noise when omitted.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 500)]
        null_sims: usize,
        #[arg(long)]
        min_separation: Option<usize>,
    },
    /// Run a BECAUSE query, print a summary and write the result JSON.
    Query {
        #[command(flatten)]
        project: ProjectArgs,
        text: String,
        /// Comma-separated bandwidths scanned when the query has none.
        #[arg(long, value_delimiter = ',')]
        bandwidths: Vec<usize>,
    },
    /// Train and test the decision-tree surrogate.
    Baseline {
        /// Training project directories; the synthetic cross-scene
        /// experiment runs when no projects are given.
        #[arg(long)]
        train: Vec<PathBuf>,
        #[arg(long)]
        test: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: usize,
        /// Frames per sampled row.
        #[arg(long, default_value_t = 1)]
        stride: usize,
        /// Also write the report JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic project.
    Synth {
        /// Scenario JSON; see `--preset` for built-in scenarios.
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// lighting, planted-zone, or cross-scene-0/1/2.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, required = true)]
        project: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        /// Refuse to serve frame images.
        #[arg(long)]
        no_frames: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Engine(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("invalid project {path}: {message}")]
    ProjectInvalid { path: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<ProjectError> for CliError {
    fn from(e: ProjectError) -> Self {
        CliError::Engine(e.to_string())
    }
}

impl From<QueryError> for CliError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Syntax(s) => CliError::Usage(format!("syntax error at {s}")),
            other => CliError::Engine(other.to_string()),
        }
    }
}

impl From<ApiError> for CliError {
    fn from(e: ApiError) -> Self {
        match e.code {
            api::Code::SyntaxError | api::Code::BadRequest => CliError::Usage(e.message),
            _ => CliError::Engine(e.message),
        }
    }
}

fn engine(e: impl std::fmt::Display) -> CliError {
    CliError::Engine(e.to_string())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match run(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn print_json(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(engine)?;
    writeln!(out, "{text}").map_err(engine)
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Ingest(p) => ingest(&p, out),
        Command::Kpi { project, names } => kpi(&project, &names, out),
        Command::Eval { project, grid, iou } => eval(&project, grid, iou, out),
        Command::Scan { project, series, bandwidth, threshold, alpha, null_sims, min_separation } => {
            scan(&project, &series, bandwidth, threshold, alpha, null_sims, min_separation, out)
        }
        Command::Query { project, text, bandwidths } => query(&project, &text, &bandwidths, out),
        Command::Baseline { train, test, seed, max_depth, stride, out: path } => {
            baseline(&train, &test, seed, max_depth, stride, path.as_deref(), out)
        }
        Command::Synth { spec, preset, seed, out: dir } => synth(spec.as_deref(), preset.as_deref(), seed, &dir, out),
        Command::Serve { project, port, no_frames, config } => serve(&project, port, no_frames, config, out),
    }
}

fn ingest(p: &ProjectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let project = p.load()?;
    let m = project.manifest();
    let v = serde_json::json!({
        "frame_count": m.frame_count,
        "width": m.width,
        "height": m.height,
        "frames": project.frames().is_some(),
        "predictions": project.predictions().is_some(),
        "ground_truth": project.ground_truth().is_some(),
        "kpis": project.kpi_names(),
        "metrics": project.metric_names(),
    });
    print_json(out, &v)
}

fn kpi(p: &ProjectArgs, names: &[String], out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(path) = &p.config {
        load_definitions(path).map_err(engine)?;
    }
    let project = p.load()?;
    let names = if names.is_empty() { project.kpi_names() } else { names.to_vec() };
    let dir = p.project.join("series");
    for name in &names {
        let series = project.kpi_series(name)?;
        series.export(&dir).map_err(engine)?;
        writeln!(out, "{name}: {} points -> {}", series.points.len(), dir.join(format!("{name}.csv")).display())
            .map_err(engine)?;
    }
    Ok(())
}

fn eval(p: &ProjectArgs, grid: usize, iou: f64, out: &mut dyn Write) -> Result<(), CliError> {
    if grid == 0 || !(iou > 0.0 && iou <= 1.0) {
        return Err(CliError::Usage("grid must be at least 1 and iou in (0, 1]".into()));
    }
    let project = p.load()?;
    let dir = p.project.join("results").join("eval");
    std::fs::create_dir_all(&dir).map_err(engine)?;
    for name in [vizex_core::project::METRIC_COUNT_ERROR, vizex_core::project::METRIC_CORRECT_RATE] {
        let series = project.metric_series(name)?;
        series.export_csv(&dir.join(format!("{name}.csv"))).map_err(engine)?;
    }
    let params = HeatmapParams { rows: grid, cols: grid, iou_threshold: iou, ..HeatmapParams::default() };
    let (over, under) = project.heatmaps(&params)?;
    over.export(&dir).map_err(engine)?;
    under.export(&dir).map_err(engine)?;
    let v = serde_json::json!({
        "dir": dir.display().to_string(),
        "overcount_total": over.total_count(),
        "undercount_total": under.total_count(),
        "overcount_argmax": over.argmax(),
        "undercount_argmax": under.argmax(),
    });
    print_json(out, &v)
}

#[allow(clippy::too_many_arguments)]
fn scan(
    p: &ProjectArgs,
    series: &str,
    bandwidth: usize,
    threshold: Option<f64>,
    alpha: f64,
    null_sims: usize,
    min_separation: Option<usize>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let project = p.load()?;
    let points = if project.has_kpi(series) {
        project.kpi_series(series)?.points.clone()
    } else if project.has_metric(series) {
        project.metric_series(series)?.points.clone()
    } else {
        return Err(CliError::Engine(format!("unknown series `{series}`")));
    };
    let usage = |e: RddError| match e {
        RddError::InvalidParameter(m) => CliError::Usage(m),
        other => engine(other),
    };
    let threshold = match threshold {
        Some(t) => t,
        None => {
            null_threshold(points.len(), bandwidth, alpha, null_sims, QueryConfig::default().seed).map_err(usage)?
        }
    };
    let found = scan_discontinuities(series, &points, bandwidth, threshold, min_separation.unwrap_or(bandwidth))
        .map_err(usage)?;
    write_scan_results(&p.project.join("results"), series, &found).map_err(engine)?;
    print_json(out, &found)
}

fn query(p: &ProjectArgs, text: &str, bandwidths: &[usize], out: &mut dyn Write) -> Result<(), CliError> {
    // parse first so syntax errors win over project errors
    vizex_core::query::parse(text).map_err(QueryError::from)?;
    let project = p.load()?;
    let mut config = QueryConfig::default();
    if !bandwidths.is_empty() {
        config.bandwidths = bandwidths.to_vec();
    }
    let handle = ProjectHandle::new(String::new(), Some(p.project.clone()), project);
    let result = api::run_query(&handle, text, &config)?;
    write!(out, "{}", summarize(&result)).map_err(engine)?;
    let path = vizex_core::results::result_path(&p.project.join("results"), &result.hash);
    writeln!(out, "result: {}", path.display()).map_err(engine)
}

fn project_table(dir: &Path, stride: usize) -> Result<FeatureTable, CliError> {
    let project = load_project(dir, &ProjectConfig::default())?;
    let missing = |what: &str| CliError::Engine(format!("{}: baseline needs {what}", dir.display()));
    let frames = project.frames().ok_or_else(|| missing("frames"))?;
    let pred = project.predictions().ok_or_else(|| missing("a prediction log"))?;
    let gt = project.ground_truth().ok_or_else(|| missing("a ground-truth log"))?;
    let id = dir.display().to_string();
    build_feature_table(frames, pred, gt, &project.manifest().label_of_interest, stride, &id, &CannyParams::default())
        .map_err(engine)
}

fn baseline(
    train: &[PathBuf],
    test: &[PathBuf],
    seed: u64,
    max_depth: usize,
    stride: usize,
    path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if stride == 0 {
        return Err(CliError::Usage("stride must be at least 1".into()));
    }
    let (tables, train_ids, test_ids) = if train.is_empty() && test.is_empty() {
        let tables = cross_scene_tables(seed, stride, &CannyParams::default()).map_err(engine)?;
        let ids = |r: std::ops::Range<usize>| CROSS_SCENES[r].iter().map(|s| s.to_string()).collect::<Vec<_>>();
        (tables, ids(0..2), ids(2..3))
    } else {
        if train.is_empty() || test.is_empty() {
            return Err(CliError::Usage("give both --train and --test projects".into()));
        }
        let tables = train.iter().chain(test).map(|d| project_table(d, stride)).collect::<Result<Vec<_>, _>>()?;
        let ids = |ds: &[PathBuf]| ds.iter().map(|d| d.display().to_string()).collect::<Vec<_>>();
        (tables, ids(train), ids(test))
    };
    let report = evaluate_split(&tables, &train_ids, &test_ids, max_depth, seed).map_err(engine)?;
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(&report).map_err(engine)? + "\n";
        std::fs::write(path, text).map_err(engine)?;
    }
    print_json(out, &report)
}

fn preset(name: &str, seed: u64) -> Result<ScenarioSpec, CliError> {
    match name {
        "lighting" => Ok(ScenarioSpec::lighting(seed)),
        "planted-zone" => Ok(ScenarioSpec::planted_zone(seed)),
        "cross-scene-0" => Ok(ScenarioSpec::cross_scene(0, seed)),
        "cross-scene-1" => Ok(ScenarioSpec::cross_scene(1, seed)),
        "cross-scene-2" => Ok(ScenarioSpec::cross_scene(2, seed)),
        other => Err(CliError::Usage(format!("unknown preset `{other}`"))),
    }
}

fn synth(
    spec: Option<&Path>,
    preset_name: Option<&str>,
    seed: u64,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let spec = match (spec, preset_name) {
        (Some(path), _) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        (None, Some(name)) => preset(name, seed)?,
        (None, None) => return Err(CliError::Usage("give --spec or --preset".into())),
    };
    let scenario = generate_scenario(&spec).map_err(engine)?;
    scenario.write(dir).map_err(engine)?;
    writeln!(out, "wrote {} frames to {}", spec.frame_count, dir.display()).map_err(engine)
}

/// Loads every project; the first failure is reported as `ProjectInvalid`.
pub fn load_handles(roots: &[PathBuf], config: Option<PathBuf>) -> Result<Vec<ProjectHandle>, CliError> {
    let pc = ProjectConfig { kpi_config: config, ..ProjectConfig::default() };
    roots
        .iter()
        .map(|r| {
            ProjectHandle::load(r, &pc)
                .map_err(|e| CliError::ProjectInvalid { path: r.display().to_string(), message: e.to_string() })
        })
        .collect()
}

/// Binds the port, mapping an occupied port to `PortInUse`.
pub async fn bind(port: u16) -> Result<tokio::net::TcpListener, CliError> {
    tokio::net::TcpListener::bind(("127.0.0.1", port)).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => CliError::PortInUse(port),
        _ => engine(e),
    })
}

fn serve(
    roots: &[PathBuf],
    port: u16,
    no_frames: bool,
    config: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let handles = load_handles(roots, config)?;
    let rt = tokio::runtime::Runtime::new().map_err(engine)?;
    rt.block_on(async {
        let listener = bind(port).await?;
        for h in &handles {
            writeln!(out, "project {} -> {}", h.id, h.root.as_ref().map_or(String::new(), |r| r.display().to_string()))
                .map_err(engine)?;
        }
        writeln!(out, "listening on http://{}/api", listener.local_addr().map_err(engine)?).map_err(engine)?;
        out.flush().map_err(engine)?;
        let app = api::router(AppState::new(handles, !no_frames, QueryConfig::default()));
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(engine)
    })
}
