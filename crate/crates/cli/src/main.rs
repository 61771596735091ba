//! `gazeguide` command-line runner.
//!
//! Exit status: 0 on success, 2 when the input is invalid (bad scene, config,
//! arguments), 1 when something fails while running.

use std::fmt;
use std::fs;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gazeguide_core::engine::{EngineSettings, Guidance};
use gazeguide_core::gaze::{parse_gaze_trace, write_gaze_trace, AgentKind};
use gazeguide_core::harness::{replay_trace, run_baseline_comparison, run_scene, sweep, RunConfig, RunError};
use gazeguide_core::records::{export_results, metrics_csv, RecordError, RunRecord};
use gazeguide_core::saliency::{base_saliency, extract_waypoints, fuse_hazard_prior};
use gazeguide_core::scene::{load_scene_file, SceneCatalog, SceneError, SceneSpec};
use gazeguide_server::{resolve_bind, AppState, BIND_ENV, DEFAULT_MAX_SESSIONS};

#[derive(Debug, Parser)]
#[command(name = "gazeguide", version, about = "Gaze-guided takeover scenarios: headless runs, comparisons and the live session service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario with a synthetic driver and print its metrics.
    Run(RunArgs),
    /// Run every scene in a directory over a seed range.
    Sweep(SweepArgs),
    /// Guided (compliant, with cues) against unguided (random scan, no cues).
    Compare(CompareArgs),
    /// Saliency maps and waypoints of a scene.
    Saliency {
        #[command(subcommand)]
        what: SaliencyCommand,
    },
    /// Re-run a recorded gaze trace and check it reproduces the recorded events.
    Replay(ReplayArgs),
    /// Serve live sessions over WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct EngineArgs {
    /// JSON run configuration; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    guidance: Option<GuidanceArg>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GuidanceArg {
    Guided,
    Unguided,
}

impl From<GuidanceArg> for Guidance {
    fn from(g: GuidanceArg) -> Self {
        match g {
            GuidanceArg::Guided => Guidance::Guided,
            GuidanceArg::Unguided => Guidance::Unguided,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    scene: PathBuf,
    /// compliant, distracted, non-compliant or random-scan
    #[arg(long, value_parser = parse_agent)]
    agent: Option<AgentKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    engine: EngineArgs,
    /// Write runs.jsonl, metrics.csv and the gaze trace here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    scenes: PathBuf,
    /// Inclusive range, e.g. 1..20
    #[arg(long, value_parser = parse_seeds)]
    seeds: RangeInclusive<u64>,
    #[arg(long, value_parser = parse_agent, default_value = "compliant")]
    agent: AgentKind,
    #[command(flatten)]
    engine: EngineArgs,
    /// Write runs.jsonl and metrics.csv here instead of printing the CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the full per-seed table as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Subcommand)]
enum SaliencyCommand {
    /// Write a saliency map as a plain-text PGM image.
    Dump {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_enum, default_value = "fused")]
        map: MapKind,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the extracted waypoints as JSON.
    Waypoints {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MapKind {
    Base,
    Fused,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Run record (one JSON line) holding the config and the expected events.
    #[arg(long)]
    record: PathBuf,
    /// Gaze trace recorded with the run.
    #[arg(long)]
    gaze: PathBuf,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Overrides the port of the bind address (GAZEGUIDE_BIND, default 127.0.0.1:8765).
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "scenes")]
    scenes: PathBuf,
    /// Persist each finished session's record and gaze trace here.
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_SESSIONS)]
    max_sessions: usize,
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    s.parse()
}

fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected A..B, got '{s}'"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: u64 = a.trim().parse().map_err(|_| format!("bad range start '{a}'"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad range end '{b}'"))?;
    if a > b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok(a..=b)
}

#[derive(Debug)]
enum CliError {
    Invalid(String),
    Failed(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Invalid(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io(_) => CliError::Failed(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        if e.is_validation() {
            CliError::Invalid(e.to_string())
        } else {
            CliError::Failed(e.to_string())
        }
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Io(_) => CliError::Failed(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Failed(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn load_config(path: Option<&Path>) -> Result<Option<RunConfig>, CliError> {
    path.map(|p| Ok(RunConfig::from_json(&read_text(p)?)?)).transpose()
}

fn engine_settings(args: &EngineArgs) -> Result<EngineSettings, CliError> {
    let mut settings = load_config(args.config.as_deref())?.map(|c| c.engine).unwrap_or_default();
    if let Some(g) = args.guidance {
        settings.guidance = g.into();
    }
    Ok(settings)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("output types always serialize")
}

fn run_cmd(args: RunArgs) -> Result<(), CliError> {
    let scene = load_scene_file(&args.scene)?;
    let file_cfg = load_config(args.engine.config.as_deref())?;
    if let Some(cfg) = &file_cfg {
        if cfg.scene_id != scene.id {
            return Err(CliError::Invalid(format!("config is for scene '{}', --scene is '{}'", cfg.scene_id, scene.id)));
        }
    }
    let seed = args.seed.or(file_cfg.as_ref().map(|c| c.seed)).unwrap_or(1);
    let kind = args.agent.or(file_cfg.as_ref().and_then(|c| c.agent.map(|a| a.kind))).unwrap_or(AgentKind::Compliant);
    let mut cfg = RunConfig::new(scene.id.clone(), kind, seed);
    if let Some(file) = file_cfg {
        cfg.engine = file.engine;
        // keep tuned agent parameters when the kind is unchanged
        if let Some(agent) = file.agent.filter(|a| a.kind == kind) {
            cfg.agent = Some(gazeguide_core::gaze::GazeAgentConfig { seed, ..agent });
        }
    }
    if let Some(g) = args.engine.guidance {
        cfg.engine.guidance = g.into();
    }
    let run = run_scene(&scene, &cfg)?;
    if let Some(dir) = &args.out {
        export_results(std::slice::from_ref(&run), dir)?;
        let trace = dir.join(format!("{}_{}.gaze", scene.id, seed));
        fs::write(&trace, write_gaze_trace(&run.gaze)).map_err(|e| io_err(&trace, e))?;
    }
    println!("{}", to_json(&run.metrics));
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<(), CliError> {
    let catalog = SceneCatalog::load_dir(&args.scenes)?;
    if catalog.is_empty() {
        return Err(CliError::Invalid(format!("no scenes in {}", args.scenes.display())));
    }
    let settings = engine_settings(&args.engine)?;
    let runs = sweep(&catalog, args.seeds, args.agent, &settings)?;
    match &args.out {
        Some(dir) => {
            export_results(&runs, dir)?;
            eprintln!("{} runs written to {}", runs.len(), dir.display());
        }
        None => {
            let records: Vec<RunRecord> = runs.iter().map(RunRecord::from).collect();
            print!("{}", metrics_csv(&records));
        }
    }
    Ok(())
}

fn compare_cmd(args: CompareArgs) -> Result<(), CliError> {
    let scene = load_scene_file(&args.scene)?;
    let settings = load_config(args.config.as_deref())?.map(|c| c.engine).unwrap_or_default();
    let summary = run_baseline_comparison(&scene, args.n, &settings)?;
    if args.json {
        println!("{}", to_json(&summary));
        return Ok(());
    }
    let fmt = |m: Option<f64>| m.map_or_else(|| "never (censored)".to_string(), |v| format!("{v:.4} s"));
    println!("scene            {}", summary.scene_id);
    println!("seeds            1..={}", args.n);
    println!("guided median    {}", fmt(summary.guided_median_s));
    println!("unguided median  {}", fmt(summary.unguided_median_s));
    println!("guided wins      {}/{} ({:.1}%)", summary.guided_win_count, summary.rows.len(), summary.win_rate * 100.0);
    Ok(())
}

fn saliency_settings(config: Option<&Path>) -> Result<gazeguide_core::saliency::SaliencyConfig, CliError> {
    Ok(load_config(config)?.map(|c| c.engine.saliency).unwrap_or_default())
}

fn fused_grid(scene: &SceneSpec, map: MapKind, config: Option<&Path>) -> Result<gazeguide_core::saliency::SaliencyGrid, CliError> {
    let s = saliency_settings(config)?;
    let invalid = |e: gazeguide_core::saliency::SaliencyError| CliError::Invalid(e.to_string());
    let base = base_saliency(scene, s.grid_width, s.grid_height).map_err(invalid)?;
    match map {
        MapKind::Base => Ok(base),
        MapKind::Fused => fuse_hazard_prior(&base, scene.hazard.position, s.sigma_h).map_err(invalid),
    }
}

fn saliency_cmd(what: SaliencyCommand) -> Result<(), CliError> {
    match what {
        SaliencyCommand::Dump { scene, map, config, out } => {
            let scene = load_scene_file(&scene)?;
            let pgm = fused_grid(&scene, map, config.as_deref())?.to_pgm();
            match out {
                Some(path) => fs::write(&path, pgm).map_err(|e| io_err(&path, e))?,
                None => print!("{pgm}"),
            }
        }
        SaliencyCommand::Waypoints { scene, config } => {
            let scene = load_scene_file(&scene)?;
            let grid = fused_grid(&scene, MapKind::Fused, config.as_deref())?;
            let wp = saliency_settings(config.as_deref())?.waypoints;
            println!("{}", to_json(&extract_waypoints(&grid, &scene, &wp)));
        }
    }
    Ok(())
}

fn replay_cmd(args: ReplayArgs) -> Result<(), CliError> {
    let scene = load_scene_file(&args.scene)?;
    let text = read_text(&args.record)?;
    let line = text.lines().find(|l| !l.trim().is_empty()).ok_or_else(|| CliError::Invalid("empty run record".into()))?;
    let record = RunRecord::from_line(line)?;
    let trace = parse_gaze_trace(&read_text(&args.gaze)?).map_err(|e| CliError::Invalid(e.to_string()))?;
    let replay = replay_trace(&scene, &record.config, trace)?;
    println!("{}", to_json(&replay.metrics));
    if replay.events != record.events {
        let at = replay.events.iter().zip(&record.events).position(|(a, b)| a != b);
        return Err(CliError::Failed(format!(
            "replay diverged: {} events vs {} recorded, first difference at {}",
            replay.events.len(),
            record.events.len(),
            at.map_or_else(|| "the end".to_string(), |i| i.to_string())
        )));
    }
    eprintln!("replay identical: {} events", replay.events.len());
    Ok(())
}

fn serve_cmd(args: ServeArgs) -> Result<(), CliError> {
    let env = std::env::var(BIND_ENV).ok();
    let addr = resolve_bind(env.as_deref(), args.port).map_err(|e| CliError::Invalid(e.to_string()))?;
    let catalog = SceneCatalog::load_dir(&args.scenes)?;
    if args.max_sessions == 0 {
        return Err(CliError::Invalid("--max-sessions must be at least 1".into()));
    }
    let state = AppState::new(catalog, args.records, args.max_sessions);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Failed(e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| CliError::Failed(format!("{addr}: {e}")))?;
        eprintln!("listening on ws://{}/session", listener.local_addr().map_err(|e| CliError::Failed(e.to_string()))?);
        gazeguide_server::serve(listener, state).await.map_err(|e| CliError::Failed(e.to_string()))
    })
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Saliency { what } => saliency_cmd(what),
        Command::Replay(a) => replay_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Invalid(_) => 2,
                CliError::Failed(_) => 1,
            })
        }
    }
}
