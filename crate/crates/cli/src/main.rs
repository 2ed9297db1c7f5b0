use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use telehaptic::experiments::{emit_report, run_experiment, ExperimentError, ExperimentOptions, EXPERIMENTS};
use telehaptic::protocol::Role;
use telehaptic::sessions::bridge::BridgeServer;
use telehaptic::sessions::policy::{build_policy, PolicyContext, PolicySpec};
use telehaptic::sessions::{read_log, run_operator, ConfigError, RobotServer, SessionConfig, SessionError, SessionLog};
use telehaptic::simworld::SceneConfig;

/// Position and orientation tolerance of `replay`, m and Frobenius norm.
const REPLAY_TOLERANCE: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "telehaptic", version, about = "Haptic teleoperation: robot, operator, console bridge, replay and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulated dual-arm robot; serves one operator session.
    Robot {
        #[arg(long)]
        config: PathBuf,
    },
    /// Scripted operator driven by a policy file.
    Operator {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Operator driven by a browser console over WebSocket.
    Bridge {
        #[arg(long)]
        config: PathBuf,
    },
    /// Recomputes end-effector targets from logged wrist samples.
    Replay {
        /// Session log; repeat to pair an operator log with a robot log.
        #[arg(long = "log", required = true)]
        logs: Vec<PathBuf>,
    },
    /// Runs an experiment (or `all`) and writes CSV files plus summary.json.
    Experiment {
        name: String,
        #[arg(long)]
        trials: Option<u32>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum Failure {
    /// Bad config, policy, log or arguments.
    Config(String),
    Network(String),
    /// Ran to completion but a check failed, or outputs could not be written.
    Failed(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Failed(_) => 1,
            Failure::Config(_) => 2,
            Failure::Network(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Network(m) => write!(f, "network error: {m}"),
            Failure::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        if e.is_network() {
            Failure::Network(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => c.into(),
            ExperimentError::Session(s) => s.into(),
            other => Failure::Failed(other.to_string()),
        }
    }
}

fn load_config(path: &Path, role: Role) -> Result<SessionConfig, Failure> {
    let cfg = SessionConfig::load(path)?;
    match cfg.role {
        Some(r) if r != role => Err(Failure::Config(format!("config is for role {r:?}, not {role:?}"))),
        _ => Ok(cfg),
    }
}

fn open_log(cfg: &SessionConfig) -> Result<SessionLog, Failure> {
    match &cfg.log_path {
        Some(p) => SessionLog::file(p, cfg).map_err(|e| Failure::Config(format!("cannot create log {}: {e}", p.display()))),
        None => Ok(SessionLog::disabled()),
    }
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable report"));
}

fn load_policy(path: &Path) -> Result<PolicySpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read policy {}: {e}", path.display())))?;
    let mut spec: PolicySpec = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("malformed policy: {e}")))?;
    // Trajectory files are relative to the policy file.
    if let (Some(traj), Some(dir)) = (&spec.trajectory, path.parent()) {
        if traj.is_relative() {
            spec.trajectory = Some(dir.join(traj));
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn scene_of(cfg: &SessionConfig) -> Result<SceneConfig, Failure> {
    Ok(cfg.scene.resolve()?)
}

fn robot(config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config, Role::Robot)?;
    let scene = scene_of(&cfg)?;
    let server = RobotServer::bind(&cfg.robot_endpoint)?;
    info!("robot listening on {}", cfg.robot_endpoint);
    let report = server.serve(&cfg, &scene, open_log(&cfg)?)?;
    if report.peer_lost {
        warn!("operator went away before the end of the session");
    }
    print_json(&report);
    Ok(())
}

fn operator(config: &Path, policy: &Path) -> Result<(), Failure> {
    let cfg = load_config(config, Role::Operator)?;
    let spec = load_policy(policy)?;
    let scene = scene_of(&cfg)?;
    let ctx = PolicyContext {
        side: cfg.sides[0],
        retarget: cfg.retarget,
        haptic: cfg.haptic,
        scene: scene.clone(),
        control_hz: cfg.rates.control_hz,
    };
    let policy = build_policy(&spec, &ctx)?;
    let log = open_log(&cfg)?;
    let report = run_operator(&cfg, scene.initial_hand, policy, log, &mut |_, _| Ok(()), None)?;
    print_json(&report);
    Ok(())
}

fn bridge(config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config, Role::Bridge)?;
    let scene = scene_of(&cfg)?;
    let server = BridgeServer::bind(&cfg.bridge_endpoint)?;
    info!("console endpoint ws://{}", cfg.bridge_endpoint);
    let report = server.run(&cfg, scene.initial_hand, open_log(&cfg)?)?;
    print_json(&report);
    Ok(())
}

fn replay(logs: &[PathBuf]) -> Result<(), Failure> {
    let mut parsed = Vec::new();
    for p in logs {
        parsed.push(read_log(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?);
    }
    let report = telehaptic::sessions::verify_retargeting(&parsed);
    print_json(&report);
    if report.passes(REPLAY_TOLERANCE) {
        Ok(())
    } else {
        Err(Failure::Failed("logged targets do not match the recomputed ones".into()))
    }
}

fn experiment(name: &str, trials: Option<u32>, seed: u64, out: &Path) -> Result<(), Failure> {
    let names: Vec<&str> = if name == "all" { EXPERIMENTS.to_vec() } else { vec![name] };
    let opts = ExperimentOptions { trials, seed };
    let mut results = Vec::new();
    for n in names {
        info!("running {n}");
        results.push(run_experiment(n, &opts)?);
    }
    let summary = emit_report(&results, out)?;
    let mut failed = 0;
    for r in &results {
        for v in &r.verdicts {
            println!("{} {}.{}: {}", if v.passed { "PASS" } else { "FAIL" }, r.name, v.criterion, v.detail);
            failed += usize::from(!v.passed);
        }
    }
    println!("summary: {}", summary.display());
    if failed > 0 {
        return Err(Failure::Failed(format!("{failed} verdict(s) failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Robot { config } => robot(config),
        Command::Operator { config, policy } => operator(config, policy),
        Command::Bridge { config } => bridge(config),
        Command::Replay { logs } => replay(logs),
        Command::Experiment { name, trials, seed, out } => experiment(name, *trials, *seed, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
