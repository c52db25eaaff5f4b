use clap::Parser;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use teleop::gateway::{self, GatewayConfig};
use teleop_core::harness::{
    export_csv, load_trace, make_policy, run_trial, save_trace, Condition, PolicyKind, ScenarioFile, TrialOptions,
};

/// Dual-arm impedance teleoperation simulator.
///
/// With `--headless`, runs one trial with a scripted or replayed operator and
/// exits 0 iff every target was completed. Without it, serves the session
/// over a WebSocket at `/session` for an interactive operator.
#[derive(Debug, Parser)]
#[command(name = "teleop", version)]
struct Cli {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Operator policy for headless runs: scripted-lift, scripted-slide or replay.
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// Input trace to replay (with `--policy replay`).
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "vis")]
    condition: Condition,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trial records CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run in virtual time without a server.
    #[arg(long)]
    headless: bool,
    /// Decimated physics-state log (headless).
    #[arg(long)]
    state_log: Option<PathBuf>,
    /// Save every applied input as a replayable trace.
    #[arg(long)]
    record_trace: Option<PathBuf>,
    /// Override the scenario's squeeze depth for scripted policies, meters.
    #[arg(long)]
    squeeze_depth: Option<f64>,
    /// Port for interactive mode.
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind in interactive mode.
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    bind: IpAddr,
    /// Simulated seconds per wall-clock second in interactive mode.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
}

fn headless(cli: &Cli, file: ScenarioFile) -> Result<bool, String> {
    let kind = cli.policy.ok_or("--headless needs --policy")?;
    let mut resolved = file.resolve(cli.seed).map_err(|e| e.to_string())?;
    if let Some(d) = cli.squeeze_depth {
        resolved.policy.squeeze_depth = d;
    }
    let trace = match (&cli.trace, kind) {
        (Some(p), _) => Some(load_trace(p).map_err(|e| e.to_string())?),
        (None, PolicyKind::Replay) => return Err("--policy replay needs --trace".into()),
        (None, _) => None,
    };
    let mut policy = make_policy(kind, resolved.policy, trace).map_err(|e| e.to_string())?;
    let options = TrialOptions {
        record_trace: cli.record_trace.is_some(),
        state_log: cli.state_log.is_some(),
    };
    let out = run_trial(&resolved, policy.as_mut(), cli.condition, cli.seed, options).map_err(|e| e.to_string())?;

    if let Some(path) = &cli.out {
        export_csv(&out.records, path).map_err(|e| e.to_string())?;
    }
    if let (Some(path), Some(log)) = (&cli.state_log, &out.state_log) {
        std::fs::write(path, log).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    if let (Some(path), Some(trace)) = (&cli.record_trace, &out.trace) {
        save_trace(trace, path).map_err(|e| e.to_string())?;
    }
    let done = out.records.iter().filter(|r| r.completed).count();
    eprintln!(
        "{done}/{} targets completed in {:.3} s simulated",
        resolved.scenario.targets.len(),
        out.ticks as f64 * resolved.world.dt
    );
    Ok(out.all_completed)
}

async fn interactive(cli: &Cli, file: ScenarioFile) -> Result<(), String> {
    let config = GatewayConfig {
        scenario: file,
        seed: cli.seed,
        condition: cli.condition,
        speed: cli.speed,
        trace_out: cli.record_trace.clone(),
        records_out: cli.out.clone(),
    };
    let handle = gateway::serve(config, SocketAddr::new(cli.bind, cli.port))
        .await
        .map_err(|e| e.to_string())?;
    eprintln!("listening on ws://{}/session", handle.addr);
    tokio::signal::ctrl_c().await.map_err(|e| e.to_string())?;
    handle.shutdown().await;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let file = match ScenarioFile::load(&cli.scenario) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.headless {
        return match headless(&cli, file) {
            Ok(true) => ExitCode::SUCCESS,
            Ok(false) => ExitCode::FAILURE,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        };
    }
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match runtime.block_on(interactive(&cli, file)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
