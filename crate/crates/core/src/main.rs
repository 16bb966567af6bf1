//! Command-line front end: run scenarios, replay traces, print bounds.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groupsense::metrics::{self, bounds_report};
use groupsense::netsim::{run, SimConfig, SimPatch};
use groupsense::scenario::{self, GroundTruthTimeline, Scenario};
use groupsense::trace::{
    read_trace, sha256_hex, write_trace, RunManifest, TraceMeta, TraceRecord,
    MANIFEST_FORMAT_VERSION,
};

/// Default output directory when `--out` is not given; overridden by the
/// GROUPSENSE_OUT_DIR environment variable.
const OUT_DIR_ENV: &str = "GROUPSENSE_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "groupsense",
    version,
    about = "Packet-level simulator for live group detection in mobile wireless networks",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trace + metrics artifacts
    Simulate(SimulateArgs),
    /// Recompute metrics from a stored trace (no re-simulation)
    Replay(ReplayArgs),
    /// Print the analytic bounds on messages-to-convergence
    Bounds(BoundsArgs),
    /// List or generate the built-in scenarios
    Scenarios(ScenariosArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (JSON)
    #[arg(long)]
    scenario: PathBuf,
    /// Channel RNG seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Config file (JSON) overriding the scenario's embedded settings
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inline override, e.g. --set epoch_period_ms=400 (repeatable; applied
    /// after the config file)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (default: $GROUPSENSE_OUT_DIR or ./runs, plus a
    /// per-run subdirectory)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run this many consecutive seeds, each in its own subdirectory
    #[arg(long, default_value_t = 1)]
    runs: u64,
}

#[derive(Args)]
struct ReplayArgs {
    /// Trace file written by `simulate`
    #[arg(long)]
    trace: PathBuf,
    /// Scenario file (default: scenario.json next to the trace)
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory (default: `replay` next to the trace)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    n: u64,
    #[arg(long)]
    delta: u64,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Emit machine-readable JSON instead of the table
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ScenariosArgs {
    #[command(subcommand)]
    command: ScenariosCmd,
}

#[derive(Subcommand)]
enum ScenariosCmd {
    /// Print the built-in scenario generators
    List,
    /// Write a built-in scenario to a JSON file
    Generate(GenerateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// One of: static, stable-pack, breakaway, merge, pack-split
    name: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    nodes: usize,
    /// Run length in seconds (static and stable-pack)
    #[arg(long, default_value_t = 60.0)]
    duration_s: f64,
    /// Node spacing in meters (static)
    #[arg(long, default_value_t = 0.5)]
    spacing_m: f64,
    /// Departure time in seconds (breakaway)
    #[arg(long, default_value_t = 6.2)]
    t_leave_s: f64,
    /// Rejoin time in seconds (breakaway)
    #[arg(long, default_value_t = 26.0)]
    t_rejoin_s: f64,
    /// Gap opening/closing speed in m/s (breakaway)
    #[arg(long, default_value_t = 12.5)]
    v_gap: f64,
    /// Split time in seconds (pack-split)
    #[arg(long, default_value_t = 10.0)]
    t_split_s: f64,
    /// Sub-pack sizes as a,b (pack-split)
    #[arg(long, default_value = "6,4")]
    sizes: String,
}

enum CliError {
    Usage(String),
    Input(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Internal(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap routes help/version through the error path
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Replay(args) => cmd_replay(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Scenarios(args) => match args.command {
            ScenariosCmd::List => cmd_scenarios_list(),
            ScenariosCmd::Generate(g) => cmd_scenarios_generate(g),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = read_to_string(path)?;
    Scenario::from_json(&text).map_err(|e| CliError::Input(e.to_string()))
}

/// Assemble the effective config: defaults, then the scenario's embedded
/// patch, then the config file, then `--set` pairs.
fn effective_config(
    scenario: &Scenario,
    config_path: Option<&Path>,
    sets: &[String],
    seed: u64,
) -> Result<(SimConfig, Vec<String>), CliError> {
    let mut cfg = SimConfig::default();
    let mut overrides = Vec::new();
    if let Some(patch) = &scenario.sim {
        patch.apply_to(&mut cfg);
        overrides.push(format!(
            "scenario:{}",
            serde_json::to_string(patch).expect("patch serializes")
        ));
    }
    if let Some(path) = config_path {
        let text = read_to_string(path)?;
        // a full config (as emitted into a run directory) replaces
        // everything; otherwise the file is a partial patch
        if let Ok(full) = serde_json::from_str::<SimConfig>(&text) {
            cfg = full;
            overrides.push("config:<full config file>".to_string());
        } else {
            let patch: SimPatch = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("bad config {}: {e}", path.display())))?;
            patch.apply_to(&mut cfg);
            overrides.push(format!(
                "config:{}",
                serde_json::to_string(&patch).expect("patch serializes")
            ));
        }
    }
    for pair in sets {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {pair:?}")))?;
        cfg.set_key(key.trim(), value.trim())
            .map_err(CliError::Usage)?;
        overrides.push(format!("cli:{pair}"));
    }
    cfg.seed = seed;
    cfg.validate()
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok((cfg, overrides))
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Write the full artifact set for one run.
fn write_artifacts(
    dir: &Path,
    scenario: &Scenario,
    cfg: &SimConfig,
    overrides: &[String],
    meta: &TraceMeta,
    records: &[TraceRecord],
) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;

    let scenario_json = scenario.to_json();
    let config_json =
        serde_json::to_string_pretty(cfg).map_err(|e| CliError::Internal(e.to_string()))?;

    write_file(&dir.join("trace.csv"), &write_trace(meta, records))?;
    write_file(&dir.join("scenario.json"), &scenario_json)?;
    write_file(&dir.join("config.json"), &config_json)?;

    let truth = GroundTruthTimeline::from_scenario(scenario);
    let (epochs, summary) = metrics::compute_summary(records, meta, &truth);
    write_file(&dir.join("metrics.csv"), &metrics::epochs_csv(&epochs))?;
    write_file(&dir.join("histogram.csv"), &metrics::histogram_csv(&epochs, 5))?;
    write_file(
        &dir.join("metrics.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| CliError::Internal(e.to_string()))?,
    )?;

    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        scenario_name: scenario.name.clone(),
        scenario_sha256: sha256_hex(scenario_json.as_bytes()),
        config_sha256: sha256_hex(config_json.as_bytes()),
        overrides: overrides.to_vec(),
        n_nodes: scenario.n_nodes,
        duration_ms: scenario.duration_ms,
        sim_start_ms: 0,
        sim_end_ms: scenario.duration_ms,
    };
    write_file(
        &dir.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?,
    )?;

    println!(
        "wrote {} ({} trace rows, {} epochs, loss {:.1}%)",
        dir.display(),
        records.len(),
        summary.epochs_completed,
        summary.loss.loss_rate * 100.0
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be >= 1".into()));
    }
    let scenario = load_scenario(&args.scenario)?;
    let base = args
        .out
        .clone()
        .unwrap_or_else(|| default_out_dir().join(format!("{}-seed{}", scenario.name, args.seed)));
    for i in 0..args.runs {
        let seed = args.seed + i;
        let (cfg, overrides) =
            effective_config(&scenario, args.config.as_deref(), &args.sets, seed)?;
        let trace = run(&cfg, &scenario).map_err(|e| CliError::Input(e.to_string()))?;
        let dir = if args.runs == 1 {
            base.clone()
        } else {
            base.join(format!("seed{seed}"))
        };
        write_artifacts(&dir, &scenario, &cfg, &overrides, &trace.meta, &trace.records)?;
    }
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<(), CliError> {
    let text = read_to_string(&args.trace)?;
    let parsed = read_trace(&text).map_err(|e| CliError::Input(e.to_string()))?;
    for issue in &parsed.issues {
        eprintln!("trace line {}: {}", issue.line, issue.message);
    }
    if parsed.is_partial() {
        eprintln!(
            "warning: trace is partial ({} malformed rows skipped)",
            parsed.issues.len()
        );
    }

    let trace_dir = args
        .trace
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let scenario_path = args
        .scenario
        .clone()
        .unwrap_or_else(|| trace_dir.join("scenario.json"));
    let scenario = load_scenario(&scenario_path)?;
    if scenario.n_nodes != parsed.meta.n_nodes {
        return Err(CliError::Input(format!(
            "scenario has {} nodes but trace has {}",
            scenario.n_nodes, parsed.meta.n_nodes
        )));
    }

    let out = args.out.clone().unwrap_or_else(|| trace_dir.join("replay"));
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;

    let truth = GroundTruthTimeline::from_scenario(&scenario);
    let (epochs, summary) = metrics::compute_summary(&parsed.records, &parsed.meta, &truth);
    write_file(&out.join("metrics.csv"), &metrics::epochs_csv(&epochs))?;
    write_file(&out.join("histogram.csv"), &metrics::histogram_csv(&epochs, 5))?;
    write_file(
        &out.join("metrics.json"),
        &serde_json::to_string_pretty(&summary).map_err(|e| CliError::Internal(e.to_string()))?,
    )?;

    println!(
        "replayed {} rows -> {} ({} epochs, converged {:.1}%{})",
        parsed.records.len(),
        out.display(),
        summary.epochs_completed,
        summary.converged_fraction * 100.0,
        if parsed.is_partial() { ", partial" } else { "" }
    );
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<(), CliError> {
    let report = bounds_report(args.n, args.delta, args.epsilon)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?
        );
    } else {
        println!("N={} Delta={} epsilon={}", report.n, report.delta, report.epsilon);
        println!("expected tau (ln):       {:.4}", report.expected_tau_ln);
        println!("tau at 1-eps (ln):       {:.4}", report.tau_confidence_ln);
        println!("expected tau (log10):    {:.4}", report.expected_tau_log10);
        println!("tau at 1-eps (log10):    {:.4}", report.tau_confidence_log10);
    }
    Ok(())
}

fn cmd_scenarios_list() -> Result<(), CliError> {
    println!("static       motionless row of nodes with one parked sink (bench test)");
    println!("stable-pack  moving paceline, two escort sinks, loss calibrated near 22%");
    println!("breakaway    node 3 falls off the back of the pack and rejoins later");
    println!("merge        breakaway variant whose beacons stop at the rejoin");
    println!("pack-split   pack divides in two, one sink following each formation");
    Ok(())
}

fn parse_sizes(s: &str) -> Result<(usize, usize), CliError> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| CliError::Usage(format!("--sizes expects A,B, got {s:?}")))?;
    let a = a.trim().parse().map_err(|_| CliError::Usage("bad sizes".into()))?;
    let b = b.trim().parse().map_err(|_| CliError::Usage("bad sizes".into()))?;
    Ok((a, b))
}

fn cmd_scenarios_generate(args: GenerateArgs) -> Result<(), CliError> {
    let duration_ms = (args.duration_s * 1000.0).round() as u64;
    let scenario = match args.name.as_str() {
        "static" => scenario::make_static(args.nodes, args.spacing_m, duration_ms),
        "stable-pack" => scenario::make_stable_pack(args.nodes, duration_ms),
        "breakaway" => {
            scenario::make_breakaway(args.nodes, args.t_leave_s, args.t_rejoin_s, args.v_gap).map(
                |mut s| {
                    s.estimator = scenario::breakaway_default().estimator;
                    s
                },
            )
        }
        "merge" => Ok(scenario::merge_default()),
        "pack-split" => scenario::make_pack_split(
            args.nodes,
            args.t_split_s,
            parse_sizes(&args.sizes)?,
            duration_ms,
        ),
        other => {
            return Err(CliError::Usage(format!(
                "unknown scenario {other:?} (see `groupsense scenarios list`)"
            )))
        }
    }
    .map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&args.out, &scenario.to_json())?;
    println!(
        "wrote {} ({} nodes, {:.1}s)",
        args.out.display(),
        scenario.n_nodes,
        scenario.duration_ms as f64 / 1000.0
    );
    Ok(())
}
