use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dcgrid_core::interchange::client::{send_set, ClientError};
use dcgrid_core::interchange::{run_scenario, AgentHub, HubConfig, DEFAULT_COMMAND_PORT};
use dcgrid_core::models::{size_converter, ConverterRating};
use dcgrid_core::scenario::{
    emit_plot, parse_scenario, read_trace_csv, summarize, write_trace_csv, ScenarioConfig,
};
use dcgrid_core::sim::{ControlLink, RunOptions, SimMode};

#[derive(Parser)]
#[command(name = "dcgrid", version, about = "DC microgrid simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Size the boost converter's inductor and output capacitor.
    Size(SizeArgs),
    /// Run a scenario and write its trace and summary.
    Run(RunArgs),
    /// Run a scenario with node agents listening for an external orchestrator.
    Serve(ServeArgs),
    /// Set a runtime parameter on a live run.
    Inject(InjectArgs),
    /// Print the summary of an existing trace.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct SizeArgs {
    /// Input voltage, V.
    #[arg(long, default_value_t = 69.0)]
    v_in: f64,
    /// Output voltage, V.
    #[arg(long, default_value_t = 100.0)]
    v_out: f64,
    /// Output current, A.
    #[arg(long, default_value_t = 50.0)]
    i_out: f64,
    /// Switching frequency, Hz.
    #[arg(long = "f", default_value_t = 1000.0)]
    f: f64,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file; `.ini` is appended when the path has no extension.
    scenario: PathBuf,
    /// `section.key=value` overrides applied after the file.
    overrides: Vec<String>,
    /// Output directory for the trace, summary and plot.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override `sim.mode`.
    #[arg(long, value_parser = ["energy", "transient"])]
    mode: Option<String>,
    /// Also listen for SET frames on this port (default 44379 when given bare).
    #[arg(long, num_args = 0..=1, default_missing_value = "44379")]
    command_port: Option<u16>,
    /// Write an SVG plot next to the trace.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Pace steps to wall-clock time.
    #[arg(long)]
    realtime: bool,
    /// Start node agents and the in-process orchestrator.
    #[arg(long)]
    interchange: bool,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    common: ScenarioArgs,
    /// Step as fast as possible instead of in real time.
    #[arg(long)]
    fast: bool,
}

#[derive(Args)]
struct InjectArgs {
    /// Dotted parameter path, e.g. env.irradiance.
    path: String,
    value: f64,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = DEFAULT_COMMAND_PORT)]
    port: u16,
    /// Seconds to wait for the reply.
    #[arg(long, default_value_t = 5.0)]
    timeout: f64,
}

#[derive(Args)]
struct SummarizeArgs {
    trace: PathBuf,
    /// Bus voltage setpoint the deviation is measured against, V.
    #[arg(long, default_value_t = 100.0)]
    setpoint: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Size(a) => cmd_size(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Serve(a) => cmd_serve(&a),
        Command::Inject(a) => cmd_inject(&a),
        Command::Summarize(a) => cmd_summarize(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn cmd_size(a: &SizeArgs) -> Result<()> {
    let rating = ConverterRating {
        v_in: a.v_in,
        v_out: a.v_out,
        i_out: a.i_out,
        switching_freq: a.f,
        ..ConverterRating::default()
    };
    if !(a.v_out > a.v_in) {
        // Same exit status clap uses for usage errors.
        eprintln!(
            "error: --v-out ({}) must exceed --v-in ({}) for a boost converter",
            a.v_out, a.v_in
        );
        std::process::exit(2);
    }
    let s = size_converter(&rating)?;
    println!(
        "boost {} V -> {} V, {} A, {} Hz",
        a.v_in, a.v_out, a.i_out, a.f
    );
    println!("ripple current  dI_L = {:.6} A", s.ripple_current);
    println!("ripple voltage  dV_o = {:.6} V", s.ripple_voltage);
    println!("inductance      L    = {:.7} H", s.inductance);
    println!("capacitance     C    = {:.7} F", s.capacitance);
    Ok(())
}

fn resolve_scenario(path: &Path) -> PathBuf {
    if !path.exists() && path.extension().is_none() {
        let with_ext = path.with_extension("ini");
        if with_ext.exists() {
            return with_ext;
        }
    }
    path.to_path_buf()
}

fn load(common: &ScenarioArgs, extra: &[String]) -> Result<ScenarioConfig> {
    let mut overrides = common.overrides.clone();
    if let Some(m) = &common.mode {
        overrides.push(format!("sim.mode={m}"));
    }
    overrides.extend(extra.iter().cloned());
    let path = resolve_scenario(&common.scenario);
    parse_scenario(&path, &overrides).with_context(|| format!("scenario {}", path.display()))
}

fn stop_flag() -> Result<Arc<AtomicBool>> {
    let stop = Arc::new(AtomicBool::new(false));
    let handler = Arc::clone(&stop);
    ctrlc::set_handler(move || handler.store(true, Ordering::SeqCst))
        .context("installing the Ctrl-C handler")?;
    Ok(stop)
}

fn execute(
    cfg: &ScenarioConfig,
    common: &ScenarioArgs,
    hub: Option<AgentHub>,
    realtime: bool,
) -> Result<()> {
    let opts = RunOptions {
        realtime: Some(realtime),
        stop: Some(stop_flag()?),
    };
    let mut hub = hub;
    let mut links: Vec<&mut dyn ControlLink> = Vec::new();
    if let Some(h) = hub.as_mut() {
        links.push(h);
    }
    let (output, orchestrator) = run_scenario(cfg, &mut links, &opts)?;
    drop(links);
    drop(hub);

    if output.trace.is_empty() {
        bail!("interrupted before the first step");
    }
    std::fs::create_dir_all(&common.out)
        .with_context(|| format!("creating {}", common.out.display()))?;
    let trace_path = common.out.join(format!("{}.csv", cfg.name));
    write_trace_csv(&output.trace, &trace_path)?;
    let summary = summarize(&output.trace, cfg.sim.v_grid_setpoint)?;
    let mut text = format!("scenario              {}\nmode                  {}\n", cfg.name, cfg.sim.mode);
    if output.interrupted {
        text.push_str("status                interrupted (partial run)\n");
    }
    text.push_str(&summary.to_string());
    if let Some(o) = &orchestrator {
        let deals = o.ledger().replay();
        text.push_str(&format!("deals                 {}\n", deals.len()));
    }
    std::fs::write(common.out.join(format!("{}.summary.txt", cfg.name)), &text)?;
    print!("{text}");
    println!("trace                 {}", trace_path.display());
    if common.plot {
        let plot_path = common.out.join(format!("{}.svg", cfg.name));
        emit_plot(&output.trace, &plot_path)?;
        println!("plot                  {}", plot_path.display());
    }
    Ok(())
}

fn start_hub(cfg: &ScenarioConfig, command_port: Option<u16>) -> Result<AgentHub> {
    let hub = AgentHub::start(
        HubConfig {
            node_count: cfg.nodes.count,
            base_port: cfg.interchange.base_port,
            command_port,
            status_interval: cfg.interchange.policy.status_interval,
        },
        dcgrid_core::sim::ParamRegistry::new(cfg.nodes.count),
    )?;
    eprintln!(
        "node agents on ports {:?}{}",
        hub.ports(),
        hub.command_port()
            .map(|p| format!(", commands on {p}"))
            .unwrap_or_default()
    );
    Ok(hub)
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let extra: Vec<String> = if a.interchange {
        vec!["interchange.enabled=true".into()]
    } else {
        Vec::new()
    };
    let cfg = load(&a.common, &extra)?;
    let hub = if a.interchange || a.common.command_port.is_some() {
        let hub_cfg = if a.interchange {
            cfg.clone()
        } else {
            // command port only: no node listeners
            let mut c = cfg.clone();
            c.nodes.count = 0;
            c
        };
        Some(start_hub(&hub_cfg, a.common.command_port)?)
    } else {
        None
    };
    let realtime = a.realtime || cfg.sim.realtime_pacing;
    if cfg.sim.mode == SimMode::Transient && realtime {
        log::warn!("real-time pacing of a transient run sleeps once per millisecond step");
    }
    execute(&cfg, &a.common, hub, realtime)
}

fn cmd_serve(a: &ServeArgs) -> Result<()> {
    // No in-process orchestrator: commands come from outside.
    let cfg = load(&a.common, &["interchange.enabled=false".into()])?;
    let hub = start_hub(&cfg, a.common.command_port)?;
    execute(&cfg, &a.common, Some(hub), !a.fast)
}

fn cmd_inject(a: &InjectArgs) -> Result<()> {
    let timeout = Duration::from_secs_f64(a.timeout.max(0.01));
    match send_set((a.host.as_str(), a.port), &a.path, a.value, timeout) {
        Ok(()) => {
            println!("ACK {} = {}", a.path, a.value);
            Ok(())
        }
        Err(ClientError::Refused { code, detail }) => bail!("ERR {code}: {detail}"),
        Err(e) => Err(e).with_context(|| format!("{}:{}", a.host, a.port)),
    }
}

fn cmd_summarize(a: &SummarizeArgs) -> Result<()> {
    let trace = read_trace_csv(&a.trace)?;
    print!("{}", summarize(&trace, a.setpoint)?);
    Ok(())
}
