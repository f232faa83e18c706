//! `sfwm`: biphoton observables, synthetic time tags and their analysis.
//!
//! Exit status: 0 on success, 2 for usage or invalid input, 1 when a
//! computation fails.

mod commands;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use sfwm::event_sim::scenario_hash;
use sfwm::params::{load_scenario, ParamError, Scenario};

use crate::output::{RunDir, RunManifest, MANIFEST_VERSION};

#[derive(Parser, Debug)]
#[command(name = "sfwm", version, about = "Double-Λ four-wave-mixing biphoton simulator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Scenario document (JSON). Defaults to the OD 20 reference scenario.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run directory. Defaults to runs/<subcommand>-<timestamp>.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Replace an existing run directory.
    #[arg(long, global = true)]
    force: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; falls back to SFWM_THREADS, then all cores.
    #[arg(long, global = true, env = "SFWM_THREADS")]
    threads: Option<usize>,
    /// Histogram bin width (ns).
    #[arg(long, global = true)]
    bin_ns: Option<f64>,
    /// Phase mismatch ΔkL in units of π.
    #[arg(long, global = true, allow_hyphen_values = true)]
    dkl_over_pi: Option<f64>,
    #[arg(long, global = true)]
    od: Option<f64>,
    /// Ground-state decoherence γ21 (Γ units).
    #[arg(long, global = true)]
    gamma21: Option<f64>,
    #[arg(long, global = true)]
    omega_d: Option<f64>,
    #[arg(long, global = true)]
    omega_c: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    delta_d: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    delta_c: Option<f64>,
    /// Acquisition time in hours.
    #[arg(long, global = true)]
    hours: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Zeroth-order populations and coherences.
    SteadyState,
    /// Coupled-mode coefficients and noise vectors at one frequency.
    Coefficients {
        /// ω in Γ units.
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
    },
    /// Transfer coefficients and noise quadratures at one frequency.
    Transfer {
        #[arg(long, allow_hyphen_values = true)]
        omega: f64,
    },
    /// Spectra on the frequency grid, and the rates.
    Spectrum,
    /// Correlation functions on the delay grid.
    Correlate {
        /// Largest |τ| written to the CSV (ns).
        #[arg(long, default_value_t = 2000.0)]
        tau_max_ns: f64,
    },
    /// Summary metrics: r_SB, τ_delay, τ_c, heralding efficiencies.
    Metrics,
    /// Expected coincidence counts and the rates recovered from them.
    Coincidence,
    /// Synthetic time-tag stream.
    SimulateEvents {
        /// Also write a CSV export.
        #[arg(long)]
        csv: bool,
    },
    /// Histograms and estimates from a time-tag stream (binary or .csv).
    Analyze {
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// Coincidence window half-width (ns).
        #[arg(long)]
        window_ns: Option<f64>,
    },
    /// Rates and metrics over a one-parameter range.
    Sweep {
        #[arg(long, value_enum)]
        param: commands::SweepParam,
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Geometric instead of linear spacing.
        #[arg(long)]
        log: bool,
    },
    /// The four published scenarios against the published values.
    Table1,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SteadyState => "steady-state",
            Command::Coefficients { .. } => "coefficients",
            Command::Transfer { .. } => "transfer",
            Command::Spectrum => "spectrum",
            Command::Correlate { .. } => "correlate",
            Command::Metrics => "metrics",
            Command::Coincidence => "coincidence",
            Command::SimulateEvents { .. } => "simulate-events",
            Command::Analyze { .. } => "analyze",
            Command::Sweep { .. } => "sweep",
            Command::Table1 => "table1",
        }
    }
}

/// Bad input rather than a failed computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn resolve_scenario(g: &Global) -> Result<Scenario, ParamError> {
    let mut s = match &g.config {
        Some(p) => load_scenario(p)?,
        None => Scenario::default(),
    };
    let sys = &mut s.system;
    if let Some(v) = g.od {
        sys.od = v;
    }
    if let Some(v) = g.gamma21 {
        sys.gamma_21 = v;
    }
    if let Some(v) = g.dkl_over_pi {
        sys.delta_k_l = v * std::f64::consts::PI;
    }
    if let Some(v) = g.omega_d {
        sys.omega_d = v;
    }
    if let Some(v) = g.omega_c {
        sys.omega_c = v;
    }
    if let Some(v) = g.delta_d {
        sys.delta_d = v;
    }
    if let Some(v) = g.delta_c {
        sys.delta_c = v;
    }
    if let Some(v) = g.bin_ns {
        s.detection.bin_width = v * 1e-9;
    }
    if let Some(h) = g.hours {
        s.detection.acquisition_time = h * 3600.0;
    }
    s.validate()?;
    Ok(s)
}

fn run(cli: Cli, argv: Vec<String>) -> Result<()> {
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    let scenario = resolve_scenario(g).map_err(|e| UsageError(format!("params: {e}")))?;
    let name = cli.command.name();
    let out = g.out.clone().unwrap_or_else(|| {
        PathBuf::from("runs").join(format!("{name}-{}", started.format("%Y%m%dT%H%M%S%.3f")))
    });
    let mut dir = RunDir::create(&out, g.force)?;
    let ctx = commands::Context {
        scenario: &scenario,
        seed: g.seed.unwrap_or(0),
    };
    let mut inputs = Vec::new();
    let summary = match &cli.command {
        Command::SteadyState => commands::steady_state(&ctx, &mut dir)?,
        Command::Coefficients { omega } => commands::coefficients(&ctx, &mut dir, *omega)?,
        Command::Transfer { omega } => commands::transfer(&ctx, &mut dir, *omega)?,
        Command::Spectrum => commands::spectrum(&ctx, &mut dir)?,
        Command::Correlate { tau_max_ns } => commands::correlate(&ctx, &mut dir, *tau_max_ns)?,
        Command::Metrics => commands::metrics(&ctx, &mut dir)?,
        Command::Coincidence => commands::coincidence(&ctx, &mut dir)?,
        Command::SimulateEvents { csv } => commands::simulate_events(&ctx, &mut dir, *csv)?,
        Command::Analyze { input, window_ns } => {
            inputs.push(input.clone());
            commands::analyze(&ctx, &mut dir, input, *window_ns, g.hours)?
        }
        Command::Sweep {
            param,
            from,
            to,
            points,
            log,
        } => commands::sweep(&ctx, &mut dir, *param, *from, *to, *points, *log)?,
        Command::Table1 => commands::table1(&ctx, &mut dir)?,
    };
    let finished = chrono::Utc::now();
    let manifest = RunManifest {
        manifest_version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        subcommand: name.to_string(),
        argv,
        scenario: serde_json::from_str(&scenario.to_json_string())?,
        scenario_hash: scenario_hash(&scenario),
        seed: matches!(cli.command, Command::SimulateEvents { .. }).then_some(ctx.seed),
        threads: rayon::current_num_threads(),
        inputs,
        output_dir: dir.target().to_path_buf(),
        files: dir.files().to_vec(),
        started_at: started.to_rfc3339(),
        finished_at: finished.to_rfc3339(),
        elapsed_s: clock.elapsed().as_secs_f64(),
    };
    let path = dir.seal(&manifest)?;
    let text = match summary {
        commands::Summary::Json(v) => serde_json::to_string_pretty(&v)? + "\n",
        commands::Summary::Text(t) => t,
    };
    // a closed pipe downstream is not a failure of the run
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
    eprintln!("results in {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
