//! spikelab: sweeps, threshold tables, SE/AMP runs, phase diagrams and
//! small-n oracle checks for symmetric rank-one matrix estimation.
//!
//! Exit codes: 0 success, 1 a numerical-failure flag was raised, 2 config
//! error. Identical config + seed produce byte-identical output. The env
//! var SPIKELAB_THREADS caps the worker pool.

mod commands;
mod config;
mod output;

use clap::{Args, Parser, Subcommand};
use config::{parse_config_file, CliError, Settings};

#[derive(Parser)]
#[command(name = "spikelab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default, Clone)]
struct CommonArgs {
    /// Plain `key = value` config file; flags given here override it.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
    /// Prior spec: ber[:rho] | community[:rho[:eps]] | rademacher | dirac:a | atoms:v:p,...
    #[arg(long)]
    prior: Option<String>,
    /// Density parameter for parametric prior families.
    #[arg(long)]
    rho: Option<f64>,
    /// Bias for zero-mean priors (default 1e-4).
    #[arg(long)]
    eps: Option<f64>,
    /// Noise variance.
    #[arg(long)]
    delta: Option<f64>,
    /// Noise grid: lo:hi:count[:log] or comma list.
    #[arg(long = "delta-grid")]
    delta_grid: Option<String>,
    /// Density grid for phase diagrams.
    #[arg(long = "rho-grid")]
    rho_grid: Option<String>,
    /// Problem size (per block for coupled runs).
    #[arg(long)]
    n: Option<usize>,
    /// Chain parameter L (the ring has L+1 blocks).
    #[arg(long = "L")]
    l: Option<usize>,
    /// Coupling window.
    #[arg(long)]
    w: Option<usize>,
    /// Number of Monte Carlo seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Base seed; task k uses seed XOR k.
    #[arg(long)]
    seed: Option<u64>,
    /// Iteration cap.
    #[arg(long)]
    tmax: Option<usize>,
    /// Convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<String>,
    /// Output format: csv | json.
    #[arg(long)]
    format: Option<String>,
    /// Drive the AMP denoiser snr from state evolution instead of the
    /// empirical estimate.
    #[arg(long = "se-driven")]
    se_driven: bool,
    /// E-grid resolution for potential curves.
    #[arg(long)]
    grid: Option<usize>,
    /// Disorder samples for oracle checks.
    #[arg(long)]
    samples: Option<usize>,
    /// Finite-difference step (in 1/Delta) for the I-MMSE check.
    #[arg(long = "fd-step")]
    fd_step: Option<f64>,
    /// Bracket lo:hi for the AMP threshold search.
    #[arg(long = "bracket-amp")]
    bracket_amp: Option<String>,
    /// Bracket lo:hi for the RS threshold search.
    #[arg(long = "bracket-rs")]
    bracket_rs: Option<String>,
    /// Phase-diagram family: spiked | community.
    #[arg(long)]
    family: Option<String>,
    /// SE starting point (defaults to v).
    #[arg(long)]
    e0: Option<f64>,
    /// Output thinning stride for coupled traces.
    #[arg(long)]
    stride: Option<usize>,
    /// Coupled SE on an open chain seeded at the left end only (wave-speed
    /// studies) instead of the standard ring.
    #[arg(long = "open-chain")]
    open_chain: bool,
    /// Size grid for the MMSE inequality sweep, e.g. 4,6,8,10.
    #[arg(long)]
    sizes: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// RS potential curve: CSV (E, i_rs, d_i_rs).
    Potential(CommonArgs),
    /// Thresholds: JSON (delta_amp, delta_rs, brackets, stationary_points).
    Thresholds(CommonArgs),
    /// Uncoupled state evolution trace: CSV (t, E).
    Se(CommonArgs),
    /// Coupled state evolution history: CSV (t, mu, E_mu).
    CoupledSe(CommonArgs),
    /// AMP on sampled instances: CSV (seed, t, Vmse, Mmse, E_se, Mmse_se).
    Amp(CommonArgs),
    /// Coupled AMP: CSV (seed, t, mu, Vmse, E_se).
    CoupledAmp(CommonArgs),
    /// Threshold lines over a density grid: CSV (rho, Delta_AMP, Delta_RS, Delta_spectral).
    PhaseDiagram(CommonArgs),
    /// Small-n exact posterior checks: JSON report.
    Oracle(CommonArgs),
}

fn build_settings(args: &CommonArgs) -> Result<Settings, CliError> {
    let mut settings = Settings::default();
    if let Some(path) = &args.config {
        settings.map = parse_config_file(path)?;
    }
    let f = |x: &Option<f64>| x.map(|v| v.to_string());
    let u = |x: &Option<usize>| x.map(|v| v.to_string());
    settings.merge_flag("prior", args.prior.clone());
    settings.merge_flag("rho", f(&args.rho));
    settings.merge_flag("eps", f(&args.eps));
    settings.merge_flag("delta", f(&args.delta));
    settings.merge_flag("delta_grid", args.delta_grid.clone());
    settings.merge_flag("rho_grid", args.rho_grid.clone());
    settings.merge_flag("n", u(&args.n));
    settings.merge_flag("L", u(&args.l));
    settings.merge_flag("w", u(&args.w));
    settings.merge_flag("seeds", u(&args.seeds));
    settings.merge_flag("seed", args.seed.map(|v| v.to_string()));
    settings.merge_flag("tmax", u(&args.tmax));
    settings.merge_flag("tol", f(&args.tol));
    settings.merge_flag("out", args.out.clone());
    settings.merge_flag("format", args.format.clone());
    if args.se_driven {
        settings.merge_flag("se_driven", Some("true".to_string()));
    }
    settings.merge_flag("grid", u(&args.grid));
    settings.merge_flag("samples", u(&args.samples));
    settings.merge_flag("fd_step", f(&args.fd_step));
    settings.merge_flag("bracket_amp", args.bracket_amp.clone());
    settings.merge_flag("bracket_rs", args.bracket_rs.clone());
    settings.merge_flag("family", args.family.clone());
    settings.merge_flag("e0", f(&args.e0));
    settings.merge_flag("stride", u(&args.stride));
    settings.merge_flag("sizes", args.sizes.clone());
    if args.open_chain {
        settings.merge_flag("open_chain", Some("true".to_string()));
    }
    Ok(settings)
}

fn init_thread_pool() {
    let threads = std::env::var("SPIKELAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&k| k >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1).min(8));
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    let (args, run): (
        &CommonArgs,
        fn(&Settings) -> Result<commands::CmdOutput, CliError>,
    ) = match &cli.command {
        Command::Potential(a) => (a, commands::cmd_potential),
        Command::Thresholds(a) => (a, commands::cmd_thresholds),
        Command::Se(a) => (a, commands::cmd_se),
        Command::CoupledSe(a) => (a, commands::cmd_coupled_se),
        Command::Amp(a) => (a, commands::cmd_amp),
        Command::CoupledAmp(a) => (a, commands::cmd_coupled_amp),
        Command::PhaseDiagram(a) => (a, commands::cmd_phase_diagram),
        Command::Oracle(a) => (a, commands::cmd_oracle),
    };
    let result = build_settings(args).and_then(|settings| {
        let out = run(&settings)?;
        match settings.get("out") {
            Some(path) => std::fs::write(path, &out.body)
                .map_err(|e| CliError::config(format!("cannot write `{path}`: {e}")))?,
            None => print!("{}", out.body),
        }
        Ok(out.numerical_flag)
    });
    match result {
        Ok(false) => {}
        Ok(true) => std::process::exit(1),
        Err(e @ CliError::Config(_)) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
        Err(e @ CliError::Numerical(_)) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    }
}
