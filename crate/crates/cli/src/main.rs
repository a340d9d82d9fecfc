//! `hyperangle`: orbit generation, empirical pair correlation and the
//! limiting density, side by side.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use hyperangle::lattice::DEFAULT_POINT_CAP;

#[derive(Parser, Debug)]
#[command(name = "hyperangle", version, about = "Pair correlation of angles in hyperbolic lattice orbits")]
pub struct Cli {
    /// Worker threads (falls back to HYPERANGLE_THREADS, then all cores).
    #[arg(long, global = true, env = "HYPERANGLE_THREADS")]
    pub threads: Option<usize>,

    /// TOML file whose keys override command-line flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output file (default: standard output).
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,

    /// Refuse to materialize more orbit points than this.
    #[arg(long, global = true, default_value_t = DEFAULT_POINT_CAP)]
    pub point_cap: usize,

    #[arg(long = "quad-abs-tol", global = true, default_value_t = 1e-12)]
    pub quad_abs_tol: f64,

    #[arg(long = "quad-rel-tol", global = true, default_value_t = 1e-10)]
    pub quad_rel_tol: f64,

    #[arg(long = "quad-max-subdiv", global = true, default_value_t = 200)]
    pub quad_max_subdiv: usize,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Generate or inspect orbit files.
    #[command(subcommand)]
    Orbit(OrbitCmd),
    /// Empirical R₂,Q against the limiting R₂ and g₂.
    Paircorr(PaircorrArgs),
    /// Main term against direct integration of vol(R_M(Q, ξ)).
    VolumeCheck(VolumeArgs),
    /// g₂(ξ) against (n−1)ξ^{n−2}.
    Asymptotics(AsymptoticsArgs),
    /// Recover distances from the kinks of g₂.
    SpectrumRecover(RecoverArgs),
    /// Kernel tables.
    #[command(subcommand)]
    Density(DensityCmd),
}

#[derive(Subcommand, Debug)]
pub enum OrbitCmd {
    /// Enumerate an orbit and write it in the v1 format.
    Gen(GenArgs),
    /// Summarize an orbit file.
    Info {
        file: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum DensityCmd {
    /// Tabulate f_ξ(l) with ξ or l fixed.
    PlotF(PlotFArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Lorentz,
    Psl2z,
    File,
}

/// Where the orbit comes from and how V_eff is obtained.
#[derive(Args, Debug, Clone)]
pub struct SourceArgs {
    /// Orbit file in the v1 format (implies --backend file).
    #[arg(long)]
    pub orbit: Option<PathBuf>,

    #[arg(long, value_enum)]
    pub backend: Option<Backend>,

    /// Dimension of H^n.
    #[arg(long)]
    pub n: Option<usize>,

    /// Norm cutoff ‖γ‖ ≤ Q.
    #[arg(long)]
    pub q: Option<f64>,

    /// Effective covolume; otherwise taken from the file or calibrated.
    #[arg(long)]
    pub veff: Option<f64>,

    /// Fit V_eff to the point counts.
    #[arg(long)]
    pub calibrate: bool,

    /// Fit range start (default 0.3·Q).
    #[arg(long)]
    pub fit_lo: Option<f64>,

    /// Fit range end (default Q).
    #[arg(long)]
    pub fit_hi: Option<f64>,

    #[arg(long, default_value_t = 20)]
    pub fit_samples: usize,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[command(flatten)]
    pub source: SourceArgs,
}

#[derive(Args, Debug)]
pub struct PaircorrArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    /// ξ values: comma list or geometric `lo:hi:count`.
    #[arg(long, default_value = "0.5,1,2,4")]
    pub xi: String,

    /// Restrict to a cone, e.g. `--cone axis=1,0 theta=1.0472`.
    #[arg(long, num_args = 1..=2)]
    pub cone: Option<Vec<String>>,

    /// Theory sums over ‖M‖ ≤ this (default: Q).
    #[arg(long)]
    pub truncation: Option<f64>,
}

#[derive(Args, Debug)]
pub struct VolumeArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,

    #[arg(long, default_value_t = 100.0)]
    pub q: f64,

    /// Distances t(M), comma separated.
    #[arg(long, default_value = "1,2,3")]
    pub t: String,

    /// Values of ξ in R_M(Q, ξ), comma separated.
    #[arg(long, default_value = "0.5,1,2")]
    pub xi: String,
}

#[derive(Args, Debug)]
pub struct AsymptoticsArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    #[arg(long, default_value = "1,2,5,10,20,50")]
    pub xi: String,

    #[arg(long)]
    pub truncation: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RecoverArgs {
    #[command(flatten)]
    pub source: SourceArgs,

    /// Synthetic spectrum `t:mult,...` used instead of an orbit.
    #[arg(long)]
    pub synthetic: Option<String>,

    /// Normalization constant for synthetic input (alternative to --veff).
    #[arg(long)]
    pub k: Option<f64>,

    #[arg(long, default_value_t = 3)]
    pub depth: usize,

    #[arg(long, default_value_t = 0.05)]
    pub xi_min: f64,

    #[arg(long, default_value_t = 20.0)]
    pub xi_max: f64,

    #[arg(long, default_value_t = 2000)]
    pub grid_points: usize,
}

#[derive(Args, Debug)]
pub struct PlotFArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,

    /// `xi=<value>` or `l=<value>`.
    #[arg(long)]
    pub fix: String,

    /// Range of the free variable, `lo:hi`.
    #[arg(long, default_value = "0.05:10")]
    pub range: String,

    #[arg(long, default_value_t = 400)]
    pub points: usize,
}

fn with_override(cmd: clap::Command) -> clap::Command {
    cmd.args_override_self(true).mut_subcommands(with_override)
}

fn run() -> Result<(), ExitCode> {
    let mut argv: Vec<String> = std::env::args().collect();
    if let Some(path) = config::config_path(&argv) {
        match config::config_flags(std::path::Path::new(&path)) {
            Ok(extra) => argv.extend(extra),
            Err(e) => {
                eprintln!("error: {e:#}");
                return Err(ExitCode::from(2));
            }
        }
    }
    let matches = match with_override(Cli::command()).try_get_matches_from(&argv) {
        Ok(m) => m,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return Err(ExitCode::from(code as u8));
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return Err(ExitCode::from(2));
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return Err(ExitCode::from(2));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    commands::dispatch(&cli, &argv[1..]).map_err(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(commands::exit_code(&e) as u8)
    })
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
