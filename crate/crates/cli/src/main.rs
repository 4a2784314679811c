//! `otfwi`: forward modelling, inversion and misfit studies from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use manifest::RunManifest;

#[derive(Debug, Parser)]
#[command(
    name = "otfwi",
    version,
    about = "Full-waveform inversion with optimal-transport misfits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Scenario file, or one of the presets `three_layer`, `thickness`, `bp_like`.
    #[arg(long, global = true)]
    pub scenario: Option<String>,

    /// Output directory (defaults to the scenario's, or `out/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Misfit tag: l2, w1d, w2d or j3 (`both` for landscape).
    #[arg(long, global = true)]
    pub misfit: Option<String>,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Use the full-scale variant of a preset scenario.
    #[arg(long, global = true)]
    pub full_scale: bool,

    /// Write Monge-Ampere potentials, maps and solver diagnostics.
    #[arg(long, global = true)]
    pub dump_ma: bool,

    /// Write a model snapshot every K iterations (0 disables).
    #[arg(long, global = true)]
    pub snapshot_every: Option<usize>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LandscapeKind {
    Shift,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaCase {
    Uniform,
    Translation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forward-model every shot of the true model.
    Simulate {
        /// Add correlated noise at this signal-to-noise ratio (dB).
        #[arg(long)]
        noise_snr: Option<f64>,
    },
    /// Invert observed gathers starting from the scenario's initial model.
    Invert {
        /// Directory of `shot_NNN.bin` gathers; synthesized from the true model when absent.
        #[arg(long)]
        observed: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
    },
    /// Misfit as a function of a shift or of Gaussian parameters.
    Landscape {
        #[arg(long, value_enum, default_value = "shift")]
        kind: LandscapeKind,
        /// Sample count per axis (default 241 for shift, 21 for gaussian).
        #[arg(long)]
        points: Option<usize>,
    },
    /// W2 and L2 against piecewise-constant noise of increasing piece count.
    NoiseStudy {
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "4,8,16,32,64,128,256,512,1024"
        )]
        pieces: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0.1)]
        amplitude: f64,
    },
    /// Solve a Monge-Ampere problem on the unit square.
    MaSolve {
        /// Intervals per side.
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long = "case", value_enum, default_value = "translation")]
        case: MaCase,
        /// Translation of the target along x1.
        #[arg(long, default_value_t = 0.1)]
        shift: f64,
    },
    /// Residuals against the layer thickness of the deepest layer.
    ThicknessStudy {
        /// Thicknesses in km.
        #[arg(long, value_delimiter = ',', default_value = "0.25,0.5,1,1.5,2,2.5,3")]
        thicknesses: Vec<f64>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Invert { .. } => "invert",
            Command::Landscape { .. } => "landscape",
            Command::NoiseStudy { .. } => "noise-study",
            Command::MaSolve { .. } => "ma-solve",
            Command::ThicknessStudy { .. } => "thickness-study",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start the thread pool: {e}");
            return ExitCode::from(4);
        }
    }

    let mut man = RunManifest::new(cli.command.name(), cli.seed, rayon::current_num_threads());
    man.scenario = cli.scenario.clone();
    let scenario = commands::load_scenario(&cli);
    let out = commands::output_dir(&cli, scenario.as_ref().ok().and_then(|s| s.as_ref()));
    let result = scenario.and_then(|s| commands::execute(&cli, s, &out, &mut man));

    let code = match result {
        Ok(()) => {
            man.status = "ok".into();
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            man.status = "error".into();
            man.exit_code = e.exit_code();
            man.error = Some(e.to_string());
            e.exit_code()
        }
    };
    match man.write(&out) {
        Ok(p) => log::info!("manifest written to {}", p.display()),
        Err(e) => {
            eprintln!("error: cannot write the manifest in {}: {e}", out.display());
            return ExitCode::from(4);
        }
    }
    ExitCode::from(code as u8)
}
