//! `mtsfm` command-line tool.
//!
//! Exit codes: 0 success, 1 computation failure, 2 config or usage error,
//! 3 optimizer stopped without converging (artifacts still written),
//! 4 I/O error.

mod commands;
mod config;
mod export;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands::CommandError;
use crate::config::{ConfigError, Mode, RunConfig, WeightSpec};
use crate::export::{Stamp, Writer};

const EXIT_COMPUTE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "mtsfm", version, about = "Multi-tone sinusoidal FM waveform toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize waveforms and export samples, spectrogram, EDS, ACF, AF
    /// and metrics.
    Synth(RunArgs),
    /// Export ACF/CCF curves, ambiguity surfaces and metrics.
    Analyze(RunArgs),
    /// Optimize a waveform family for low ISR and low cross-correlation.
    OptimizeFamily(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON run config.
    #[arg(long, conflicts_with = "recipe", required_unless_present = "recipe")]
    config: Option<PathBuf>,
    /// Built-in config.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(config::RECIPES))]
    recipe: Option<String>,
    /// Output directory [default: config `out`, else `out`].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replace the family weights; `custom` requires custom weights in the
    /// config.
    #[arg(long, value_enum)]
    weights: Option<WeightArg>,
    #[arg(long)]
    oversample: Option<f64>,
    /// Worker threads for the numeric kernels (outputs do not depend on it).
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum WeightArg {
    Equal,
    CcfHeavy,
    AcfHeavy,
    Custom,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match cli.command {
        Command::Synth(a) => (Mode::Synth, a),
        Command::Analyze(a) => (Mode::Analyze, a),
        Command::OptimizeFamily(a) => (Mode::OptimizeFamily, a),
    };
    match run(mode, args) {
        Ok(code) => code,
        Err(e) => {
            let code = match &e {
                CommandError::Config(c) => {
                    eprintln!("config error: {c}");
                    EXIT_CONFIG
                }
                CommandError::Io(io) => {
                    eprintln!("i/o error: {io}");
                    EXIT_IO
                }
                CommandError::Compute(err) => {
                    eprintln!("error: {err}");
                    EXIT_COMPUTE
                }
            };
            ExitCode::from(code)
        }
    }
}

fn run(mode: Mode, args: RunArgs) -> Result<ExitCode, CommandError> {
    let cfg = resolve(mode, &args)?;
    if let Some(n) = args.threads {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global();
    }
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let stamp = Stamp {
        config_hash: cfg.hash(),
        seed: cfg.seed,
    };
    let mut writer = Writer::new(&out_dir, stamp, cfg.export.floor_db)?;
    writer.json("config.json", &cfg)?;
    let outcome = match mode {
        Mode::Synth => commands::synth(&cfg, &mut writer)?,
        Mode::Analyze => commands::analyze(&cfg, &mut writer)?,
        Mode::OptimizeFamily => commands::optimize(&cfg, &mut writer)?,
    };
    for path in writer.written() {
        println!("{}", path.display());
    }
    if outcome.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: optimizer reached its iteration cap without converging");
        Ok(ExitCode::from(EXIT_NOT_CONVERGED))
    }
}

/// Load the config or recipe, apply flag overrides and validate.
fn resolve(mode: Mode, args: &RunArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = match (&args.config, &args.recipe) {
        (Some(path), _) => config::load(path)?,
        (None, Some(name)) => config::recipe(name)
            .ok_or_else(|| ConfigError::new("", format!("unknown recipe `{name}`")))?,
        (None, None) => return Err(ConfigError::new("", "need --config or --recipe")),
    };
    cfg.validate(mode)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(os) = args.oversample {
        if !(os.is_finite() && os >= 1.0) {
            return Err(ConfigError::new("--oversample", "must be at least 1"));
        }
        cfg.oversample = os;
        if let Some(f) = cfg.family.as_mut() {
            f.settings.oversample = os;
        }
    }
    if let Some(w) = args.weights {
        let f = cfg
            .family
            .as_mut()
            .ok_or_else(|| ConfigError::new("family", "--weights needs a family"))?;
        f.weights = match w {
            WeightArg::Equal => WeightSpec::Equal,
            WeightArg::CcfHeavy => WeightSpec::CcfHeavy,
            WeightArg::AcfHeavy => WeightSpec::AcfHeavy,
            WeightArg::Custom => match &f.weights {
                WeightSpec::Custom { .. } => f.weights.clone(),
                _ => {
                    return Err(ConfigError::new(
                        "family.weights",
                        "--weights custom needs custom weights in the config",
                    ))
                }
            },
        };
    }
    cfg.mode = Some(mode);
    cfg.validate(mode)?;
    Ok(cfg)
}
