mod fit;
mod manifest;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nowcast_core::model::ModelConfig;
use nowcast_core::simulate::{simulate, write_outputs, SimConfig};

/// Exit status when outputs were written but some R-hat exceeded the
/// threshold.
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "nowcast", version, about = "Nowcast migrant stocks from survey and social-media data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic survey and social-media panels with known truth.
    Simulate {
        /// TOML file with simulation settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Fit the model and write samples, summaries and forecasts.
    Fit {
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        social: Option<PathBuf>,
        /// Survey year paired with the first social-media wave. Defaults to
        /// the year before the first wave.
        #[arg(long)]
        anchor_year: Option<i32>,
        /// Years to project past the last modelled year (0 to 5).
        #[arg(long, default_value_t = 0)]
        horizon: u32,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Hold out the final survey year and compare four forecasts.
    Validate {
        #[arg(long)]
        survey: PathBuf,
        #[arg(long)]
        social: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Write tidy CSVs behind the standard figures into RUN_DIR/plots.
    ExportPlots {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Timeseries,
    AgeDist,
    BiasFit,
    Rmse,
}

/// Sampler settings. Flags override the TOML run config, which overrides
/// the defaults.
#[derive(Args)]
struct SamplerArgs {
    /// TOML run config with `ModelConfig` keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    iter: Option<usize>,
    #[arg(long)]
    warmup: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rhat_threshold: Option<f64>,
}

impl SamplerArgs {
    fn resolve(&self) -> Result<ModelConfig> {
        let mut config: ModelConfig = match &self.config {
            Some(path) => read_toml(path)?,
            None => ModelConfig::default(),
        };
        if let Some(v) = self.chains {
            config.n_chains = v;
        }
        if let Some(v) = self.iter {
            config.n_iter = v;
        }
        if let Some(v) = self.warmup {
            config.n_warmup = v;
        }
        if let Some(v) = self.thin {
            config.thin = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.rhat_threshold {
            config.rhat_threshold = v;
        }
        config.validate()?;
        Ok(config)
    }
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    NotConverged(String),
}

fn run(cli: Cli) -> Result<Status> {
    match cli.command {
        Command::Simulate { config, out_dir, seed } => {
            let sim: SimConfig = match &config {
                Some(path) => read_toml(path)?,
                None => SimConfig::default(),
            };
            let output = simulate(&sim, seed)?;
            write_outputs(&output, &out_dir)?;
            manifest::write_simulate_manifest(&out_dir, &sim, seed)?;
            Ok(Status::Ok)
        }
        Command::Fit {
            survey,
            social,
            anchor_year,
            horizon,
            out_dir,
            sampler,
        } => fit::fit(&fit::FitRequest {
            survey,
            social,
            anchor_year,
            horizon,
            out_dir,
            config: sampler.resolve()?,
        }),
        Command::Validate {
            survey,
            social,
            out_dir,
            sampler,
        } => fit::validate(&survey, &social, &out_dir, &sampler.resolve()?),
        Command::ExportPlots { run_dir, kind } => {
            plots::export(&run_dir, kind)?;
            Ok(Status::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NotConverged(msg)) => {
            eprintln!("warning: {msg}");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
