use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use tcsde::cli_io::{parse_config, run, CliError, Command, ConfigError, MlSpec, Preset, RunConfig};

#[derive(Parser)]
#[command(
    name = "tcsde",
    version,
    about = "Stochastic theta simulation of SDEs driven by time-changed Brownian motion"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sample a subordinator, its inverse and one scheme trajectory.
    Path(Common),
    /// Evaluate the Mittag-Leffler function.
    Ml {
        #[command(flatten)]
        common: Common,
        /// Stability index; overrides the config.
        #[arg(long)]
        alpha: Option<f64>,
        /// Evaluation points; overrides the config.
        #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
        z: Vec<f64>,
    },
    /// Check inverse-subordinator moments against the closed form.
    Moments(Common),
    /// Strong errors over a step grid and the fitted order.
    Convergence(Common),
    /// Mean-square stability curves over a (theta, delta) sweep.
    Stability(Common),
    /// Check a model's declared assumption constants on a grid.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: PresetArg,
    /// Also write SVG figures.
    #[arg(long)]
    svg: bool,
    /// Worker threads when the config does not set `mc.max_concurrency`.
    #[arg(long, env = "TCSDE_MAX_THREADS")]
    max_threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Desk,
    Paper,
}

fn load(command: Command, common: &Common) -> Result<RunConfig, CliError> {
    let mut config = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            let c = parse_config(&text)?;
            if c.command != command {
                return Err(ConfigError::Invalid {
                    key: "command".into(),
                    message: format!(
                        "config is for `{}`, invoked as `{}`",
                        c.command.name(),
                        command.name()
                    ),
                }
                .into());
            }
            c
        }
        None => RunConfig::default_for(command),
    };
    if let Some(seed) = common.seed {
        config.mc.master_seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.emit_svg |= common.svg;
    if config.mc.max_concurrency.is_none() {
        config.mc.max_concurrency = common.max_threads;
    }
    if let PresetArg::Paper = common.preset {
        config.apply_preset(Preset::Paper);
        eprintln!(
            "warning: paper preset; estimated single-thread runtime {:.0} s",
            config.estimated_seconds()
        );
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Path(c) => load(Command::Path, c),
        Cmd::Moments(c) => load(Command::Moments, c),
        Cmd::Convergence(c) => load(Command::Convergence, c),
        Cmd::Stability(c) => load(Command::Stability, c),
        Cmd::Validate(c) => load(Command::Validate, c),
        Cmd::Ml { common, alpha, z } => load(Command::Ml, common).and_then(|mut c| {
            if let Some(a) = alpha {
                c.alpha = *a;
            }
            if !z.is_empty() {
                c.ml = Some(MlSpec { z: z.clone() });
            }
            c.validate()?;
            Ok(c)
        }),
    }
    .and_then(|config| run(&config));
    match result {
        Ok(bundle) => {
            for m in &bundle.messages {
                println!("{m}");
            }
            println!(
                "wrote {}",
                bundle.output_dir.join(&bundle.json_summary_path).display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
