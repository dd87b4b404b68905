use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clusterda_cli::{execute_to, write_synthetic, CliError, ExperimentConfig, Mode, OUTPUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "clusterda", version, about = "Cross-domain intrusion detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adapted detector and the baselines over all seeds.
    Run(RunArgs),
    /// Compare clustering, random and no correspondences over all seeds.
    Ablate(RunArgs),
    /// Write a synthetic source/target pair as CSV.
    Synth {
        /// Config whose synthetic task is drawn; defaults apply when omitted.
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = OUTPUT_DIR_ENV)]
        output_dir: Option<PathBuf>,
    },
    /// Parse and check a config, printing the resolved form as TOML.
    ValidateConfig { config: PathBuf },
}

#[derive(clap::Args)]
struct RunArgs {
    config: PathBuf,
    /// Overrides `run.output_dir`.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => experiment(args, Mode::Run),
        Command::Ablate(args) => experiment(args, Mode::Ablate),
        Command::Synth {
            config,
            seed,
            output_dir,
        } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(&p)?,
                None => ExperimentConfig::default().resolve()?,
            };
            let dir = output_dir.unwrap_or_else(|| cfg.run.output_dir.clone());
            for p in write_synthetic(&cfg, seed, &dir)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let text = toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
            print!("{text}");
            Ok(())
        }
    }
}

fn experiment(args: RunArgs, mode: Mode) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    let dir = args.output_dir.unwrap_or_else(|| cfg.run.output_dir.clone());
    let report = execute_to(&cfg, mode, &dir)?;
    for s in &report.summaries {
        println!(
            "{:<20} acc {:.4} ± {:.4}  f1 {:.4}  auc {:.4}",
            s.method, s.acc.mean, s.acc.std, s.f1.mean, s.auc.mean
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
