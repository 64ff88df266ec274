use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prescriptor_cli::commands::{self, parse_prefix, read_prefix_file};
use prescriptor_cli::{CliError, Context};

#[derive(Parser)]
#[command(
    name = "prescriptor",
    version,
    about = "Prescriptive process monitoring with mined MDPs"
)]
struct Cli {
    /// Pipeline configuration (JSON). Defaults apply without one.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replace every seed in the configuration.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Output location of the command: log file, artifact or report directory, or answer file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Artifact directory, replacing `paths.artifacts`.
    #[arg(long, global = true, env = "PRESCRIPTOR_ARTIFACTS")]
    artifacts: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a synthetic event log from the process model.
    Generate {
        #[arg(long)]
        n_traces: Option<usize>,
    },
    /// Split the log, mine the MDP and train every configured policy.
    Train,
    /// Recommend the next activity for ongoing prefixes.
    Recommend {
        /// Trained policy name; the first configured one by default.
        #[arg(long)]
        policy: Option<String>,
        /// Comma-separated activities; repeatable. `""` is the empty prefix.
        #[arg(long)]
        prefix: Vec<String>,
        /// File with one comma-separated prefix per line.
        #[arg(long)]
        prefixes: Option<PathBuf>,
        /// Answer unseen states from the nearest seen state.
        #[arg(long)]
        fallback: bool,
    },
    /// Simulate every trained policy and the model's default behaviour.
    EvalSim,
    /// Analyse the held-out test log against every trained policy.
    EvalLog,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let ctx = Context::new(cli.config.as_deref(), cli.seed_override, cli.out, cli.artifacts)?;
    match cli.command {
        Command::Generate { n_traces } => {
            let path = commands::cmd_generate(&ctx, n_traces)?;
            eprintln!("wrote {}", path.display());
        }
        Command::Train => {
            let dir = commands::cmd_train(&ctx)?;
            eprintln!("wrote artifacts to {}", dir.display());
        }
        Command::Recommend {
            policy,
            prefix,
            prefixes,
            fallback,
        } => {
            let mut all: Vec<Vec<String>> = prefix.iter().map(|p| parse_prefix(p)).collect();
            if let Some(path) = prefixes {
                all.extend(read_prefix_file(&path)?);
            }
            if all.is_empty() {
                return Err(CliError::Config {
                    field: "--prefix".into(),
                    reason: "give at least one prefix or a --prefixes file".into(),
                });
            }
            commands::cmd_recommend(&ctx, policy.as_deref(), &all, fallback)?;
        }
        Command::EvalSim => {
            let report = commands::cmd_eval_sim(&ctx)?;
            for e in &report.entries {
                eprintln!(
                    "{:<10} mean {:>10.2}  std {:>10.2}  accepted {:>5.1}%  abstentions {}",
                    e.name,
                    e.mean_reward,
                    e.std_reward,
                    100.0 * e.acceptance_rate,
                    e.abstentions
                );
            }
        }
        Command::EvalLog => {
            let report = commands::cmd_eval_log(&ctx)?;
            for s in &report.optimal_traces {
                let mean = |m: Option<f64>| m.map_or("-".to_string(), |v| format!("{v:.2}"));
                eprintln!(
                    "{:<10} compliant {:>5} traces, mean {:>10}  (log mean {})",
                    s.policy,
                    s.compliant.count,
                    mean(s.compliant.mean),
                    mean(s.log.mean)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
