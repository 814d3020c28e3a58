use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use toolrec::pipeline::commands;
use toolrec::pipeline::config::RunConfig;
use toolrec::pipeline::manifest::Manifest;

#[derive(Parser)]
#[command(name = "toolrec", version, about = "Tool-augmented agentic recommendation pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config value, e.g. `--set tools.alpha=0.3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the dataset, split it and sample candidate sets.
    Ingest,
    /// Build the item relation graph and the knowledge graph.
    BuildGraphs,
    /// Generate user profiles and the similarity index.
    GenProfiles,
    /// Serve the tools over HTTP until interrupted.
    ServeTools,
    /// Run one episode and print its transcript.
    RunAgent {
        /// Case id such as `A00001:test`; defaults to the first evaluation case.
        #[arg(long)]
        case: Option<String>,
    },
    /// Run the policy over the generation split.
    GenTrajectories,
    /// Keep accurate, well-formed trajectories as SFT samples.
    FilterSft,
    /// Select RL cases by rollout success rate.
    SampleRl,
    /// Score the policy on the evaluation split.
    Evaluate,
    /// Recompute rewards for a trajectory file.
    RewardCheck {
        /// Trajectory JSONL; defaults to the generated trajectories.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Print the resolved configuration.
    ShowConfig,
}

fn print_manifest(m: &Manifest) {
    eprintln!("{}: {}", m.command, m.summary);
}

fn run(cli: Cli) -> toolrec::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Ingest => print_manifest(&commands::ingest(&cfg)?),
        Command::BuildGraphs => print_manifest(&commands::build_graphs_cmd(&cfg)?),
        Command::GenProfiles => print_manifest(&commands::gen_profiles(&cfg)?),
        Command::ServeTools => {
            let (handle, _) = commands::serve_tools(&cfg)?;
            eprintln!("serving tools on {}", handle.base_url());
            handle.join();
        }
        Command::RunAgent { case } => {
            let (m, traj) = commands::run_agent(&cfg, case.as_deref())?;
            println!("{}", traj.transcript());
            print_manifest(&m);
        }
        Command::GenTrajectories => print_manifest(&commands::gen_trajectories(&cfg)?),
        Command::FilterSft => print_manifest(&commands::filter_sft_cmd(&cfg)?),
        Command::SampleRl => print_manifest(&commands::sample_rl(&cfg)?),
        Command::Evaluate => {
            let (m, text) = commands::evaluate_cmd(&cfg)?;
            println!("{text}");
            print_manifest(&m);
        }
        Command::RewardCheck { input } => {
            let (m, text) = commands::reward_check(&cfg, input.as_deref())?;
            println!("{text}");
            print_manifest(&m);
        }
        Command::ShowConfig => print!("{}", cfg.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
