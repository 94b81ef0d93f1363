use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use needle_cli::commands;
use needle_cli::{ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "needle", version, about = "Rare-document retrieval experiments and annotation service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predictive keyword lists evaluated as boolean queries.
    Keywords(Common),
    /// Embedding-based expansion of the keyword lists.
    Expand(Common),
    /// LDA fits and the exhaustive topic-rule sweep.
    Topicrules(Common),
    /// Active and passive learning replications with a simulated oracle.
    Supervised(Common),
    /// Interactive labeling over HTTP for one loop run.
    Serve {
        #[command(flatten)]
        common: Common,
        /// Address to listen on, e.g. 127.0.0.1:8350.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment config, .toml or .json.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Results root; each command writes into a subdirectory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel stages (1 for single-threaded runs).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> anyhow::Result<PathBuf> {
    let (common, bind) = match &cli.command {
        Command::Keywords(c) | Command::Expand(c) | Command::Topicrules(c) | Command::Supervised(c) => (c, None),
        Command::Serve { common, bind } => (common, bind.clone()),
    };
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cfg.apply(&Overrides {
        seed: common.seed,
        out: common.out.clone(),
        bind,
    });
    match cli.command {
        Command::Keywords(_) => commands::cmd_keywords(&cfg),
        Command::Expand(_) => commands::cmd_expand(&cfg),
        Command::Topicrules(_) => commands::cmd_topicrules(&cfg),
        Command::Supervised(_) => commands::cmd_supervised(&cfg),
        Command::Serve { .. } => commands::cmd_serve(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
