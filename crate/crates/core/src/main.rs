//! Command-line entry point.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use interpmi_core::codebook::{Codebook, Rank};
use interpmi_core::harness::{self, ExperimentConfig};
use interpmi_core::rl::Checkpoint;
use interpmi_core::xapp::AgentKind;
use interpmi_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "interpmi",
    version,
    about = "Multi-cell PMI control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    agent: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    eval_episodes: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Runs an agent over the evaluation episodes and writes its metrics.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Trains a2c or inter_a2c and writes the reward curve and checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluates a trained agent greedily.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluates follow_pmi, a2c and inter_a2c on the same channels.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Prints the codebook as JSON lines.
    DumpCodebook {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(a) = &common.agent {
        cfg.agent = AgentKind::parse(a)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    if let Some(e) = common.episodes {
        cfg.episodes = e;
    }
    if let Some(e) = common.eval_episodes {
        cfg.eval_episodes = e;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_checkpoint(path: Option<&Path>) -> Result<Option<Checkpoint>> {
    path.map(Checkpoint::load).transpose()
}

fn dump_codebook(config: Option<&Path>) -> Result<()> {
    let cfg = match config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let cb = Codebook::build(&cfg.sim().codebook)?;
    let mut out = String::new();
    for rank in [Rank::One, Rank::Two] {
        for (index, w) in cb.entries(rank).iter().enumerate() {
            let entry = serde_json::json!({
                "rank": rank.layers(),
                "index": index,
                "tuple": cb.tuple(rank, index)?,
                "re": w.as_slice().iter().map(|z| z.re).collect::<Vec<_>>(),
                "im": w.as_slice().iter().map(|z| z.im).collect::<Vec<_>>(),
            });
            out.push_str(&entry.to_string());
            out.push('\n');
        }
    }
    print!("{out}");
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, checkpoint } => {
            let cfg = load(&common)?;
            let ck = load_checkpoint(checkpoint.as_deref().or(cfg.checkpoint_for(cfg.agent)))?;
            let s = harness::evaluate(&cfg, cfg.agent, ck.as_ref(), &cfg.out_dir)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Train { common } => {
            let cfg = load(&common)?;
            let t = harness::train(&cfg, cfg.agent, &cfg.out_dir)?;
            let last = t.curve.last().map_or(0.0, |r| r.smoothed_reward);
            println!(
                "trained {} for {} episodes; final smoothed reward {last}",
                cfg.agent, cfg.episodes
            );
        }
        Command::Eval { common, checkpoint } => {
            let cfg = load(&common)?;
            let path = checkpoint.as_deref().or(cfg.checkpoint_for(cfg.agent));
            if cfg.agent.is_learning() && path.is_none() {
                return Err(Error::Config(format!(
                    "eval of {} needs --checkpoint",
                    cfg.agent
                )));
            }
            let ck = load_checkpoint(path)?;
            let s = harness::evaluate(&cfg, cfg.agent, ck.as_ref(), &cfg.out_dir)?;
            println!("{}", serde_json::to_string(&s)?);
        }
        Command::Compare { common } => {
            let cfg = load(&common)?;
            for s in harness::compare(&cfg, &cfg.out_dir)? {
                println!("{}", serde_json::to_string(&s)?);
            }
        }
        Command::DumpCodebook { config } => dump_codebook(config.as_deref())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
