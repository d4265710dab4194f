use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pasm_core::env::Scenario;
use pasm_core::federate::Algo;
use pasm_core::harness::{self, SimConfig, CHECKPOINT_FILE};

#[derive(Parser)]
#[command(name = "pasm", version, about = "Federated policy-gradient training for V2X spectrum sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm and write metrics.csv plus checkpoints.
    Train(Common),
    /// Evaluate a trained checkpoint (or the random policy) on fresh drops.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to <out>/checkpoint.ckpt.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the [sweep] cross product and write summary.csv.
    Sweep(Common),
    /// Run the convergence diagnostics and write diagnostics.json.
    Diagnose(Common),
    /// Print the fully resolved configuration and its hash.
    Config(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    algo: Option<Algo>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    let n: u8 = s.parse().map_err(|_| format!("scenario must be 1 or 2, got {s:?}"))?;
    Scenario::try_from(n)
}

impl Common {
    fn resolve(&self) -> anyhow::Result<SimConfig> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(e) = self.episodes {
            cfg.train.episodes = e;
        }
        if let Some(a) = self.algo {
            cfg.algo = a;
        }
        if let Some(s) = self.scenario {
            cfg.scenario = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.resolve()?;
            let every = (cfg.train.episodes / 20).max(1);
            eprintln!("config {} -> {}", cfg.hash()?, cfg.out_dir.display());
            let report = harness::train_with_progress(&cfg, Some(&cfg.out_dir), |row| {
                if (row.round + 1) % every == 0 {
                    eprintln!(
                        "round {:>6}  reward {:>10.4}  moving avg {:>10.4}",
                        row.round + 1,
                        row.reward,
                        row.moving_avg
                    );
                }
            })?;
            println!("final moving average reward: {:.6}", report.final_moving_average());
            for p in &report.checkpoints {
                println!("checkpoint: {}", p.display());
            }
        }
        Command::Evaluate { common, checkpoint } => {
            let cfg = common.resolve()?;
            let policy = if cfg.algo == Algo::Random {
                pasm_core::federate::PolicyState::Uniform
            } else {
                let path = checkpoint.unwrap_or_else(|| cfg.out_dir.join(CHECKPOINT_FILE));
                harness::load_policy(&cfg, &path).with_context(|| format!("loading {}", path.display()))?
            };
            let s = harness::evaluate(&cfg, &policy)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Sweep(c) => {
            let cfg = c.resolve()?;
            let rows = harness::sweep(&cfg, Some(&cfg.out_dir))?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Command::Diagnose(c) => {
            let cfg = c.resolve()?;
            let report = harness::diagnose(&cfg, Some(&cfg.out_dir))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            return Ok(report.pass);
        }
        Command::Config(c) => {
            let cfg = c.resolve()?;
            println!("# config hash {}", cfg.hash()?);
            print!("{}", cfg.to_toml()?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("diagnostics failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
