use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use molrnn::commands::{self, CriticSpec, Overrides};
use molrnn::workers::{Workers, WORKERS_ENV};
use molrnn::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "molrnn", version, about = "Train, sample and fine-tune a recurrent molecular graph generator")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration file; replaces the configuration stored in the input artifact.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true, env = WORKERS_ENV, default_value_t = 1)]
    workers: usize,
    /// Override one configuration key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct Mask {
    /// Mask valency-breaking bond choices while sampling.
    #[arg(long, overrides_with = "no_mask")]
    mask: bool,
    #[arg(long, overrides_with = "mask")]
    no_mask: bool,
}

impl Mask {
    fn value(&self) -> Option<bool> {
        match (self.mask, self.no_mask) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a SMILES file into a binary training cache.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-likelihood training on a cache.
    Train {
        cache: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Draw molecules from a checkpoint.
    Sample {
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: Option<usize>,
        #[command(flatten)]
        mask: Mask,
    },
    /// Policy-gradient fine-tuning against a critic.
    Finetune {
        checkpoint: PathBuf,
        /// structural-penalty, penalized_logp, a descriptor name, gcn:<file> or external:<endpoint>.
        #[arg(long)]
        critic: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[command(flatten)]
        mask: Mask,
    },
    /// Validity, uniqueness, novelty, diversity and property statistics.
    Evaluate {
        samples: PathBuf,
        /// Training cache used for novelty.
        #[arg(long)]
        training: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the graph-convolution property regressor on `smiles<TAB>value` lines.
    CriticTrain {
        labeled: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn overrides(g: &Global) -> Result<Overrides> {
    let config = match &g.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Some(RunConfig::parse(&text).with_context(|| format!("in {}", path.display()))?)
        }
        None => None,
    };
    let mut set = Vec::new();
    for s in &g.set {
        let Some((k, v)) = s.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {s:?}");
        };
        set.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(Overrides {
        config,
        set,
        seed: g.seed,
    })
}

fn run(cli: Cli) -> Result<()> {
    let mut ov = overrides(&cli.global)?;
    let workers = Workers::new(cli.global.workers).context("starting worker pool")?;
    match cli.command {
        Command::Ingest { input, out } => {
            let r = commands::ingest(&input, &out, &ov, &workers)?;
            println!("kept {} of {} molecules", r.kept, r.read);
            for (reason, count) in &r.skipped {
                println!("skipped {count}: {reason}");
            }
        }
        Command::Train {
            cache,
            out,
            resume,
            epochs,
        } => {
            if let Some(e) = epochs {
                ov = ov.with("train.epochs", e);
            }
            let history = commands::train(&cache, &out, resume.as_deref(), &ov, &workers)?;
            if let Some(last) = history.last() {
                println!("epoch {} nll {:.6}", last.epoch, last.nll);
            }
        }
        Command::Sample {
            checkpoint,
            out,
            count,
            mask,
        } => {
            if let Some(c) = count {
                ov = ov.with("sample.count", c);
            }
            if let Some(m) = mask.value() {
                ov = ov.with("sample.masked", m);
            }
            let s = commands::sample(&checkpoint, &out, &ov, &workers)?;
            println!("{} samples, validity {:.2}%", s.samples, s.validity());
        }
        Command::Finetune {
            checkpoint,
            critic,
            out,
            iterations,
            mask,
        } => {
            let spec = CriticSpec::parse(&critic)?;
            if let Some(n) = iterations {
                ov = ov.with("rl.iterations", n);
            }
            if let Some(m) = mask.value() {
                ov = ov.with("rl.masked", m);
            }
            let reports = commands::finetune(&checkpoint, &spec, &out, &ov, &workers)?;
            if let Some(last) = reports.last() {
                println!(
                    "iteration {} mean reward {:.4} validity {:.2}%",
                    last.iteration,
                    last.mean_reward,
                    100.0 * last.validity
                );
            }
        }
        Command::Evaluate { samples, training, out } => {
            let e = commands::evaluate(&samples, &training, &out, &ov)?;
            print!("{}", e.report.to_text());
        }
        Command::CriticTrain { labeled, out } => {
            let t = commands::critic_train(&labeled, &out, &ov)?;
            println!("test RMSE {:.4} over {} held-out molecules", t.test_rmse, t.test_size);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
