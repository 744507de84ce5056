//! `stcka`: train, evaluate, and inspect the knowledge-powered short text
//! classifier from the command line.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use stcka::attention::GammaMode;
use stcka::cli::{self, CliError};
use stcka::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "stcka",
    version,
    about = "Short text classification with knowledge powered attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint plus per-epoch metrics CSV.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Print the effective config (file plus overrides) and exit.
        #[arg(long)]
        dump_config: bool,
    },
    /// Evaluate a checkpoint on a dataset; prints accuracy with 4 decimals.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Classify one text per stdin line; prints `label<TAB>probability`.
    Predict {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Write per-example attention weights as line-delimited JSON.
    Attend {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Report average linked entities and concepts per dataset example.
    KbStats {
        #[command(flatten)]
        common: CommonArgs,
    },
}

/// Flags shared by every verb. Values given here override the config file.
#[derive(Args)]
struct CommonArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed for initialization and shuffling.
    #[arg(long)]
    seed: Option<u64>,
    /// Blend weight mode: `learned` or `fixed:<value>`.
    #[arg(long)]
    gamma: Option<String>,
    /// Embedding regime: `rand`, `static`, or `non-static`.
    #[arg(long)]
    embed_mode: Option<String>,
    /// Checkpoint path (written by train, read elsewhere).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output path: metrics CSV for train, report JSONL for attend.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training split, `label<TAB>text` per line.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Validation split.
    #[arg(long)]
    valid: Option<PathBuf>,
    /// Dataset for eval, attend, and kb-stats.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Entity lexicon, one entity per line.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// `entity<TAB>concept` triples.
    #[arg(long)]
    triples: Option<PathBuf>,
    /// Pretrained word vectors, `token v1 .. v(d/2)` per line.
    #[arg(long)]
    pretrained: Option<PathBuf>,
}

impl CommonArgs {
    /// Config file first, then flag overrides on top.
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut rc = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            rc.set("seed", &seed.to_string())?;
        }
        if let Some(gamma) = &self.gamma {
            rc.set("gamma", gamma)?;
        }
        if let Some(mode) = &self.embed_mode {
            rc.set("embed_mode", mode)?;
        }
        for (slot, flag) in [
            (&mut rc.checkpoint, &self.checkpoint),
            (&mut rc.out, &self.out),
            (&mut rc.train, &self.train),
            (&mut rc.valid, &self.valid),
            (&mut rc.test, &self.test),
            (&mut rc.lexicon, &self.lexicon),
            (&mut rc.triples, &self.triples),
            (&mut rc.pretrained, &self.pretrained),
        ] {
            if flag.is_some() {
                *slot = flag.clone();
            }
        }
        Ok(rc)
    }

    /// The `--gamma` flag alone, for verbs that apply it on top of a
    /// checkpoint's stored mode.
    fn gamma_override(&self) -> Result<Option<GammaMode>, CliError> {
        self.gamma
            .as_deref()
            .map(GammaMode::from_str)
            .transpose()
            .map_err(CliError::Usage)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            common,
            dump_config,
        } => cli::cmd_train(common.resolve()?, dump_config),
        Command::Eval { common } => cli::cmd_eval(common.resolve()?, common.gamma_override()?),
        Command::Predict { common } => {
            let mut stdin = std::io::stdin().lock();
            cli::cmd_predict(common.resolve()?, common.gamma_override()?, &mut stdin)
        }
        Command::Attend { common } => cli::cmd_attend(common.resolve()?, common.gamma_override()?),
        Command::KbStats { common } => cli::cmd_kb_stats(common.resolve()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
