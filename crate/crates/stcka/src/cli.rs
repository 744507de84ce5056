//! Command implementations behind the `stcka` binary.
//!
//! Each command takes a resolved [`RunConfig`] (config file already merged
//! with flag overrides) and does the whole job: load files, run the model,
//! write outputs, print results. Everything here is deterministic given
//! the config, the seed, and the input files, so reruns produce
//! byte-identical metric and report files.
//!
//! Inference commands run from a checkpoint alone: it carries the config,
//! vocabularies, and label names. The knowledge base files are data, not
//! parameters, so `eval`, `predict`, and `attend` expect the same lexicon
//! and triples the model was trained with.

use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::attention::GammaMode;
use crate::checkpoint::{self, Checkpoint, CheckpointError};
use crate::config::{ConfigError, RunConfig};
use crate::data::{
    load_dataset, prepare_split, prepare_text, tokenize_and_link, vocab_inputs, DataError,
    LabelMap,
};
use crate::embedding::Vocabulary;
use crate::knowledge::{KnowledgeBase, KnowledgeError};
use crate::model::{self, ModelError};
use crate::report::AttentionRecord;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| {
        CliError::Usage(format!(
            "missing {key} file: pass --{key} or set `{key} =` in the config file"
        ))
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Loads the knowledge base named by the config; no files means an empty
/// base (every text then runs the zero-knowledge path).
fn load_kb(rc: &RunConfig) -> Result<KnowledgeBase, CliError> {
    let kb = match (&rc.lexicon, &rc.triples) {
        (None, None) => KnowledgeBase::empty(),
        (Some(lexicon), Some(triples)) => KnowledgeBase::load(lexicon, triples)?,
        _ => {
            return Err(CliError::Usage(
                "--lexicon and --triples go together; pass both or neither".into(),
            ))
        }
    };
    if kb.orphan_triples() > 0 {
        eprintln!(
            "warning: {} triples name entities missing from the lexicon; added them as linkable",
            kb.orphan_triples()
        );
    }
    Ok(kb)
}

fn load_checkpoint(rc: &RunConfig) -> Result<Checkpoint, CliError> {
    Ok(checkpoint::load(require(&rc.checkpoint, "checkpoint")?)?)
}

/// Applies an explicit `--gamma` flag on top of a checkpoint's config.
fn apply_gamma(ckpt: &mut Checkpoint, gamma: Option<GammaMode>) {
    if let Some(mode) = gamma {
        ckpt.config.gamma = mode;
    }
}

/// Trains a model and writes the checkpoint and the per-epoch metrics CSV.
/// With `dump_config` set, prints the effective config and does nothing
/// else, which is how configs are echoed for round-trip checks.
pub fn cmd_train(mut rc: RunConfig, dump_config: bool) -> Result<(), CliError> {
    if dump_config {
        print!("{}", rc.dump());
        return Ok(());
    }
    rc.model.validate()?;
    let train_path = require(&rc.train, "train")?;
    let valid_path = require(&rc.valid, "valid")?;
    let ckpt_path = require(&rc.checkpoint, "checkpoint")?;
    let metrics_path = rc.out.clone().unwrap_or_else(|| PathBuf::from("metrics.csv"));

    let train_raws = load_dataset(train_path)?;
    let valid_raws = load_dataset(valid_path)?;
    let labels = LabelMap::from_training(&train_raws);
    if let Some(k) = rc.model.num_classes {
        if k != labels.len() {
            return Err(CliError::Usage(format!(
                "config says {k} classes but the training data has {}",
                labels.len()
            )));
        }
    }
    rc.model.num_classes = Some(labels.len());

    let kb = load_kb(&rc)?;
    let m = &rc.model;
    let (token_lists, concept_lists) =
        vocab_inputs(&train_raws, &kb, m.max_tokens, m.max_concepts);
    let vocab = Vocabulary::build(&token_lists, &concept_lists, m.min_freq);
    let train_set = prepare_split(
        &train_path.display().to_string(),
        &train_raws,
        &labels,
        &kb,
        &vocab,
        m.max_tokens,
        m.max_concepts,
    )?;
    let valid_set = prepare_split(
        &valid_path.display().to_string(),
        &valid_raws,
        &labels,
        &kb,
        &vocab,
        m.max_tokens,
        m.max_concepts,
    )?;

    let outcome = model::train(
        &rc.model,
        &vocab,
        &train_set,
        &valid_set,
        rc.pretrained.as_deref(),
    )?;
    if let Some(coverage) = outcome.pretrained_coverage {
        println!("pretrained vectors cover {coverage:.4} of the word vocabulary");
    }

    let metrics_file = File::create(&metrics_path).map_err(io_err(&metrics_path))?;
    let mut w = BufWriter::new(metrics_file);
    let write_fail = io_err(&metrics_path);
    writeln!(w, "epoch,train_loss,valid_acc").map_err(&write_fail)?;
    for row in &outcome.metrics {
        writeln!(w, "{},{},{}", row.epoch, row.train_loss, row.valid_acc).map_err(&write_fail)?;
    }
    w.flush().map_err(&write_fail)?;

    checkpoint::save(ckpt_path, &outcome.params, &rc.model, &vocab, &labels)?;
    let best = &outcome.metrics[outcome.best_epoch - 1];
    println!(
        "trained {} epochs; best valid_acc {:.4} at epoch {}; wrote {} and {}",
        outcome.metrics.len(),
        best.valid_acc,
        outcome.best_epoch,
        ckpt_path.display(),
        metrics_path.display()
    );
    Ok(())
}

/// Evaluates a checkpoint on a dataset and prints accuracy with 4 decimals.
pub fn cmd_eval(rc: RunConfig, gamma: Option<GammaMode>) -> Result<(), CliError> {
    let mut ckpt = load_checkpoint(&rc)?;
    apply_gamma(&mut ckpt, gamma);
    let kb = load_kb(&rc)?;
    let test_path = require(&rc.test, "test")?;
    let raws = load_dataset(test_path)?;
    let examples = prepare_split(
        &test_path.display().to_string(),
        &raws,
        &ckpt.labels,
        &kb,
        &ckpt.vocab,
        ckpt.config.max_tokens,
        ckpt.config.max_concepts,
    )?;
    let accuracy = model::evaluate(&ckpt.params, &examples, &ckpt.config)?;
    println!("{accuracy:.4}");
    Ok(())
}

/// Classifies one text per input line, printing `label<TAB>probability`.
/// Empty lines are skipped with a warning on stderr.
pub fn cmd_predict(
    rc: RunConfig,
    gamma: Option<GammaMode>,
    input: &mut dyn BufRead,
) -> Result<(), CliError> {
    let mut ckpt = load_checkpoint(&rc)?;
    apply_gamma(&mut ckpt, gamma);
    let kb = load_kb(&rc)?;
    for (idx, line) in input.lines().enumerate() {
        let line = line.map_err(|source| CliError::Io {
            path: "<stdin>".into(),
            source,
        })?;
        if line.trim().is_empty() {
            eprintln!("warning: line {}: empty input skipped", idx + 1);
            continue;
        }
        let text = prepare_text(
            &line,
            &kb,
            &ckpt.vocab,
            ckpt.config.max_tokens,
            ckpt.config.max_concepts,
        );
        let prediction = model::predict(&ckpt.params, &text, &ckpt.config)?;
        let class = prediction.class();
        println!("{}\t{:.4}", ckpt.labels.name(class), prediction.probs[class]);
    }
    Ok(())
}

/// Writes one attention record per dataset example as line-delimited JSON.
pub fn cmd_attend(rc: RunConfig, gamma: Option<GammaMode>) -> Result<(), CliError> {
    let mut ckpt = load_checkpoint(&rc)?;
    apply_gamma(&mut ckpt, gamma);
    let kb = load_kb(&rc)?;
    let test_path = require(&rc.test, "test")?;
    let out_path = require(&rc.out, "out")?;
    let raws = load_dataset(test_path)?;
    let examples = prepare_split(
        &test_path.display().to_string(),
        &raws,
        &ckpt.labels,
        &kb,
        &ckpt.vocab,
        ckpt.config.max_tokens,
        ckpt.config.max_concepts,
    )?;
    let file = File::create(out_path).map_err(io_err(out_path))?;
    let mut w = BufWriter::new(file);
    let write_fail = io_err(out_path);
    for example in &examples {
        let prediction = model::predict(&ckpt.params, &example.input, &ckpt.config)?;
        let record = AttentionRecord::new(&example.input, &prediction, &ckpt.labels, example.label);
        writeln!(w, "{}", record.to_json_line()).map_err(&write_fail)?;
    }
    w.flush().map_err(&write_fail)?;
    println!("wrote {} records to {}", examples.len(), out_path.display());
    Ok(())
}

/// Profiles a dataset against the knowledge base: average linked entities
/// and average retained concepts per example.
pub fn cmd_kb_stats(rc: RunConfig) -> Result<(), CliError> {
    let kb = load_kb(&rc)?;
    let data_path = require(&rc.test, "test")?;
    let raws = load_dataset(data_path)?;
    let mut entity_total = 0usize;
    let mut concept_total = 0usize;
    for raw in &raws {
        let (_, entities, concepts) = tokenize_and_link(
            &raw.text,
            &kb,
            rc.model.max_tokens,
            rc.model.max_concepts,
        );
        entity_total += entities.len();
        concept_total += concepts.len();
    }
    let n = raws.len() as f64;
    println!("examples {}", raws.len());
    println!("avg_entities {:.4}", entity_total as f64 / n);
    println!("avg_concepts {:.4}", concept_total as f64 / n);
    Ok(())
}
