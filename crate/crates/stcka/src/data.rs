//! Dataset loading and example preparation.
//!
//! Datasets are UTF-8 text files, one example per line, `label<TAB>text`.
//! Preparation runs the same pipeline everywhere: whitespace tokenization
//! with case folding, truncation to the token budget, entity linking over
//! the truncated tokens, conceptualization under the concept budget, then
//! id lookup for words, characters, and concepts. Labels come from the
//! training split only and are assigned ids in sorted order, so the mapping
//! never depends on file order.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use thiserror::Error;

use crate::embedding::Vocabulary;
use crate::knowledge::{fold_tokens, KnowledgeBase};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedLine {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}: dataset contains no examples")]
    Empty { path: String },
    #[error("{path}:{line}: label `{label}` does not appear in the training split")]
    UnknownLabel {
        path: String,
        line: usize,
        label: String,
    },
}

/// One raw dataset row, before any id assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawExample {
    pub label: String,
    pub text: String,
    /// 1-based source line, kept for error messages.
    pub line: usize,
}

/// Reads a `label<TAB>text` file. The text may contain further tabs.
pub fn load_dataset(path: &Path) -> Result<Vec<RawExample>, DataError> {
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: display.clone(),
        source,
    })?;
    let mut rows = Vec::new();
    for (idx, raw) in content.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line = idx + 1;
        let (label, text) = raw.split_once('\t').ok_or_else(|| DataError::MalformedLine {
            path: display.clone(),
            line,
            reason: "expected `label<TAB>text`".into(),
        })?;
        let label = label.trim();
        if label.is_empty() {
            return Err(DataError::MalformedLine {
                path: display.clone(),
                line,
                reason: "empty label".into(),
            });
        }
        if text.trim().is_empty() {
            return Err(DataError::MalformedLine {
                path: display.clone(),
                line,
                reason: "empty text".into(),
            });
        }
        rows.push(RawExample {
            label: label.to_string(),
            text: text.to_string(),
            line,
        });
    }
    if rows.is_empty() {
        return Err(DataError::Empty { path: display });
    }
    Ok(rows)
}

/// Class names and their dense ids, assigned in sorted name order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelMap {
    pub fn from_training(rows: &[RawExample]) -> Self {
        let names: Vec<String> = rows
            .iter()
            .map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        Self::from_names(names)
    }

    /// Rebuilds a map from checkpointed names; order is preserved.
    pub fn from_names(names: Vec<String>) -> Self {
        let index = names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
        LabelMap { names, index }
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Tokenizes, truncates, links, and conceptualizes one text.
///
/// Linking runs over the truncated token sequence, so an entity mention
/// that starts beyond the token budget is never linked.
pub fn tokenize_and_link(
    text: &str,
    kb: &KnowledgeBase,
    max_tokens: usize,
    max_concepts: usize,
) -> (Vec<String>, Vec<String>, Vec<String>) {
    let mut tokens = fold_tokens(text);
    tokens.truncate(max_tokens);
    if tokens.is_empty() {
        return (tokens, Vec::new(), Vec::new());
    }
    let mentions = kb.link_entities(&tokens);
    let entities: Vec<String> = mentions.iter().map(|m| m.surface.clone()).collect();
    let concepts = kb.conceptualize(&mentions, max_concepts).concepts;
    (tokens, entities, concepts)
}

/// A fully prepared text: everything forward() needs, plus the strings the
/// attention report echoes back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextInput {
    pub text: String,
    pub tokens: Vec<String>,
    pub entities: Vec<String>,
    pub concept_names: Vec<String>,
    pub word_ids: Vec<u32>,
    /// Character ids of each token, aligned with `word_ids`.
    pub char_ids: Vec<Vec<u32>>,
    pub concept_ids: Vec<u32>,
    pub concept_char_ids: Vec<Vec<u32>>,
}

impl TextInput {
    pub fn num_concepts(&self) -> usize {
        self.concept_ids.len()
    }

    /// Slot mask over the concept budget: first `m` true, rest false.
    pub fn concept_mask(&self, max_concepts: usize) -> Vec<bool> {
        (0..max_concepts).map(|i| i < self.num_concepts()).collect()
    }
}

/// A prepared text with its gold label id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub input: TextInput,
    pub label: usize,
}

/// Runs the full preparation pipeline on one text.
pub fn prepare_text(
    text: &str,
    kb: &KnowledgeBase,
    vocab: &Vocabulary,
    max_tokens: usize,
    max_concepts: usize,
) -> TextInput {
    let (tokens, entities, concept_names) = tokenize_and_link(text, kb, max_tokens, max_concepts);
    let word_ids = vocab.word_ids(&tokens);
    let char_ids = tokens.iter().map(|t| vocab.char_ids(t)).collect();
    let concept_ids = vocab.concept_ids(&concept_names);
    let concept_char_ids = concept_names.iter().map(|c| vocab.char_ids(c)).collect();
    TextInput {
        text: text.to_string(),
        tokens,
        entities,
        concept_names,
        word_ids,
        char_ids,
        concept_ids,
        concept_char_ids,
    }
}

/// Prepares a whole split against a fixed label map.
pub fn prepare_split(
    path_for_errors: &str,
    rows: &[RawExample],
    labels: &LabelMap,
    kb: &KnowledgeBase,
    vocab: &Vocabulary,
    max_tokens: usize,
    max_concepts: usize,
) -> Result<Vec<Example>, DataError> {
    rows.iter()
        .map(|row| {
            let label = labels
                .id(&row.label)
                .ok_or_else(|| DataError::UnknownLabel {
                    path: path_for_errors.to_string(),
                    line: row.line,
                    label: row.label.clone(),
                })?;
            Ok(Example {
                input: prepare_text(&row.text, kb, vocab, max_tokens, max_concepts),
                label,
            })
        })
        .collect()
}

/// Token and concept lists for vocabulary building, one entry per row.
/// Uses the same truncation and linking as example preparation, so the
/// vocabulary sees exactly what training will see.
pub fn vocab_inputs(
    rows: &[RawExample],
    kb: &KnowledgeBase,
    max_tokens: usize,
    max_concepts: usize,
) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let mut token_lists = Vec::with_capacity(rows.len());
    let mut concept_lists = Vec::with_capacity(rows.len());
    for row in rows {
        let (tokens, _, concepts) = tokenize_and_link(&row.text, kb, max_tokens, max_concepts);
        token_lists.push(tokens);
        concept_lists.push(concepts);
    }
    (token_lists, concept_lists)
}
