//! Word, concept, and character embeddings.
//!
//! Every token embeds as `d/2` dims of word-table lookup concatenated with
//! `d/2` dims of character-CNN output; concept strings run through the same
//! character machinery over their own lookup table. The char CNN applies
//! filters of widths 2, 3, and 4 over the character embeddings and
//! max-pools each feature over positions.
//!
//! Padding rows (id 0) of all three tables are held at exactly zero: they
//! start zero, and training masks their gradients before every step.

mod vocab;

pub use vocab::{SymbolTable, Vocabulary, PAD, UNK};

use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::numerics::{NodeId, NumericsError, Tape, Tensor};

/// Character-CNN filter widths. Filters of every width are always present.
pub const FILTER_WIDTHS: [usize; 3] = [2, 3, 4];

/// Character sequences are right-padded to this length so the widest filter
/// always fits.
pub const MIN_CHAR_LEN: usize = 4;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding width {dim} is invalid: need an even value of at least 6")]
    BadWidth { dim: usize },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected {expected} vector values, got {got}")]
    VectorWidth {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}:{line}: `{value}` is not a number")]
    MalformedValue {
        path: String,
        line: usize,
        value: String,
    },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Splits `half` output channels across the three filter widths, giving the
/// remainder to the narrower widths first. `half = 48` yields `[16, 16, 16]`.
pub fn channel_split(half: usize) -> [usize; 3] {
    let base = half / 3;
    let rem = half % 3;
    [
        base + usize::from(rem > 0),
        base + usize::from(rem > 1),
        base,
    ]
}

/// All trainable lookup tables plus the char-CNN filter bank.
#[derive(Debug, Clone)]
pub struct EmbeddingTables {
    /// `|words| × d/2`
    pub word: Tensor,
    /// `|chars| × d/2`
    pub chars: Tensor,
    /// `|concepts| × d/2`
    pub concept: Tensor,
    /// One `width × d/2 × channels` bank per filter width.
    pub filters: [Tensor; 3],
    /// One `channels` bias per filter width.
    pub filter_bias: [Tensor; 3],
    half: usize,
    channels: [usize; 3],
}

impl EmbeddingTables {
    /// Random initialization: uniform `[-0.1, 0.1]` lookup rows, uniform
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` filters, zero biases. Padding
    /// rows are zeroed after drawing so the draw count stays independent of
    /// the padding policy.
    pub fn init<R: Rng>(
        vocab: &Vocabulary,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self, EmbedError> {
        if embed_dim % 2 != 0 || embed_dim < 6 {
            return Err(EmbedError::BadWidth { dim: embed_dim });
        }
        let half = embed_dim / 2;
        let channels = channel_split(half);
        let word = Tensor::uniform(&[vocab.words.len(), half], -0.1, 0.1, rng).trainable();
        let chars = Tensor::uniform(&[vocab.chars.len(), half], -0.1, 0.1, rng).trainable();
        let concept = Tensor::uniform(&[vocab.concepts.len(), half], -0.1, 0.1, rng).trainable();
        let mut filters = Vec::new();
        let mut filter_bias = Vec::new();
        for (i, width) in FILTER_WIDTHS.iter().enumerate() {
            let fan_in = (width * half) as f64;
            let bound = 1.0 / fan_in.sqrt();
            filters.push(
                Tensor::uniform(&[*width, half, channels[i]], -bound, bound, rng).trainable(),
            );
            filter_bias.push(Tensor::zeros(&[channels[i]]).trainable());
        }
        let mut tables = EmbeddingTables {
            word,
            chars,
            concept,
            filters: filters.try_into().expect("three widths"),
            filter_bias: filter_bias.try_into().expect("three widths"),
            half,
            channels,
        };
        tables.zero_padding_rows();
        Ok(tables)
    }

    /// Half width (`d/2`).
    pub fn half(&self) -> usize {
        self.half
    }

    pub fn channels(&self) -> [usize; 3] {
        self.channels
    }

    /// Forces the padding row of each lookup table to zero.
    pub fn zero_padding_rows(&mut self) {
        for t in [&mut self.word, &mut self.chars, &mut self.concept] {
            t.row_mut(PAD as usize).fill(0.0);
        }
    }

    /// Zeroes the padding-row entries of any pending table gradients, so an
    /// optimizer step cannot move the padding rows.
    pub fn mask_padding_grads(&mut self) {
        let half = self.half;
        for t in [&mut self.word, &mut self.chars, &mut self.concept] {
            if t.grad().is_some() {
                let g = t.grad_mut();
                g[..half].fill(0.0);
            }
        }
    }

    /// Loads pretrained word vectors (`token v1 .. v(d/2)` per line,
    /// whitespace separated; `#` comments and blank lines skipped). Tokens
    /// are case-folded; the first occurrence of a token wins. Returns the
    /// fraction of real vocabulary words that received a vector.
    pub fn load_pretrained(
        &mut self,
        path: &Path,
        vocab: &Vocabulary,
    ) -> Result<f64, EmbedError> {
        let text = std::fs::read_to_string(path).map_err(|source| EmbedError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut covered = vec![false; vocab.words.len()];
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().expect("non-empty line").to_lowercase();
            let mut values = Vec::with_capacity(self.half);
            for p in parts {
                let v: f64 = p.parse().map_err(|_| EmbedError::MalformedValue {
                    path: path.display().to_string(),
                    line: idx + 1,
                    value: p.to_string(),
                })?;
                values.push(v);
            }
            if values.len() != self.half {
                return Err(EmbedError::VectorWidth {
                    path: path.display().to_string(),
                    line: idx + 1,
                    expected: self.half,
                    got: values.len(),
                });
            }
            let id = vocab.words.id(&token);
            if id != UNK && id != PAD && !covered[id as usize] {
                covered[id as usize] = true;
                self.word.row_mut(id as usize).copy_from_slice(&values);
            }
        }
        let real = vocab.words.real_symbols().len();
        if real == 0 {
            return Ok(1.0);
        }
        let hit = covered.iter().filter(|c| **c).count();
        Ok(hit as f64 / real as f64)
    }
}

/// Tape handles for the tables, registered once per forward pass.
#[derive(Debug, Clone, Copy)]
pub struct BoundTables {
    pub word: NodeId,
    pub chars: NodeId,
    pub concept: NodeId,
    pub filters: [NodeId; 3],
    pub filter_bias: [NodeId; 3],
    half: usize,
}

impl EmbeddingTables {
    /// Registers every table as a tape leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundTables {
        BoundTables {
            word: tape.leaf(&self.word),
            chars: tape.leaf(&self.chars),
            concept: tape.leaf(&self.concept),
            filters: [
                tape.leaf(&self.filters[0]),
                tape.leaf(&self.filters[1]),
                tape.leaf(&self.filters[2]),
            ],
            filter_bias: [
                tape.leaf(&self.filter_bias[0]),
                tape.leaf(&self.filter_bias[1]),
                tape.leaf(&self.filter_bias[2]),
            ],
            half: self.half,
        }
    }

    /// Adds tape gradients back into the table tensors.
    pub fn harvest(&mut self, tape: &Tape, bound: &BoundTables) -> Result<(), NumericsError> {
        tape.harvest_into(bound.word, &mut self.word)?;
        tape.harvest_into(bound.chars, &mut self.chars)?;
        tape.harvest_into(bound.concept, &mut self.concept)?;
        for i in 0..3 {
            tape.harvest_into(bound.filters[i], &mut self.filters[i])?;
            tape.harvest_into(bound.filter_bias[i], &mut self.filter_bias[i])?;
        }
        Ok(())
    }
}

impl BoundTables {
    pub fn embed_dim(&self) -> usize {
        self.half * 2
    }

    /// Character-CNN embedding of one symbol: `d/2` values.
    ///
    /// The id sequence is right-padded with the padding id to at least
    /// [`MIN_CHAR_LEN`]; each filter bank convolves, max-pools over
    /// positions, and the pooled features concatenate in width order.
    pub fn embed_chars(&self, tape: &mut Tape, char_ids: &[u32]) -> Result<NodeId, EmbedError> {
        let mut ids: Vec<u32> = char_ids.to_vec();
        while ids.len() < MIN_CHAR_LEN {
            ids.push(PAD);
        }
        let rows: Vec<NodeId> = ids
            .iter()
            .map(|id| {
                tape.slice(self.chars, *id as usize * self.half, self.half)
            })
            .collect::<Result<_, _>>()?;
        let mat = tape.concat(&rows, &[ids.len(), self.half])?;
        let mut pooled = Vec::new();
        for i in 0..3 {
            let conv = tape.conv1d(mat, self.filters[i], self.filter_bias[i])?;
            pooled.push(tape.max_pool_rows(conv)?);
        }
        Ok(tape.concat(&pooled, &[self.half])?)
    }

    /// Full embedding of one token: lookup half then character half. The
    /// padding id short-circuits to an all-zero row.
    pub fn embed_token_row(
        &self,
        tape: &mut Tape,
        word_id: u32,
        char_ids: &[u32],
    ) -> Result<NodeId, EmbedError> {
        if word_id == PAD {
            return Ok(tape.zeros(&[2 * self.half]));
        }
        let lookup = tape.slice(self.word, word_id as usize * self.half, self.half)?;
        let chars = self.embed_chars(tape, char_ids)?;
        Ok(tape.concat(&[lookup, chars], &[2 * self.half])?)
    }

    /// Token matrix `n × d` for one text.
    pub fn embed_tokens(
        &self,
        tape: &mut Tape,
        word_ids: &[u32],
        char_ids: &[Vec<u32>],
    ) -> Result<NodeId, EmbedError> {
        assert_eq!(word_ids.len(), char_ids.len());
        let rows: Vec<NodeId> = word_ids
            .iter()
            .zip(char_ids)
            .map(|(w, cs)| self.embed_token_row(tape, *w, cs))
            .collect::<Result<_, _>>()?;
        Ok(tape.concat(&rows, &[word_ids.len(), 2 * self.half])?)
    }

    /// Concept matrix `m × d` for one text's concept list.
    pub fn embed_concepts(
        &self,
        tape: &mut Tape,
        concept_ids: &[u32],
        char_ids: &[Vec<u32>],
    ) -> Result<NodeId, EmbedError> {
        assert_eq!(concept_ids.len(), char_ids.len());
        let rows: Vec<NodeId> = concept_ids
            .iter()
            .zip(char_ids)
            .map(|(c, cs)| {
                let lookup = tape.slice(self.concept, *c as usize * self.half, self.half)?;
                let chars = self.embed_chars(tape, cs)?;
                Ok::<NodeId, EmbedError>(tape.concat(&[lookup, chars], &[2 * self.half])?)
            })
            .collect::<Result<_, _>>()?;
        Ok(tape.concat(&rows, &[concept_ids.len(), 2 * self.half])?)
    }
}
