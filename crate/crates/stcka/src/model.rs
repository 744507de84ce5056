//! The full classifier: embedding, encoding, concept attention, and the
//! classification head, plus training, evaluation, and prediction.
//!
//! One text flows as: token matrix (word lookup ∥ char CNN) → BiLSTM →
//! self-attention → max-pool into the text vector `q`; concept matrix →
//! concept attention against `q` into the knowledge vector `p`; then
//! `softmax(output(tanh(fc([p; q]))))` over the classes. Texts with no
//! concepts use `p = 0` and skip attention entirely.
//!
//! Training minimizes the mean negative log-likelihood with Adam, shuffles
//! each epoch with the seeded generator, and keeps the parameters from the
//! epoch with the best validation accuracy (earliest wins ties), so a
//! fixed seed reproduces every byte of the outcome.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::attention::{gamma_value, AttentionNodes, BoundAttention, ConceptAttentionParams};
use crate::config::{EmbedMode, ModelConfig};
use crate::data::{Example, TextInput};
use crate::embedding::{BoundTables, EmbedError, EmbeddingTables, Vocabulary};
use crate::encoder::{BoundEncoder, EncoderParams};
use crate::numerics::{AdamState, NodeId, NumericsError, Tape, Tensor};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class count is not set; fill num_classes before building the model")]
    MissingClassCount,
    #[error("{0} set is empty")]
    EmptySplit(&'static str),
    #[error("text produced no tokens")]
    NoTokens,
}

/// Every trainable tensor of the network.
///
/// Initialization draws in a fixed order (embedding tables, char-CNN
/// filters, encoder, attention, classification head), so a seed pins every
/// starting value regardless of vocabulary content.
#[derive(Debug, Clone)]
pub struct Parameters {
    pub tables: EmbeddingTables,
    pub encoder: EncoderParams,
    pub attention: ConceptAttentionParams,
    /// `fc_width × (embed_dim + 2·hidden)`, applied to `[p; q]`.
    pub fc_w: Tensor,
    pub fc_b: Tensor,
    /// `num_classes × fc_width`.
    pub out_w: Tensor,
    pub out_b: Tensor,
}

impl Parameters {
    pub fn init<R: Rng>(
        config: &ModelConfig,
        vocab: &Vocabulary,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if num_classes < 2 {
            return Err(ModelError::TooFewClasses(num_classes));
        }
        let d = config.embed_dim;
        let u = config.hidden_size;
        let fc = config.fc_width();
        let tables = EmbeddingTables::init(vocab, d, rng)?;
        let encoder = EncoderParams::init(d, u, rng);
        let attention = ConceptAttentionParams::init(
            d,
            2 * u,
            config.cst_attn_dim,
            config.ccs_attn_dim,
            config.max_concepts,
            rng,
        );
        let joint = d + 2 * u;
        let fc_bound = 1.0 / (joint as f64).sqrt();
        let out_bound = 1.0 / (fc as f64).sqrt();
        Ok(Parameters {
            tables,
            encoder,
            attention,
            fc_w: Tensor::uniform(&[fc, joint], -fc_bound, fc_bound, rng).trainable(),
            fc_b: Tensor::zeros(&[fc]).trainable(),
            out_w: Tensor::uniform(&[num_classes, fc], -out_bound, out_bound, rng).trainable(),
            out_b: Tensor::zeros(&[num_classes]).trainable(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.out_b.numel()
    }

    /// Every tensor with a stable name, in a fixed order. The names are
    /// the checkpoint record names.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        let t = &self.tables;
        vec![
            ("embed.word", &t.word),
            ("embed.chars", &t.chars),
            ("embed.concept", &t.concept),
            ("embed.conv2.weight", &t.filters[0]),
            ("embed.conv2.bias", &t.filter_bias[0]),
            ("embed.conv3.weight", &t.filters[1]),
            ("embed.conv3.bias", &t.filter_bias[1]),
            ("embed.conv4.weight", &t.filters[2]),
            ("embed.conv4.bias", &t.filter_bias[2]),
            ("encoder.forward.weight", &self.encoder.fwd_w),
            ("encoder.forward.bias", &self.encoder.fwd_b),
            ("encoder.backward.weight", &self.encoder.bwd_w),
            ("encoder.backward.bias", &self.encoder.bwd_b),
            ("attention.cst.weight", &self.attention.cst_w),
            ("attention.cst.score", &self.attention.cst_v),
            ("attention.cst.bias", &self.attention.cst_b),
            ("attention.ccs.weight", &self.attention.ccs_w),
            ("attention.ccs.score", &self.attention.ccs_v),
            ("attention.ccs.bias", &self.attention.ccs_b),
            ("attention.switch.weight", &self.attention.switch_w),
            ("attention.switch.bias", &self.attention.switch_b),
            ("fc.weight", &self.fc_w),
            ("fc.bias", &self.fc_b),
            ("output.weight", &self.out_w),
            ("output.bias", &self.out_b),
        ]
    }

    /// Mutable view in the same order as [`Parameters::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        let t = &mut self.tables;
        let [f2, f3, f4] = &mut t.filters;
        let [b2, b3, b4] = &mut t.filter_bias;
        vec![
            ("embed.word", &mut t.word),
            ("embed.chars", &mut t.chars),
            ("embed.concept", &mut t.concept),
            ("embed.conv2.weight", f2),
            ("embed.conv2.bias", b2),
            ("embed.conv3.weight", f3),
            ("embed.conv3.bias", b3),
            ("embed.conv4.weight", f4),
            ("embed.conv4.bias", b4),
            ("encoder.forward.weight", &mut self.encoder.fwd_w),
            ("encoder.forward.bias", &mut self.encoder.fwd_b),
            ("encoder.backward.weight", &mut self.encoder.bwd_w),
            ("encoder.backward.bias", &mut self.encoder.bwd_b),
            ("attention.cst.weight", &mut self.attention.cst_w),
            ("attention.cst.score", &mut self.attention.cst_v),
            ("attention.cst.bias", &mut self.attention.cst_b),
            ("attention.ccs.weight", &mut self.attention.ccs_w),
            ("attention.ccs.score", &mut self.attention.ccs_v),
            ("attention.ccs.bias", &mut self.attention.ccs_b),
            ("attention.switch.weight", &mut self.attention.switch_w),
            ("attention.switch.bias", &mut self.attention.switch_b),
            ("fc.weight", &mut self.fc_w),
            ("fc.bias", &mut self.fc_b),
            ("output.weight", &mut self.out_w),
            ("output.bias", &mut self.out_b),
        ]
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            tables: self.tables.bind(tape),
            encoder: self.encoder.bind(tape),
            attention: self.attention.bind(tape),
            fc_w: tape.leaf(&self.fc_w),
            fc_b: tape.leaf(&self.fc_b),
            out_w: tape.leaf(&self.out_w),
            out_b: tape.leaf(&self.out_b),
        }
    }

    /// Accumulates tape gradients into every tensor's gradient buffer.
    pub fn harvest(&mut self, tape: &Tape, bound: &BoundModel) -> Result<(), ModelError> {
        self.tables.harvest(tape, &bound.tables)?;
        self.encoder.harvest(tape, &bound.encoder)?;
        self.attention.harvest(tape, &bound.attention)?;
        tape.harvest_into(bound.fc_w, &mut self.fc_w)?;
        tape.harvest_into(bound.fc_b, &mut self.fc_b)?;
        tape.harvest_into(bound.out_w, &mut self.out_w)?;
        tape.harvest_into(bound.out_b, &mut self.out_b)?;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.zero_grad();
        }
    }
}

/// Tape handles for one forward/backward pass.
pub struct BoundModel {
    tables: BoundTables,
    encoder: BoundEncoder,
    attention: BoundAttention,
    fc_w: NodeId,
    fc_b: NodeId,
    out_w: NodeId,
    out_b: NodeId,
}

/// Node handles produced by one forward pass.
pub struct ForwardPass {
    /// Class distribution, length `num_classes`.
    pub probs: NodeId,
    pub attention: AttentionNodes,
}

impl BoundModel {
    /// Forward pass over one prepared text.
    pub fn forward(
        &self,
        tape: &mut Tape,
        input: &TextInput,
        config: &ModelConfig,
    ) -> Result<ForwardPass, ModelError> {
        if input.word_ids.is_empty() {
            return Err(ModelError::NoTokens);
        }
        let d = self.tables.embed_dim();
        let x = self
            .tables
            .embed_tokens(tape, &input.word_ids, &input.char_ids)?;
        let token_mask = vec![true; input.word_ids.len()];
        let q = self.encoder.encode(tape, x, &token_mask)?;

        let concepts = if input.num_concepts() > 0 {
            self.tables
                .embed_concepts(tape, &input.concept_ids, &input.concept_char_ids)?
        } else {
            tape.constant(Vec::new(), &[0, d])?
        };
        let concept_mask = input.concept_mask(config.max_concepts);
        let attention = self
            .attention
            .apply(tape, concepts, q, &concept_mask, config.gamma)?;

        let joint_len = d + tape.shape(q)[0];
        let joint = tape.concat(&[attention.pooled, q], &[joint_len])?;
        let fc_lin = tape.matvec(self.fc_w, joint)?;
        let fc_pre = tape.add(fc_lin, self.fc_b)?;
        let hidden = tape.tanh(fc_pre);
        let out_lin = tape.matvec(self.out_w, hidden)?;
        let logits = tape.add(out_lin, self.out_b)?;
        let k = tape.shape(logits)[0];
        let probs = tape.softmax_masked(logits, &vec![true; k])?;
        Ok(ForwardPass { probs, attention })
    }

    /// Mean negative log-likelihood over a batch.
    pub fn batch_nll(
        &self,
        tape: &mut Tape,
        batch: &[&Example],
        config: &ModelConfig,
    ) -> Result<NodeId, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptySplit("batch"));
        }
        let mut losses = Vec::with_capacity(batch.len());
        for example in batch {
            let pass = self.forward(tape, &example.input, config)?;
            losses.push(tape.cross_entropy(pass.probs, example.label)?);
        }
        let stacked = tape.concat(&losses, &[losses.len()])?;
        let total = tape.sum(stacked);
        Ok(tape.affine(total, 1.0 / batch.len() as f64, 0.0))
    }
}

/// Batch loss without gradients; used by finite-difference probes.
pub fn batch_loss(
    params: &Parameters,
    batch: &[&Example],
    config: &ModelConfig,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = bound.batch_nll(&mut tape, batch, config)?;
    Ok(tape.scalar_value(loss))
}

/// Batch loss plus a backward pass; gradients accumulate into the
/// parameter tensors' gradient buffers (zeroed first).
pub fn batch_loss_with_grads(
    params: &mut Parameters,
    batch: &[&Example],
    config: &ModelConfig,
) -> Result<f64, ModelError> {
    params.zero_grads();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let loss = bound.batch_nll(&mut tape, batch, config)?;
    tape.backward(loss)?;
    let value = tape.scalar_value(loss);
    params.harvest(&tape, &bound)?;
    Ok(value)
}

/// Attention weights and pooled vector of one text, read off the tape.
/// Distributions are `max_concepts` wide with masked slots exactly zero.
#[derive(Debug, Clone)]
pub struct ConceptAttentionOutput {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub pooled: Vec<f64>,
    pub mask: Vec<bool>,
}

/// One prediction: class distribution plus the attention view.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub attention: ConceptAttentionOutput,
}

impl Prediction {
    /// Predicted class: argmax with ties broken by the lowest id.
    pub fn class(&self) -> usize {
        argmax(&self.probs)
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate().skip(1) {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Runs inference on one prepared text.
pub fn predict(
    params: &Parameters,
    input: &TextInput,
    config: &ModelConfig,
) -> Result<Prediction, ModelError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let pass = bound.forward(&mut tape, input, config)?;
    let a = &pass.attention;
    Ok(Prediction {
        probs: tape.value(pass.probs).to_vec(),
        attention: ConceptAttentionOutput {
            alpha: tape.value(a.alpha).to_vec(),
            beta: tape.value(a.beta).to_vec(),
            weights: tape.value(a.weights).to_vec(),
            gamma: gamma_value(&tape, a.gamma),
            pooled: tape.value(a.pooled).to_vec(),
            mask: input.concept_mask(config.max_concepts),
        },
    })
}

/// Fraction of examples whose argmax prediction matches the gold label.
pub fn evaluate(
    params: &Parameters,
    examples: &[Example],
    config: &ModelConfig,
) -> Result<f64, ModelError> {
    if examples.is_empty() {
        return Err(ModelError::EmptySplit("evaluation"));
    }
    let mut correct = 0usize;
    for example in examples {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let pass = bound.forward(&mut tape, &example.input, config)?;
        if argmax(tape.value(pass.probs)) == example.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / examples.len() as f64)
}

/// One row of the training metrics file.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_acc: f64,
}

/// Trained parameters plus the per-epoch trace.
pub struct TrainOutcome {
    /// Parameters from the best-validation epoch.
    pub params: Parameters,
    pub metrics: Vec<EpochMetrics>,
    /// 1-based epoch the returned parameters come from.
    pub best_epoch: usize,
    /// Fraction of real vocabulary words covered by pretrained vectors,
    /// when a vector file was given.
    pub pretrained_coverage: Option<f64>,
}

fn optimizer_slots<'a>(
    params: &'a mut Parameters,
    mode: EmbedMode,
) -> Vec<&'a mut Tensor> {
    params
        .tensors_mut()
        .into_iter()
        .filter(|(name, _)| {
            mode != EmbedMode::Static || (*name != "embed.word" && *name != "embed.chars")
        })
        .map(|(_, t)| t)
        .collect()
}

/// Trains from scratch. `config.num_classes` must be set; both splits must
/// be non-empty. When a pretrained vector file is given its rows replace
/// the matching word-table rows right after initialization. Deterministic
/// given (config, data, vector file): the seed drives initialization and
/// every epoch's shuffle.
pub fn train(
    config: &ModelConfig,
    vocab: &Vocabulary,
    train_set: &[Example],
    valid_set: &[Example],
    pretrained: Option<&std::path::Path>,
) -> Result<TrainOutcome, ModelError> {
    let k = config.num_classes.ok_or(ModelError::MissingClassCount)?;
    if train_set.is_empty() {
        return Err(ModelError::EmptySplit("training"));
    }
    if valid_set.is_empty() {
        return Err(ModelError::EmptySplit("validation"));
    }
    for example in train_set.iter().chain(valid_set) {
        if example.label >= k {
            return Err(NumericsError::LabelOutOfRange {
                label: example.label,
                classes: k,
            }
            .into());
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Parameters::init(config, vocab, k, &mut rng)?;
    let pretrained_coverage = match pretrained {
        Some(path) => Some(params.tables.load_pretrained(path, vocab)?),
        None => None,
    };
    let slot_sizes: Vec<usize> = optimizer_slots(&mut params, config.embed_mode)
        .iter()
        .map(|t| t.numel())
        .collect();
    let mut adam = AdamState::new(config.learning_rate, &slot_sizes);

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Parameters)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|i| &train_set[*i]).collect();
            let loss = batch_loss_with_grads(&mut params, &batch, config)?;
            loss_sum += loss * batch.len() as f64;
            params.tables.mask_padding_grads();
            adam.step(&mut optimizer_slots(&mut params, config.embed_mode))?;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let valid_acc = evaluate(&params, valid_set, config)?;
        metrics.push(EpochMetrics {
            epoch,
            train_loss,
            valid_acc,
        });
        let improved = best.as_ref().map_or(true, |(acc, _, _)| valid_acc > *acc);
        if improved {
            best = Some((valid_acc, epoch, params.clone()));
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params: best_params,
        metrics,
        best_epoch,
        pretrained_coverage,
    })
}
