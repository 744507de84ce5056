//! Concept attention: weighs the concepts retrieved for a text and pools
//! them into a single vector.
//!
//! Two complementary scorings feed it. C-ST attention scores each concept
//! against the encoded text, so semantically apt concepts win. C-CS
//! attention scores each concept against the concept set itself, favoring
//! concepts that are discriminative regardless of the text. A soft switch
//! `gamma` blends the two distributions and a final softmax renormalizes
//! the blend; the pooled vector is the weighted sum of concept embeddings.
//!
//! All distributions live in fixed-width vectors of `max_concepts` slots.
//! A text with `m` concepts occupies the first `m` slots; the rest are
//! masked and stay exactly zero.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numerics::{NodeId, NumericsError, Tape, Tensor};

/// How the blend weight between the two attention distributions is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GammaMode {
    /// `gamma = sigmoid(w·[alpha; beta] + b)`, trained with the model.
    Learned,
    /// Constant blend weight in `[0, 1]`; used for ablations.
    Fixed(f64),
}

impl fmt::Display for GammaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaMode::Learned => write!(f, "learned"),
            GammaMode::Fixed(v) => write!(f, "fixed:{v}"),
        }
    }
}

impl FromStr for GammaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "learned" {
            return Ok(GammaMode::Learned);
        }
        if let Some(v) = s.strip_prefix("fixed:") {
            let v: f64 = v
                .parse()
                .map_err(|_| format!("`{s}`: expected `fixed:<number>`"))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("`{s}`: fixed gamma must lie in [0, 1]"));
            }
            return Ok(GammaMode::Fixed(v));
        }
        Err(format!("`{s}`: expected `learned` or `fixed:<number>`"))
    }
}

/// Trainable weights for both attentions and the switch.
///
/// Shapes: `cst_w` is `attn_dim × (concept_dim + text_dim)` and scores
/// `[c_i; q]`; `ccs_w` is `set_dim × concept_dim`; `ccs_b` is a scalar added
/// outside the score dot product (it cancels in the softmax but is kept in
/// the graph); `switch_w` is `2·max_concepts` over `[alpha; beta]`.
#[derive(Debug, Clone)]
pub struct ConceptAttentionParams {
    pub cst_w: Tensor,
    pub cst_v: Tensor,
    pub cst_b: Tensor,
    pub ccs_w: Tensor,
    pub ccs_v: Tensor,
    pub ccs_b: Tensor,
    pub switch_w: Tensor,
    pub switch_b: Tensor,
    concept_dim: usize,
    text_dim: usize,
    max_concepts: usize,
}

impl ConceptAttentionParams {
    /// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights, zero biases.
    pub fn init<R: Rng>(
        concept_dim: usize,
        text_dim: usize,
        cst_dim: usize,
        ccs_dim: usize,
        max_concepts: usize,
        rng: &mut R,
    ) -> Self {
        assert!(max_concepts > 0, "need at least one concept slot");
        let joint = concept_dim + text_dim;
        let b1 = 1.0 / (joint as f64).sqrt();
        let b2 = 1.0 / (concept_dim as f64).sqrt();
        let b3 = 1.0 / ((2 * max_concepts) as f64).sqrt();
        ConceptAttentionParams {
            cst_w: Tensor::uniform(&[cst_dim, joint], -b1, b1, rng).trainable(),
            cst_v: Tensor::uniform(&[cst_dim], -b1, b1, rng).trainable(),
            cst_b: Tensor::zeros(&[cst_dim]).trainable(),
            ccs_w: Tensor::uniform(&[ccs_dim, concept_dim], -b2, b2, rng).trainable(),
            ccs_v: Tensor::uniform(&[ccs_dim], -b2, b2, rng).trainable(),
            ccs_b: Tensor::zeros(&[1]).trainable(),
            switch_w: Tensor::uniform(&[2 * max_concepts], -b3, b3, rng).trainable(),
            switch_b: Tensor::zeros(&[1]).trainable(),
            concept_dim,
            text_dim,
            max_concepts,
        }
    }

    pub fn max_concepts(&self) -> usize {
        self.max_concepts
    }

    /// Blend weight reported when a text has no concepts at all: nothing is
    /// on the tape, so it falls back to the switch bias (or the constant).
    pub fn resting_gamma(&self, mode: GammaMode) -> f64 {
        match mode {
            GammaMode::Learned => 1.0 / (1.0 + (-self.switch_b.data()[0]).exp()),
            GammaMode::Fixed(v) => v,
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundAttention {
        BoundAttention {
            cst_w: tape.leaf(&self.cst_w),
            cst_v: tape.leaf(&self.cst_v),
            cst_b: tape.leaf(&self.cst_b),
            ccs_w: tape.leaf(&self.ccs_w),
            ccs_v: tape.leaf(&self.ccs_v),
            ccs_b: tape.leaf(&self.ccs_b),
            switch_w: tape.leaf(&self.switch_w),
            switch_b: tape.leaf(&self.switch_b),
            concept_dim: self.concept_dim,
            text_dim: self.text_dim,
            max_concepts: self.max_concepts,
        }
    }

    pub fn harvest(&mut self, tape: &Tape, bound: &BoundAttention) -> Result<(), NumericsError> {
        tape.harvest_into(bound.cst_w, &mut self.cst_w)?;
        tape.harvest_into(bound.cst_v, &mut self.cst_v)?;
        tape.harvest_into(bound.cst_b, &mut self.cst_b)?;
        tape.harvest_into(bound.ccs_w, &mut self.ccs_w)?;
        tape.harvest_into(bound.ccs_v, &mut self.ccs_v)?;
        tape.harvest_into(bound.ccs_b, &mut self.ccs_b)?;
        tape.harvest_into(bound.switch_w, &mut self.switch_w)?;
        tape.harvest_into(bound.switch_b, &mut self.switch_b)?;
        Ok(())
    }
}

/// Blend weight as it exists on (or off) the tape.
#[derive(Debug, Clone, Copy)]
pub enum Gamma {
    Learned(NodeId),
    Fixed(f64),
}

/// Everything the model and the attention reports need from one pass.
#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    /// C-ST distribution, `max_concepts` wide, masked slots exactly zero.
    pub alpha: NodeId,
    /// C-CS distribution, same layout.
    pub beta: NodeId,
    /// Final blended distribution, same layout.
    pub weights: NodeId,
    pub gamma: Gamma,
    /// Weighted concept vector `p`.
    pub pooled: NodeId,
}

/// Tape handles for the attention weights.
#[derive(Debug, Clone, Copy)]
pub struct BoundAttention {
    cst_w: NodeId,
    cst_v: NodeId,
    cst_b: NodeId,
    ccs_w: NodeId,
    ccs_v: NodeId,
    ccs_b: NodeId,
    switch_w: NodeId,
    switch_b: NodeId,
    concept_dim: usize,
    text_dim: usize,
    max_concepts: usize,
}

impl BoundAttention {
    fn check_inputs(
        &self,
        tape: &Tape,
        concepts: NodeId,
        mask: &[bool],
    ) -> Result<usize, NumericsError> {
        let shape = tape.shape(concepts).to_vec();
        let m = match *shape {
            [m, dim] if dim == self.concept_dim => m,
            _ => {
                return Err(NumericsError::ShapeMismatch {
                    op: "concept_attention",
                    lhs: shape,
                    rhs: vec![0, self.concept_dim],
                })
            }
        };
        if m > self.max_concepts {
            return Err(NumericsError::LengthMismatch {
                op: "concept_attention",
                expected: self.max_concepts,
                got: m,
            });
        }
        if mask.len() != self.max_concepts
            || mask.iter().take(m).any(|b| !b)
            || mask.iter().skip(m).any(|b| *b)
        {
            return Err(NumericsError::LengthMismatch {
                op: "concept_attention mask",
                expected: self.max_concepts,
                got: mask.len(),
            });
        }
        Ok(m)
    }

    /// Pads `m` score scalars out to `max_concepts` slots and softmaxes.
    fn pad_and_normalize(
        &self,
        tape: &mut Tape,
        scores: Vec<NodeId>,
        mask: &[bool],
    ) -> Result<NodeId, NumericsError> {
        let m = scores.len();
        let mut parts = scores;
        if m < self.max_concepts {
            parts.push(tape.zeros(&[self.max_concepts - m]));
        }
        let padded = tape.concat(&parts, &[self.max_concepts])?;
        tape.softmax_masked(padded, mask)
    }

    /// Concept-to-text attention: softmax over
    /// `v · tanh(W[c_i; q] + b)` per concept.
    pub fn cst_attention(
        &self,
        tape: &mut Tape,
        concepts: NodeId,
        q: NodeId,
        mask: &[bool],
    ) -> Result<NodeId, NumericsError> {
        let m = self.check_inputs(tape, concepts, mask)?;
        if tape.shape(q) != [self.text_dim] {
            return Err(NumericsError::ShapeMismatch {
                op: "cst_attention",
                lhs: tape.shape(q).to_vec(),
                rhs: vec![self.text_dim],
            });
        }
        if m == 0 {
            return Ok(tape.zeros(&[self.max_concepts]));
        }
        let d = self.concept_dim;
        let mut scores = Vec::with_capacity(m);
        for i in 0..m {
            let c_i = tape.slice(concepts, i * d, d)?;
            let joint = tape.concat(&[c_i, q], &[d + self.text_dim])?;
            let lin = tape.matvec(self.cst_w, joint)?;
            let pre = tape.add(lin, self.cst_b)?;
            let act = tape.tanh(pre);
            scores.push(tape.dot(self.cst_v, act)?);
        }
        self.pad_and_normalize(tape, scores, mask)
    }

    /// Concept-to-concept-set attention: softmax over
    /// `v · tanh(W c_i) + b` per concept. The scalar bias shifts every
    /// score equally, so it cannot change the distribution; it stays in the
    /// graph regardless.
    pub fn ccs_attention(
        &self,
        tape: &mut Tape,
        concepts: NodeId,
        mask: &[bool],
    ) -> Result<NodeId, NumericsError> {
        let m = self.check_inputs(tape, concepts, mask)?;
        if m == 0 {
            return Ok(tape.zeros(&[self.max_concepts]));
        }
        let d = self.concept_dim;
        let mut scores = Vec::with_capacity(m);
        for i in 0..m {
            let c_i = tape.slice(concepts, i * d, d)?;
            let lin = tape.matvec(self.ccs_w, c_i)?;
            let act = tape.tanh(lin);
            let dot = tape.dot(self.ccs_v, act)?;
            scores.push(tape.add(dot, self.ccs_b)?);
        }
        self.pad_and_normalize(tape, scores, mask)
    }

    /// Blend weight between the two distributions.
    pub fn soft_switch(
        &self,
        tape: &mut Tape,
        alpha: NodeId,
        beta: NodeId,
        mode: GammaMode,
    ) -> Result<Gamma, NumericsError> {
        match mode {
            GammaMode::Fixed(v) => Ok(Gamma::Fixed(v)),
            GammaMode::Learned => {
                let joint = tape.concat(&[alpha, beta], &[2 * self.max_concepts])?;
                let lin = tape.dot(self.switch_w, joint)?;
                let pre = tape.add(lin, self.switch_b)?;
                Ok(Gamma::Learned(tape.sigmoid(pre)))
            }
        }
    }

    /// Final distribution: softmax of `gamma·alpha + (1-gamma)·beta` over
    /// the unmasked slots.
    pub fn combine(
        &self,
        tape: &mut Tape,
        alpha: NodeId,
        beta: NodeId,
        gamma: Gamma,
        mask: &[bool],
    ) -> Result<NodeId, NumericsError> {
        let blended = match gamma {
            Gamma::Fixed(v) => {
                let ta = tape.affine(alpha, v, 0.0);
                let tb = tape.affine(beta, 1.0 - v, 0.0);
                tape.add(ta, tb)?
            }
            Gamma::Learned(g) => {
                let ta = tape.mul_scalar(g, alpha)?;
                let complement = tape.affine(g, -1.0, 1.0);
                let tb = tape.mul_scalar(complement, beta)?;
                tape.add(ta, tb)?
            }
        };
        tape.softmax_masked(blended, mask)
    }

    /// Weighted sum of concept vectors under the final distribution.
    pub fn concept_repr(
        &self,
        tape: &mut Tape,
        weights: NodeId,
        concepts: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let m = tape.shape(concepts)[0];
        let real = tape.slice(weights, 0, m)?;
        tape.vecmat(real, concepts)
    }

    /// Full pass over one concept set: both attentions, the switch, the
    /// blend, and the pooled vector. `concepts` is `m × concept_dim` with
    /// `m <= max_concepts`; `mask` flags the first `m` of `max_concepts`
    /// slots. With no concepts at all every distribution is zero and the
    /// pooled vector is the zero vector, so knowledge contributes nothing.
    pub fn apply(
        &self,
        tape: &mut Tape,
        concepts: NodeId,
        q: NodeId,
        mask: &[bool],
        mode: GammaMode,
    ) -> Result<AttentionNodes, NumericsError> {
        if self.check_inputs(tape, concepts, mask)? == 0 {
            let zeros = tape.zeros(&[self.max_concepts]);
            let gamma = self.soft_switch(tape, zeros, zeros, mode)?;
            let pooled = tape.zeros(&[self.concept_dim]);
            return Ok(AttentionNodes {
                alpha: zeros,
                beta: zeros,
                weights: zeros,
                gamma,
                pooled,
            });
        }
        let alpha = self.cst_attention(tape, concepts, q, mask)?;
        let beta = self.ccs_attention(tape, concepts, mask)?;
        let gamma = self.soft_switch(tape, alpha, beta, mode)?;
        let weights = self.combine(tape, alpha, beta, gamma, mask)?;
        let pooled = self.concept_repr(tape, weights, concepts)?;
        Ok(AttentionNodes {
            alpha,
            beta,
            weights,
            gamma,
            pooled,
        })
    }
}

/// Resolves a [`Gamma`] to its numeric value.
pub fn gamma_value(tape: &Tape, gamma: Gamma) -> f64 {
    match gamma {
        Gamma::Learned(id) => tape.scalar_value(id),
        Gamma::Fixed(v) => v,
    }
}
