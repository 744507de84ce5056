//! Text encoder: BiLSTM over token embeddings, scaled dot-product
//! self-attention across positions, column-wise max pooling.
//!
//! The padding mask is threaded through every stage. Masked positions are
//! skipped by the recurrence (state passes over them untouched), excluded
//! from the attention softmax, and excluded from the pooled maximum, so
//! appending padding to a text cannot change its encoding.

use rand::Rng;

use crate::numerics::{NodeId, NumericsError, Tape, Tensor};

/// Per-direction LSTM weights, fused across the four gates.
///
/// Weight layout is `(input_dim + hidden) × 4·hidden` with the input rows
/// first; gate columns are ordered input, forget, output, candidate. The
/// forget-gate bias initializes to 1 so early training does not flush cell
/// state.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub fwd_w: Tensor,
    pub fwd_b: Tensor,
    pub bwd_w: Tensor,
    pub bwd_b: Tensor,
    input_dim: usize,
    hidden: usize,
}

impl EncoderParams {
    /// Uniform `[-1/sqrt(hidden), 1/sqrt(hidden)]` weights, zero biases
    /// except the forget gate.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        assert!(input_dim > 0 && hidden > 0);
        let bound = 1.0 / (hidden as f64).sqrt();
        let shape = [input_dim + hidden, 4 * hidden];
        let fwd_w = Tensor::uniform(&shape, -bound, bound, rng).trainable();
        let bwd_w = Tensor::uniform(&shape, -bound, bound, rng).trainable();
        let mut fwd_b = Tensor::zeros(&[4 * hidden]).trainable();
        let mut bwd_b = Tensor::zeros(&[4 * hidden]).trainable();
        fwd_b.data_mut()[hidden..2 * hidden].fill(1.0);
        bwd_b.data_mut()[hidden..2 * hidden].fill(1.0);
        EncoderParams {
            fwd_w,
            fwd_b,
            bwd_w,
            bwd_b,
            input_dim,
            hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundEncoder {
        BoundEncoder {
            fwd_w: tape.leaf(&self.fwd_w),
            fwd_b: tape.leaf(&self.fwd_b),
            bwd_w: tape.leaf(&self.bwd_w),
            bwd_b: tape.leaf(&self.bwd_b),
            input_dim: self.input_dim,
            hidden: self.hidden,
        }
    }

    pub fn harvest(&mut self, tape: &Tape, bound: &BoundEncoder) -> Result<(), NumericsError> {
        tape.harvest_into(bound.fwd_w, &mut self.fwd_w)?;
        tape.harvest_into(bound.fwd_b, &mut self.fwd_b)?;
        tape.harvest_into(bound.bwd_w, &mut self.bwd_w)?;
        tape.harvest_into(bound.bwd_b, &mut self.bwd_b)?;
        Ok(())
    }
}

/// Tape handles for the encoder weights.
#[derive(Debug, Clone, Copy)]
pub struct BoundEncoder {
    fwd_w: NodeId,
    fwd_b: NodeId,
    bwd_w: NodeId,
    bwd_b: NodeId,
    input_dim: usize,
    hidden: usize,
}

impl BoundEncoder {
    /// One LSTM direction over the unmasked positions of `x`, visited in
    /// `order`. Returns the hidden-state node per visited position.
    fn run_direction(
        &self,
        tape: &mut Tape,
        x: NodeId,
        order: &[usize],
        w: NodeId,
        b: NodeId,
    ) -> Result<Vec<Option<NodeId>>, NumericsError> {
        let (d, u) = (self.input_dim, self.hidden);
        let n = tape.shape(x)[0];
        let mut states: Vec<Option<NodeId>> = vec![None; n];
        let mut h_prev = tape.zeros(&[u]);
        let mut c_prev = tape.zeros(&[u]);
        for &t in order {
            let x_t = tape.slice(x, t * d, d)?;
            let z = tape.concat(&[x_t, h_prev], &[d + u])?;
            let lin = tape.vecmat(z, w)?;
            let pre = tape.add(lin, b)?;
            let i_pre = tape.slice(pre, 0, u)?;
            let f_pre = tape.slice(pre, u, u)?;
            let o_pre = tape.slice(pre, 2 * u, u)?;
            let g_pre = tape.slice(pre, 3 * u, u)?;
            let i = tape.sigmoid(i_pre);
            let f = tape.sigmoid(f_pre);
            let o = tape.sigmoid(o_pre);
            let g = tape.tanh(g_pre);
            let keep = tape.mul(f, c_prev)?;
            let write = tape.mul(i, g)?;
            let c = tape.add(keep, write)?;
            let c_act = tape.tanh(c);
            let h = tape.mul(o, c_act)?;
            states[t] = Some(h);
            h_prev = h;
            c_prev = c;
        }
        Ok(states)
    }

    /// Bidirectional LSTM: `x` is `n × input_dim`, the result is
    /// `n × 2·hidden` with forward states in the left half. Masked rows are
    /// exactly zero and the recurrence never reads them.
    pub fn bilstm(
        &self,
        tape: &mut Tape,
        x: NodeId,
        mask: &[bool],
    ) -> Result<NodeId, NumericsError> {
        let n = tape.shape(x)[0];
        if mask.len() != n {
            return Err(NumericsError::LengthMismatch {
                op: "bilstm",
                expected: n,
                got: mask.len(),
            });
        }
        let real: Vec<usize> = (0..n).filter(|t| mask[*t]).collect();
        let reversed: Vec<usize> = real.iter().rev().copied().collect();
        let fwd = self.run_direction(tape, x, &real, self.fwd_w, self.fwd_b)?;
        let bwd = self.run_direction(tape, x, &reversed, self.bwd_w, self.bwd_b)?;
        let zero_row = tape.zeros(&[2 * self.hidden]);
        let rows: Vec<NodeId> = (0..n)
            .map(|t| match (fwd[t], bwd[t]) {
                (Some(f), Some(b)) => tape.concat(&[f, b], &[2 * self.hidden]),
                _ => Ok(zero_row),
            })
            .collect::<Result<_, _>>()?;
        tape.concat(&rows, &[n, 2 * self.hidden])
    }

    /// Encodes one text: BiLSTM, self-attention, column max over unmasked
    /// rows. Returns a `2·hidden` vector.
    pub fn encode(
        &self,
        tape: &mut Tape,
        x: NodeId,
        mask: &[bool],
    ) -> Result<NodeId, NumericsError> {
        let h = self.bilstm(tape, x, mask)?;
        let a = self_attention(tape, h, mask)?;
        tape.max_pool_rows_masked(a, mask)
    }
}

/// Scaled dot-product self-attention with the sequence attending to itself:
/// mixing weights are the row-softmax of `H·Hᵀ / sqrt(width)`, and the
/// output is those weights applied to `H`.
///
/// Masked positions are excluded from every softmax and produce all-zero
/// output rows.
pub fn self_attention(
    tape: &mut Tape,
    h: NodeId,
    mask: &[bool],
) -> Result<NodeId, NumericsError> {
    let shape = tape.shape(h).to_vec();
    let [n, width] = match *shape {
        [n, w] => [n, w],
        _ => {
            return Err(NumericsError::ShapeMismatch {
                op: "self_attention",
                lhs: shape,
                rhs: vec![],
            })
        }
    };
    if mask.len() != n {
        return Err(NumericsError::LengthMismatch {
            op: "self_attention",
            expected: n,
            got: mask.len(),
        });
    }
    let scores = tape.matmul_nt(h, h)?;
    let scaled = tape.affine(scores, 1.0 / (width as f64).sqrt(), 0.0);
    let zero_row = tape.zeros(&[n]);
    let rows: Vec<NodeId> = (0..n)
        .map(|r| {
            if mask[r] {
                let row = tape.slice(scaled, r * n, n)?;
                tape.softmax_masked(row, mask)
            } else {
                Ok(zero_row)
            }
        })
        .collect::<Result<_, _>>()?;
    let weights = tape.concat(&rows, &[n, n])?;
    tape.matmul(weights, h)
}
