//! Replayable gradient tape (reverse-mode automatic differentiation).
//!
//! A [`Tape`] is an append-only arena of value nodes. Every operation
//! validates shapes, computes its forward value eagerly, and records an
//! [`Op`] entry describing how to push gradients back to its inputs. The
//! tape is rebuilt from scratch for every forward pass; nothing is retained
//! across batches except the parameter tensors it was seeded from.
//!
//! Invariants:
//! - entries are in topological order: an op only references earlier ids;
//! - [`Tape::backward`] visits each entry exactly once, in reverse;
//! - all kernels reduce in fixed index order, so repeated forward passes
//!   over identical inputs are bitwise identical.

use super::{NumericsError, Tensor};

/// Floor applied inside the negative log-likelihood so that a confidently
/// wrong model yields a large, finite loss.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a value stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
}

/// Backward recipe for one tape entry. Fields refer to input node ids;
/// dimensions are captured at record time so the backward pass never
/// re-derives them.
#[derive(Debug)]
enum Op {
    Leaf,
    /// `out[m×n] = a[m×k] · b[k×n]`
    Matmul { a: NodeId, b: NodeId, m: usize, k: usize, n: usize },
    /// `out[m×n] = a[m×k] · b[n×k]ᵀ`
    MatmulNt { a: NodeId, b: NodeId, m: usize, k: usize, n: usize },
    Add { a: NodeId, b: NodeId },
    /// Adds a length-`cols` bias vector to every row of `a[rows×cols]`.
    AddRows { a: NodeId, bias: NodeId, rows: usize, cols: usize },
    Mul { a: NodeId, b: NodeId },
    /// `out = s · v`, where `s` is a single-element node.
    MulScalar { s: NodeId, v: NodeId },
    /// `out = mul · x + add`, elementwise with constant coefficients.
    Affine { x: NodeId, mul: f64 },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    /// Masked positions are exactly zero and carry no gradient.
    SoftmaxMasked { x: NodeId, mask: Vec<bool> },
    /// Column-wise max over the unmasked rows of `x[rows×cols]`.
    MaxPoolRows { x: NodeId, rows: usize, cols: usize, mask: Vec<bool> },
    /// Valid cross-correlation of `seq[len×c_in]` with `filters[width×c_in×c_out]`.
    Conv1d {
        seq: NodeId,
        filters: NodeId,
        bias: NodeId,
        len: usize,
        width: usize,
        c_in: usize,
        c_out: usize,
    },
    /// `out = -ln(max(probs[label], PROB_FLOOR))`
    CrossEntropy { probs: NodeId, label: usize },
    /// Flat concatenation of the inputs' buffers.
    Concat { parts: Vec<NodeId> },
    /// Flat window `x[offset .. offset + len]`.
    Slice { x: NodeId, offset: usize, len: usize },
    /// Sum of all elements.
    Sum { x: NodeId },
}

/// Append-only computation record. See the module docs.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    ops: Vec<Op>,
    grads: Vec<Option<Vec<f64>>>,
    ran_backward: bool,
}

// ── construction and inspection ───────────────────────────────────────────

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Number of recorded entries.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a parameter tensor as a leaf. The data is copied; the
    /// original tensor is not touched until gradients are harvested.
    pub fn leaf(&mut self, t: &Tensor) -> NodeId {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf)
    }

    /// Non-trainable leaf from raw data.
    pub fn constant(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<NodeId, NumericsError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NumericsError::LengthMismatch {
                op: "constant",
                expected,
                got: data.len(),
            });
        }
        Ok(self.push(data, shape.to_vec(), Op::Leaf))
    }

    /// Non-trainable all-zero leaf.
    pub fn zeros(&mut self, shape: &[usize]) -> NodeId {
        let n: usize = shape.iter().product();
        self.push(vec![0.0; n], shape.to_vec(), Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Single-element value; panics if the node is not a scalar.
    pub fn scalar_value(&self, id: NodeId) -> f64 {
        assert_eq!(self.nodes[id.0].data.len(), 1, "node is not a scalar");
        self.nodes[id.0].data[0]
    }

    /// Gradient buffer of a node, if backward reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.grads[id.0].as_deref()
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, op: Op) -> NodeId {
        debug_assert!(
            matches!(op, Op::Leaf) || data.iter().all(|v| v.is_finite()),
            "non-finite value out of {op:?}"
        );
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { data, shape });
        self.ops.push(op);
        self.grads.push(None);
        id
    }

    fn numel(&self, id: NodeId) -> usize {
        self.nodes[id.0].data.len()
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<(), NumericsError> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(NumericsError::ShapeMismatch {
                op,
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[b.0].shape.clone(),
            });
        }
        Ok(())
    }

    fn rank2(&self, op: &'static str, id: NodeId) -> Result<(usize, usize), NumericsError> {
        match *self.nodes[id.0].shape {
            [r, c] => Ok((r, c)),
            _ => Err(NumericsError::ShapeMismatch {
                op,
                lhs: self.nodes[id.0].shape.clone(),
                rhs: vec![],
            }),
        }
    }
}

// ── forward operations ─────────────────────────────────────────────────────

impl Tape {
    /// Elementwise sum; shapes must match exactly.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape("add", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(data, shape, Op::Add { a, b }))
    }

    /// Adds a bias row vector to every row of a rank-2 tensor.
    pub fn add_bias_rows(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, NumericsError> {
        let (rows, cols) = self.rank2("add_bias_rows", a)?;
        if self.numel(bias) != cols {
            return Err(NumericsError::ShapeMismatch {
                op: "add_bias_rows",
                lhs: self.nodes[a.0].shape.clone(),
                rhs: self.nodes[bias.0].shape.clone(),
            });
        }
        let mut data = self.nodes[a.0].data.clone();
        for r in 0..rows {
            for c in 0..cols {
                data[r * cols + c] += self.nodes[bias.0].data[c];
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(data, shape, Op::AddRows { a, bias, rows, cols }))
    }

    /// Elementwise product; shapes must match exactly.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        self.same_shape("mul", a, b)?;
        let data: Vec<f64> = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        Ok(self.push(data, shape, Op::Mul { a, b }))
    }

    /// Broadcast multiply by a single-element node.
    pub fn mul_scalar(&mut self, s: NodeId, v: NodeId) -> Result<NodeId, NumericsError> {
        if self.numel(s) != 1 {
            return Err(NumericsError::ShapeMismatch {
                op: "mul_scalar",
                lhs: self.nodes[s.0].shape.clone(),
                rhs: vec![1],
            });
        }
        let sv = self.nodes[s.0].data[0];
        let data: Vec<f64> = self.nodes[v.0].data.iter().map(|x| sv * x).collect();
        let shape = self.nodes[v.0].shape.clone();
        Ok(self.push(data, shape, Op::MulScalar { s, v }))
    }

    /// Elementwise `mul * x + add` with constant coefficients.
    pub fn affine(&mut self, x: NodeId, mul: f64, add: f64) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| mul * v + add).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(data, shape, Op::Affine { x, mul })
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| v.tanh()).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(data, shape, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| sigmoid(*v)).collect();
        let shape = self.nodes[x.0].shape.clone();
        self.push(data, shape, Op::Sigmoid { x })
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (m, ka) = self.rank2("matmul", a)?;
        let (kb, n) = self.rank2("matmul", b)?;
        if ka != kb {
            return Err(self.mismatch("matmul", a, b));
        }
        Ok(self.record_matmul(a, b, m, ka, n, vec![m, n]))
    }

    /// `a[m×k] · b[n×k]ᵀ`; used for the self-attention score matrix.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (m, ka) = self.rank2("matmul_nt", a)?;
        let (n, kb) = self.rank2("matmul_nt", b)?;
        if ka != kb {
            return Err(self.mismatch("matmul_nt", a, b));
        }
        let mut data = vec![0.0; m * n];
        gemm(
            &self.nodes[a.0].data,
            false,
            &self.nodes[b.0].data,
            true,
            m,
            ka,
            n,
            &mut data,
        );
        Ok(self.push(data, vec![m, n], Op::MatmulNt { a, b, m, k: ka, n }))
    }

    /// `w[r×c] · x[c]`, producing a length-`r` vector.
    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId, NumericsError> {
        let (r, c) = self.rank2("matvec", w)?;
        if self.numel(x) != c {
            return Err(self.mismatch("matvec", w, x));
        }
        Ok(self.record_matmul(w, x, r, c, 1, vec![r]))
    }

    /// `x[k] · w[k×n]`, producing a length-`n` vector.
    pub fn vecmat(&mut self, x: NodeId, w: NodeId) -> Result<NodeId, NumericsError> {
        let (k, n) = self.rank2("vecmat", w)?;
        if self.numel(x) != k {
            return Err(self.mismatch("vecmat", x, w));
        }
        Ok(self.record_matmul(x, w, 1, k, n, vec![n]))
    }

    /// Inner product of two equal-length vectors, as a scalar node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        if self.numel(a) != self.numel(b) {
            return Err(self.mismatch("dot", a, b));
        }
        let k = self.numel(a);
        Ok(self.record_matmul(a, b, 1, k, 1, vec![1]))
    }

    fn record_matmul(
        &mut self,
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
        shape: Vec<usize>,
    ) -> NodeId {
        let mut data = vec![0.0; m * n];
        gemm(
            &self.nodes[a.0].data,
            false,
            &self.nodes[b.0].data,
            false,
            m,
            k,
            n,
            &mut data,
        );
        self.push(data, shape, Op::Matmul { a, b, m, k, n })
    }

    fn mismatch(&self, op: &'static str, a: NodeId, b: NodeId) -> NumericsError {
        NumericsError::ShapeMismatch {
            op,
            lhs: self.nodes[a.0].shape.clone(),
            rhs: self.nodes[b.0].shape.clone(),
        }
    }

    /// Numerically stable masked softmax over a vector.
    ///
    /// Masked positions are exactly `0.0` in the output and receive no
    /// gradient. The max of the unmasked entries is subtracted before
    /// exponentiation. A mask with no `true` entry is an error.
    pub fn softmax_masked(&mut self, x: NodeId, mask: &[bool]) -> Result<NodeId, NumericsError> {
        let n = self.numel(x);
        if mask.len() != n {
            return Err(NumericsError::LengthMismatch {
                op: "softmax_masked",
                expected: n,
                got: mask.len(),
            });
        }
        let data = softmax_masked_kernel(&self.nodes[x.0].data, mask)?;
        let shape = self.nodes[x.0].shape.clone();
        Ok(self.push(data, shape, Op::SoftmaxMasked { x, mask: mask.to_vec() }))
    }

    /// Column-wise max over all rows. See [`Tape::max_pool_rows_masked`].
    pub fn max_pool_rows(&mut self, x: NodeId) -> Result<NodeId, NumericsError> {
        let (rows, _) = self.rank2("max_pool_rows", x)?;
        self.max_pool_rows_masked(x, &vec![true; rows])
    }

    /// Column-wise max over the unmasked rows of a rank-2 tensor.
    ///
    /// Ties route the gradient to the first (lowest-index) maximal row.
    pub fn max_pool_rows_masked(
        &mut self,
        x: NodeId,
        mask: &[bool],
    ) -> Result<NodeId, NumericsError> {
        let (rows, cols) = self.rank2("max_pool_rows", x)?;
        if mask.len() != rows {
            return Err(NumericsError::LengthMismatch {
                op: "max_pool_rows",
                expected: rows,
                got: mask.len(),
            });
        }
        if !mask.iter().any(|&m| m) {
            return Err(NumericsError::EmptySupport { op: "max_pool_rows" });
        }
        let xs = &self.nodes[x.0].data;
        let mut data = vec![f64::NEG_INFINITY; cols];
        for r in 0..rows {
            if !mask[r] {
                continue;
            }
            for c in 0..cols {
                let v = xs[r * cols + c];
                if v > data[c] {
                    data[c] = v;
                }
            }
        }
        Ok(self.push(
            data,
            vec![cols],
            Op::MaxPoolRows { x, rows, cols, mask: mask.to_vec() },
        ))
    }

    /// Valid 1-d cross-correlation plus bias.
    ///
    /// `seq` is `len×c_in`, `filters` is `width×c_in×c_out`, `bias` is
    /// `c_out`; the output is `(len - width + 1)×c_out`. The sequence must
    /// already be padded to at least `width` rows.
    pub fn conv1d(
        &mut self,
        seq: NodeId,
        filters: NodeId,
        bias: NodeId,
    ) -> Result<NodeId, NumericsError> {
        let (len, c_in) = self.rank2("conv1d", seq)?;
        let fshape = self.nodes[filters.0].shape.clone();
        let [width, f_in, c_out] = match *fshape {
            [w, i, o] => [w, i, o],
            _ => {
                return Err(NumericsError::ShapeMismatch {
                    op: "conv1d",
                    lhs: fshape,
                    rhs: vec![],
                })
            }
        };
        if f_in != c_in || self.numel(bias) != c_out {
            return Err(self.mismatch("conv1d", seq, filters));
        }
        if len < width {
            return Err(NumericsError::SequenceTooShort { len, width });
        }
        let out_len = len - width + 1;
        let xs = &self.nodes[seq.0].data;
        let fs = &self.nodes[filters.0].data;
        let bs = &self.nodes[bias.0].data;
        let mut data = vec![0.0; out_len * c_out];
        for p in 0..out_len {
            for o in 0..c_out {
                let mut acc = bs[o];
                for j in 0..width {
                    for i in 0..c_in {
                        acc += xs[(p + j) * c_in + i] * fs[(j * c_in + i) * c_out + o];
                    }
                }
                data[p * c_out + o] = acc;
            }
        }
        Ok(self.push(
            data,
            vec![out_len, c_out],
            Op::Conv1d { seq, filters, bias, len, width, c_in, c_out },
        ))
    }

    /// Negative log-likelihood of `label` under a probability vector.
    ///
    /// The probability is floored at [`PROB_FLOOR`] so the result stays
    /// finite. `probs` is expected to lie on the simplex (softmax output).
    pub fn cross_entropy(&mut self, probs: NodeId, label: usize) -> Result<NodeId, NumericsError> {
        let k = self.numel(probs);
        if label >= k {
            return Err(NumericsError::LabelOutOfRange { label, classes: k });
        }
        debug_assert!(
            (self.nodes[probs.0].data.iter().sum::<f64>() - 1.0).abs() < 1e-9,
            "cross_entropy input does not sum to 1"
        );
        let p = self.nodes[probs.0].data[label].max(PROB_FLOOR);
        Ok(self.push(vec![-p.ln()], vec![1], Op::CrossEntropy { probs, label }))
    }

    /// Flat concatenation of node buffers into the given shape.
    pub fn concat(&mut self, parts: &[NodeId], shape: &[usize]) -> Result<NodeId, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::EmptySupport { op: "concat" });
        }
        let total: usize = parts.iter().map(|p| self.numel(*p)).sum();
        let expected: usize = shape.iter().product();
        if total != expected {
            return Err(NumericsError::LengthMismatch {
                op: "concat",
                expected,
                got: total,
            });
        }
        let mut data = Vec::with_capacity(total);
        for p in parts {
            data.extend_from_slice(&self.nodes[p.0].data);
        }
        Ok(self.push(data, shape.to_vec(), Op::Concat { parts: parts.to_vec() }))
    }

    /// Flat window of `len` elements starting at `offset`, as a vector.
    pub fn slice(&mut self, x: NodeId, offset: usize, len: usize) -> Result<NodeId, NumericsError> {
        if offset + len > self.numel(x) {
            return Err(NumericsError::LengthMismatch {
                op: "slice",
                expected: self.numel(x),
                got: offset + len,
            });
        }
        let data = self.nodes[x.0].data[offset..offset + len].to_vec();
        Ok(self.push(data, vec![len], Op::Slice { x, offset, len }))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s: f64 = self.nodes[x.0].data.iter().sum();
        self.push(vec![s], vec![1], Op::Sum { x })
    }
}

// ── backward ───────────────────────────────────────────────────────────────

impl Tape {
    /// Seeds the scalar `loss` node with gradient 1 and replays the tape in
    /// reverse, accumulating gradients additively into every contributing
    /// node. Gradients of leaves are read back with [`Tape::grad`].
    pub fn backward(&mut self, loss: NodeId) -> Result<(), NumericsError> {
        if self.numel(loss) != 1 {
            return Err(NumericsError::LossNotScalar {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        assert!(!self.ran_backward, "backward may run once per tape");
        self.ran_backward = true;
        add_into(&mut self.grads, loss.0, 0, &[1.0], 1);

        for i in (0..self.nodes.len()).rev() {
            let gout = match &self.grads[i] {
                Some(g) => g.clone(),
                None => continue,
            };
            match &self.ops[i] {
                Op::Leaf => {}
                Op::Matmul { a, b, m, k, n } => {
                    let (a, b, m, k, n) = (*a, *b, *m, *k, *n);
                    // d_a += g · bᵀ ; d_b += aᵀ · g
                    let ga = grad_slot(&mut self.grads, a.0, m * k);
                    gemm(&gout, false, &self.nodes[b.0].data, true, m, n, k, ga);
                    let gb = grad_slot(&mut self.grads, b.0, k * n);
                    gemm(&self.nodes[a.0].data, true, &gout, false, k, m, n, gb);
                }
                Op::MatmulNt { a, b, m, k, n } => {
                    let (a, b, m, k, n) = (*a, *b, *m, *k, *n);
                    // out = a · bᵀ: d_a += g · b ; d_b += gᵀ · a
                    let ga = grad_slot(&mut self.grads, a.0, m * k);
                    gemm(&gout, false, &self.nodes[b.0].data, false, m, n, k, ga);
                    let gb = grad_slot(&mut self.grads, b.0, n * k);
                    gemm(&gout, true, &self.nodes[a.0].data, false, n, m, k, gb);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    add_into(&mut self.grads, a.0, 0, &gout, self.nodes[a.0].data.len());
                    add_into(&mut self.grads, b.0, 0, &gout, self.nodes[b.0].data.len());
                }
                Op::AddRows { a, bias, rows, cols } => {
                    let (a, bias, rows, cols) = (*a, *bias, *rows, *cols);
                    add_into(&mut self.grads, a.0, 0, &gout, rows * cols);
                    let gb = grad_slot(&mut self.grads, bias.0, cols);
                    for r in 0..rows {
                        for c in 0..cols {
                            gb[c] += gout[r * cols + c];
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da: Vec<f64> = gout
                        .iter()
                        .zip(&self.nodes[b.0].data)
                        .map(|(g, y)| g * y)
                        .collect();
                    let db: Vec<f64> = gout
                        .iter()
                        .zip(&self.nodes[a.0].data)
                        .map(|(g, x)| g * x)
                        .collect();
                    add_into(&mut self.grads, a.0, 0, &da, da.len());
                    add_into(&mut self.grads, b.0, 0, &db, db.len());
                }
                Op::MulScalar { s, v } => {
                    let (s, v) = (*s, *v);
                    let sv = self.nodes[s.0].data[0];
                    let ds: f64 = gout
                        .iter()
                        .zip(&self.nodes[v.0].data)
                        .map(|(g, x)| g * x)
                        .sum();
                    let dv: Vec<f64> = gout.iter().map(|g| g * sv).collect();
                    add_into(&mut self.grads, s.0, 0, &[ds], 1);
                    add_into(&mut self.grads, v.0, 0, &dv, dv.len());
                }
                Op::Affine { x, mul } => {
                    let (x, mul) = (*x, *mul);
                    let dx: Vec<f64> = gout.iter().map(|g| g * mul).collect();
                    add_into(&mut self.grads, x.0, 0, &dx, dx.len());
                }
                Op::Tanh { x } => {
                    let x = *x;
                    let dx: Vec<f64> = gout
                        .iter()
                        .zip(&self.nodes[i].data)
                        .map(|(g, y)| g * (1.0 - y * y))
                        .collect();
                    add_into(&mut self.grads, x.0, 0, &dx, dx.len());
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    let dx: Vec<f64> = gout
                        .iter()
                        .zip(&self.nodes[i].data)
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect();
                    add_into(&mut self.grads, x.0, 0, &dx, dx.len());
                }
                Op::SoftmaxMasked { x, mask } => {
                    let x = *x;
                    let y = &self.nodes[i].data;
                    let inner: f64 = mask
                        .iter()
                        .zip(gout.iter().zip(y))
                        .filter(|(m, _)| **m)
                        .map(|(_, (g, yj))| g * yj)
                        .sum();
                    let dx: Vec<f64> = mask
                        .iter()
                        .zip(gout.iter().zip(y))
                        .map(|(m, (g, yj))| if *m { yj * (g - inner) } else { 0.0 })
                        .collect();
                    add_into(&mut self.grads, x.0, 0, &dx, dx.len());
                }
                Op::MaxPoolRows { x, rows, cols, mask } => {
                    let (x, rows, cols) = (*x, *rows, *cols);
                    // Recompute the argmax; first maximal row wins ties.
                    let xs = &self.nodes[x.0].data;
                    let mut dx = vec![0.0; rows * cols];
                    for c in 0..cols {
                        let mut best: Option<(usize, f64)> = None;
                        for r in 0..rows {
                            if !mask[r] {
                                continue;
                            }
                            let v = xs[r * cols + c];
                            if best.map_or(true, |(_, bv)| v > bv) {
                                best = Some((r, v));
                            }
                        }
                        let (r, _) = best.expect("pool support checked at record time");
                        dx[r * cols + c] = gout[c];
                    }
                    add_into(&mut self.grads, x.0, 0, &dx, dx.len());
                }
                Op::Conv1d { seq, filters, bias, len, width, c_in, c_out } => {
                    let (seq, filters, bias) = (*seq, *filters, *bias);
                    let (len, width, c_in, c_out) = (*len, *width, *c_in, *c_out);
                    let out_len = len - width + 1;
                    let xs = self.nodes[seq.0].data.clone();
                    let fs = self.nodes[filters.0].data.clone();
                    {
                        let gseq = grad_slot(&mut self.grads, seq.0, len * c_in);
                        for p in 0..out_len {
                            for o in 0..c_out {
                                let g = gout[p * c_out + o];
                                for j in 0..width {
                                    for i2 in 0..c_in {
                                        gseq[(p + j) * c_in + i2] +=
                                            g * fs[(j * c_in + i2) * c_out + o];
                                    }
                                }
                            }
                        }
                    }
                    {
                        let gf = grad_slot(&mut self.grads, filters.0, width * c_in * c_out);
                        for p in 0..out_len {
                            for o in 0..c_out {
                                let g = gout[p * c_out + o];
                                for j in 0..width {
                                    for i2 in 0..c_in {
                                        gf[(j * c_in + i2) * c_out + o] +=
                                            g * xs[(p + j) * c_in + i2];
                                    }
                                }
                            }
                        }
                    }
                    let gb = grad_slot(&mut self.grads, bias.0, c_out);
                    for p in 0..out_len {
                        for o in 0..c_out {
                            gb[o] += gout[p * c_out + o];
                        }
                    }
                }
                Op::CrossEntropy { probs, label } => {
                    let (probs, label) = (*probs, *label);
                    let p = self.nodes[probs.0].data[label];
                    // Below the floor the loss is constant in p.
                    if p > PROB_FLOOR {
                        let k = self.nodes[probs.0].data.len();
                        let gp = grad_slot(&mut self.grads, probs.0, k);
                        gp[label] += -gout[0] / p;
                    }
                }
                Op::Concat { parts } => {
                    let parts = parts.clone();
                    let mut off = 0;
                    for p in parts {
                        let n = self.nodes[p.0].data.len();
                        add_into(&mut self.grads, p.0, 0, &gout[off..off + n], n);
                        off += n;
                    }
                }
                Op::Slice { x, offset, len } => {
                    let (x, offset, len) = (*x, *offset, *len);
                    let total = self.nodes[x.0].data.len();
                    let g = grad_slot(&mut self.grads, x.0, total);
                    for j in 0..len {
                        g[offset + j] += gout[j];
                    }
                }
                Op::Sum { x } => {
                    let x = *x;
                    let n = self.nodes[x.0].data.len();
                    let g = grad_slot(&mut self.grads, x.0, n);
                    for gj in g.iter_mut() {
                        *gj += gout[0];
                    }
                }
            }
        }
        Ok(())
    }

    /// Adds the tape gradient of `id` (if any) into the tensor's own
    /// gradient buffer. Used to harvest parameter gradients after backward.
    pub fn harvest_into(&self, id: NodeId, target: &mut Tensor) -> Result<(), NumericsError> {
        if let Some(g) = self.grad(id) {
            target.accumulate_grad(g)?;
        }
        Ok(())
    }
}

// ── kernels ────────────────────────────────────────────────────────────────

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `acc += opA(a) · opB(b)` where `opA(a)` is `m×k` and `opB(b)` is `k×n`.
/// When a transpose flag is set the corresponding buffer holds the
/// transposed layout (`a`: `k×m`, `b`: `n×k`). Accumulation over `k` runs in
/// increasing index order for every output element.
#[allow(clippy::too_many_arguments)]
fn gemm(a: &[f64], ta: bool, b: &[f64], tb: bool, m: usize, k: usize, n: usize, acc: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(acc.len(), m * n);
    for i in 0..m {
        for l in 0..k {
            let av = if ta { a[l * m + i] } else { a[i * k + l] };
            if av == 0.0 {
                continue;
            }
            for j in 0..n {
                let bv = if tb { b[j * k + l] } else { b[l * n + j] };
                acc[i * n + j] += av * bv;
            }
        }
    }
}

/// Shared masked-softmax kernel; also used by the straight-line attention
/// oracles in the test suite.
pub fn softmax_masked_kernel(xs: &[f64], mask: &[bool]) -> Result<Vec<f64>, NumericsError> {
    let mut max = f64::NEG_INFINITY;
    for (v, m) in xs.iter().zip(mask) {
        if *m && *v > max {
            max = *v;
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(NumericsError::EmptySupport { op: "softmax_masked" });
    }
    let mut out = vec![0.0; xs.len()];
    let mut denom = 0.0;
    for (j, (v, m)) in xs.iter().zip(mask).enumerate() {
        if *m {
            let e = (v - max).exp();
            out[j] = e;
            denom += e;
        }
    }
    for (o, m) in out.iter_mut().zip(mask) {
        if *m {
            *o /= denom;
        }
    }
    Ok(out)
}

/// Gradient buffer for node `id`, zero-allocated on first touch.
fn grad_slot(grads: &mut [Option<Vec<f64>>], id: usize, len: usize) -> &mut [f64] {
    grads[id].get_or_insert_with(|| vec![0.0; len])
}

/// `grads[id][offset..offset+delta.len()] += delta`, allocating a zeroed
/// buffer of `len` on first touch.
fn add_into(grads: &mut [Option<Vec<f64>>], id: usize, offset: usize, delta: &[f64], len: usize) {
    let g = grads[id].get_or_insert_with(|| vec![0.0; len.max(offset + delta.len())]);
    for (j, d) in delta.iter().enumerate() {
        g[offset + j] += d;
    }
}

// ── tests ──────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn matmul_row_times_column() {
        let mut t = Tape::new();
        let a = t.constant(vec![1.0, 2.0], &[1, 2]).unwrap();
        let b = t.constant(vec![3.0, 4.0], &[2, 1]).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(vec![0.0; 6], &[2, 3]).unwrap();
        let b = t.constant(vec![0.0; 8], &[4, 2]).unwrap();
        let msg = t.matmul(a, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 2]"), "{msg}");
    }

    #[test]
    fn matmul_nt_matches_explicit_transpose() {
        let mut t = Tape::new();
        let a = t.constant(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let b = t.constant(vec![5.0, 6.0, 7.0, 8.0], &[2, 2]).unwrap();
        let c = t.matmul_nt(a, b).unwrap();
        // a · bᵀ = [[1*5+2*6, 1*7+2*8], [3*5+4*6, 3*7+4*8]]
        assert_eq!(t.value(c), &[17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn softmax_subtracts_max_and_normalizes() {
        let mut t = Tape::new();
        let x = t.constant(vec![2.0_f64.ln(), 0.0, 0.0], &[3]).unwrap();
        let y = t.softmax_masked(x, &[true, true, true]).unwrap();
        let v = t.value(y);
        assert!(close(v[0], 0.5, 1e-12) && close(v[1], 0.25, 1e-12) && close(v[2], 0.25, 1e-12));
        // Huge inputs stay finite thanks to max subtraction.
        let mut t = Tape::new();
        let x = t.constant(vec![1000.0, 999.0], &[2]).unwrap();
        let y = t.softmax_masked(x, &[true, true]).unwrap();
        assert!(t.value(y).iter().all(|v| v.is_finite()));
        assert!(close(t.value(y).iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn softmax_masked_entries_are_exactly_zero() {
        let mut t = Tape::new();
        let x = t.constant(vec![5.0, 1.0, -2.0, 0.5], &[4]).unwrap();
        let mask = [true, false, true, false];
        let y = t.softmax_masked(x, &mask).unwrap();
        let v = t.value(y);
        assert_eq!(v[1], 0.0);
        assert_eq!(v[3], 0.0);
        assert!(close(v[0] + v[2], 1.0, 1e-12));
    }

    #[test]
    fn softmax_rejects_empty_support() {
        let mut t = Tape::new();
        let x = t.constant(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(
            t.softmax_masked(x, &[false, false]),
            Err(NumericsError::EmptySupport { .. })
        ));
    }

    #[test]
    fn max_pool_takes_column_maxima() {
        let mut t = Tape::new();
        let x = t.constant(vec![-1.0, -2.0, -3.0, -1.0], &[2, 2]).unwrap();
        let y = t.max_pool_rows(x).unwrap();
        assert_eq!(t.value(y), &[-1.0, -1.0]);
    }

    #[test]
    fn max_pool_tie_routes_gradient_to_first_argmax() {
        let mut t = Tape::new();
        let mut x = Tensor::new(vec![3.0, 0.0, 3.0, 1.0], &[2, 2]).unwrap();
        x = x.trainable();
        let xid = t.leaf(&x);
        let y = t.max_pool_rows(xid).unwrap();
        let s = t.sum(y);
        t.backward(s).unwrap();
        // Column 0 ties between rows 0 and 1; row 0 wins.
        assert_eq!(t.grad(xid).unwrap(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn conv1d_valid_cross_correlation() {
        let mut t = Tape::new();
        let seq = t.constant(vec![1.0, 2.0, 3.0], &[3, 1]).unwrap();
        let f = t.constant(vec![1.0, 1.0], &[2, 1, 1]).unwrap();
        let b = t.constant(vec![0.0], &[1]).unwrap();
        let y = t.conv1d(seq, f, b).unwrap();
        assert_eq!(t.value(y), &[3.0, 5.0]);
        assert_eq!(t.shape(y), &[2, 1]);
    }

    #[test]
    fn conv1d_rejects_short_sequences() {
        let mut t = Tape::new();
        let seq = t.constant(vec![1.0, 2.0], &[2, 1]).unwrap();
        let f = t.constant(vec![0.0; 3], &[3, 1, 1]).unwrap();
        let b = t.constant(vec![0.0], &[1]).unwrap();
        let msg = t.conv1d(seq, f, b).unwrap_err().to_string();
        assert!(msg.contains("2") && msg.contains("3"), "{msg}");
    }

    #[test]
    fn cross_entropy_of_quarter_probability() {
        let mut t = Tape::new();
        let p = t.constant(vec![0.5, 0.25, 0.25], &[3]).unwrap();
        let l = t.cross_entropy(p, 1).unwrap();
        assert!(close(t.scalar_value(l), 4.0_f64.ln(), 1e-12));
    }

    #[test]
    fn cross_entropy_floors_vanishing_probability() {
        let mut t = Tape::new();
        let p = t.constant(vec![1.0, 0.0], &[2]).unwrap();
        let l = t.cross_entropy(p, 1).unwrap();
        assert!(close(t.scalar_value(l), -PROB_FLOOR.ln(), 1e-9));
        let l0 = t.cross_entropy(p, 0).unwrap();
        assert_eq!(t.scalar_value(l0), 0.0);
    }

    #[test]
    fn cross_entropy_rejects_bad_label() {
        let mut t = Tape::new();
        let p = t.constant(vec![1.0], &[1]).unwrap();
        assert!(matches!(
            t.cross_entropy(p, 3),
            Err(NumericsError::LabelOutOfRange { label: 3, classes: 1 })
        ));
    }

    #[test]
    fn backward_square_function() {
        // f(x) = x·x at x = 3 has gradient 6.
        let mut t = Tape::new();
        let x = Tensor::new(vec![3.0], &[1]).unwrap().trainable();
        let xid = t.leaf(&x);
        let y = t.mul(xid, xid).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(xid).unwrap(), &[6.0]);
    }

    #[test]
    fn backward_tanh_at_zero() {
        let mut t = Tape::new();
        let x = Tensor::new(vec![0.0], &[1]).unwrap().trainable();
        let xid = t.leaf(&x);
        let y = t.tanh(xid);
        t.backward(y).unwrap();
        assert_eq!(t.grad(xid).unwrap(), &[1.0]);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.constant(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(
            t.backward(x),
            Err(NumericsError::LossNotScalar { .. })
        ));
    }

    #[test]
    fn repeated_forward_is_bitwise_identical() {
        let run = || {
            let mut t = Tape::new();
            let a = t.constant(vec![0.3, -1.7, 2.2, 0.01, 5.0, -0.4], &[2, 3]).unwrap();
            let b = t.constant(vec![1.5, 0.2, -0.7, 0.9, 0.0, -2.0], &[3, 2]).unwrap();
            let c = t.matmul(a, b).unwrap();
            let d = t.tanh(c);
            let e = t.sum(d);
            t.scalar_value(e).to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn slice_and_concat_round_trip_gradients() {
        let mut t = Tape::new();
        let x = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[4]).unwrap().trainable();
        let xid = t.leaf(&x);
        let a = t.slice(xid, 0, 2).unwrap();
        let b = t.slice(xid, 2, 2).unwrap();
        let joined = t.concat(&[b, a], &[4]).unwrap();
        assert_eq!(t.value(joined), &[3.0, 4.0, 1.0, 2.0]);
        let w = t.constant(vec![1.0, 10.0, 100.0, 1000.0], &[4]).unwrap();
        let y = t.dot(joined, w).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(xid).unwrap(), &[100.0, 1000.0, 1.0, 10.0]);
    }

    #[test]
    fn add_bias_rows_broadcasts_and_accumulates() {
        let mut t = Tape::new();
        let a = Tensor::new(vec![0.0; 6], &[2, 3]).unwrap().trainable();
        let bias = Tensor::new(vec![1.0, 2.0, 3.0], &[3]).unwrap().trainable();
        let aid = t.leaf(&a);
        let bid = t.leaf(&bias);
        let y = t.add_bias_rows(aid, bid).unwrap();
        assert_eq!(t.value(y), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let s = t.sum(y);
        t.backward(s).unwrap();
        assert_eq!(t.grad(bid).unwrap(), &[2.0, 2.0, 2.0]);
    }
}
