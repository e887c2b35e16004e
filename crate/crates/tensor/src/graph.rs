use crate::error::{Result, TensorError};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rayon::prelude::*;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub usize);

/// One recorded operation. Inputs are node ids; anything the backward pass
/// needs beyond input/output values is saved inline.
#[derive(Debug, Clone)]
enum Op<T: Scalar> {
    Leaf,
    Constant,
    MatMul { a: NodeId, b: NodeId },
    /// a · bᵀ with b stored row-major as [n, k]
    MatMulNT { a: NodeId, b: NodeId },
    Transpose { a: NodeId },
    Reshape { a: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, k: T },
    /// Broadcast-add a length-c vector node onto every row of an r×c matrix.
    AddRowVec { a: NodeId, bias: NodeId },
    /// Multiply row i by the constant weight w[i]. Used to zero padding rows.
    RowScale { a: NodeId, weights: Vec<T> },
    Tanh { a: NodeId },
    Relu { a: NodeId },
    Sigmoid { a: NodeId },
    /// Row softmax of (scores + mask); mask is a constant. Fully masked rows
    /// yield all-zero output and bump the graph's diagnostic counter.
    MaskedSoftmax { a: NodeId },
    GatherRows { table: NodeId, indices: Vec<usize> },
    SliceRows { a: NodeId, start: usize },
    ConcatCols { parts: Vec<NodeId> },
    ConcatRows { parts: Vec<NodeId> },
    LayerNorm { a: NodeId, gain: NodeId, bias: NodeId, xhat: Vec<T>, inv_std: Vec<T> },
    /// Per-row negative log-likelihood from logits; softmax probs saved.
    CrossEntropyRows { logits: NodeId, targets: Vec<usize>, probs: Vec<T> },
    SumAll { a: NodeId },
    MeanAll { a: NodeId },
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    op: Op<T>,
    needs_grad: bool,
}

/// Reverse-mode tape. Values are computed eagerly as ops are recorded;
/// `backward` replays the tape once in reverse. Single-threaded per step
/// by construction (building requires `&mut self`).
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    fully_masked_rows: usize,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), fully_masked_rows: 0 }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// How many attention rows were fully masked since the last reset.
    /// Zero weights are returned for such rows instead of NaN.
    pub fn fully_masked_rows(&self) -> usize {
        self.fully_masked_rows
    }

    pub fn reset_masked_row_counter(&mut self) {
        self.fully_masked_rows = 0;
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.nodes[id.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, grad: None, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    // ── Node constructors ───────────────────────────────────────────────

    /// Trainable leaf: receives a gradient on backward.
    pub fn leaf(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// Constant input: never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Constant, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.rows() {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul {:?} x {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let out = matmul_nn(av.data(), bv.data(), m, k, n);
        let value = Tensor::from_vec(&[m, n], out)?;
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMul { a, b }, needs))
    }

    /// a[m×k] · bᵀ where b is stored as [n×k]. Saves materializing the
    /// transpose of large matrices (output projections, attention keys).
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.cols() {
            return Err(TensorError::ShapeMismatch(format!(
                "matmul_nt {:?} x {:?}ᵀ",
                av.shape(),
                bv.shape()
            )));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        let out = matmul_nt(av.data(), bv.data(), m, k, n);
        let value = Tensor::from_vec(&[m, n], out)?;
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::MatMulNT { a, b }, needs))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let av = self.value(a);
        if av.rank() != 2 {
            return Err(TensorError::ShapeMismatch(format!("transpose rank {}", av.rank())));
        }
        let (r, c) = (av.rows(), av.cols());
        let value = Tensor::from_vec(&[c, r], transpose_raw(av.data(), r, c))?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::Transpose { a }, needs))
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let av = self.value(a);
        let n: usize = shape.iter().product();
        if n != av.numel() {
            return Err(TensorError::ShapeMismatch(format!(
                "reshape {:?} -> {:?}",
                av.shape(),
                shape
            )));
        }
        let value = Tensor::from_vec(shape, av.data().to_vec())?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::Reshape { a }, needs))
    }

    fn binary_same_shape(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "{what} {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "add")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let value = Tensor::from_vec(self.value(a).shape(), data)?;
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Add { a, b }, needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "sub")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x - y);
        let value = Tensor::from_vec(self.value(a).shape(), data)?;
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Sub { a, b }, needs))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_same_shape(a, b, "mul")?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let value = Tensor::from_vec(self.value(a).shape(), data)?;
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(value, Op::Mul { a, b }, needs))
    }

    pub fn scale(&mut self, a: NodeId, k: T) -> Result<NodeId> {
        let data: Vec<T> = self.value(a).data().iter().map(|&x| x * k).collect();
        let value = Tensor::from_vec(self.value(a).shape(), data)?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::Scale { a, k }, needs))
    }

    pub fn add_rowvec(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.numel() != av.cols() {
            return Err(TensorError::ShapeMismatch(format!(
                "add_rowvec {:?} + {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let c = av.cols();
        let mut data = av.data().to_vec();
        for row in data.chunks_mut(c) {
            for (x, b) in row.iter_mut().zip(bv.data()) {
                *x = *x + *b;
            }
        }
        let value = Tensor::from_vec(av.shape(), data)?;
        let needs = self.ng(a) || self.ng(bias);
        Ok(self.push(value, Op::AddRowVec { a, bias }, needs))
    }

    pub fn row_scale(&mut self, a: NodeId, weights: &[T]) -> Result<NodeId> {
        let av = self.value(a);
        if weights.len() != av.rows() {
            return Err(TensorError::ShapeMismatch(format!(
                "row_scale {:?} with {} weights",
                av.shape(),
                weights.len()
            )));
        }
        let c = av.cols();
        let mut data = av.data().to_vec();
        for (i, row) in data.chunks_mut(c).enumerate() {
            for x in row.iter_mut() {
                *x = *x * weights[i];
            }
        }
        let value = Tensor::from_vec(av.shape(), data)?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::RowScale { a, weights: weights.to_vec() }, needs))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<T> = self.value(a).data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::from_vec(self.value(a).shape(), data)?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::Tanh { a }, needs))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<T> =
            self.value(a).data().iter().map(|&x| if x > T::ZERO { x } else { T::ZERO }).collect();
        let value = Tensor::from_vec(self.value(a).shape(), data)?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::Relu { a }, needs))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        let data: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .map(|&x| T::ONE / (T::ONE + (-x).exp()))
            .collect();
        let value = Tensor::from_vec(self.value(a).shape(), data)?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::Sigmoid { a }, needs))
    }

    /// Row softmax over `scores + mask`, mask entries in {0, MASK_NEG}.
    /// A fully masked row comes back all-zero (and is counted) rather than NaN.
    pub fn masked_softmax(&mut self, scores: NodeId, mask: &Tensor<T>) -> Result<NodeId> {
        let sv = self.value(scores);
        if sv.shape() != mask.shape() {
            return Err(TensorError::ShapeMismatch(format!(
                "masked_softmax scores {:?} vs mask {:?}",
                sv.shape(),
                mask.shape()
            )));
        }
        let (r, c) = (sv.rows(), sv.cols());
        let mut data = vec![T::ZERO; r * c];
        let mut masked_rows = 0usize;
        let threshold = T::MASK_NEG / (T::ONE + T::ONE);
        for i in 0..r {
            let srow = &sv.data()[i * c..(i + 1) * c];
            let mrow = &mask.data()[i * c..(i + 1) * c];
            let mut mx = T::MASK_NEG + T::MASK_NEG;
            for j in 0..c {
                mx = mx.max(srow[j] + mrow[j]);
            }
            if mx < threshold {
                masked_rows += 1;
                continue; // row stays zero
            }
            let orow = &mut data[i * c..(i + 1) * c];
            let mut sum = T::ZERO;
            for j in 0..c {
                let e = (srow[j] + mrow[j] - mx).exp();
                orow[j] = e;
                sum = sum + e;
            }
            for x in orow.iter_mut() {
                *x = *x / sum;
            }
        }
        self.fully_masked_rows += masked_rows;
        let value = Tensor::from_vec(&[r, c], data)?;
        let needs = self.ng(scores);
        Ok(self.push(value, Op::MaskedSoftmax { a: scores }, needs))
    }

    /// Select rows of `table` by index; backward scatter-adds. This is both
    /// the embedding lookup and the supervised-position selector.
    pub fn gather_rows(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(TensorError::ShapeMismatch("gather_rows needs rank-2 table".into()));
        }
        let (r, c) = (tv.rows(), tv.cols());
        let mut data = Vec::with_capacity(indices.len() * c);
        for &ix in indices {
            if ix >= r {
                return Err(TensorError::IndexOutOfRange(format!(
                    "gather_rows index {ix} of {r}"
                )));
            }
            data.extend_from_slice(tv.row(ix));
        }
        let value = Tensor::from_vec(&[indices.len(), c], data)?;
        let needs = self.ng(table);
        Ok(self.push(value, Op::GatherRows { table, indices: indices.to_vec() }, needs))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let av = self.value(a);
        if av.rank() != 2 || start + len > av.rows() {
            return Err(TensorError::IndexOutOfRange(format!(
                "slice_rows {}..{} of {:?}",
                start,
                start + len,
                av.shape()
            )));
        }
        let c = av.cols();
        let data = av.data()[start * c..(start + len) * c].to_vec();
        let value = Tensor::from_vec(&[len, c], data)?;
        let needs = self.ng(a);
        Ok(self.push(value, Op::SliceRows { a, start }, needs))
    }

    /// Concatenate along columns: the ⊕ of multi-head outputs and of
    /// vector arguments fed to recurrent cells.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(TensorError::Contract("concat_cols of nothing".into()));
        }
        let r = self.value(parts[0]).rows();
        let mut total_c = 0;
        for &p in parts {
            if self.value(p).rows() != r {
                return Err(TensorError::ShapeMismatch("concat_cols row mismatch".into()));
            }
            total_c += self.value(p).cols();
        }
        let mut data = Vec::with_capacity(r * total_c);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let value = Tensor::from_vec(&[r, total_c], data)?;
        let needs = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatCols { parts: parts.to_vec() }, needs))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(TensorError::Contract("concat_rows of nothing".into()));
        }
        let c = self.value(parts[0]).cols();
        let mut total_r = 0;
        for &p in parts {
            if self.value(p).cols() != c {
                return Err(TensorError::ShapeMismatch("concat_rows col mismatch".into()));
            }
            total_r += self.value(p).rows();
        }
        let mut data = Vec::with_capacity(total_r * c);
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let value = Tensor::from_vec(&[total_r, c], data)?;
        let needs = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(value, Op::ConcatRows { parts: parts.to_vec() }, needs))
    }

    /// Row-wise layer normalization with learned gain/bias (length c).
    pub fn layer_norm(&mut self, a: NodeId, gain: NodeId, bias: NodeId, eps: T) -> Result<NodeId> {
        let av = self.value(a);
        let c = av.cols();
        if self.value(gain).numel() != c || self.value(bias).numel() != c {
            return Err(TensorError::ShapeMismatch("layer_norm gain/bias length".into()));
        }
        let r = av.rows();
        let cf = T::from_f64(c as f64);
        let mut xhat = vec![T::ZERO; r * c];
        let mut inv_std = vec![T::ZERO; r];
        let mut out = vec![T::ZERO; r * c];
        let gv = self.value(gain).data().to_vec();
        let bv = self.value(bias).data().to_vec();
        for i in 0..r {
            let row = self.value(a).row(i);
            let mut mean = T::ZERO;
            for &x in row {
                mean = mean + x;
            }
            mean = mean / cf;
            let mut var = T::ZERO;
            for &x in row {
                let d = x - mean;
                var = var + d * d;
            }
            var = var / cf;
            let inv = T::ONE / (var + eps).sqrt();
            inv_std[i] = inv;
            for j in 0..c {
                let xh = (row[j] - mean) * inv;
                xhat[i * c + j] = xh;
                out[i * c + j] = gv[j] * xh + bv[j];
            }
        }
        let value = Tensor::from_vec(&[r, c], out)?;
        let needs = self.ng(a) || self.ng(gain) || self.ng(bias);
        Ok(self.push(value, Op::LayerNorm { a, gain, bias, xhat, inv_std }, needs))
    }

    /// Per-row NLL of the target class under softmax(logits). Returns a
    /// rank-1 tensor of length rows.
    pub fn cross_entropy_rows(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let lv = self.value(logits);
        let (r, c) = (lv.rows(), lv.cols());
        if targets.len() != r {
            return Err(TensorError::ShapeMismatch(format!(
                "cross_entropy_rows: {} targets for {r} rows",
                targets.len()
            )));
        }
        let mut probs = vec![T::ZERO; r * c];
        let mut nll = vec![T::ZERO; r];
        for i in 0..r {
            let t = targets[i];
            if t >= c {
                return Err(TensorError::IndexOutOfRange(format!(
                    "cross_entropy_rows target {t} of {c}"
                )));
            }
            let row = lv.row(i);
            let mut mx = row[0];
            for &x in row {
                mx = mx.max(x);
            }
            let mut sum = T::ZERO;
            for j in 0..c {
                let e = (row[j] - mx).exp();
                probs[i * c + j] = e;
                sum = sum + e;
            }
            for j in 0..c {
                probs[i * c + j] = probs[i * c + j] / sum;
            }
            let lse = mx + sum.ln();
            nll[i] = lse - row[t];
        }
        let value = Tensor::from_vec(&[r], nll)?;
        let needs = self.ng(logits);
        Ok(self.push(value, Op::CrossEntropyRows { logits, targets: targets.to_vec(), probs }, needs))
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let mut s = T::ZERO;
        for &x in self.value(a).data() {
            s = s + x;
        }
        let needs = self.ng(a);
        Ok(self.push(Tensor::scalar(s), Op::SumAll { a }, needs))
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let n = self.value(a).numel();
        if n == 0 {
            return Err(TensorError::Contract("mean_all of empty tensor".into()));
        }
        let mut s = T::ZERO;
        for &x in self.value(a).data() {
            s = s + x;
        }
        let needs = self.ng(a);
        Ok(self.push(
            Tensor::scalar(s / T::from_f64(n as f64)),
            Op::MeanAll { a },
            needs,
        ))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse pass from a scalar loss. Visits nodes in reverse tape order
    /// (which is a reverse topological order) exactly once.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        for node in self.nodes.iter_mut() {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![T::ONE]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let Some(g) = self.nodes[id].grad.take() else { continue };
            let op = self.nodes[id].op.clone();
            self.propagate(id, &op, &g);
            self.nodes[id].grad = Some(g);
        }
        Ok(())
    }

    fn accum(&mut self, id: NodeId, contrib: impl FnOnce(&Self) -> Vec<T>) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let add = contrib(self);
        let slot = &mut self.nodes[id.0].grad;
        match slot {
            Some(gr) => {
                for (dst, src) in gr.iter_mut().zip(add) {
                    *dst = *dst + src;
                }
            }
            None => *slot = Some(add),
        }
    }

    fn propagate(&mut self, out: usize, op: &Op<T>, g: &[T]) {
        let out_id = NodeId(out);
        match op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = (self.value(a).rows(), self.value(a).cols());
                let n = self.value(b).cols();
                self.accum(a, |s| matmul_nt(g, s.value(b).data(), m, n, k));
                self.accum(b, |s| matmul_tn(s.value(a).data(), g, m, k, n));
            }
            Op::MatMulNT { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = (self.value(a).rows(), self.value(a).cols());
                let n = self.value(b).rows();
                self.accum(a, |s| matmul_nn(g, s.value(b).data(), m, n, k));
                self.accum(b, |s| matmul_tn(g, s.value(a).data(), m, n, k));
            }
            Op::Transpose { a } => {
                let a = *a;
                let (r, c) = (self.value(a).rows(), self.value(a).cols());
                self.accum(a, |_| transpose_raw(g, c, r));
            }
            Op::Reshape { a } => {
                self.accum(*a, |_| g.to_vec());
            }
            Op::Add { a, b } => {
                self.accum(*a, |_| g.to_vec());
                self.accum(*b, |_| g.to_vec());
            }
            Op::Sub { a, b } => {
                self.accum(*a, |_| g.to_vec());
                self.accum(*b, |_| g.iter().map(|&x| -x).collect());
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                self.accum(a, |s| zip_map(g, s.value(b).data(), |x, y| x * y));
                self.accum(b, |s| zip_map(g, s.value(a).data(), |x, y| x * y));
            }
            Op::Scale { a, k } => {
                let k = *k;
                self.accum(*a, |_| g.iter().map(|&x| x * k).collect());
            }
            Op::AddRowVec { a, bias } => {
                let (a, bias) = (*a, *bias);
                let c = self.value(a).cols();
                self.accum(a, |_| g.to_vec());
                self.accum(bias, |_| {
                    let mut db = vec![T::ZERO; c];
                    for row in g.chunks(c) {
                        for (d, &x) in db.iter_mut().zip(row) {
                            *d = *d + x;
                        }
                    }
                    db
                });
            }
            Op::RowScale { a, weights } => {
                let a = *a;
                let c = self.value(a).cols();
                self.accum(a, |_| {
                    let mut da = g.to_vec();
                    for (i, row) in da.chunks_mut(c).enumerate() {
                        for x in row.iter_mut() {
                            *x = *x * weights[i];
                        }
                    }
                    da
                });
            }
            Op::Tanh { a } => {
                let a = *a;
                self.accum(a, |s| {
                    zip_map(g, s.value(out_id).data(), |gx, y| gx * (T::ONE - y * y))
                });
            }
            Op::Relu { a } => {
                let a = *a;
                self.accum(a, |s| {
                    zip_map(g, s.value(a).data(), |gx, x| if x > T::ZERO { gx } else { T::ZERO })
                });
            }
            Op::Sigmoid { a } => {
                let a = *a;
                self.accum(a, |s| {
                    zip_map(g, s.value(out_id).data(), |gx, y| gx * y * (T::ONE - y))
                });
            }
            Op::MaskedSoftmax { a } => {
                let a = *a;
                let c = self.value(a).cols();
                self.accum(a, |s| {
                    let y = s.value(out_id).data();
                    let mut da = vec![T::ZERO; g.len()];
                    for (i, grow) in g.chunks(c).enumerate() {
                        let yrow = &y[i * c..(i + 1) * c];
                        let mut dot = T::ZERO;
                        for j in 0..c {
                            dot = dot + grow[j] * yrow[j];
                        }
                        let drow = &mut da[i * c..(i + 1) * c];
                        for j in 0..c {
                            drow[j] = yrow[j] * (grow[j] - dot);
                        }
                    }
                    da
                });
            }
            Op::GatherRows { table, indices } => {
                let table = *table;
                let (r, c) = (self.value(table).rows(), self.value(table).cols());
                self.accum(table, |_| {
                    let mut dt = vec![T::ZERO; r * c];
                    for (i, &ix) in indices.iter().enumerate() {
                        let src = &g[i * c..(i + 1) * c];
                        let dst = &mut dt[ix * c..(ix + 1) * c];
                        for (d, &x) in dst.iter_mut().zip(src) {
                            *d = *d + x;
                        }
                    }
                    dt
                });
            }
            Op::SliceRows { a, start } => {
                let (a, start) = (*a, *start);
                let (r, c) = (self.value(a).rows(), self.value(a).cols());
                self.accum(a, |_| {
                    let mut da = vec![T::ZERO; r * c];
                    da[start * c..start * c + g.len()].copy_from_slice(g);
                    da
                });
            }
            Op::ConcatCols { parts } => {
                let r = self.value(out_id).rows();
                let total_c = self.value(out_id).cols();
                let mut offset = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    let off = offset;
                    self.accum(p, |_| {
                        let mut dp = vec![T::ZERO; r * pc];
                        for i in 0..r {
                            dp[i * pc..(i + 1) * pc]
                                .copy_from_slice(&g[i * total_c + off..i * total_c + off + pc]);
                        }
                        dp
                    });
                    offset += pc;
                }
            }
            Op::ConcatRows { parts } => {
                let c = self.value(out_id).cols();
                let mut offset = 0;
                for &p in parts {
                    let pr = self.value(p).rows();
                    let off = offset;
                    self.accum(p, |_| g[off * c..(off + pr) * c].to_vec());
                    offset += pr;
                }
            }
            Op::LayerNorm { a, gain, bias, xhat, inv_std } => {
                let (a, gain, bias) = (*a, *gain, *bias);
                let c = self.value(a).cols();
                let r = self.value(a).rows();
                let cf = T::from_f64(c as f64);
                self.accum(gain, |_| {
                    let mut dg = vec![T::ZERO; c];
                    for i in 0..r {
                        for j in 0..c {
                            dg[j] = dg[j] + g[i * c + j] * xhat[i * c + j];
                        }
                    }
                    dg
                });
                self.accum(bias, |_| {
                    let mut db = vec![T::ZERO; c];
                    for i in 0..r {
                        for j in 0..c {
                            db[j] = db[j] + g[i * c + j];
                        }
                    }
                    db
                });
                self.accum(a, |s| {
                    let gv = s.value(gain).data();
                    let mut da = vec![T::ZERO; r * c];
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        let xrow = &xhat[i * c..(i + 1) * c];
                        let mut mean_dxh = T::ZERO;
                        let mut mean_dxh_xh = T::ZERO;
                        for j in 0..c {
                            let dxh = grow[j] * gv[j];
                            mean_dxh = mean_dxh + dxh;
                            mean_dxh_xh = mean_dxh_xh + dxh * xrow[j];
                        }
                        mean_dxh = mean_dxh / cf;
                        mean_dxh_xh = mean_dxh_xh / cf;
                        for j in 0..c {
                            let dxh = grow[j] * gv[j];
                            da[i * c + j] =
                                inv_std[i] * (dxh - mean_dxh - xrow[j] * mean_dxh_xh);
                        }
                    }
                    da
                });
            }
            Op::CrossEntropyRows { logits, targets, probs } => {
                let logits = *logits;
                let c = self.value(logits).cols();
                self.accum(logits, |_| {
                    let mut dl = probs.clone();
                    for (i, &gi) in g.iter().enumerate() {
                        let row = &mut dl[i * c..(i + 1) * c];
                        row[targets[i]] = row[targets[i]] - T::ONE;
                        for x in row.iter_mut() {
                            *x = *x * gi;
                        }
                    }
                    dl
                });
            }
            Op::SumAll { a } => {
                let a = *a;
                let n = self.value(a).numel();
                self.accum(a, |_| vec![g[0]; n]);
            }
            Op::MeanAll { a } => {
                let a = *a;
                let n = self.value(a).numel();
                let k = g[0] / T::from_f64(n as f64);
                self.accum(a, |_| vec![k; n]);
            }
        }
    }
}

// ── Raw kernels ─────────────────────────────────────────────────────────
//
// All three loops accumulate in a fixed order, so results are bit-identical
// whether or not rayon splits the output rows.

const PAR_WORK_THRESHOLD: usize = 1 << 18;

pub(crate) fn matmul_nn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; m * n];
    let body = |i: usize, crow: &mut [T]| {
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + aip * brow[j];
            }
        }
    };
    if m * k * n >= PAR_WORK_THRESHOLD && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(|(i, crow)| body(i, crow));
    } else {
        for (i, crow) in c.chunks_mut(n).enumerate() {
            body(i, crow);
        }
    }
    c
}

/// a[m×k] · bᵀ where b is [n×k]: both operands walked row-contiguously.
pub(crate) fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; m * n];
    let body = |i: usize, crow: &mut [T]| {
        let arow = &a[i * k..(i + 1) * k];
        for (j, cij) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut s = T::ZERO;
            for p in 0..k {
                s = s + arow[p] * brow[p];
            }
            *cij = s;
        }
    };
    if m * k * n >= PAR_WORK_THRESHOLD && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(|(i, crow)| body(i, crow));
    } else {
        for (i, crow) in c.chunks_mut(n).enumerate() {
            body(i, crow);
        }
    }
    c
}

/// aᵀ · b where a is [m×k], b is [m×n]; result [k×n].
pub(crate) fn matmul_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut c = vec![T::ZERO; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let crow = &mut c[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] = crow[j] + aip * brow[j];
            }
        }
    }
    c
}

fn transpose_raw<T: Scalar>(a: &[T], r: usize, c: usize) -> Vec<T> {
    let mut out = vec![T::ZERO; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}
