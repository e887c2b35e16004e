//! Utterance order recovery: shuffle the context's utterances, read each
//! one into a summed sentence vector via the shared encoder, process the
//! set with position-free multi-head attention plus a GRU, then write
//! the original positions one at a time with a GRU decoder steered by
//! additive attention over the processed states.

use crate::error::{AuxError, Result};
use crate::masks::zero_mask;
use crate::model::{embed_sequence, encode, ffn_forward, multi_head, GruIds, Model, OrdIds};
use auxgen_tensor::rng::non_identity_permutation;
use auxgen_tensor::{Graph, NodeId, Scalar, Tensor};
use rand_chacha::ChaCha8Rng;

fn p(bound: &[NodeId], id: auxgen_tensor::ParamId) -> NodeId {
    bound[id.0]
}

/// Shuffle utterances by a non-identity permutation, keeping the words
/// inside each utterance in order. Returns the shuffled context and the
/// true order: order[i] = original position (1-based) of the utterance
/// now at slot i. None when there is nothing to shuffle (n < 2).
pub fn shuffle_utterances(
    context: &[Vec<u32>],
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<Vec<u32>>, Vec<usize>)> {
    let n = context.len();
    if n < 2 {
        return None;
    }
    let perm = non_identity_permutation(rng, n);
    let shuffled = perm.iter().map(|&src| context[src].clone()).collect();
    let order = perm.iter().map(|&src| src + 1).collect();
    Some((shuffled, order))
}

/// Read stage: encode the shuffled context under a zero mask and sum
/// encoder outputs per utterance. Returns the n×d sentence memory (and
/// the full encoder output, for tests).
pub fn read<T: Scalar>(
    g: &mut Graph<T>,
    bound: &[NodeId],
    model: &Model,
    shuffled: &[Vec<u32>],
) -> Result<(NodeId, NodeId)> {
    let mut tokens = Vec::new();
    let mut segments = Vec::new();
    let mut spans = Vec::new();
    for (slot, utt) in shuffled.iter().enumerate() {
        spans.push((tokens.len(), utt.len()));
        tokens.extend_from_slice(utt);
        segments.extend(std::iter::repeat(slot + 1).take(utt.len()));
    }
    let positions: Vec<usize> = (0..tokens.len()).collect();
    let x = embed_sequence(g, bound, &model.ids.emb, &tokens, &positions, &segments)?;
    let mask = zero_mask::<T>(tokens.len(), tokens.len());
    let (e, _) = encode(g, bound, model, x, &mask)?;
    let mut rows = Vec::with_capacity(shuffled.len());
    for &(start, len) in &spans {
        let slice = g.slice_rows(e, start, len)?;
        let ones = g.constant(Tensor::full(&[1, len], T::ONE));
        rows.push(g.matmul(ones, slice)?);
    }
    Ok((g.concat_rows(&rows)?, e))
}

/// One standard GRU step: update/reset gates, candidate state, blend.
pub fn gru_step<T: Scalar>(
    g: &mut Graph<T>,
    bound: &[NodeId],
    gru: &GruIds,
    h: NodeId,
    x: NodeId,
) -> Result<NodeId> {
    let d = g.value(h).cols();
    let zx = g.matmul(x, p(bound, gru.wxz))?;
    let zh = g.matmul(h, p(bound, gru.whz))?;
    let z = g.add(zx, zh)?;
    let z = g.add_rowvec(z, p(bound, gru.bz))?;
    let z = g.sigmoid(z)?;
    let rx = g.matmul(x, p(bound, gru.wxr))?;
    let rh = g.matmul(h, p(bound, gru.whr))?;
    let r = g.add(rx, rh)?;
    let r = g.add_rowvec(r, p(bound, gru.br))?;
    let r = g.sigmoid(r)?;
    let nx = g.matmul(x, p(bound, gru.wxn))?;
    let rh = g.mul(r, h)?;
    let nh = g.matmul(rh, p(bound, gru.whn))?;
    let n = g.add(nx, nh)?;
    let n = g.add_rowvec(n, p(bound, gru.bn))?;
    let n = g.tanh(n)?;
    let ones = g.constant(Tensor::full(&[1, d], T::ONE));
    let keep = g.sub(ones, z)?;
    let blend_new = g.mul(keep, n)?;
    let blend_old = g.mul(z, h)?;
    Ok(g.add(blend_new, blend_old)?)
}

/// Process stage: position-free multi-head self-attention over the
/// sentence memory, then a GRU scan. Returns every hidden state h_t.
pub fn process<T: Scalar>(
    g: &mut Graph<T>,
    bound: &[NodeId],
    ord: &OrdIds,
    s: NodeId,
) -> Result<Vec<NodeId>> {
    let n = g.value(s).rows();
    let d = g.value(s).cols();
    let mask = zero_mask::<T>(n, n);
    let (a, _) = multi_head(g, bound, &ord.proc_attn, s, s, &mask)?;
    let mut h = g.constant(Tensor::zeros(&[1, d]));
    let mut states = Vec::with_capacity(n);
    for t in 0..n {
        let a_t = g.slice_rows(a, t, 1)?;
        h = gru_step(g, bound, &ord.proc_gru, h, a_t)?;
        states.push(h);
    }
    Ok(states)
}

/// Everything the write stage produced for one instance.
pub struct WriteOutcome {
    pub loss: NodeId,
    /// Greedy argmax class per step (1-based original positions).
    pub predictions: Vec<usize>,
    /// Attention weights over the processed states, one node per step.
    pub attn_weights: Vec<NodeId>,
}

/// Write stage: starting from h̄₀ = h_n, each step scores the processed
/// states with additive attention e = Vᵀtanh(W₁h̄ + W₂h_t + b₁), blends
/// them into a context vector, advances the writer GRU on [c ⊕ x], and
/// classifies the original position of the utterance at this slot over
/// the n valid position classes. `teacher_forcing` feeds the true class
/// to the next step; otherwise the argmax is fed back.
pub fn write<T: Scalar>(
    g: &mut Graph<T>,
    bound: &[NodeId],
    ord: &OrdIds,
    states: &[NodeId],
    order: &[usize],
    teacher_forcing: bool,
) -> Result<WriteOutcome> {
    let n = states.len();
    if n == 0 || order.len() != n {
        return Err(AuxError::Contract(format!(
            "write: {} states vs {} order entries",
            n,
            order.len()
        )));
    }
    let classes = g.value(p(bound, ord.out.b2)).numel();
    for &o in order {
        if o == 0 || o > n {
            return Err(AuxError::Contract(format!("order entry {o} out of range 1..={n}")));
        }
    }
    let h_mat = g.concat_rows(states)?;
    let hw2 = g.matmul(h_mat, p(bound, ord.attn_w2))?;
    // additive mask admitting only the n valid position classes 1..=n
    let mut class_mask = vec![T::MASK_NEG; classes];
    for c in class_mask.iter_mut().take(n + 1).skip(1) {
        *c = T::ZERO;
    }
    let class_mask = g.constant(Tensor::from_vec(&[1, classes], class_mask)?);

    let mut h_bar = states[n - 1];
    let mut x = g.gather_rows(p(bound, ord.pos_table), &[0])?; // start class
    let mut nlls = Vec::with_capacity(n);
    let mut predictions = Vec::with_capacity(n);
    let mut attn_weights = Vec::with_capacity(n);
    let attn_mask = zero_mask::<T>(1, n);
    for i in 0..n {
        let q = g.matmul(h_bar, p(bound, ord.attn_w1))?;
        let scores = g.add_rowvec(hw2, q)?;
        let scores = g.add_rowvec(scores, p(bound, ord.attn_b1))?;
        let scores = g.tanh(scores)?;
        let e = g.matmul_nt(scores, p(bound, ord.attn_v))?; // n×1
        let e = g.transpose(e)?; // 1×n
        let a = g.masked_softmax(e, &attn_mask)?;
        attn_weights.push(a);
        let c = g.matmul(a, h_mat)?; // 1×d
        let gru_in = g.concat_cols(&[c, x])?;
        h_bar = gru_step(g, bound, &ord.write_gru, h_bar, gru_in)?;
        let u_in = g.concat_cols(&[h_bar, x, c])?;
        let u = ffn_forward(g, bound, &ord.out, u_in)?; // 1×classes
        let masked = g.add(u, class_mask)?;
        nlls.push(g.cross_entropy_rows(masked, &[order[i]])?);
        let row = g.value(masked).row(0);
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.to_f64().partial_cmp(&b.1.to_f64()).unwrap())
            .map(|(ix, _)| ix)
            .unwrap();
        predictions.push(pred);
        let feed = if teacher_forcing { order[i] } else { pred };
        x = g.gather_rows(p(bound, ord.pos_table), &[feed])?;
    }
    let all = g.concat_cols(&nlls)?;
    let loss = g.mean_all(all)?;
    Ok(WriteOutcome { loss, predictions, attn_weights })
}

/// Full pipeline on an already-shuffled context with known true order.
pub fn uor_loss<T: Scalar>(
    g: &mut Graph<T>,
    bound: &[NodeId],
    model: &Model,
    shuffled: &[Vec<u32>],
    order: &[usize],
    teacher_forcing: bool,
) -> Result<WriteOutcome> {
    let ord = model
        .ids
        .ord
        .as_ref()
        .ok_or_else(|| AuxError::Contract("model built without the order network".into()))?;
    let (s, _) = read(g, bound, model, shuffled)?;
    let states = process(g, bound, ord, s)?;
    write(g, bound, ord, &states, order, teacher_forcing)
}
