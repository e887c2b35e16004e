//! Forward-only inference on trained weights: a plain f32
//! re-implementation of the network with no autodiff tape, used for
//! greedy generation, perplexity evaluation, and the decoding-speed
//! benchmark. Two decoding paths exist — full recomputation and
//! incremental per-layer key/value caching — and their logits must
//! agree to within 1e-5.

use crate::corpus::{SeqLayout, BOS, EOS, MASK, PAD};
use crate::error::{AuxError, Result};
use crate::masks::{decoder_mask, generation_mask};
use crate::model::{AttnIds, FfnIds, LayerIds, Model, LN_EPS};
use auxgen_tensor::{ParamId, ParamStore, Scalar, Tensor};

// ── Plain weight bundles ────────────────────────────────────────────────

struct PHead {
    wq: Tensor<f32>,
    wk: Tensor<f32>,
    wv: Tensor<f32>,
}

struct PLayer {
    heads: Vec<PHead>,
    wo: Tensor<f32>,
    ln1_g: Vec<f32>,
    ln1_b: Vec<f32>,
    w1: Tensor<f32>,
    b1: Vec<f32>,
    w2: Tensor<f32>,
    b2: Vec<f32>,
    ln2_g: Vec<f32>,
    ln2_b: Vec<f32>,
}

pub struct PlainModel {
    pub d: usize,
    pub vocab: usize,
    pub max_pos: usize,
    pub max_seg: usize,
    we: Tensor<f32>,
    pos: Tensor<f32>,
    seg: Tensor<f32>,
    enc: Vec<PLayer>,
    dec: PLayer,
    ws: Tensor<f32>,
}

fn tensor_of(store: &ParamStore, id: ParamId) -> Tensor<f32> {
    store.value(id).clone()
}

fn vec_of(store: &ParamStore, id: ParamId) -> Vec<f32> {
    store.value(id).data().to_vec()
}

fn plain_layer(store: &ParamStore, ids: &LayerIds) -> PLayer {
    let attn: &AttnIds = &ids.attn;
    let ffn: &FfnIds = &ids.ffn;
    PLayer {
        heads: attn
            .heads
            .iter()
            .map(|h| PHead {
                wq: tensor_of(store, h.wq),
                wk: tensor_of(store, h.wk),
                wv: tensor_of(store, h.wv),
            })
            .collect(),
        wo: tensor_of(store, attn.wo),
        ln1_g: vec_of(store, ids.ln1_g),
        ln1_b: vec_of(store, ids.ln1_b),
        w1: tensor_of(store, ffn.w1),
        b1: vec_of(store, ffn.b1),
        w2: tensor_of(store, ffn.w2),
        b2: vec_of(store, ffn.b2),
        ln2_g: vec_of(store, ids.ln2_g),
        ln2_b: vec_of(store, ids.ln2_b),
    }
}

// ── Plain kernels (deliberately independent of the tape's) ─────────────

fn mat_nn(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(k, b.rows());
    let mut c = vec![0.0f32; m * n];
    for (i, crow) in c.chunks_mut(n).enumerate() {
        for p in 0..k {
            let aip = a.data()[i * k + p];
            let brow = &b.data()[p * n..(p + 1) * n];
            for j in 0..n {
                crow[j] += aip * brow[j];
            }
        }
    }
    Tensor::from_vec(&[m, n], c).unwrap()
}

/// a · bᵀ, the score / logit product.
fn mat_nt(a: &Tensor<f32>, b: &Tensor<f32>) -> Tensor<f32> {
    let (m, k, n) = (a.rows(), a.cols(), b.rows());
    debug_assert_eq!(k, b.cols());
    let mut c = vec![0.0f32; m * n];
    for (i, crow) in c.chunks_mut(n).enumerate() {
        let arow = a.row(i);
        for (j, cij) in crow.iter_mut().enumerate() {
            let brow = b.row(j);
            let mut s = 0.0f32;
            for p in 0..k {
                s += arow[p] * brow[p];
            }
            *cij = s;
        }
    }
    Tensor::from_vec(&[m, n], c).unwrap()
}

fn add_into(a: &mut Tensor<f32>, b: &Tensor<f32>) {
    for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
}

fn add_bias(a: &mut Tensor<f32>, b: &[f32]) {
    let c = a.cols();
    for row in a.data_mut().chunks_mut(c) {
        for (x, &y) in row.iter_mut().zip(b) {
            *x += y;
        }
    }
}

fn layer_norm_rows(x: &Tensor<f32>, gain: &[f32], bias: &[f32]) -> Tensor<f32> {
    let (r, c) = (x.rows(), x.cols());
    let cf = c as f32;
    let eps = LN_EPS as f32;
    let mut out = vec![0.0f32; r * c];
    for i in 0..r {
        let row = x.row(i);
        let mean = row.iter().sum::<f32>() / cf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / cf;
        let inv = 1.0 / (var + eps).sqrt();
        for j in 0..c {
            out[i * c + j] = gain[j] * (row[j] - mean) * inv + bias[j];
        }
    }
    Tensor::from_vec(&[r, c], out).unwrap()
}

fn masked_softmax_rows(scores: &Tensor<f32>, mask: &Tensor<f32>) -> Tensor<f32> {
    let (r, c) = (scores.rows(), scores.cols());
    let mut out = vec![0.0f32; r * c];
    for i in 0..r {
        let srow = scores.row(i);
        let mrow = mask.row(i);
        let mut mx = f32::MASK_NEG + f32::MASK_NEG;
        for j in 0..c {
            mx = mx.max(srow[j] + mrow[j]);
        }
        if mx < f32::MASK_NEG / 2.0 {
            continue; // fully masked row stays zero
        }
        let orow = &mut out[i * c..(i + 1) * c];
        let mut sum = 0.0f32;
        for j in 0..c {
            let e = (srow[j] + mrow[j] - mx).exp();
            orow[j] = e;
            sum += e;
        }
        for x in orow.iter_mut() {
            *x /= sum;
        }
    }
    Tensor::from_vec(&[r, c], out).unwrap()
}

fn softmax_row(row: &mut [f32]) {
    let mut mx = f32::MASK_NEG + f32::MASK_NEG;
    for &x in row.iter() {
        mx = mx.max(x);
    }
    let mut sum = 0.0f32;
    for x in row.iter_mut() {
        *x = (*x - mx).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

fn relu_inplace(a: &mut Tensor<f32>) {
    for x in a.data_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

fn take_rows(t: &Tensor<f32>, start: usize, len: usize) -> Tensor<f32> {
    let c = t.cols();
    Tensor::from_vec(&[len, c], t.data()[start * c..(start + len) * c].to_vec()).unwrap()
}

fn concat_cols(parts: &[Tensor<f32>]) -> Tensor<f32> {
    let r = parts[0].rows();
    let total: usize = parts.iter().map(|p| p.cols()).sum();
    let mut data = Vec::with_capacity(r * total);
    for i in 0..r {
        for p in parts {
            data.extend_from_slice(p.row(i));
        }
    }
    Tensor::from_vec(&[r, total], data).unwrap()
}

/// Highest-logit token id, never [PAD] or [MASK]; ties go to the lowest id.
fn argmax_allowed(row: &[f32]) -> u32 {
    let mut best: Option<(usize, f32)> = None;
    for (i, &x) in row.iter().enumerate() {
        if i == PAD as usize || i == MASK as usize {
            continue;
        }
        if best.map_or(true, |(_, bx)| x > bx) {
            best = Some((i, x));
        }
    }
    best.expect("vocabulary holds more than the banned tokens").0 as u32
}

/// Flatten context utterances into (tokens, segments, response segment),
/// skipping empty utterances; segment of utterance i (0-based) is i+1.
fn flatten_context(context: &[Vec<u32>], max_seg: usize) -> Result<(Vec<u32>, Vec<usize>, usize)> {
    let kept: Vec<&Vec<u32>> = context.iter().filter(|u| !u.is_empty()).collect();
    let n = kept.len();
    if n == 0 {
        return Err(AuxError::Contract("cannot decode from an empty context".into()));
    }
    if n + 1 >= max_seg {
        return Err(AuxError::Contract(format!(
            "{n} context utterances exceed the {max_seg}-row segment table"
        )));
    }
    let mut tokens = Vec::new();
    let mut segments = Vec::new();
    for (i, utt) in kept.iter().enumerate() {
        tokens.extend_from_slice(utt);
        segments.extend(std::iter::repeat(i + 1).take(utt.len()));
    }
    Ok((tokens, segments, n + 1))
}

// ── Block (full-recompute) forward ──────────────────────────────────────

impl PlainModel {
    pub fn from_model(model: &Model) -> PlainModel {
        let store = &model.store;
        PlainModel {
            d: model.dims.d,
            vocab: model.dims.vocab,
            max_pos: model.dims.max_pos,
            max_seg: model.dims.max_seg,
            we: tensor_of(store, model.ids.emb.word),
            pos: tensor_of(store, model.ids.emb.pos),
            seg: tensor_of(store, model.ids.emb.seg),
            enc: model.ids.enc.iter().map(|l| plain_layer(store, l)).collect(),
            dec: plain_layer(store, &model.ids.dec),
            ws: tensor_of(store, model.ids.ws),
        }
    }

    fn embed_row(&self, tok: u32, position: usize, segment: usize) -> Result<Vec<f32>> {
        if tok as usize >= self.vocab {
            return Err(AuxError::Contract(format!("token id {tok} outside vocabulary")));
        }
        if position >= self.max_pos {
            return Err(AuxError::Contract(format!("position {position} outside table")));
        }
        if segment >= self.max_seg {
            return Err(AuxError::Contract(format!("segment {segment} outside table")));
        }
        let w = self.we.row(tok as usize);
        let p = self.pos.row(position);
        let s = self.seg.row(segment);
        Ok((0..self.d).map(|j| (w[j] + p[j]) + s[j]).collect())
    }

    fn embed_block(
        &self,
        tokens: &[u32],
        positions: &[usize],
        segments: &[usize],
    ) -> Result<Tensor<f32>> {
        let mut data = Vec::with_capacity(tokens.len() * self.d);
        for i in 0..tokens.len() {
            data.extend(self.embed_row(tokens[i], positions[i], segments[i])?);
        }
        Ok(Tensor::from_vec(&[tokens.len(), self.d], data)?)
    }

    fn attn_block(
        &self,
        layer: &PLayer,
        q_in: &Tensor<f32>,
        kv_in: &Tensor<f32>,
        mask: &Tensor<f32>,
    ) -> Tensor<f32> {
        let dk = layer.heads[0].wq.cols();
        let inv = (1.0 / (dk as f64).sqrt()) as f32;
        let mut outs = Vec::with_capacity(layer.heads.len());
        for head in &layer.heads {
            let q = mat_nn(q_in, &head.wq);
            let k = mat_nn(kv_in, &head.wk);
            let v = mat_nn(kv_in, &head.wv);
            let mut scores = mat_nt(&q, &k);
            for x in scores.data_mut() {
                *x *= inv;
            }
            let probs = masked_softmax_rows(&scores, mask);
            outs.push(mat_nn(&probs, &v));
        }
        mat_nn(&concat_cols(&outs), &layer.wo)
    }

    fn layer_block(
        &self,
        layer: &PLayer,
        q_in: &Tensor<f32>,
        kv_in: &Tensor<f32>,
        mask: &Tensor<f32>,
    ) -> Tensor<f32> {
        let mut res = self.attn_block(layer, q_in, kv_in, mask);
        add_into(&mut res, q_in);
        let x1 = layer_norm_rows(&res, &layer.ln1_g, &layer.ln1_b);
        let mut h = mat_nn(&x1, &layer.w1);
        add_bias(&mut h, &layer.b1);
        relu_inplace(&mut h);
        let mut f = mat_nn(&h, &layer.w2);
        add_bias(&mut f, &layer.b2);
        add_into(&mut f, &x1);
        layer_norm_rows(&f, &layer.ln2_g, &layer.ln2_b)
    }

    /// Encoder stack over an already-laid-out sequence, any mask. Public
    /// so independent oracles can reuse the trained encoder directly.
    pub fn encode_block(
        &self,
        tokens: &[u32],
        positions: &[usize],
        segments: &[usize],
        mask: &Tensor<f32>,
    ) -> Result<Tensor<f32>> {
        let mut cur = self.embed_block(tokens, positions, segments)?;
        for layer in &self.enc {
            cur = self.layer_block(layer, &cur, &cur, mask);
        }
        Ok(cur)
    }

    /// Teacher-forced logits for every response step, one full pass.
    pub fn forced_logits_full(&self, seq: &SeqLayout) -> Result<Tensor<f32>> {
        let (m, t) = (seq.m, seq.t());
        let gmask = generation_mask::<f32>(m, t);
        let e = self.encode_block(&seq.tokens, &seq.positions, &seq.segments, &gmask)?;
        let q = take_rows(&e, m, t);
        let dmask = decoder_mask::<f32>(m, t);
        let o = self.layer_block(&self.dec, &q, &e, &dmask);
        Ok(mat_nt(&o, &self.ws))
    }

    /// Teacher-forced logits via the incremental cache, step by step.
    pub fn forced_logits_incremental(&self, seq: &SeqLayout) -> Result<Tensor<f32>> {
        let m = seq.m;
        let mut dec = IncrementalDecoder::new(
            self,
            &seq.tokens[..m],
            &seq.segments[..m],
            seq.segments[m],
        )?;
        let mut data = Vec::with_capacity(seq.t() * self.vocab);
        for &tok in &seq.tokens[m..] {
            data.extend(dec.step(tok)?);
        }
        Ok(Tensor::from_vec(&[seq.t(), self.vocab], data)?)
    }

    /// Summed NLL of the response tokens plus how many there were,
    /// accumulated in f64 from the f32 logits.
    pub fn response_nll(&self, seq: &SeqLayout) -> Result<(f64, usize)> {
        let logits = self.forced_logits_full(seq)?;
        let mut total = 0.0f64;
        for (i, &target) in seq.targets.iter().enumerate() {
            let row = logits.row(i);
            let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
            let sum: f64 = row.iter().map(|&x| (x as f64 - mx).exp()).sum();
            total += mx + sum.ln() - row[target as usize] as f64;
        }
        Ok((total, seq.targets.len()))
    }

    /// Greedy decoding with full recomputation at every step.
    pub fn greedy_full(&self, context: &[Vec<u32>], max_len: usize) -> Result<Vec<u32>> {
        let (ctx_tokens, ctx_segments, resp_seg) = flatten_context(context, self.max_seg)?;
        let m = ctx_tokens.len();
        let mut generated: Vec<u32> = Vec::new();
        loop {
            if generated.len() >= max_len {
                break;
            }
            let t = generated.len() + 1;
            if m + t > self.max_pos {
                break; // position table exhausted
            }
            let mut tokens = ctx_tokens.clone();
            tokens.push(BOS);
            tokens.extend_from_slice(&generated);
            let positions: Vec<usize> = (0..m + t).collect();
            let mut segments = ctx_segments.clone();
            segments.extend(std::iter::repeat(resp_seg).take(t));
            let gmask = generation_mask::<f32>(m, t);
            let e = self.encode_block(&tokens, &positions, &segments, &gmask)?;
            let q = take_rows(&e, m + t - 1, 1);
            let drow = take_rows(&decoder_mask::<f32>(m, t), t - 1, 1);
            let o = self.layer_block(&self.dec, &q, &e, &drow);
            let logits = mat_nt(&o, &self.ws);
            let tok = argmax_allowed(logits.row(0));
            if tok == EOS {
                break;
            }
            generated.push(tok);
        }
        Ok(generated)
    }

    /// Greedy decoding with per-layer key/value caching: the context is
    /// encoded once, then each new token flows through alone.
    pub fn greedy_incremental(&self, context: &[Vec<u32>], max_len: usize) -> Result<Vec<u32>> {
        let (ctx_tokens, ctx_segments, resp_seg) = flatten_context(context, self.max_seg)?;
        let mut dec = IncrementalDecoder::new(self, &ctx_tokens, &ctx_segments, resp_seg)?;
        let mut generated: Vec<u32> = Vec::new();
        let mut input = BOS;
        loop {
            if generated.len() >= max_len || dec.next_pos >= self.max_pos {
                break;
            }
            let logits = dec.step(input)?;
            let tok = argmax_allowed(&logits);
            if tok == EOS {
                break;
            }
            generated.push(tok);
            input = tok;
        }
        Ok(generated)
    }
}

// ── Incremental decoding ────────────────────────────────────────────────

struct HeadKV {
    k: Vec<f32>, // rows × dk, appended as the sequence grows
    v: Vec<f32>,
}

/// Per-layer cached attention state for one decode. Context rows are
/// filled in bulk up front; each generated token then costs O(L) in the
/// cached sequence length instead of a full recompute.
struct IncrementalDecoder<'a> {
    model: &'a PlainModel,
    enc_kv: Vec<Vec<HeadKV>>, // [layer][head]
    dec_kv: Vec<HeadKV>,      // [head], over final encoder outputs
    rows: usize,
    next_pos: usize,
    resp_seg: usize,
}

impl<'a> IncrementalDecoder<'a> {
    fn new(
        model: &'a PlainModel,
        ctx_tokens: &[u32],
        ctx_segments: &[usize],
        resp_seg: usize,
    ) -> Result<Self> {
        let m = ctx_tokens.len();
        if m == 0 {
            return Err(AuxError::Contract("cannot decode from an empty context".into()));
        }
        let positions: Vec<usize> = (0..m).collect();
        let mut cur = model.embed_block(ctx_tokens, &positions, ctx_segments)?;
        let mut enc_kv = Vec::with_capacity(model.enc.len());
        let zero = crate::masks::zero_mask::<f32>(m, m);
        for layer in &model.enc {
            // cache K/V of this layer's input before advancing through it
            let kv: Vec<HeadKV> = layer
                .heads
                .iter()
                .map(|h| HeadKV {
                    k: mat_nn(&cur, &h.wk).into_data(),
                    v: mat_nn(&cur, &h.wv).into_data(),
                })
                .collect();
            enc_kv.push(kv);
            // context rows attend to all context rows (no mask among them)
            cur = model.layer_block(layer, &cur, &cur, &zero);
        }
        let dec_kv = model
            .dec
            .heads
            .iter()
            .map(|h| HeadKV {
                k: mat_nn(&cur, &h.wk).into_data(),
                v: mat_nn(&cur, &h.wv).into_data(),
            })
            .collect();
        Ok(IncrementalDecoder { model, enc_kv, dec_kv, rows: m, next_pos: m, resp_seg })
    }

    /// Attention of one query row over a head's cached K/V.
    fn attend(q: &[f32], kv: &HeadKV, rows: usize, inv: f32) -> Vec<f32> {
        let dk = q.len();
        let mut scores = vec![0.0f32; rows];
        for (r, s) in scores.iter_mut().enumerate() {
            let krow = &kv.k[r * dk..(r + 1) * dk];
            let mut acc = 0.0f32;
            for p in 0..dk {
                acc += q[p] * krow[p];
            }
            *s = acc * inv;
        }
        softmax_row(&mut scores);
        let mut out = vec![0.0f32; dk];
        for (r, &a) in scores.iter().enumerate() {
            let vrow = &kv.v[r * dk..(r + 1) * dk];
            for j in 0..dk {
                out[j] += a * vrow[j];
            }
        }
        out
    }

    /// One cached attention + FFN layer over a single row.
    fn layer_row(layer: &PLayer, kv: &[HeadKV], rows: usize, x: &Tensor<f32>) -> Tensor<f32> {
        let dk = layer.heads[0].wq.cols();
        let inv = (1.0 / (dk as f64).sqrt()) as f32;
        let mut heads_out = Vec::with_capacity(layer.heads.len());
        for (h, head) in layer.heads.iter().enumerate() {
            let q = mat_nn(x, &head.wq);
            heads_out.push(Tensor::from_vec(&[1, dk], Self::attend(q.row(0), &kv[h], rows, inv)).unwrap());
        }
        let mut res = mat_nn(&concat_cols(&heads_out), &layer.wo);
        add_into(&mut res, x);
        let x1 = layer_norm_rows(&res, &layer.ln1_g, &layer.ln1_b);
        let mut hh = mat_nn(&x1, &layer.w1);
        add_bias(&mut hh, &layer.b1);
        relu_inplace(&mut hh);
        let mut f = mat_nn(&hh, &layer.w2);
        add_bias(&mut f, &layer.b2);
        add_into(&mut f, &x1);
        layer_norm_rows(&f, &layer.ln2_g, &layer.ln2_b)
    }

    /// Feed one response-side input token; returns the vocabulary logits
    /// for the next position.
    fn step(&mut self, tok: u32) -> Result<Vec<f32>> {
        let model = self.model;
        let row = model.embed_row(tok, self.next_pos, self.resp_seg)?;
        let mut cur = Tensor::from_vec(&[1, model.d], row)?;
        for (l, layer) in model.enc.iter().enumerate() {
            // extend this layer's cache with the new row, then attend
            for (h, head) in layer.heads.iter().enumerate() {
                let k = mat_nn(&cur, &head.wk);
                let v = mat_nn(&cur, &head.wv);
                self.enc_kv[l][h].k.extend_from_slice(k.data());
                self.enc_kv[l][h].v.extend_from_slice(v.data());
            }
            cur = Self::layer_row(layer, &self.enc_kv[l], self.rows + 1, &cur);
        }
        // the decoder cross-attends over all encoder outputs so far
        for (h, head) in model.dec.heads.iter().enumerate() {
            let k = mat_nn(&cur, &head.wk);
            let v = mat_nn(&cur, &head.wv);
            self.dec_kv[h].k.extend_from_slice(k.data());
            self.dec_kv[h].v.extend_from_slice(v.data());
        }
        let o = Self::layer_row(&model.dec, &self.dec_kv, self.rows + 1, &cur);
        self.rows += 1;
        self.next_pos += 1;
        Ok(mat_nt(&o, &model.ws).into_data())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Dialogue;
    use crate::model::{gen_logits, ModelDims};
    use auxgen_tensor::{Graph, SeedSplit};

    fn tiny_model(vocab: usize) -> Model {
        Model::new(
            ModelDims { d: 16, heads: 2, depth: 2, vocab, max_pos: 60, max_seg: 12 },
            &SeedSplit::new(40),
            false,
        )
        .unwrap()
    }

    fn seq(ctx: Vec<Vec<u32>>, resp: Vec<u32>) -> SeqLayout {
        SeqLayout::from_dialogue(&Dialogue { context: ctx, response: resp }, 60, 12).unwrap()
    }

    #[test]
    fn plain_forward_matches_the_tape_forward() {
        let model = tiny_model(50);
        let plain = PlainModel::from_model(&model);
        let s = seq(vec![vec![10, 11, 12], vec![13, 14]], vec![20, 21, 22, EOS]);
        let mut g = Graph::<f32>::new();
        let bound = model.bind(&mut g);
        let tape = gen_logits(&mut g, &bound, &model, &s).unwrap();
        let ours = plain.forced_logits_full(&s).unwrap();
        assert_eq!(g.value(tape).shape(), ours.shape());
        for (a, b) in g.value(tape).data().iter().zip(ours.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn incremental_logits_match_full_recompute() {
        let model = tiny_model(50);
        let plain = PlainModel::from_model(&model);
        let s = seq(vec![vec![10, 11, 12], vec![13], vec![14, 15]], vec![20, 21, 22, 23, EOS]);
        let full = plain.forced_logits_full(&s).unwrap();
        let inc = plain.forced_logits_incremental(&s).unwrap();
        assert_eq!(full.shape(), inc.shape());
        for (a, b) in full.data().iter().zip(inc.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn greedy_paths_emit_identical_tokens() {
        let model = tiny_model(50);
        let plain = PlainModel::from_model(&model);
        for ctx in [
            vec![vec![10, 11], vec![12, 13, 14]],
            vec![vec![30, 31, 32]],
            vec![vec![5], vec![6], vec![7], vec![8]],
        ] {
            let a = plain.greedy_full(&ctx, 12).unwrap();
            let b = plain.greedy_incremental(&ctx, 12).unwrap();
            assert_eq!(a, b, "paths disagree on context {ctx:?}");
        }
    }

    #[test]
    fn greedy_is_deterministic() {
        let model = tiny_model(50);
        let plain = PlainModel::from_model(&model);
        let ctx = vec![vec![10, 11], vec![12]];
        assert_eq!(plain.greedy_full(&ctx, 8).unwrap(), plain.greedy_full(&ctx, 8).unwrap());
        assert_eq!(
            plain.greedy_incremental(&ctx, 8).unwrap(),
            plain.greedy_incremental(&ctx, 8).unwrap()
        );
    }

    #[test]
    fn max_len_one_yields_at_most_one_token() {
        let model = tiny_model(50);
        let plain = PlainModel::from_model(&model);
        let ctx = vec![vec![10, 11, 12]];
        let out = plain.greedy_full(&ctx, 1).unwrap();
        assert!(out.len() <= 1);
        // and exactly one when the first choice is not the stop token
        let s = seq(ctx.clone(), vec![20, EOS]);
        let first = argmax_allowed(plain.forced_logits_full(&s).unwrap().row(0));
        if first != EOS {
            assert_eq!(out.len(), 1);
            assert_eq!(out[0], first);
        }
        assert!(plain.greedy_full(&ctx, 0).unwrap().is_empty());
    }

    #[test]
    fn padding_and_mask_tokens_are_never_emitted() {
        let mut model = tiny_model(50);
        // rig the output projection so the banned rows dominate every step
        {
            let d = model.dims.d;
            let ws = model.store.get_mut(model.ids.ws).value.data_mut();
            for j in 0..d {
                ws[PAD as usize * d + j] = 5.0;
                ws[MASK as usize * d + j] = 4.0;
            }
        }
        let plain = PlainModel::from_model(&model);
        for out in [
            plain.greedy_full(&[vec![10, 11]], 6).unwrap(),
            plain.greedy_incremental(&[vec![10, 11]], 6).unwrap(),
        ] {
            assert!(!out.iter().any(|&t| t == PAD || t == MASK), "emitted banned token: {out:?}");
        }
    }

    #[test]
    fn uniform_model_nll_is_ln_vocab_per_token() {
        let vocab = 100;
        let mut model = tiny_model(vocab);
        model.store.get_mut(model.ids.ws).value = Tensor::zeros(&[vocab, model.dims.d]);
        let plain = PlainModel::from_model(&model);
        let s = seq(vec![vec![10, 11]], vec![20, 21, EOS]);
        let (total, count) = plain.response_nll(&s).unwrap();
        assert_eq!(count, 3);
        assert!((total / count as f64 - (vocab as f64).ln()).abs() < 1e-5);
    }

    #[test]
    fn position_table_exhaustion_stops_generation() {
        let model = Model::new(
            ModelDims { d: 16, heads: 2, depth: 1, vocab: 50, max_pos: 7, max_seg: 12 },
            &SeedSplit::new(41),
            false,
        )
        .unwrap();
        let plain = PlainModel::from_model(&model);
        let ctx = vec![vec![10, 11, 12, 13, 14]]; // m=5; BOS at 5 leaves one step
        let full = plain.greedy_full(&ctx, 10).unwrap();
        let inc = plain.greedy_incremental(&ctx, 10).unwrap();
        assert!(full.len() <= 2, "expected the 7-row position table to cap output");
        assert_eq!(full, inc);
    }

    #[test]
    fn empty_context_is_rejected() {
        let model = tiny_model(50);
        let plain = PlainModel::from_model(&model);
        assert!(plain.greedy_full(&[], 5).is_err());
        assert!(plain.greedy_full(&[vec![]], 5).is_err());
    }

    #[test]
    fn argmax_breaks_ties_toward_the_lowest_id() {
        let row = vec![0.0f32; 8];
        assert_eq!(argmax_allowed(&row), 1); // 0 is banned, 1 is the first allowed
        let mut row2 = vec![0.0f32; 8];
        row2[6] = 3.0;
        row2[7] = 3.0;
        assert_eq!(argmax_allowed(&row2), 6);
    }
}
