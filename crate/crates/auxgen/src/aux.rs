//! Context-corruption generators and the recovery losses for word order
//! recovery (wor), masked word recovery (mwr), and masked utterance
//! recovery (mur). All three share one loss path: encode the corrupted
//! context, project the supervised positions through the shared W_s,
//! and average the NLL of the original tokens.

use crate::corpus::MASK;
use crate::error::{AuxError, Result};
use crate::masks::{block_diagonal_mask, zero_mask};
use crate::model::{embed_sequence, encode, Model};
use auxgen_tensor::rng::{bernoulli_mask, non_identity_permutation};
use auxgen_tensor::{Graph, NodeId, Scalar};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Wor,
    Mwr,
    Mur,
}

/// A corrupted context sequence plus its recovery supervision.
#[derive(Debug, Clone)]
pub struct Corrupted {
    pub task: Task,
    /// Corrupted token ids, utterances flattened in order.
    pub tokens: Vec<u32>,
    /// Surface positions 0..len (wor keeps the corrupted surface order).
    pub positions: Vec<usize>,
    /// Segment = utterance index, 1-based; masked tokens keep theirs.
    pub segments: Vec<usize>,
    /// Utterance index per token, for the same-utterance mask.
    pub utterance: Vec<usize>,
    /// (sequence position, original token id) at each supervised slot.
    pub supervised: Vec<(usize, u32)>,
}

fn flatten(context: &[Vec<u32>]) -> (Vec<u32>, Vec<usize>, Vec<(usize, usize)>) {
    let mut tokens = Vec::new();
    let mut utterance = Vec::new();
    let mut spans = Vec::new();
    for (u_ix, utt) in context.iter().enumerate() {
        spans.push((tokens.len(), utt.len()));
        tokens.extend_from_slice(utt);
        utterance.extend(std::iter::repeat(u_ix + 1).take(utt.len()));
    }
    (tokens, utterance, spans)
}

fn corrupted(task: Task, tokens: Vec<u32>, utterance: Vec<usize>, supervised: Vec<(usize, u32)>) -> Corrupted {
    let positions = (0..tokens.len()).collect();
    let segments = utterance.clone();
    Corrupted { task, tokens, positions, segments, utterance, supervised }
}

/// Word order recovery: permute one uniformly chosen utterance of length
/// ≥ 2 by a non-identity permutation. Targets are the original tokens at
/// each position of that utterance. Returns None when no utterance is
/// eligible.
pub fn corrupt_word_order(context: &[Vec<u32>], rng: &mut ChaCha8Rng) -> Option<Corrupted> {
    let eligible: Vec<usize> =
        (0..context.len()).filter(|&i| context[i].len() >= 2).collect();
    if eligible.is_empty() {
        return None;
    }
    let pick = eligible[rng.gen_range(0..eligible.len())];
    let (mut tokens, utterance, spans) = flatten(context);
    let (start, len) = spans[pick];
    let perm = non_identity_permutation(rng, len);
    let original = context[pick].clone();
    for (offset, &src) in perm.iter().enumerate() {
        tokens[start + offset] = original[src];
    }
    let supervised = (0..len).map(|o| (start + o, original[o])).collect();
    Some(corrupted(Task::Wor, tokens, utterance, supervised))
}

/// Masked word recovery: every token independently becomes [MASK] with
/// the given rate; if none fires, one uniformly chosen position is
/// forced so supervision is never empty.
pub fn corrupt_masked_words(context: &[Vec<u32>], rate: f64, rng: &mut ChaCha8Rng) -> Corrupted {
    let (mut tokens, utterance, _) = flatten(context);
    let flips = bernoulli_mask(rng, tokens.len(), rate);
    let mut masked: Vec<usize> = (0..tokens.len()).filter(|&i| flips[i]).collect();
    if masked.is_empty() {
        masked.push(rng.gen_range(0..tokens.len()));
    }
    let supervised: Vec<(usize, u32)> = masked.iter().map(|&i| (i, tokens[i])).collect();
    for &i in &masked {
        tokens[i] = MASK;
    }
    corrupted(Task::Mwr, tokens, utterance, supervised)
}

/// Masked utterance recovery: one uniformly chosen utterance has all its
/// tokens replaced by [MASK]. Needs ≥ 2 utterances — with only one, the
/// recovery would be uninformed.
pub fn corrupt_masked_utterance(context: &[Vec<u32>], rng: &mut ChaCha8Rng) -> Option<Corrupted> {
    if context.len() < 2 {
        return None;
    }
    let pick = rng.gen_range(0..context.len());
    let (mut tokens, utterance, spans) = flatten(context);
    let (start, len) = spans[pick];
    let supervised: Vec<(usize, u32)> =
        (start..start + len).map(|i| (i, tokens[i])).collect();
    for t in tokens[start..start + len].iter_mut() {
        *t = MASK;
    }
    Some(corrupted(Task::Mur, tokens, utterance, supervised))
}

/// Recovery loss shared by all three tasks: encode the corrupted context
/// (same-utterance mask for wor, zero mask otherwise), project the
/// supervised rows through the shared W_s, and average the NLL of the
/// original tokens.
pub fn recovery_loss<T: Scalar>(
    g: &mut Graph<T>,
    bound: &[NodeId],
    model: &Model,
    c: &Corrupted,
) -> Result<NodeId> {
    if c.supervised.is_empty() {
        return Err(AuxError::Contract("recovery loss with no supervised positions".into()));
    }
    let x = embed_sequence(g, bound, &model.ids.emb, &c.tokens, &c.positions, &c.segments)?;
    let mask = match c.task {
        Task::Wor => block_diagonal_mask::<T>(&c.utterance),
        Task::Mwr | Task::Mur => zero_mask::<T>(c.tokens.len(), c.tokens.len()),
    };
    let (e, _) = encode(g, bound, model, x, &mask)?;
    let rows: Vec<usize> = c.supervised.iter().map(|&(i, _)| i).collect();
    let picked = g.gather_rows(e, &rows)?;
    let logits = g.matmul_nt(picked, bound[model.ids.ws.0])?;
    let targets: Vec<usize> = c.supervised.iter().map(|&(_, t)| t as usize).collect();
    let nll = g.cross_entropy_rows(logits, &targets)?;
    Ok(g.mean_all(nll)?)
}
