//! Automatic response-quality metrics: perplexity, corpus BLEU-4,
//! distinct-1/2, embedding-space similarity (Average / Greedy /
//! Extrema), and the per-token decoding-speed benchmark.

use crate::corpus::{SeqLayout, Vocabulary};
use crate::error::{AuxError, Result};
use crate::infer::PlainModel;
use crate::model::Model;
use std::collections::{HashMap, HashSet};
use std::time::Instant;

// ── Perplexity ──────────────────────────────────────────────────────────

/// exp of the mean per-token NLL over every response token in the set.
/// Also returns the raw sum and token count for external recomputation.
pub fn perplexity(model: &PlainModel, set: &[SeqLayout]) -> Result<(f64, f64, usize)> {
    let mut total = 0.0f64;
    let mut count = 0usize;
    for seq in set {
        let (nll, n) = model.response_nll(seq)?;
        total += nll;
        count += n;
    }
    if count == 0 {
        return Err(AuxError::Contract("perplexity over zero response tokens".into()));
    }
    Ok(((total / count as f64).exp(), total, count))
}

// ── BLEU-4 ──────────────────────────────────────────────────────────────

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(|s| s.as_str()).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU with n-gram orders 1..4, clipped matches, geometric
/// mean, and brevity penalty. Orders ≥ 2 use add-one smoothing so that
/// short single-reference corpora do not zero out.
pub fn bleu4(candidates: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    if candidates.len() != references.len() {
        return Err(AuxError::Contract(format!(
            "{} candidates vs {} references",
            candidates.len(),
            references.len()
        )));
    }
    if candidates.is_empty() {
        return Err(AuxError::Contract("BLEU of an empty corpus".into()));
    }
    let mut matched = [0usize; 4];
    let mut total = [0usize; 4];
    let mut cand_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, reference) in candidates.iter().zip(references) {
        cand_len += cand.len();
        ref_len += reference.len();
        for n in 1..=4 {
            let c = ngram_counts(cand, n);
            let r = ngram_counts(reference, n);
            for (gram, &count) in &c {
                total[n - 1] += count;
                matched[n - 1] += count.min(*r.get(gram).unwrap_or(&0));
            }
        }
    }
    if cand_len == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0f64;
    for n in 1..=4 {
        let (num, den) = if n == 1 {
            (matched[0] as f64, total[0] as f64)
        } else {
            ((matched[n - 1] + 1) as f64, (total[n - 1] + 1) as f64)
        };
        if num == 0.0 || den == 0.0 {
            return Ok(0.0);
        }
        log_sum += (num / den).ln();
    }
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * (log_sum / 4.0).exp())
}

// ── Distinct-n ──────────────────────────────────────────────────────────

/// (unique n-grams across all responses) / (total n-grams). The second
/// return is the total, so callers can flag degenerate zero-gram sets.
pub fn distinct_n(responses: &[Vec<String>], n: usize) -> Result<(f64, usize)> {
    if n != 1 && n != 2 {
        return Err(AuxError::Contract(format!("distinct-{n} is not a reported metric")));
    }
    let mut seen: HashSet<Vec<&str>> = HashSet::new();
    let mut total = 0usize;
    for resp in responses {
        if resp.len() < n {
            continue;
        }
        for w in resp.windows(n) {
            seen.insert(w.iter().map(|s| s.as_str()).collect());
            total += 1;
        }
    }
    if total == 0 {
        return Ok((0.0, 0));
    }
    Ok((seen.len() as f64 / total as f64, total))
}

// ── Embedding-space metrics ─────────────────────────────────────────────

/// Token → vector table for the similarity metrics. Loaded from an
/// external text file, or (behind a flag, labeled non-comparable)
/// extracted from the model's learned word embeddings.
pub struct WordEmbeddings {
    pub dim: usize,
    /// Where the vectors came from, recorded in the report header.
    pub source: String,
    map: HashMap<String, Vec<f32>>,
}

impl WordEmbeddings {
    pub fn load_file(path: &std::path::Path) -> Result<WordEmbeddings> {
        use std::io::BufRead;
        let file = std::fs::File::open(path)?;
        let mut map = HashMap::new();
        let mut dim = 0usize;
        for (ix, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values: Vec<f32> = parts
                .map(|p| p.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| AuxError::Corpus(format!("line {}: bad vector: {e}", ix + 1)))?;
            if values.is_empty() {
                return Err(AuxError::Corpus(format!("line {}: token without vector", ix + 1)));
            }
            if dim == 0 {
                dim = values.len();
            } else if values.len() != dim {
                return Err(AuxError::Corpus(format!(
                    "line {}: width {} does not match the file's width {dim}",
                    ix + 1,
                    values.len()
                )));
            }
            map.insert(token.to_string(), values);
        }
        if map.is_empty() {
            return Err(AuxError::Corpus("embedding file holds no vectors".into()));
        }
        Ok(WordEmbeddings { dim, source: "external file".into(), map })
    }

    /// Fall back to the model's learned word-embedding rows. The result
    /// is not comparable across models and the source label says so.
    pub fn from_model(model: &Model, vocab: &Vocabulary) -> WordEmbeddings {
        let d = model.dims.d;
        let we = model.store.value(model.ids.emb.word);
        let mut map = HashMap::new();
        for id in crate::corpus::RESERVED.len()..model.dims.vocab {
            let token = vocab.token(id as u32);
            map.insert(token.to_string(), we.row(id).to_vec());
        }
        WordEmbeddings { dim: d, source: "learned word embeddings (non-comparable)".into(), map }
    }

    fn get(&self, token: &str) -> Option<&[f32]> {
        self.map.get(token).map(|v| v.as_slice())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

fn sentence_vectors<'a>(emb: &'a WordEmbeddings, tokens: &[String]) -> Vec<&'a [f32]> {
    tokens.iter().filter_map(|t| emb.get(t)).collect()
}

fn mean_vector(vecs: &[&[f32]], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; dim];
    for v in vecs {
        for (o, &x) in out.iter_mut().zip(v.iter()) {
            *o += x as f64;
        }
    }
    for o in &mut out {
        *o /= vecs.len() as f64;
    }
    out
}

/// Per-dimension value of largest magnitude; ties keep the positive one.
fn extrema_vector(vecs: &[&[f32]], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; dim];
    for j in 0..dim {
        let mut best = 0.0f64;
        for v in vecs {
            let x = v[j] as f64;
            if x.abs() > best.abs() || (x.abs() == best.abs() && x > best) {
                best = x;
            }
        }
        out[j] = best;
    }
    out
}

fn greedy_direction(from: &[&[f32]], to: &[&[f32]]) -> f64 {
    let mut sum = 0.0;
    for a in from {
        let av: Vec<f64> = a.iter().map(|&x| x as f64).collect();
        let mut best = f64::NEG_INFINITY;
        for b in to {
            let bv: Vec<f64> = b.iter().map(|&x| x as f64).collect();
            best = best.max(cosine(&av, &bv));
        }
        sum += best;
    }
    sum / from.len() as f64
}

pub struct EmbeddingScores {
    pub average: f64,
    pub greedy: f64,
    pub extrema: f64,
    /// Pairs where one side had no in-vocabulary tokens at all.
    pub skipped_pairs: usize,
}

/// Average = cosine of sentence mean vectors; Greedy = token-level best
/// matching averaged over both directions; Extrema = cosine of
/// per-dimension signed-max-magnitude vectors. Out-of-vocabulary tokens
/// are skipped; pairs with an all-OOV side are skipped and counted.
pub fn embedding_metrics(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    emb: &WordEmbeddings,
) -> Result<EmbeddingScores> {
    if candidates.len() != references.len() {
        return Err(AuxError::Contract(format!(
            "{} candidates vs {} references",
            candidates.len(),
            references.len()
        )));
    }
    let mut sums = (0.0f64, 0.0f64, 0.0f64);
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (cand, reference) in candidates.iter().zip(references) {
        let cv = sentence_vectors(emb, cand);
        let rv = sentence_vectors(emb, reference);
        if cv.is_empty() || rv.is_empty() {
            skipped += 1;
            continue;
        }
        sums.0 += cosine(&mean_vector(&cv, emb.dim), &mean_vector(&rv, emb.dim));
        sums.1 += (greedy_direction(&cv, &rv) + greedy_direction(&rv, &cv)) / 2.0;
        sums.2 += cosine(&extrema_vector(&cv, emb.dim), &extrema_vector(&rv, emb.dim));
        used += 1;
    }
    if used == 0 {
        return Err(AuxError::Contract("every pair was skipped as out-of-vocabulary".into()));
    }
    Ok(EmbeddingScores {
        average: sums.0 / used as f64,
        greedy: sums.1 / used as f64,
        extrema: sums.2 / used as f64,
        skipped_pairs: skipped,
    })
}

// ── Decoding-speed benchmark ────────────────────────────────────────────

pub struct SpeedReport {
    pub full_ms_per_token: f64,
    pub incremental_ms_per_token: f64,
    pub tokens_generated: usize,
    pub speedup: f64,
}

/// Wall-clock milliseconds per generated token for greedy decoding, with
/// full recomputation and with incremental caching, each the median over
/// `reps` timed repetitions after `warmup` untimed ones. Runs strictly
/// sequentially for stable numbers.
pub fn decoding_speed(
    model: &PlainModel,
    contexts: &[Vec<Vec<u32>>],
    max_len: usize,
    warmup: usize,
    reps: usize,
) -> Result<SpeedReport> {
    if reps == 0 {
        return Err(AuxError::Contract("need at least one timed repetition".into()));
    }
    let run_full = |m: &PlainModel| -> Result<usize> {
        let mut tokens = 0;
        for ctx in contexts {
            tokens += m.greedy_full(ctx, max_len)?.len();
        }
        Ok(tokens)
    };
    let run_inc = |m: &PlainModel| -> Result<usize> {
        let mut tokens = 0;
        for ctx in contexts {
            tokens += m.greedy_incremental(ctx, max_len)?.len();
        }
        Ok(tokens)
    };
    for _ in 0..warmup {
        run_full(model)?;
        run_inc(model)?;
    }
    let mut full_ms = Vec::with_capacity(reps);
    let mut inc_ms = Vec::with_capacity(reps);
    let mut tokens = 0usize;
    for _ in 0..reps {
        let t0 = Instant::now();
        tokens = run_full(model)?;
        full_ms.push(t0.elapsed().as_secs_f64() * 1e3);
        let t1 = Instant::now();
        let inc_tokens = run_inc(model)?;
        inc_ms.push(t1.elapsed().as_secs_f64() * 1e3);
        debug_assert_eq!(tokens, inc_tokens, "decoding paths disagree");
    }
    if tokens == 0 {
        return Err(AuxError::Contract(
            "benchmark generated zero tokens; per-token time is undefined".into(),
        ));
    }
    let median = |xs: &mut Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };
    let full = median(&mut full_ms) / tokens as f64;
    let inc = median(&mut inc_ms) / tokens as f64;
    Ok(SpeedReport {
        full_ms_per_token: full,
        incremental_ms_per_token: inc,
        tokens_generated: tokens,
        speedup: full / inc,
    })
}

// ── Report assembly ─────────────────────────────────────────────────────

pub struct MetricReport {
    pub ppl: f64,
    pub bleu4: f64,
    pub distinct1: f64,
    pub distinct2: f64,
    pub emb_average: Option<f64>,
    pub emb_greedy: Option<f64>,
    pub emb_extrema: Option<f64>,
    pub emb_source: Option<String>,
    pub skipped_embedding_pairs: usize,
    pub ms_per_token_full: f64,
    pub ms_per_token_incremental: f64,
    pub params_total: usize,
    pub params_gen: usize,
}

impl MetricReport {
    pub fn csv(&self) -> String {
        let opt = |v: &Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut s = String::from(
            "ppl,bleu4,distinct1,distinct2,average,greedy,extrema,\
             ms_per_token_full,ms_per_token_incremental,params_total,params_gen\n",
        );
        s.push_str(&format!(
            "{:.6},{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6},{},{}\n",
            self.ppl,
            self.bleu4,
            self.distinct1,
            self.distinct2,
            opt(&self.emb_average),
            opt(&self.emb_greedy),
            opt(&self.emb_extrema),
            self.ms_per_token_full,
            self.ms_per_token_incremental,
            self.params_total,
            self.params_gen
        ));
        s
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let mut row = |name: &str, val: String| {
            s.push_str(&format!("{name:<26} {val}\n"));
        };
        row("perplexity", format!("{:.4}", self.ppl));
        row("BLEU-4", format!("{:.4}", self.bleu4));
        row("distinct-1", format!("{:.4}", self.distinct1));
        row("distinct-2", format!("{:.4}", self.distinct2));
        match (&self.emb_average, &self.emb_greedy, &self.emb_extrema) {
            (Some(a), Some(g), Some(e)) => {
                row("embedding average", format!("{a:.4}"));
                row("embedding greedy", format!("{g:.4}"));
                row("embedding extrema", format!("{e:.4}"));
                if let Some(src) = &self.emb_source {
                    row("embedding source", src.clone());
                }
                if self.skipped_embedding_pairs > 0 {
                    row("skipped pairs (OOV)", self.skipped_embedding_pairs.to_string());
                }
            }
            _ => row("embedding metrics", "not computed (no embedding file)".into()),
        }
        row("ms/token (full)", format!("{:.4}", self.ms_per_token_full));
        row("ms/token (incremental)", format!("{:.4}", self.ms_per_token_incremental));
        row("parameters (training)", self.params_total.to_string());
        row("parameters (generation)", self.params_gen.to_string());
        s
    }
}
