//! Corpus ingestion: JSONL loading, tokenization, vocabulary, the
//! window/truncate preprocessing that turns conversations into
//! (context, response) instances, and deterministic batching.

use crate::error::{AuxError, Result};
use auxgen_tensor::SeedSplit;
use serde::Deserialize;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

// ── Reserved vocabulary ids ─────────────────────────────────────────────

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const BOS: u32 = 2;
pub const EOS: u32 = 3;
pub const MASK: u32 = 4;
pub const RESERVED: [&str; 5] = ["[PAD]", "[UNK]", "[BOS]", "[EOS]", "[MASK]"];

/// Default preprocessing caps: a conversation window of 11 turns (so at
/// most 10 context utterances per instance), 25 tokens per utterance,
/// and 300 = 11·25 + 25 total token positions.
pub const DEFAULT_WINDOW: usize = 11;
pub const DEFAULT_MAX_UTT_LEN: usize = 25;
pub const DEFAULT_MAX_POS: usize = 300;

/// Segment ids: 0 is reserved for padding, 1..window−1 name context
/// utterances, and one more names the response region.
pub fn max_segments(window: usize) -> usize {
    window + 1
}

// ── Loading ─────────────────────────────────────────────────────────────

/// One JSONL line: a conversation given as the turns before the last one
/// ("context"), the last turn ("response"), and optional persona lines
/// that extend the context but are never themselves responses.
#[derive(Debug, Clone, Deserialize)]
struct RawLine {
    context: Vec<String>,
    response: String,
    #[serde(default)]
    persona: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RawConversation {
    pub persona: Vec<String>,
    /// All turns in order; the loaded "response" is the final turn.
    pub turns: Vec<String>,
}

#[derive(Debug, Default)]
pub struct LoadReport {
    pub lines: usize,
    pub malformed: Vec<(usize, String)>,
    pub empty_file: bool,
}

impl LoadReport {
    pub fn summary(&self) -> String {
        format!("{} lines, {} malformed", self.lines, self.malformed.len())
    }
}

/// Read a JSONL corpus, keeping line order. Malformed lines are counted
/// with their line number; more than 1% malformed aborts the load.
pub fn load_jsonl(path: &Path) -> Result<(Vec<RawConversation>, LoadReport)> {
    let file = std::fs::File::open(path)
        .map_err(|e| AuxError::Corpus(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut report = LoadReport::default();
    for (ix, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match serde_json::from_str::<RawLine>(&line) {
            Ok(raw) => {
                let mut turns = raw.context;
                turns.push(raw.response);
                out.push(RawConversation { persona: raw.persona, turns });
            }
            Err(e) => report.malformed.push((ix + 1, e.to_string())),
        }
    }
    report.empty_file = report.lines == 0;
    if report.lines > 0 && report.malformed.len() * 100 > report.lines {
        return Err(AuxError::Corpus(format!(
            "{} of {} lines malformed (>1%), first: line {}: {}",
            report.malformed.len(),
            report.lines,
            report.malformed[0].0,
            report.malformed[0].1
        )));
    }
    Ok((out, report))
}

// ── Tokenization ────────────────────────────────────────────────────────

/// Lowercase, split on whitespace, and detach punctuation into its own
/// tokens. Apostrophes stay inside words ("don't" is one token).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for ch in text.chars().flat_map(|c| c.to_lowercase()) {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
        } else if ch.is_alphanumeric() || ch == '\'' {
            cur.push(ch);
        } else {
            if !cur.is_empty() {
                tokens.push(std::mem::take(&mut cur));
            }
            tokens.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

#[derive(Debug, Clone)]
pub struct Conversation {
    pub persona: Vec<Vec<String>>,
    pub turns: Vec<Vec<String>>,
}

pub fn tokenize_conversations(raw: &[RawConversation]) -> Vec<Conversation> {
    raw.iter()
        .map(|c| Conversation {
            persona: c.persona.iter().map(|s| tokenize(s)).collect(),
            turns: c.turns.iter().map(|s| tokenize(s)).collect(),
        })
        .collect()
}

// ── Windowing ───────────────────────────────────────────────────────────

/// A (context, response) training instance, still as token strings.
#[derive(Debug, Clone, PartialEq)]
pub struct TextInstance {
    pub context: Vec<Vec<String>>,
    pub response: Vec<String>,
}

#[derive(Debug, Default, PartialEq)]
pub struct WindowReport {
    pub single_turn_dropped: usize,
    pub empty_response_dropped: usize,
}

/// Every turn from the second onward becomes a response, preceded by up
/// to window−1 turns of context (persona lines are prepended to the
/// pool of candidate context turns but never become responses). Each
/// utterance keeps only its first max_utt_len tokens. Empty turns are
/// skipped as contexts and dropped as responses; conversations with
/// fewer than two non-empty turns are dropped with a count.
pub fn window_and_truncate(
    convs: &[Conversation],
    window: usize,
    max_utt_len: usize,
) -> Result<(Vec<TextInstance>, WindowReport)> {
    if window < 2 {
        return Err(AuxError::Contract(format!("window {window} < 2")));
    }
    let trunc = |u: &Vec<String>| -> Vec<String> {
        u.iter().take(max_utt_len).cloned().collect()
    };
    let mut out = Vec::new();
    let mut report = WindowReport::default();
    for conv in convs {
        let turns: Vec<&Vec<String>> = conv.turns.iter().filter(|t| !t.is_empty()).collect();
        report.empty_response_dropped += conv.turns.len() - turns.len();
        if turns.len() < 2 {
            report.single_turn_dropped += 1;
            continue;
        }
        let persona: Vec<&Vec<String>> = conv.persona.iter().filter(|t| !t.is_empty()).collect();
        for i in 1..turns.len() {
            let pool: Vec<&Vec<String>> =
                persona.iter().chain(turns[..i].iter()).copied().collect();
            let keep = pool.len().min(window - 1);
            let context = pool[pool.len() - keep..].iter().map(|u| trunc(u)).collect();
            out.push(TextInstance { context, response: trunc(turns[i]) });
        }
    }
    Ok((out, report))
}

// ── Vocabulary ──────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn with_reserved() -> Self {
        let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
        for t in RESERVED {
            v.push(t.to_string());
        }
        v
    }

    fn push(&mut self, token: String) {
        self.index.insert(token.clone(), self.tokens.len() as u32);
        self.tokens.push(token);
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token → id, unknown tokens mapping to [UNK].
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn encode_tokens(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }

    /// One token per line, id = line number − 1; the five reserved
    /// tokens head the file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        for t in &self.tokens {
            writeln!(f, "{t}")?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| AuxError::Corpus(format!("cannot open {}: {e}", path.display())))?;
        let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
        for line in BufReader::new(file).lines() {
            v.push(line?);
        }
        for (i, t) in RESERVED.iter().enumerate() {
            if v.tokens.get(i).map(String::as_str) != Some(*t) {
                return Err(AuxError::Corpus(format!(
                    "vocabulary file {} lacks reserved header {t:?} at line {}",
                    path.display(),
                    i + 1
                )));
            }
        }
        Ok(v)
    }
}

/// Frequency-ranked vocabulary over the training instances, ties broken
/// lexicographically, capped at `cap` entries including the reserved ids.
pub fn build_vocab(instances: &[TextInstance], cap: usize) -> Result<Vocabulary> {
    if instances.is_empty() {
        return Err(AuxError::Corpus("empty corpus: no instances to build a vocabulary".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for inst in instances {
        for utt in inst.context.iter().chain(std::iter::once(&inst.response)) {
            for tok in utt {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut vocab = Vocabulary::with_reserved();
    for (tok, _) in ranked.into_iter().take(cap.saturating_sub(RESERVED.len())) {
        vocab.push(tok.to_string());
    }
    Ok(vocab)
}

// ── Encoded instances and sequence layout ───────────────────────────────

/// Encoded (context, response): context utterances as id lists, response
/// ids terminated by [EOS].
#[derive(Debug, Clone, PartialEq)]
pub struct Dialogue {
    pub context: Vec<Vec<u32>>,
    pub response: Vec<u32>,
}

pub fn encode_instance(inst: &TextInstance, vocab: &Vocabulary) -> Dialogue {
    let mut response = vocab.encode_tokens(&inst.response);
    response.push(EOS);
    Dialogue { context: inst.context.iter().map(|u| vocab.encode_tokens(u)).collect(), response }
}

/// One instance unrolled into the flat sequence the model consumes:
///
///   tokens    = ctx₁ … ctxₙ ⊕ [BOS] ⊕ r₁ … r_{k−1}
///   targets   = r₁ … r_{k−1} [EOS]           (k teacher-forced steps)
///   segments  = utterance index 1..n, response region n+1
///
/// so `m` context tokens are followed by t = k response positions whose
/// logits each predict the matching target.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqLayout {
    pub tokens: Vec<u32>,
    pub positions: Vec<usize>,
    pub segments: Vec<usize>,
    /// Utterance index per token (1-based; response region = n+1).
    pub utterance: Vec<usize>,
    /// Number of context tokens.
    pub m: usize,
    pub targets: Vec<u32>,
    /// (start, len) of each context utterance within `tokens`.
    pub ctx_spans: Vec<(usize, usize)>,
    /// The context utterances as given (for corruption tasks).
    pub ctx_utterances: Vec<Vec<u32>>,
}

impl SeqLayout {
    pub fn from_dialogue(d: &Dialogue, max_pos: usize, max_seg: usize) -> Result<SeqLayout> {
        let n = d.context.len();
        if n == 0 {
            return Err(AuxError::Contract("instance with no context utterances".into()));
        }
        if n + 1 >= max_seg {
            return Err(AuxError::Contract(format!(
                "{n} context utterances need segment id {} ≥ cap {max_seg}",
                n + 1
            )));
        }
        if d.response.is_empty() {
            return Err(AuxError::Contract("instance with empty response".into()));
        }
        let k = d.response.len();
        let mut tokens = Vec::new();
        let mut segments = Vec::new();
        let mut utterance = Vec::new();
        let mut ctx_spans = Vec::new();
        for (u_ix, utt) in d.context.iter().enumerate() {
            ctx_spans.push((tokens.len(), utt.len()));
            for &id in utt {
                tokens.push(id);
                segments.push(u_ix + 1);
                utterance.push(u_ix + 1);
            }
        }
        let m = tokens.len();
        tokens.push(BOS);
        tokens.extend_from_slice(&d.response[..k - 1]);
        for _ in 0..k {
            segments.push(n + 1);
            utterance.push(n + 1);
        }
        let len = tokens.len();
        if len > max_pos {
            return Err(AuxError::Contract(format!(
                "sequence length {len} exceeds position cap {max_pos}"
            )));
        }
        Ok(SeqLayout {
            tokens,
            positions: (0..len).collect(),
            segments,
            utterance,
            m,
            targets: d.response.clone(),
            ctx_spans,
            ctx_utterances: d.context.clone(),
        })
    }

    /// Response-region length (number of teacher-forced steps).
    pub fn t(&self) -> usize {
        self.targets.len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

// ── Batching ────────────────────────────────────────────────────────────

/// A mini-batch of variable-length instances. Padded rectangular views
/// are materialized on demand; the unpadded rows are what the model
/// consumes, so padding never reaches any loss.
#[derive(Debug, Clone)]
pub struct Batch {
    pub rows: Vec<SeqLayout>,
    pub width: usize,
}

impl Batch {
    pub fn new(rows: Vec<SeqLayout>) -> Self {
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        Batch { rows, width }
    }

    pub fn padded_tokens(&self) -> Vec<Vec<u32>> {
        self.pad_with(|r| r.tokens.clone(), PAD)
    }

    pub fn padded_positions(&self) -> Vec<Vec<usize>> {
        self.pad_with(|r| r.positions.clone(), 0)
    }

    pub fn padded_segments(&self) -> Vec<Vec<usize>> {
        self.pad_with(|r| r.segments.clone(), 0)
    }

    pub fn padded_utterances(&self) -> Vec<Vec<usize>> {
        self.pad_with(|r| r.utterance.clone(), 0)
    }

    pub fn pad_mask(&self) -> Vec<Vec<bool>> {
        self.rows
            .iter()
            .map(|r| (0..self.width).map(|i| i >= r.len()).collect())
            .collect()
    }

    pub fn boundaries(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.m).collect()
    }

    fn pad_with<T: Clone>(&self, f: impl Fn(&SeqLayout) -> Vec<T>, fill: T) -> Vec<Vec<T>> {
        self.rows
            .iter()
            .map(|r| {
                let mut v = f(r);
                v.resize(self.width, fill.clone());
                v
            })
            .collect()
    }
}

/// Deterministically shuffle instances for an epoch and cut into batches.
/// The same (seed, epoch) always yields the same batch sequence.
pub fn make_batches(
    instances: &[SeqLayout],
    batch_size: usize,
    seeds: &SeedSplit,
    epoch: usize,
) -> Result<Vec<Batch>> {
    if instances.is_empty() {
        return Err(AuxError::Corpus("empty corpus: nothing to batch".into()));
    }
    if batch_size == 0 {
        return Err(AuxError::Contract("batch_size 0".into()));
    }
    let mut rng = seeds.stream("batch_shuffle", &[epoch as u64]);
    let order = auxgen_tensor::rng::permutation(&mut rng, instances.len());
    let mut batches = Vec::new();
    for chunk in order.chunks(batch_size) {
        batches.push(Batch::new(chunk.iter().map(|&i| instances[i].clone()).collect()));
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(turns: &[&str]) -> Conversation {
        Conversation {
            persona: vec![],
            turns: turns.iter().map(|t| tokenize(t)).collect(),
        }
    }

    #[test]
    fn tokenize_lowercases_and_detaches_punctuation() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", ",", "world", "!"]);
        assert_eq!(tokenize("don't stop"), vec!["don't", "stop"]);
        assert_eq!(tokenize("  spaced   out  "), vec!["spaced", "out"]);
    }

    #[test]
    fn load_jsonl_counts_and_keeps_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            r#"{"context":["hi"],"response":"hello"}
{"context":["a","b"],"response":"c"}
"#,
        )
        .unwrap();
        let (convs, report) = load_jsonl(&path).unwrap();
        assert_eq!(convs.len(), 2);
        assert_eq!(convs[0].turns, vec!["hi", "hello"]);
        assert_eq!(convs[1].turns.len(), 3);
        assert!(report.malformed.is_empty());
    }

    #[test]
    fn load_jsonl_empty_file_warns_not_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        let (convs, report) = load_jsonl(&path).unwrap();
        assert!(convs.is_empty());
        assert!(report.empty_file);
    }

    #[test]
    fn load_jsonl_tolerates_one_bad_line_in_two_hundred() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut body = String::new();
        for i in 0..199 {
            body.push_str(&format!("{{\"context\":[\"q {i}\"],\"response\":\"a {i}\"}}\n"));
        }
        body.push_str("{\"context\":[\"missing response\"]}\n");
        std::fs::write(&path, body).unwrap();
        let (convs, report) = load_jsonl(&path).unwrap();
        assert_eq!(convs.len(), 199);
        assert_eq!(report.malformed.len(), 1);
        assert_eq!(report.malformed[0].0, 200);
    }

    #[test]
    fn load_jsonl_aborts_over_one_percent_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"context\":[\"q\"],\"response\":\"a\"}\nnot json\n").unwrap();
        assert!(load_jsonl(&path).is_err());
    }

    #[test]
    fn windowing_three_turns_gives_two_instances() {
        let convs = vec![conv(&["a", "b", "c"])];
        let (inst, _) = window_and_truncate(&convs, 11, 25).unwrap();
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[0].context.len(), 1);
        assert_eq!(inst[0].response, vec!["b"]);
        assert_eq!(inst[1].context.len(), 2);
        assert_eq!(inst[1].response, vec!["c"]);
    }

    #[test]
    fn windowing_caps_context_at_window_minus_one() {
        let turns: Vec<String> = (0..13).map(|i| format!("turn{i}")).collect();
        let refs: Vec<&str> = turns.iter().map(String::as_str).collect();
        let convs = vec![conv(&refs)];
        let (inst, _) = window_and_truncate(&convs, 11, 25).unwrap();
        assert_eq!(inst.len(), 12); // responses 2..13
        assert!(inst.iter().all(|i| i.context.len() <= 10));
        let last = inst.last().unwrap();
        assert_eq!(last.context.len(), 10);
        assert_eq!(last.context[0][0], "turn2"); // turns 2..11 precede turn 12
    }

    #[test]
    fn windowing_truncates_long_utterances_to_first_tokens() {
        let long: Vec<String> = (0..30).map(|i| format!("w{i}")).collect();
        let convs = vec![Conversation {
            persona: vec![],
            turns: vec![long.clone(), long.clone()],
        }];
        let (inst, _) = window_and_truncate(&convs, 11, 25).unwrap();
        assert_eq!(inst[0].context[0].len(), 25);
        assert_eq!(inst[0].context[0][24], "w24");
        assert_eq!(inst[0].response.len(), 25);
    }

    #[test]
    fn windowing_drops_single_turn_conversations_with_count() {
        let convs = vec![conv(&["only"]), conv(&["a", "b"])];
        let (inst, report) = window_and_truncate(&convs, 11, 25).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(report.single_turn_dropped, 1);
    }

    #[test]
    fn windowing_instance_count_is_turns_minus_one_summed() {
        let convs = vec![conv(&["a", "b", "c", "d"]), conv(&["x", "y"]), conv(&["solo"])];
        let (inst, _) = window_and_truncate(&convs, 11, 25).unwrap();
        // Σ max(0, L−1) over conversations with L ≥ 2: 3 + 1
        assert_eq!(inst.len(), 4);
    }

    #[test]
    fn persona_extends_context_but_is_never_a_response() {
        let convs = vec![Conversation {
            persona: vec![tokenize("i like tea")],
            turns: vec![tokenize("hi"), tokenize("hello")],
        }];
        let (inst, _) = window_and_truncate(&convs, 11, 25).unwrap();
        assert_eq!(inst.len(), 1); // persona adds no instances
        assert_eq!(inst[0].context.len(), 2); // persona + first turn
        assert_eq!(inst[0].context[0], tokenize("i like tea"));
        assert_eq!(inst[0].response, vec!["hello"]);
    }

    #[test]
    fn vocab_ranks_by_frequency_then_lexicographic() {
        let instances = vec![TextInstance {
            context: vec![tokenize("b b a a c")],
            response: tokenize("b"),
        }];
        let v = build_vocab(&instances, 100).unwrap();
        assert_eq!(v.id("b"), 5); // freq 3
        assert_eq!(v.id("a"), 6); // freq 2
        assert_eq!(v.id("c"), 7); // freq 1
    }

    #[test]
    fn vocab_cap_and_unknowns() {
        let instances = vec![TextInstance {
            context: vec![tokenize("a b c d e f")],
            response: tokenize("a"),
        }];
        let v = build_vocab(&instances, 7).unwrap(); // 5 reserved + 2
        assert_eq!(v.len(), 7);
        assert_eq!(v.id("a"), 5);
        assert_eq!(v.id("f"), UNK);
    }

    #[test]
    fn vocab_empty_corpus_aborts() {
        assert!(build_vocab(&[], 100).is_err());
    }

    #[test]
    fn vocab_round_trips_through_file() {
        let instances = vec![TextInstance {
            context: vec![tokenize("hello , world !")],
            response: tokenize("hi"),
        }];
        let v = build_vocab(&instances, 100).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(loaded.len(), v.len());
        for id in 0..v.len() as u32 {
            assert_eq!(loaded.token(id), v.token(id));
        }
        // header check
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("[PAD]\n[UNK]\n[BOS]\n[EOS]\n[MASK]\n"));
    }

    #[test]
    fn decode_inverts_encode_for_normalized_text() {
        let text = "the cat sat on the mat !";
        let instances = vec![TextInstance { context: vec![tokenize(text)], response: tokenize(text) }];
        let v = build_vocab(&instances, 100).unwrap();
        let ids = v.encode_tokens(&tokenize(text));
        assert_eq!(v.decode(&ids), text);
    }

    #[test]
    fn layout_places_bos_targets_and_segments() {
        let d = Dialogue {
            context: vec![vec![10, 11], vec![12]],
            response: vec![20, 21, EOS],
        };
        let s = SeqLayout::from_dialogue(&d, 300, 12).unwrap();
        assert_eq!(s.m, 3);
        assert_eq!(s.tokens, vec![10, 11, 12, BOS, 20, 21]);
        assert_eq!(s.targets, vec![20, 21, EOS]);
        assert_eq!(s.t(), 3);
        assert_eq!(s.segments, vec![1, 1, 2, 3, 3, 3]);
        assert_eq!(s.positions, (0..6).collect::<Vec<_>>());
        assert_eq!(s.ctx_spans, vec![(0, 2), (2, 1)]);
    }

    #[test]
    fn layout_rejects_position_overflow() {
        let d = Dialogue {
            context: vec![(0..300).map(|_| 7u32).collect()],
            response: vec![EOS],
        };
        assert!(SeqLayout::from_dialogue(&d, 300, 12).is_err());
    }

    #[test]
    fn batches_are_deterministic_per_seed_and_epoch() {
        let d = Dialogue { context: vec![vec![10]], response: vec![20, EOS] };
        let instances: Vec<SeqLayout> = (0..10)
            .map(|i| {
                let mut d = d.clone();
                d.context[0][0] = 10 + i;
                SeqLayout::from_dialogue(&d, 300, 12).unwrap()
            })
            .collect();
        let seeds = SeedSplit::new(42);
        let a = make_batches(&instances, 3, &seeds, 0).unwrap();
        let b = make_batches(&instances, 3, &seeds, 0).unwrap();
        let c = make_batches(&instances, 3, &seeds, 1).unwrap();
        let flat = |bs: &[Batch]| -> Vec<u32> {
            bs.iter().flat_map(|b| b.rows.iter().map(|r| r.tokens[0])).collect()
        };
        assert_eq!(flat(&a), flat(&b));
        assert_ne!(flat(&a), flat(&c), "different epochs should shuffle differently");
        assert_eq!(a.iter().map(|b| b.rows.len()).sum::<usize>(), 10);
    }

    #[test]
    fn padded_views_use_pad_and_mark_padding() {
        let mk = |toks: Vec<u32>| {
            SeqLayout::from_dialogue(
                &Dialogue { context: vec![toks], response: vec![20, EOS] },
                300,
                12,
            )
            .unwrap()
        };
        let b = Batch::new(vec![mk(vec![10, 11, 12]), mk(vec![10])]);
        assert_eq!(b.width, 5);
        let toks = b.padded_tokens();
        assert_eq!(toks[1], vec![10, BOS, 20, PAD, PAD]);
        let mask = b.pad_mask();
        assert_eq!(mask[1], vec![false, false, false, true, true]);
        assert_eq!(b.boundaries(), vec![3, 1]);
    }
}
