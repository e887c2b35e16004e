//! Seeded synthetic corpora: deterministic generators for the bundled
//! sample data and for the self-contained training checks (memorization,
//! order recovery, cross-utterance copying). All text is plain lowercase
//! words so the JSONL writer and the tokenizer round-trip exactly.

use crate::corpus::{encode_instance, SeqLayout, TextInstance, Vocabulary};
use crate::error::Result;
use auxgen_tensor::SeedSplit;
use rand::Rng;
use std::path::Path;

fn words(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

// ── Question–answer corpus (memorization) ───────────────────────────────

pub const QA_COLORS: [&str; 8] =
    ["red", "blue", "green", "gold", "gray", "pink", "teal", "cyan"];
pub const QA_SHAPES: [&str; 8] =
    ["cube", "disc", "ring", "rod", "knot", "star", "cone", "tile"];

/// `n` single-turn lookup dialogues with a deterministic answer per
/// item: "what is thingNN" → "thingNN is {color} {shape}". Every item
/// maps to a distinct (color, shape) pair for n ≤ 64, so a model that
/// reproduces training responses has genuinely memorized the table.
pub fn qa_corpus(n: usize, seed: u64) -> Vec<TextInstance> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let item = format!("thing{i:02}");
        let color = QA_COLORS[i % QA_COLORS.len()];
        let shape = QA_SHAPES[(i / QA_COLORS.len()) % QA_SHAPES.len()];
        out.push(TextInstance {
            context: vec![words(&format!("what is {item}"))],
            response: words(&format!("{item} is {color} {shape}")),
        });
    }
    let mut rng = SeedSplit::new(seed).stream("synth.qa", &[]);
    // presentation order is shuffled; content stays the fixed table
    for i in (1..out.len()).rev() {
        out.swap(i, rng.gen_range(0..=i));
    }
    out
}

// ── Order corpus (order-recovery learnability) ──────────────────────────

pub const ORDER_MARKERS: [&str; 4] = ["first", "second", "third", "fourth"];
const ORDER_WORDS: usize = 24;

/// `n` instances whose contexts are exactly four utterances, each
/// carrying its position marker followed by three consecutively indexed
/// words ("second w07 w08 w09"). The marker reveals the utterance's
/// original slot and the ascending run reveals the original word order,
/// so both order-recovery tasks are learnable from content alone.
pub fn order_corpus(n: usize, seed: u64) -> Vec<TextInstance> {
    let mut rng = SeedSplit::new(seed).stream("synth.order", &[]);
    (0..n)
        .map(|_| {
            let context = ORDER_MARKERS
                .iter()
                .map(|marker| {
                    let start = rng.gen_range(0..ORDER_WORDS - 2);
                    words(&format!(
                        "{marker} w{:02} w{:02} w{:02}",
                        start,
                        start + 1,
                        start + 2
                    ))
                })
                .collect();
            TextInstance { context, response: words("done") }
        })
        .collect()
}

// ── Copy corpus (cross-utterance dependency) ────────────────────────────

const COPY_KEYS: usize = 120;

/// `n` dialogues whose response echoes, in turn order, the key announced
/// by each of four marker-tagged turns: ["first i saw keyAA", "second i
/// saw keyBB", "third i saw keyCC", "fourth i saw keyDD", "list every
/// key"] → "i saw keyAA then keyBB then keyCC then keyDD". With 120
/// keys, whole answers are far too rare to memorize; reproducing them
/// rewards a key-agnostic copy mechanism that tracks which utterance
/// said what.
pub fn copy_corpus(n: usize, seed: u64) -> Vec<TextInstance> {
    let mut rng = SeedSplit::new(seed).stream("synth.copy", &[]);
    (0..n)
        .map(|_| {
            let mut ks = [0usize; 4];
            for k in &mut ks {
                *k = rng.gen_range(0..COPY_KEYS);
            }
            let mut context: Vec<Vec<String>> = ORDER_MARKERS
                .iter()
                .zip(&ks)
                .map(|(m, k)| words(&format!("{m} i saw key{k:02}")))
                .collect();
            context.push(words("list every key"));
            TextInstance {
                context,
                response: words(&format!(
                    "i saw key{:02} then key{:02} then key{:02} then key{:02}",
                    ks[0], ks[1], ks[2], ks[3]
                )),
            }
        })
        .collect()
}

// ── Sample corpus (bundled end-to-end data) ─────────────────────────────

/// 200 small multi-turn conversations mixing lookup, copying, and
/// scripted small talk, shaped like raw corpus lines (a conversation's
/// turns, final turn = response). Meant to be written to JSONL and fed
/// through the full prepare pipeline.
pub fn sample_corpus(seed: u64) -> Vec<TextInstance> {
    let mut rng = SeedSplit::new(seed).stream("synth.sample", &[]);
    let openers = ["hello there", "good morning", "hi again", "hey friend"];
    let moods = ["fine", "busy", "sleepy", "cheerful", "hungry"];
    let topics = ["weather", "garden", "kitchen", "journey", "harbor"];
    let remarks = ["quite nice", "a bit odd", "rather loud", "very calm"];
    let mut out = Vec::with_capacity(200);
    for i in 0..200usize {
        let inst = match i % 4 {
            0 => {
                // lookup exchange
                let k = rng.gen_range(0..16);
                let color = QA_COLORS[k % QA_COLORS.len()];
                let shape = QA_SHAPES[(k / QA_COLORS.len()) % QA_SHAPES.len()];
                TextInstance {
                    context: vec![
                        words(openers[rng.gen_range(0..openers.len())]),
                        words(&format!("what is thing{k:02}")),
                    ],
                    response: words(&format!("thing{k:02} is {color} {shape}")),
                }
            }
            1 => {
                // copy-the-key exchange (own key/noise ranges: the bundled
                // JSONL snapshot depends on these exact draws)
                let key = rng.gen_range(0..40);
                let noise = rng.gen_range(0..20);
                TextInstance {
                    context: vec![
                        words(&format!("please remember key{key:02}")),
                        words(&format!("noise{noise:02} happened meanwhile")),
                        words("what was the word"),
                    ],
                    response: words(&format!("the word was key{key:02}")),
                }
            }
            2 => {
                // small talk
                let mood = moods[rng.gen_range(0..moods.len())];
                TextInstance {
                    context: vec![
                        words(openers[rng.gen_range(0..openers.len())]),
                        words("how are you today"),
                    ],
                    response: words(&format!("i am {mood} thanks")),
                }
            }
            _ => {
                // topical remark
                let topic = topics[rng.gen_range(0..topics.len())];
                let remark = remarks[rng.gen_range(0..remarks.len())];
                TextInstance {
                    context: vec![
                        words(&format!("tell me about the {topic}")),
                        words("let me think"),
                    ],
                    response: words(&format!("the {topic} seems {remark}")),
                }
            }
        };
        out.push(inst);
    }
    out
}

// ── Serialization and encoding helpers ──────────────────────────────────

/// Write instances as raw corpus lines: one JSON object per line with
/// the context turns and the response turn as strings.
pub fn write_jsonl(instances: &[TextInstance], path: &Path) -> Result<()> {
    let mut out = String::new();
    for inst in instances {
        let line = serde_json::json!({
            "context": inst.context.iter().map(|u| u.join(" ")).collect::<Vec<_>>(),
            "response": inst.response.join(" "),
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Encode tokenized instances against a vocabulary into model-ready
/// sequence layouts.
pub fn encode_set(
    instances: &[TextInstance],
    vocab: &Vocabulary,
    max_pos: usize,
    max_seg: usize,
) -> Result<Vec<SeqLayout>> {
    instances
        .iter()
        .map(|inst| SeqLayout::from_dialogue(&encode_instance(inst, vocab), max_pos, max_seg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{
        build_vocab, load_jsonl, tokenize_conversations, window_and_truncate, EOS,
    };

    #[test]
    fn generators_are_deterministic_per_seed() {
        assert_eq!(qa_corpus(64, 5), qa_corpus(64, 5));
        assert_eq!(order_corpus(50, 6), order_corpus(50, 6));
        assert_eq!(copy_corpus(50, 7), copy_corpus(50, 7));
        assert_eq!(sample_corpus(1), sample_corpus(1));
        assert_ne!(order_corpus(50, 6), order_corpus(50, 8));
    }

    #[test]
    fn qa_corpus_is_a_small_vocabulary_lookup_table() {
        let insts = qa_corpus(64, 5);
        assert_eq!(insts.len(), 64);
        let vocab = build_vocab(&insts, 10_000).unwrap();
        assert!(vocab.len() <= 200, "vocab {} exceeds the cap", vocab.len());
        for inst in &insts {
            assert_eq!(inst.context.len(), 1);
            assert_eq!(inst.context[0][..2].join(" "), "what is");
            // the response names the queried item
            assert_eq!(inst.response[0], inst.context[0][2]);
        }
        // distinct items get distinct answers
        let mut answers: Vec<String> = insts.iter().map(|i| i.response.join(" ")).collect();
        answers.sort();
        answers.dedup();
        assert_eq!(answers.len(), 64);
    }

    #[test]
    fn order_corpus_marks_slots_and_ascending_runs() {
        let insts = order_corpus(100, 3);
        assert_eq!(insts.len(), 100);
        for inst in &insts {
            assert_eq!(inst.context.len(), 4);
            for (k, utt) in inst.context.iter().enumerate() {
                assert_eq!(utt.len(), 4);
                assert_eq!(utt[0], ORDER_MARKERS[k]);
                let nums: Vec<usize> =
                    utt[1..].iter().map(|w| w[1..].parse().unwrap()).collect();
                assert_eq!(nums[1], nums[0] + 1);
                assert_eq!(nums[2], nums[1] + 1);
            }
        }
    }

    #[test]
    fn copy_corpus_echoes_every_key_in_turn_order() {
        let insts = copy_corpus(200, 11);
        let mut seen = std::collections::HashSet::new();
        for inst in &insts {
            assert_eq!(inst.context.len(), 5);
            assert_eq!(inst.response.len(), 9);
            for (slot, utt) in inst.context[..4].iter().enumerate() {
                assert_eq!(utt[0], ORDER_MARKERS[slot]);
                let key = utt.last().unwrap();
                assert!(key.starts_with("key"));
                // response shape: "i saw K0 then K1 then K2 then K3"
                assert_eq!(&inst.response[2 + 2 * slot], key);
                seen.insert(key.clone());
            }
        }
        // 800 key draws over 120 keys: the answer table is far too wide
        // to memorize answer-by-answer
        assert!(seen.len() > 100, "only {} distinct keys drawn", seen.len());
    }

    #[test]
    fn jsonl_round_trip_reproduces_the_token_streams() {
        let insts = copy_corpus(20, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        write_jsonl(&insts, &path).unwrap();
        let (raw, report) = load_jsonl(&path).unwrap();
        assert_eq!(report.lines, 20);
        assert!(report.malformed.is_empty());
        let convs = tokenize_conversations(&raw);
        // each line is one conversation: context turns plus the response
        for (inst, conv) in insts.iter().zip(&convs) {
            assert_eq!(conv.turns.len(), inst.context.len() + 1);
            for (a, b) in inst.context.iter().zip(&conv.turns) {
                assert_eq!(a, b);
            }
            assert_eq!(conv.turns.last().unwrap(), &inst.response);
        }
        // windowing the 6-turn conversations yields 5 instances each
        let (windowed, _) = window_and_truncate(&convs, 11, 25).unwrap();
        assert_eq!(windowed.len(), 100);
    }

    #[test]
    fn sample_corpus_feeds_the_full_pipeline() {
        let insts = sample_corpus(1);
        assert_eq!(insts.len(), 200);
        let vocab = build_vocab(&insts, 10_000).unwrap();
        assert!(vocab.len() < 300, "sample vocab should stay small");
        let set = encode_set(&insts, &vocab, 300, 12).unwrap();
        assert_eq!(set.len(), 200);
        for seq in &set {
            assert_eq!(*seq.targets.last().unwrap(), EOS);
            assert!(seq.m >= 2);
        }
    }
}
