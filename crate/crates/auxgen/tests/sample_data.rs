//! The bundled sample corpus is generated, not hand-written: this test
//! pins data/sample.jsonl to its generator byte for byte. Regenerate
//! with REGEN_SAMPLE=1 after changing the generator.

use auxgen::corpus::{
    build_vocab, load_jsonl, tokenize_conversations, window_and_truncate,
};
use auxgen::synth;
use std::path::Path;

const SAMPLE_SEED: u64 = 41;

fn bundled_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/sample.jsonl")
}

#[test]
fn bundled_sample_corpus_matches_its_generator() {
    let insts = synth::sample_corpus(SAMPLE_SEED);
    let dir = tempfile::tempdir().unwrap();
    let tmp = dir.path().join("sample.jsonl");
    synth::write_jsonl(&insts, &tmp).unwrap();
    let expected = std::fs::read(&tmp).unwrap();
    let bundled = bundled_path();
    if std::env::var("REGEN_SAMPLE").is_ok() {
        std::fs::write(&bundled, &expected).unwrap();
    }
    let actual = std::fs::read(&bundled)
        .expect("data/sample.jsonl should be bundled with the repository");
    assert_eq!(actual, expected, "bundled sample corpus drifted from its generator");
}

#[test]
fn bundled_sample_corpus_survives_the_prepare_pipeline() {
    let (raw, report) = load_jsonl(&bundled_path()).unwrap();
    assert_eq!(report.lines, 200);
    assert!(report.malformed.is_empty());
    let convs = tokenize_conversations(&raw);
    let (instances, wreport) = window_and_truncate(&convs, 11, 25).unwrap();
    assert!(instances.len() >= 200, "windowing should not lose whole lines");
    assert_eq!(wreport.single_turn_dropped, 0);
    let vocab = build_vocab(&instances, 20_000).unwrap();
    assert!(vocab.len() > 50 && vocab.len() < 300, "vocab size {}", vocab.len());
}
