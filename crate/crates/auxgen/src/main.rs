//! Command-line entry points binding the corpus pipeline, the trainer,
//! and the metric suite. Every run writes an effective-config snapshot
//! (plus the build version) next to its outputs. Exit codes: 0 success,
//! 2 usage or configuration problem, 1 runtime failure.

use auxgen::config::RunConfig;
use auxgen::corpus::{
    build_vocab, load_jsonl, tokenize_conversations, window_and_truncate, SeqLayout,
    TextInstance, Vocabulary,
};
use auxgen::error::{AuxError, Result};
use auxgen::eval::{self, MetricReport, WordEmbeddings};
use auxgen::infer::PlainModel;
use auxgen::model::Model;
use auxgen::synth;
use auxgen::trainer::{self, Toggles};
use auxgen_tensor::checkpoint::load_params;
use auxgen_tensor::rng::permutation;
use auxgen_tensor::{SeedSplit, Tensor};
use clap::{Args, Parser, Subcommand};
use std::io::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "auxgen",
    version,
    about = "Dialogue generation with auxiliary context-recovery training"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus per-key overrides; every flag maps onto the same
/// `key = value` space as the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Path to a key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Raw JSONL corpus ({"context": [...], "response": "..."} lines)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Held-out corpus; without it a val_fraction split is taken
    #[arg(long)]
    val_data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for tensor kernels (0 = library default)
    #[arg(long)]
    device_threads: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    encoder_layers: Option<usize>,
    /// Comma-separated auxiliary tasks to disable (wor,uor,mwr,mur or all)
    #[arg(long)]
    leave_out: Option<String>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    t1: Option<usize>,
    #[arg(long)]
    t2: Option<usize>,
    #[arg(long)]
    n_per_epoch: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    mask_rate: Option<f64>,
    #[arg(long)]
    vocab_cap: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    max_utt_len: Option<usize>,
    #[arg(long)]
    max_pos: Option<usize>,
    /// Greedy decoding length cap
    #[arg(long)]
    max_len: Option<usize>,
    /// Word-embedding file for the embedding metrics
    #[arg(long)]
    embeddings: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let mut set = |key: &str, value: Option<String>| -> Result<()> {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
            Ok(())
        };
        let p = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
        set("data", p(&self.data))?;
        set("val_data", p(&self.val_data))?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("device_threads", self.device_threads.map(|v| v.to_string()))?;
        set("d_model", self.d_model.map(|v| v.to_string()))?;
        set("heads", self.heads.map(|v| v.to_string()))?;
        set("encoder_layers", self.encoder_layers.map(|v| v.to_string()))?;
        set("leave_out", self.leave_out.clone())?;
        set("alpha0", self.alpha0.map(|v| v.to_string()))?;
        set("t1", self.t1.map(|v| v.to_string()))?;
        set("t2", self.t2.map(|v| v.to_string()))?;
        set("n_per_epoch", self.n_per_epoch.map(|v| v.to_string()))?;
        set("lr", self.lr.map(|v| v.to_string()))?;
        set("batch_size", self.batch_size.map(|v| v.to_string()))?;
        set("patience", self.patience.map(|v| v.to_string()))?;
        set("mask_rate", self.mask_rate.map(|v| v.to_string()))?;
        set("vocab_cap", self.vocab_cap.map(|v| v.to_string()))?;
        set("window", self.window.map(|v| v.to_string()))?;
        set("max_utt_len", self.max_utt_len.map(|v| v.to_string()))?;
        set("max_pos", self.max_pos.map(|v| v.to_string()))?;
        set("max_len", self.max_len.map(|v| v.to_string()))?;
        set("embeddings", p(&self.embeddings))?;
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a raw corpus, build the vocabulary and windowed instances
    Prepare {
        #[command(flatten)]
        ov: Overrides,
        /// Output directory for vocab.txt and instances.jsonl
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model, writing checkpoints, the step log, and the vocab
    Train {
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        out: PathBuf,
        /// Resume from an earlier run's last.bin
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Greedy-decode responses for a corpus as JSONL predictions
    Generate {
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Vocabulary file (default: vocab.txt beside the checkpoint)
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Output directory (default: stream to stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the metric report for a checkpoint on a corpus
    Evaluate {
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Score embedding metrics with the model's learned word
        /// embeddings (reported as non-comparable) instead of a file
        #[arg(long)]
        model_embeddings: bool,
    },
    /// Train task-ablation variants and tabulate their metrics
    Ablate {
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        out: PathBuf,
        /// Leave-out sets, semicolon-separated (each a comma list);
        /// default: each task alone, then all four together
        #[arg(long)]
        sets: Option<String>,
    },
    /// Train across encoder depths, with and without auxiliary tasks
    DepthSweep {
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        out: PathBuf,
        /// Encoder depths to train, comma-separated
        #[arg(long, default_value = "1,2,3")]
        depths: String,
        /// Train only the configured toggles instead of both curves
        #[arg(long)]
        single_curve: bool,
    },
    /// Time full-recompute vs incrementally cached greedy decoding
    Bench {
        #[command(flatten)]
        ov: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Output directory (default: print only)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
    },
}

// ── Shared plumbing ─────────────────────────────────────────────────────

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(AuxError::Config(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

fn effective_config(ov: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &ov.config {
        Some(path) => {
            require_file(path, "config file")?;
            RunConfig::from_file(path)?
        }
        None => RunConfig::default(),
    };
    ov.apply(&mut cfg)?;
    if cfg.device_threads > 0 {
        // a failed build means a pool already exists; that is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.device_threads)
            .build_global();
    }
    Ok(cfg)
}

struct LoadedCorpus {
    instances: Vec<TextInstance>,
    lines: usize,
    malformed: usize,
    dropped_conversations: usize,
}

fn load_corpus(cfg: &RunConfig, path: &Path) -> Result<LoadedCorpus> {
    require_file(path, "corpus")?;
    let (raw, report) = load_jsonl(path)?;
    let convs = tokenize_conversations(&raw);
    let (instances, wreport) = window_and_truncate(&convs, cfg.window, cfg.max_utt_len)?;
    Ok(LoadedCorpus {
        instances,
        lines: report.lines,
        malformed: report.malformed.len(),
        dropped_conversations: wreport.single_turn_dropped,
    })
}

fn training_data(cfg: &RunConfig) -> Result<(Vec<TextInstance>, Vec<TextInstance>)> {
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| AuxError::Config("no corpus given (set data= or --data)".into()))?;
    let train = load_corpus(cfg, data)?.instances;
    if let Some(val_path) = &cfg.val_data {
        let val = load_corpus(cfg, val_path)?.instances;
        return Ok((train, val));
    }
    // deterministic held-out split from the tail of a seeded shuffle
    if !(0.0..1.0).contains(&cfg.val_fraction) || cfg.val_fraction == 0.0 {
        return Err(AuxError::Config(format!(
            "val_fraction {} must be in (0, 1) when no val_data is given",
            cfg.val_fraction
        )));
    }
    let n = train.len();
    if n < 2 {
        return Err(AuxError::Config(format!("{n} instances cannot be split for validation")));
    }
    let mut rng = SeedSplit::new(cfg.seed).stream("val_split", &[]);
    let order = permutation(&mut rng, n);
    let val_n = (((n as f64) * cfg.val_fraction).round() as usize).clamp(1, n - 1);
    let val = order[n - val_n..].iter().map(|&i| train[i].clone()).collect();
    let tr = order[..n - val_n].iter().map(|&i| train[i].clone()).collect();
    Ok((tr, val))
}

fn load_checkpoint(
    cfg: &RunConfig,
    checkpoint: &Path,
    vocab_flag: &Option<PathBuf>,
) -> Result<(Model, Vocabulary, usize, usize)> {
    require_file(checkpoint, "checkpoint")?;
    let vocab_path = match vocab_flag {
        Some(p) => p.clone(),
        None => checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("vocab.txt"),
    };
    require_file(&vocab_path, "vocabulary")?;
    let vocab = Vocabulary::load(&vocab_path)?;
    let dims = cfg.train_config()?.dims(vocab.len());
    dims.validate()?;
    let mut model = Model::new(dims, &SeedSplit::new(cfg.seed), false)?;
    let extras = load_params(&mut model.store, checkpoint)?;
    // parameters in the file that generation does not use (the order
    // net) still belong to the training total
    let (_, gen_params) = model.count_params();
    let extra_params: usize = extras
        .iter()
        .filter(|(name, _)| !name.ends_with(".acc") && !name.starts_with("meta."))
        .map(|(_, t): &(String, Tensor<f32>)| t.numel())
        .sum();
    Ok((model, vocab, gen_params + extra_params, gen_params))
}

fn decode_predictions(
    plain: &PlainModel,
    instances: &[TextInstance],
    set: &[SeqLayout],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<(Vec<Vec<String>>, Vec<Vec<String>>, String)> {
    let mut candidates = Vec::with_capacity(set.len());
    let mut references = Vec::with_capacity(set.len());
    let mut jsonl = String::new();
    for (inst, seq) in instances.iter().zip(set) {
        let ids = plain.greedy_incremental(&seq.ctx_utterances, max_len)?;
        let cand: Vec<String> = ids.iter().map(|&t| vocab.token(t).to_string()).collect();
        let line = serde_json::json!({
            "context": inst.context.iter().map(|u| u.join(" ")).collect::<Vec<_>>(),
            "reference": inst.response.join(" "),
            "candidate": cand.join(" "),
        });
        jsonl.push_str(&line.to_string());
        jsonl.push('\n');
        candidates.push(cand);
        references.push(inst.response.clone());
    }
    Ok((candidates, references, jsonl))
}

// ── Commands ────────────────────────────────────────────────────────────

fn cmd_prepare(ov: Overrides, out: PathBuf) -> Result<()> {
    let cfg = effective_config(&ov)?;
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| AuxError::Config("no corpus given (set data= or --data)".into()))?;
    let corpus = load_corpus(&cfg, data)?;
    let vocab = build_vocab(&corpus.instances, cfg.vocab_cap)?;
    std::fs::create_dir_all(&out)?;
    vocab.save(&out.join("vocab.txt"))?;
    synth::write_jsonl(&corpus.instances, &out.join("instances.jsonl"))?;
    cfg.write_snapshot(&out)?;
    println!(
        "prepared {} instances from {} lines ({} malformed, {} conversations dropped); \
         vocabulary {} tokens -> {}",
        corpus.instances.len(),
        corpus.lines,
        corpus.malformed,
        corpus.dropped_conversations,
        vocab.len(),
        out.display()
    );
    Ok(())
}

fn cmd_train(ov: Overrides, out: PathBuf, resume: Option<PathBuf>) -> Result<()> {
    let cfg = effective_config(&ov)?;
    let tc = cfg.train_config()?;
    let (train_insts, val_insts) = training_data(&cfg)?;
    let vocab = build_vocab(&train_insts, cfg.vocab_cap)?;
    let train_set = synth::encode_set(&train_insts, &vocab, cfg.max_pos, cfg.max_seg())?;
    let val_set = synth::encode_set(&val_insts, &vocab, cfg.max_pos, cfg.max_seg())?;
    std::fs::create_dir_all(&out)?;
    vocab.save(&out.join("vocab.txt"))?;
    cfg.write_snapshot(&out)?;
    if let Some(r) = &resume {
        require_file(r, "resume checkpoint")?;
    }
    println!(
        "training on {} instances ({} held out), vocabulary {}, tasks {}",
        train_set.len(),
        val_set.len(),
        vocab.len(),
        tc.toggles.label()
    );
    let outcome = trainer::train(&tc, &train_set, &val_set, vocab.len(), &out, resume.as_deref())?;
    println!(
        "ran {} steps / {} epochs; best validation ppl {:.4}{}; checkpoints at {}",
        outcome.steps_run,
        outcome.epochs_run,
        outcome.best_val_ppl,
        if outcome.stopped_early { " (stopped early)" } else { "" },
        out.display()
    );
    Ok(())
}

fn cmd_generate(
    ov: Overrides,
    checkpoint: PathBuf,
    vocab_flag: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = effective_config(&ov)?;
    let (model, vocab, _, _) = load_checkpoint(&cfg, &checkpoint, &vocab_flag)?;
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| AuxError::Config("no corpus given (set data= or --data)".into()))?;
    let instances = load_corpus(&cfg, data)?.instances;
    let set = synth::encode_set(&instances, &vocab, cfg.max_pos, cfg.max_seg())?;
    let plain = PlainModel::from_model(&model);
    let (_, _, jsonl) = decode_predictions(&plain, &instances, &set, &vocab, cfg.max_len)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("predictions.jsonl"), &jsonl)?;
            cfg.write_snapshot(&dir)?;
            println!("wrote {} predictions to {}", set.len(), dir.display());
        }
        None => {
            std::io::stdout().write_all(jsonl.as_bytes())?;
        }
    }
    Ok(())
}

fn cmd_evaluate(
    ov: Overrides,
    checkpoint: PathBuf,
    vocab_flag: Option<PathBuf>,
    out: PathBuf,
    model_embeddings: bool,
) -> Result<()> {
    let cfg = effective_config(&ov)?;
    let (model, vocab, params_total, params_gen) =
        load_checkpoint(&cfg, &checkpoint, &vocab_flag)?;
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| AuxError::Config("no corpus given (set data= or --data)".into()))?;
    let instances = load_corpus(&cfg, data)?.instances;
    let set = synth::encode_set(&instances, &vocab, cfg.max_pos, cfg.max_seg())?;
    let plain = PlainModel::from_model(&model);

    let (ppl, _, _) = eval::perplexity(&plain, &set)?;
    let (candidates, references, jsonl) =
        decode_predictions(&plain, &instances, &set, &vocab, cfg.max_len)?;
    let bleu = eval::bleu4(&candidates, &references)?;
    let (d1, _) = eval::distinct_n(&candidates, 1)?;
    let (d2, _) = eval::distinct_n(&candidates, 2)?;

    let embeddings = match (&cfg.embeddings, model_embeddings) {
        (Some(path), _) => {
            require_file(path, "embedding file")?;
            Some(WordEmbeddings::load_file(path)?)
        }
        (None, true) => Some(WordEmbeddings::from_model(&model, &vocab)),
        (None, false) => None,
    };
    let scores = match &embeddings {
        Some(e) => Some(eval::embedding_metrics(&candidates, &references, e)?),
        None => None,
    };

    let bench_contexts: Vec<Vec<Vec<u32>>> =
        set.iter().take(8).map(|s| s.ctx_utterances.clone()).collect();
    let speed = eval::decoding_speed(&plain, &bench_contexts, cfg.max_len, 1, 3)?;

    let report = MetricReport {
        ppl,
        bleu4: bleu,
        distinct1: d1,
        distinct2: d2,
        emb_average: scores.as_ref().map(|s| s.average),
        emb_greedy: scores.as_ref().map(|s| s.greedy),
        emb_extrema: scores.as_ref().map(|s| s.extrema),
        emb_source: embeddings.as_ref().map(|e| e.source.clone()),
        skipped_embedding_pairs: scores.as_ref().map_or(0, |s| s.skipped_pairs),
        ms_per_token_full: speed.full_ms_per_token,
        ms_per_token_incremental: speed.incremental_ms_per_token,
        params_total,
        params_gen,
    };
    std::fs::create_dir_all(&out)?;
    std::fs::write(out.join("metrics.csv"), report.csv())?;
    std::fs::write(out.join("predictions.jsonl"), &jsonl)?;
    cfg.write_snapshot(&out)?;
    print!("{}", report.table());
    println!("report written to {}", out.display());
    Ok(())
}

fn parse_leave_out_sets(cfg: &RunConfig, sets: &Option<String>) -> Result<Vec<Toggles>> {
    let parse_one = |spec: &str| -> Result<Toggles> {
        let mut probe = cfg.clone();
        probe.leave_out = spec.to_string();
        // toggles() returns what stays enabled; the set to remove is
        // its complement
        Ok(Toggles::all().minus(&probe.toggles()?))
    };
    match sets {
        Some(spec) => spec
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_one)
            .collect(),
        None => Ok(vec![
            Toggles { wor: true, ..Toggles::none() },
            Toggles { uor: true, ..Toggles::none() },
            Toggles { mwr: true, ..Toggles::none() },
            Toggles { mur: true, ..Toggles::none() },
            Toggles::all(),
        ]),
    }
}

fn cmd_ablate(ov: Overrides, out: PathBuf, sets: Option<String>) -> Result<()> {
    let cfg = effective_config(&ov)?;
    let tc = cfg.train_config()?;
    let leave_out = parse_leave_out_sets(&cfg, &sets)?;
    let (train_insts, val_insts) = training_data(&cfg)?;
    let vocab = build_vocab(&train_insts, cfg.vocab_cap)?;
    let train_set = synth::encode_set(&train_insts, &vocab, cfg.max_pos, cfg.max_seg())?;
    let val_set = synth::encode_set(&val_insts, &vocab, cfg.max_pos, cfg.max_seg())?;
    std::fs::create_dir_all(&out)?;
    cfg.write_snapshot(&out)?;
    let rows =
        trainer::ablate(&tc, &train_set, &val_set, &vocab, &leave_out, cfg.max_len, &out)?;
    println!("{:<16} {:>10} {:>8} {:>10} {:>10}", "variant", "ppl", "bleu4", "distinct1", "distinct2");
    for r in &rows {
        println!(
            "{:<16} {:>10.4} {:>8.4} {:>10.4} {:>10.4}",
            r.label, r.val_ppl, r.bleu4, r.distinct1, r.distinct2
        );
    }
    println!("table written to {}", out.join("ablation.csv").display());
    Ok(())
}

fn cmd_depth_sweep(
    ov: Overrides,
    out: PathBuf,
    depths: String,
    single_curve: bool,
) -> Result<()> {
    let cfg = effective_config(&ov)?;
    let tc = cfg.train_config()?;
    let depths: Vec<usize> = depths
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| AuxError::Config(format!("bad depth '{s}'")))
        })
        .collect::<Result<_>>()?;
    if depths.is_empty() || depths.contains(&0) {
        return Err(AuxError::Config("depths must be positive integers".into()));
    }
    let (train_insts, val_insts) = training_data(&cfg)?;
    let vocab = build_vocab(&train_insts, cfg.vocab_cap)?;
    let train_set = synth::encode_set(&train_insts, &vocab, cfg.max_pos, cfg.max_seg())?;
    let val_set = synth::encode_set(&val_insts, &vocab, cfg.max_pos, cfg.max_seg())?;
    std::fs::create_dir_all(&out)?;
    cfg.write_snapshot(&out)?;
    let rows = trainer::depth_sweep(
        &tc,
        &train_set,
        &val_set,
        vocab.len(),
        &depths,
        !single_curve,
        &out,
    )?;
    println!("{:<8} {:<10} {:>10}", "depth", "tasks", "val_ppl");
    for r in &rows {
        println!(
            "{:<8} {:<10} {:>10.4}",
            r.depth,
            if r.with_aux { "on" } else { "off" },
            r.val_ppl
        );
    }
    println!("curve written to {}", out.join("depth_sweep.csv").display());
    Ok(())
}

fn cmd_bench(
    ov: Overrides,
    checkpoint: PathBuf,
    vocab_flag: Option<PathBuf>,
    out: Option<PathBuf>,
    reps: usize,
    warmup: usize,
) -> Result<()> {
    let cfg = effective_config(&ov)?;
    let (model, vocab, _, _) = load_checkpoint(&cfg, &checkpoint, &vocab_flag)?;
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| AuxError::Config("no corpus given (set data= or --data)".into()))?;
    let instances = load_corpus(&cfg, data)?.instances;
    let set = synth::encode_set(&instances, &vocab, cfg.max_pos, cfg.max_seg())?;
    let contexts: Vec<Vec<Vec<u32>>> = set.iter().map(|s| s.ctx_utterances.clone()).collect();
    let plain = PlainModel::from_model(&model);
    let speed = eval::decoding_speed(&plain, &contexts, cfg.max_len, warmup, reps)?;
    println!(
        "generated {} tokens: {:.4} ms/token full recompute, {:.4} ms/token incremental \
         ({:.2}x speedup)",
        speed.tokens_generated,
        speed.full_ms_per_token,
        speed.incremental_ms_per_token,
        speed.speedup
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        std::fs::write(
            dir.join("bench.csv"),
            format!(
                "ms_per_token_full,ms_per_token_incremental,speedup,tokens_generated\n\
                 {},{},{},{}\n",
                speed.full_ms_per_token,
                speed.incremental_ms_per_token,
                speed.speedup,
                speed.tokens_generated
            ),
        )?;
        cfg.write_snapshot(&dir)?;
        println!("benchmark written to {}", dir.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { ov, out } => cmd_prepare(ov, out),
        Command::Train { ov, out, resume } => cmd_train(ov, out, resume),
        Command::Generate { ov, checkpoint, vocab, out } => {
            cmd_generate(ov, checkpoint, vocab, out)
        }
        Command::Evaluate { ov, checkpoint, vocab, out, model_embeddings } => {
            cmd_evaluate(ov, checkpoint, vocab, out, model_embeddings)
        }
        Command::Ablate { ov, out, sets } => cmd_ablate(ov, out, sets),
        Command::DepthSweep { ov, out, depths, single_curve } => {
            cmd_depth_sweep(ov, out, depths, single_curve)
        }
        Command::Bench { ov, checkpoint, vocab, out, reps, warmup } => {
            cmd_bench(ov, checkpoint, vocab, out, reps, warmup)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        // configuration and missing-input problems are usage errors;
        // everything else is a runtime failure
        let code = match e {
            AuxError::Config(_) => 2,
            _ => 1,
        };
        std::process::exit(code);
    }
}
