//! Joint training: the generation loss plus a decaying-weight sum of
//! the auxiliary recovery losses, one Adagrad update per mini-batch,
//! epochs of a fixed number of batches, per-epoch validation perplexity
//! with early stopping, and resumable checkpoints.

use crate::aux::{corrupt_masked_utterance, corrupt_masked_words, corrupt_word_order, recovery_loss};
use crate::corpus::SeqLayout;
use crate::error::{AuxError, Result};
use crate::eval;
use crate::infer::PlainModel;
use crate::model::{mean_of, mle_loss, Model, ModelDims};
use crate::ordernet::{shuffle_utterances, uor_loss};
use auxgen_tensor::checkpoint::{load_params, save_params};
use auxgen_tensor::rng::permutation;
use auxgen_tensor::{Adagrad, Graph, NodeId, SeedSplit, Tensor};
use std::io::Write;
use std::path::{Path, PathBuf};

// ── Configuration ───────────────────────────────────────────────────────

/// Which auxiliary tasks participate in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Toggles {
    pub wor: bool,
    pub uor: bool,
    pub mwr: bool,
    pub mur: bool,
}

impl Toggles {
    pub fn all() -> Toggles {
        Toggles { wor: true, uor: true, mwr: true, mur: true }
    }

    pub fn none() -> Toggles {
        Toggles { wor: false, uor: false, mwr: false, mur: false }
    }

    pub fn any(&self) -> bool {
        self.wor || self.uor || self.mwr || self.mur
    }

    /// Remove every task named in `out` (the ablation operator).
    pub fn minus(&self, out: &Toggles) -> Toggles {
        Toggles {
            wor: self.wor && !out.wor,
            uor: self.uor && !out.uor,
            mwr: self.mwr && !out.mwr,
            mur: self.mur && !out.mur,
        }
    }

    pub fn label(&self) -> String {
        let names: Vec<&str> = [
            (self.wor, "wor"),
            (self.uor, "uor"),
            (self.mwr, "mwr"),
            (self.mur, "mur"),
        ]
        .iter()
        .filter_map(|&(on, name)| if on { Some(name) } else { None })
        .collect();
        if names.is_empty() {
            "none".into()
        } else {
            names.join("+")
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Global maximum number of optimizer steps.
    pub t1: usize,
    /// Auxiliary-training epochs: the α schedule reaches zero after
    /// `t2 · n_per_epoch` steps.
    pub t2: usize,
    /// Batches per epoch, decoupled from the corpus size.
    pub n_per_epoch: usize,
    /// Initial auxiliary weight α₀.
    pub alpha0: f64,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub toggles: Toggles,
    pub depth: usize,
    pub d: usize,
    pub heads: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Masking probability for the masked-word task.
    pub mask_rate: f64,
    pub max_pos: usize,
    pub max_seg: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t1 == 0 {
            return Err(AuxError::Config("t1 (max steps) must be positive".into()));
        }
        if self.t2 == 0 || self.n_per_epoch == 0 {
            return Err(AuxError::Config("t2 and n_per_epoch must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha0) {
            return Err(AuxError::Config(format!("alpha0 {} outside [0, 1]", self.alpha0)));
        }
        if self.patience == 0 {
            return Err(AuxError::Config("patience must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(AuxError::Config("batch_size must be positive".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(AuxError::Config(format!("learning rate {} invalid", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.mask_rate) {
            return Err(AuxError::Config(format!("mask_rate {} outside [0, 1]", self.mask_rate)));
        }
        Ok(())
    }

    pub fn dims(&self, vocab: usize) -> ModelDims {
        ModelDims {
            d: self.d,
            heads: self.heads,
            depth: self.depth,
            vocab,
            max_pos: self.max_pos,
            max_seg: self.max_seg,
        }
    }
}

// ── α schedule ──────────────────────────────────────────────────────────

/// Linear decay α(t) = α₀·(T₂N − t)/(T₂N), clamped at zero. Computed as
/// a ratio in f64 so t = T₂N/2 gives exactly α₀/2 and t = T₂N exactly 0,
/// rather than accumulating a per-step decrement.
pub fn alpha_at(t: usize, alpha0: f64, t2: usize, n_per_epoch: usize) -> f32 {
    let horizon = (t2 as f64) * (n_per_epoch as f64);
    let t = t as f64;
    if t >= horizon {
        return 0.0;
    }
    (alpha0 * ((horizon - t) / horizon)) as f32
}

pub fn alpha_schedule(t: usize, cfg: &TrainConfig) -> f32 {
    alpha_at(t, cfg.alpha0, cfg.t2, cfg.n_per_epoch)
}

// ── Joint loss ──────────────────────────────────────────────────────────

/// Loss components of one step, already read out of the graph. `full`
/// is composed from the components in f64, so a logged row always
/// recomposes exactly: full = mle + α·(wor + uor + mwr + mur).
#[derive(Debug, Clone, Copy)]
pub struct StepLosses {
    pub full: f64,
    pub mle: f64,
    pub wor: f64,
    pub uor: f64,
    pub mwr: f64,
    pub mur: f64,
    /// Auxiliary task-instance forward passes executed in this step.
    pub aux_passes: u64,
}

/// Assemble the batch objective: mean per-instance response NLL plus α
/// times the sum of the enabled recovery-task means, each mean taken
/// over that task's eligible instances (a task with no eligible
/// instances contributes zero). With α = 0 no auxiliary pass runs.
#[allow(clippy::too_many_arguments)]
pub fn joint_loss(
    g: &mut Graph<f32>,
    bound: &[NodeId],
    model: &Model,
    batch: &[&SeqLayout],
    alpha: f32,
    toggles: &Toggles,
    seeds: &SeedSplit,
    step: usize,
    mask_rate: f64,
) -> Result<(NodeId, StepLosses)> {
    if batch.is_empty() {
        return Err(AuxError::Contract("joint loss over an empty batch".into()));
    }
    let mut mle_nodes = Vec::with_capacity(batch.len());
    for seq in batch {
        mle_nodes.push(mle_loss(g, bound, model, seq)?);
    }
    let l_mle = mean_of(g, &mle_nodes)?;

    let mut losses = StepLosses {
        full: 0.0,
        mle: g.value(l_mle).item() as f64,
        wor: 0.0,
        uor: 0.0,
        mwr: 0.0,
        mur: 0.0,
        aux_passes: 0,
    };
    let mut task_means: Vec<NodeId> = Vec::new();
    if alpha > 0.0 {
        if toggles.wor {
            let mut nodes = Vec::new();
            for (i, seq) in batch.iter().enumerate() {
                let mut rng = seeds.stream("corrupt.wor", &[step as u64, i as u64]);
                if let Some(c) = corrupt_word_order(&seq.ctx_utterances, &mut rng) {
                    nodes.push(recovery_loss(g, bound, model, &c)?);
                }
            }
            if !nodes.is_empty() {
                losses.aux_passes += nodes.len() as u64;
                let mean = mean_of(g, &nodes)?;
                losses.wor = g.value(mean).item() as f64;
                task_means.push(mean);
            }
        }
        if toggles.uor {
            let mut nodes = Vec::new();
            for (i, seq) in batch.iter().enumerate() {
                let mut rng = seeds.stream("corrupt.uor", &[step as u64, i as u64]);
                if let Some((shuffled, order)) = shuffle_utterances(&seq.ctx_utterances, &mut rng)
                {
                    nodes.push(uor_loss(g, bound, model, &shuffled, &order, true)?.loss);
                }
            }
            if !nodes.is_empty() {
                losses.aux_passes += nodes.len() as u64;
                let mean = mean_of(g, &nodes)?;
                losses.uor = g.value(mean).item() as f64;
                task_means.push(mean);
            }
        }
        if toggles.mwr {
            let mut nodes = Vec::new();
            for (i, seq) in batch.iter().enumerate() {
                let mut rng = seeds.stream("corrupt.mwr", &[step as u64, i as u64]);
                let c = corrupt_masked_words(&seq.ctx_utterances, mask_rate, &mut rng);
                nodes.push(recovery_loss(g, bound, model, &c)?);
            }
            losses.aux_passes += nodes.len() as u64;
            let mean = mean_of(g, &nodes)?;
            losses.mwr = g.value(mean).item() as f64;
            task_means.push(mean);
        }
        if toggles.mur {
            let mut nodes = Vec::new();
            for (i, seq) in batch.iter().enumerate() {
                let mut rng = seeds.stream("corrupt.mur", &[step as u64, i as u64]);
                if let Some(c) = corrupt_masked_utterance(&seq.ctx_utterances, &mut rng) {
                    nodes.push(recovery_loss(g, bound, model, &c)?);
                }
            }
            if !nodes.is_empty() {
                losses.aux_passes += nodes.len() as u64;
                let mean = mean_of(g, &nodes)?;
                losses.mur = g.value(mean).item() as f64;
                task_means.push(mean);
            }
        }
    }

    let full_node = if task_means.is_empty() {
        l_mle
    } else {
        let mut sum = task_means[0];
        for &m in &task_means[1..] {
            sum = g.add(sum, m)?;
        }
        let scaled = g.scale(sum, alpha)?;
        g.add(l_mle, scaled)?
    };
    losses.full =
        losses.mle + alpha as f64 * (losses.wor + losses.uor + losses.mwr + losses.mur);
    Ok((full_node, losses))
}

// ── Batch plan ──────────────────────────────────────────────────────────

/// Exactly `n_batches` index batches for one epoch, drawn from repeated
/// seeded permutations of the corpus (wrapping when the epoch asks for
/// more instances than the corpus holds).
fn batch_plan(
    n_instances: usize,
    batch_size: usize,
    n_batches: usize,
    seeds: &SeedSplit,
    epoch: usize,
) -> Vec<Vec<usize>> {
    let needed = n_batches * batch_size;
    let mut order = Vec::with_capacity(needed);
    let mut round = 0u64;
    while order.len() < needed {
        let mut rng = seeds.stream("batch_shuffle", &[epoch as u64, round]);
        order.extend(permutation(&mut rng, n_instances));
        round += 1;
    }
    order.truncate(needed);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

// ── Checkpoint metadata ─────────────────────────────────────────────────

// f64 round-trips through checkpoint extras as two bit-preserving
// f32 halves (the container stores f32 payloads byte-exactly).
fn f64_halves(x: f64) -> (f32, f32) {
    let bits = x.to_bits();
    (f32::from_bits(bits as u32), f32::from_bits((bits >> 32) as u32))
}

fn f64_from_halves(lo: f32, hi: f32) -> f64 {
    f64::from_bits((lo.to_bits() as u64) | ((hi.to_bits() as u64) << 32))
}

fn scalar(v: f32) -> Tensor<f32> {
    Tensor::from_vec(&[1], vec![v]).unwrap()
}

struct Meta {
    step: usize,
    epoch: usize,
    bad_epochs: usize,
    best_ppl: f64,
}

fn meta_extras(m: &Meta) -> Vec<(String, Tensor<f32>)> {
    let (lo, hi) = f64_halves(m.best_ppl);
    vec![
        ("meta.step".into(), scalar(m.step as f32)),
        ("meta.epoch".into(), scalar(m.epoch as f32)),
        ("meta.bad_epochs".into(), scalar(m.bad_epochs as f32)),
        ("meta.best_ppl.lo".into(), scalar(lo)),
        ("meta.best_ppl.hi".into(), scalar(hi)),
    ]
}

fn meta_from_extras(extras: &[(String, Tensor<f32>)]) -> Result<Meta> {
    let get = |name: &str| -> Result<f32> {
        extras
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.data()[0])
            .ok_or_else(|| AuxError::Train(format!("checkpoint lacks {name}")))
    };
    Ok(Meta {
        step: get("meta.step")? as usize,
        epoch: get("meta.epoch")? as usize,
        bad_epochs: get("meta.bad_epochs")? as usize,
        best_ppl: f64_from_halves(get("meta.best_ppl.lo")?, get("meta.best_ppl.hi")?),
    })
}

// ── Training loop ───────────────────────────────────────────────────────

#[derive(Debug)]
pub struct TrainOutcome {
    pub steps_run: usize,
    pub epochs_run: usize,
    pub best_val_ppl: f64,
    pub val_ppl_history: Vec<f64>,
    pub stopped_early: bool,
    pub hit_step_cap: bool,
    pub aux_passes: u64,
    /// Auxiliary passes executed in steps where α was already zero —
    /// must stay 0 by the α > 0 guard.
    pub aux_passes_after_zero: u64,
    pub best_path: PathBuf,
    pub last_path: PathBuf,
    pub log_path: PathBuf,
}

fn fmt_step_row(step: usize, alpha: f32, l: &StepLosses) -> String {
    format!(
        "{step},{},{},{},{},{},{},{},\n",
        alpha, l.full, l.mle, l.wor, l.uor, l.mwr, l.mur
    )
}

fn fmt_val_row(step: usize, alpha: f32, ppl: f64) -> String {
    format!("{step},{alpha},,,,,,,{ppl}\n")
}

/// Run Algorithm-style joint training over an encoded corpus. Writes
/// `train_log.csv`, `best.bin` (lowest validation perplexity) and
/// `last.bin` (every epoch, resume point) into `out_dir`. Pass a
/// `last.bin` path as `resume_from` to continue an interrupted run
/// under the identical configuration.
pub fn train(
    cfg: &TrainConfig,
    train_set: &[SeqLayout],
    val_set: &[SeqLayout],
    vocab: usize,
    out_dir: &Path,
    resume_from: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dims = cfg.dims(vocab);
    dims.validate()?;
    if train_set.is_empty() {
        return Err(AuxError::Train("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(AuxError::Train("validation set is empty".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let best_path = out_dir.join("best.bin");
    let last_path = out_dir.join("last.bin");
    let log_path = out_dir.join("train_log.csv");

    let seeds = SeedSplit::new(cfg.seed);
    let mut model = Model::new(dims, &seeds, cfg.toggles.uor)?;
    let opt = Adagrad::new(cfg.lr);

    let mut meta = Meta { step: 0, epoch: 0, bad_epochs: 0, best_ppl: f64::INFINITY };
    if let Some(path) = resume_from {
        let extras = load_params(&mut model.store, path)?;
        meta = meta_from_extras(&extras)?;
    }

    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    log.write_all(b"step,alpha,l_full,l_mle,l_wor,l_uor,l_mwr,l_mur,val_ppl\n")?;

    let mut outcome = TrainOutcome {
        steps_run: meta.step,
        epochs_run: meta.epoch,
        best_val_ppl: meta.best_ppl,
        val_ppl_history: Vec::new(),
        stopped_early: false,
        hit_step_cap: false,
        aux_passes: 0,
        aux_passes_after_zero: 0,
        best_path: best_path.clone(),
        last_path: last_path.clone(),
        log_path: log_path.clone(),
    };

    'training: while meta.step < cfg.t1 {
        let plan =
            batch_plan(train_set.len(), cfg.batch_size, cfg.n_per_epoch, &seeds, meta.epoch);
        for batch_ix in plan {
            if meta.step >= cfg.t1 {
                break;
            }
            meta.step += 1;
            // step t consumes the α left after t−1 decays (α₀ at step 1)
            let alpha = alpha_at(meta.step - 1, cfg.alpha0, cfg.t2, cfg.n_per_epoch);
            let batch: Vec<&SeqLayout> = batch_ix.iter().map(|&i| &train_set[i]).collect();
            let mut g = Graph::<f32>::new();
            let bound = model.bind(&mut g);
            let (full, losses) = joint_loss(
                &mut g,
                &bound,
                &model,
                &batch,
                alpha,
                &cfg.toggles,
                &seeds,
                meta.step,
                cfg.mask_rate,
            )?;
            outcome.aux_passes += losses.aux_passes;
            if alpha == 0.0 {
                outcome.aux_passes_after_zero += losses.aux_passes;
            }
            log.write_all(fmt_step_row(meta.step, alpha, &losses).as_bytes())?;
            if !losses.full.is_finite() {
                log.flush()?;
                return Err(AuxError::Train(format!(
                    "loss became non-finite at step {}; the last checkpoint (if any) at {} is \
                     still the most recent good state",
                    meta.step,
                    last_path.display()
                )));
            }
            g.backward(full)?;
            model.store.harvest_grads(&g, &bound)?;
            for (_, p) in model.store.iter_mut() {
                if p.grad.is_none() {
                    // untouched parameters take an all-zero gradient,
                    // which Adagrad leaves bit-identical
                    let shape = p.value.shape().to_vec();
                    p.grad = Some(Tensor::zeros(&shape));
                }
            }
            opt.step(&mut model.store)?;
        }
        meta.epoch += 1;

        let plain = PlainModel::from_model(&model);
        let (ppl, _, _) = eval::perplexity(&plain, val_set)?;
        let alpha_now = alpha_at(meta.step, cfg.alpha0, cfg.t2, cfg.n_per_epoch);
        log.write_all(fmt_val_row(meta.step, alpha_now, ppl).as_bytes())?;
        log.flush()?;
        outcome.val_ppl_history.push(ppl);

        if ppl < meta.best_ppl {
            meta.best_ppl = ppl;
            meta.bad_epochs = 0;
            save_params(&model.store, &best_path, &meta_extras(&meta))?;
        } else {
            meta.bad_epochs += 1;
        }
        save_params(&model.store, &last_path, &meta_extras(&meta))?;

        if meta.bad_epochs >= cfg.patience {
            outcome.stopped_early = true;
            break 'training;
        }
    }

    outcome.steps_run = meta.step;
    outcome.epochs_run = meta.epoch;
    outcome.best_val_ppl = meta.best_ppl;
    outcome.hit_step_cap = meta.step >= cfg.t1;
    log.flush()?;
    Ok(outcome)
}

// ── Experiment drivers ──────────────────────────────────────────────────

pub struct AblationRow {
    pub label: String,
    pub val_ppl: f64,
    pub bleu4: f64,
    pub distinct1: f64,
    pub distinct2: f64,
}

fn eval_checkpoint(
    cfg: &TrainConfig,
    checkpoint: &Path,
    with_order_net: bool,
    val_set: &[SeqLayout],
    vocab: &crate::corpus::Vocabulary,
    gen_max_len: usize,
) -> Result<(f64, f64, f64, f64)> {
    let seeds = SeedSplit::new(cfg.seed);
    let mut model = Model::new(cfg.dims(vocab.len()), &seeds, with_order_net)?;
    load_params(&mut model.store, checkpoint)?;
    let plain = PlainModel::from_model(&model);
    let (ppl, _, _) = eval::perplexity(&plain, val_set)?;
    let mut cands = Vec::with_capacity(val_set.len());
    let mut refs = Vec::with_capacity(val_set.len());
    for seq in val_set {
        let ids = plain.greedy_incremental(&seq.ctx_utterances, gen_max_len)?;
        cands.push(ids.iter().map(|&t| vocab.token(t).to_string()).collect::<Vec<_>>());
        let reference = &seq.targets[..seq.targets.len() - 1]; // strip the end marker
        refs.push(reference.iter().map(|&t| vocab.token(t).to_string()).collect::<Vec<_>>());
    }
    let bleu = eval::bleu4(&cands, &refs)?;
    let (d1, _) = eval::distinct_n(&cands, 1)?;
    let (d2, _) = eval::distinct_n(&cands, 2)?;
    Ok((ppl, bleu, d1, d2))
}

/// Train the full configuration and one variant per leave-out set, then
/// evaluate each on the validation split. Writes `ablation.csv`.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    cfg: &TrainConfig,
    train_set: &[SeqLayout],
    val_set: &[SeqLayout],
    vocab: &crate::corpus::Vocabulary,
    leave_out: &[Toggles],
    gen_max_len: usize,
    out_dir: &Path,
) -> Result<Vec<AblationRow>> {
    std::fs::create_dir_all(out_dir)?;
    let mut variants: Vec<(String, Toggles)> = vec![("full".into(), cfg.toggles)];
    for out in leave_out {
        variants.push((format!("-{}", out.label()), cfg.toggles.minus(out)));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for (label, toggles) in variants {
        let mut vcfg = cfg.clone();
        vcfg.toggles = toggles;
        let dir = out_dir.join(label.replace('+', "_"));
        let outcome = train(&vcfg, train_set, val_set, vocab.len(), &dir, None)?;
        let (ppl, bleu, d1, d2) = eval_checkpoint(
            &vcfg,
            &outcome.best_path,
            toggles.uor,
            val_set,
            vocab,
            gen_max_len,
        )?;
        rows.push(AblationRow { label, val_ppl: ppl, bleu4: bleu, distinct1: d1, distinct2: d2 });
    }
    let mut csv = String::from("variant,val_ppl,bleu4,distinct1,distinct2\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.label, r.val_ppl, r.bleu4, r.distinct1, r.distinct2
        ));
    }
    std::fs::write(out_dir.join("ablation.csv"), csv)?;
    Ok(rows)
}

pub struct SweepRow {
    pub depth: usize,
    pub with_aux: bool,
    pub val_ppl: f64,
}

/// Train once per encoder depth and report validation perplexity;
/// with `both_curves` every depth is trained with and without the
/// auxiliary tasks. Writes `depth_sweep.csv`.
pub fn depth_sweep(
    cfg: &TrainConfig,
    train_set: &[SeqLayout],
    val_set: &[SeqLayout],
    vocab: usize,
    depths: &[usize],
    both_curves: bool,
    out_dir: &Path,
) -> Result<Vec<SweepRow>> {
    std::fs::create_dir_all(out_dir)?;
    let mut rows = Vec::new();
    for &depth in depths {
        let modes: &[bool] = if both_curves { &[true, false] } else { &[cfg.toggles.any()] };
        for &with_aux in modes {
            let mut vcfg = cfg.clone();
            vcfg.depth = depth;
            vcfg.toggles = if with_aux { cfg.toggles } else { Toggles::none() };
            let dir = out_dir.join(format!("depth{depth}_{}", if with_aux { "aux" } else { "noaux" }));
            let outcome = train(&vcfg, train_set, val_set, vocab, &dir, None)?;
            rows.push(SweepRow { depth, with_aux, val_ppl: outcome.best_val_ppl });
        }
    }
    let mut csv = String::from("depth,with_aux,val_ppl\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{}\n", r.depth, r.with_aux, r.val_ppl));
    }
    std::fs::write(out_dir.join("depth_sweep.csv"), csv)?;
    Ok(rows)
}
