//! Flat `key = value` run configuration shared by every command: file
//! parsing, command-line overrides through the same setter, and the
//! effective-config snapshot written next to run outputs.

use crate::corpus::{max_segments, DEFAULT_MAX_POS, DEFAULT_MAX_UTT_LEN, DEFAULT_WINDOW};
use crate::error::{AuxError, Result};
use crate::trainer::{Toggles, TrainConfig};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Everything a run can be told, with working small-scale defaults.
/// Unknown keys are rejected rather than ignored so typos cannot
/// silently fall back to defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub val_data: Option<PathBuf>,
    /// Tail fraction of the shuffled corpus held out when `val_data`
    /// is not given.
    pub val_fraction: f64,
    pub vocab_cap: usize,
    pub window: usize,
    pub max_utt_len: usize,
    pub max_pos: usize,
    pub d_model: usize,
    pub heads: usize,
    pub encoder_layers: usize,
    pub alpha0: f64,
    pub t1: usize,
    pub t2: usize,
    pub n_per_epoch: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub patience: usize,
    pub mask_rate: f64,
    /// Comma-separated auxiliary tasks to disable for training.
    pub leave_out: String,
    /// Greedy-decoding length cap.
    pub max_len: usize,
    pub embeddings: Option<PathBuf>,
    /// Worker threads for tensor kernels; 0 keeps the library default.
    pub device_threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: None,
            val_data: None,
            val_fraction: 0.1,
            vocab_cap: 20_000,
            window: DEFAULT_WINDOW,
            max_utt_len: DEFAULT_MAX_UTT_LEN,
            max_pos: DEFAULT_MAX_POS,
            d_model: 64,
            heads: 4,
            encoder_layers: 1,
            alpha0: 1.0,
            t1: 5_000,
            t2: 4,
            n_per_epoch: 250,
            lr: 0.1,
            batch_size: 8,
            seed: 17,
            patience: 3,
            mask_rate: 0.15,
            leave_out: String::new(),
            max_len: DEFAULT_MAX_UTT_LEN,
            embeddings: None,
            device_threads: 0,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| AuxError::Config(format!("key '{key}': cannot parse value '{value}'")))
}

impl RunConfig {
    /// Apply one `key = value` assignment; file lines and command-line
    /// overrides both funnel through here.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        // an empty value clears a path key, so snapshots of unset
        // options reparse to the same config
        let opt_path = |v: &str| {
            if v.is_empty() {
                None
            } else {
                Some(PathBuf::from(v))
            }
        };
        match key {
            "data" => self.data = opt_path(value),
            "val_data" => self.val_data = opt_path(value),
            "val_fraction" => self.val_fraction = parse_as(key, value)?,
            "vocab_cap" => self.vocab_cap = parse_as(key, value)?,
            "window" => self.window = parse_as(key, value)?,
            "max_utt_len" => self.max_utt_len = parse_as(key, value)?,
            "max_pos" => self.max_pos = parse_as(key, value)?,
            "d_model" => self.d_model = parse_as(key, value)?,
            "heads" => self.heads = parse_as(key, value)?,
            "encoder_layers" => self.encoder_layers = parse_as(key, value)?,
            "alpha0" => self.alpha0 = parse_as(key, value)?,
            "t1" => self.t1 = parse_as(key, value)?,
            "t2" => self.t2 = parse_as(key, value)?,
            "n_per_epoch" => self.n_per_epoch = parse_as(key, value)?,
            "lr" => self.lr = parse_as(key, value)?,
            "batch_size" => self.batch_size = parse_as(key, value)?,
            "seed" => self.seed = parse_as(key, value)?,
            "patience" => self.patience = parse_as(key, value)?,
            "mask_rate" => self.mask_rate = parse_as(key, value)?,
            "leave_out" => self.leave_out = value.to_string(),
            "max_len" => self.max_len = parse_as(key, value)?,
            "embeddings" => self.embeddings = opt_path(value),
            "device_threads" => self.device_threads = parse_as(key, value)?,
            _ => return Err(AuxError::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parse a config file of `key = value` lines; `#` starts a comment
    /// and blank lines are skipped.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AuxError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (ix, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                AuxError::Config(format!("{}:{}: expected key = value", path.display(), ix + 1))
            })?;
            cfg.set(key.trim(), value.trim()).map_err(|e| {
                AuxError::Config(format!("{}:{}: {e}", path.display(), ix + 1))
            })?;
        }
        Ok(cfg)
    }

    /// Auxiliary-task toggles after removing `leave_out`.
    pub fn toggles(&self) -> Result<Toggles> {
        let mut out = Toggles::none();
        for name in self.leave_out.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name {
                "wor" => out.wor = true,
                "uor" => out.uor = true,
                "mwr" => out.mwr = true,
                "mur" => out.mur = true,
                "all" => out = Toggles::all(),
                _ => {
                    return Err(AuxError::Config(format!(
                        "leave_out: unknown task '{name}' (expected wor, uor, mwr, mur, all)"
                    )))
                }
            }
        }
        Ok(Toggles::all().minus(&out))
    }

    pub fn max_seg(&self) -> usize {
        max_segments(self.window)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            t1: self.t1,
            t2: self.t2,
            n_per_epoch: self.n_per_epoch,
            alpha0: self.alpha0,
            lr: self.lr,
            batch_size: self.batch_size,
            seed: self.seed,
            toggles: self.toggles()?,
            depth: self.encoder_layers,
            d: self.d_model,
            heads: self.heads,
            patience: self.patience,
            mask_rate: self.mask_rate,
            max_pos: self.max_pos,
            max_seg: self.max_seg(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical dump of every effective key, prefixed with the build
    /// version, so any two runs can be compared field by field.
    pub fn snapshot(&self) -> String {
        let path = |p: &Option<PathBuf>| {
            p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        };
        let mut s = String::new();
        let _ = writeln!(s, "# {}", version_string());
        let _ = writeln!(s, "data = {}", path(&self.data));
        let _ = writeln!(s, "val_data = {}", path(&self.val_data));
        let _ = writeln!(s, "val_fraction = {}", self.val_fraction);
        let _ = writeln!(s, "vocab_cap = {}", self.vocab_cap);
        let _ = writeln!(s, "window = {}", self.window);
        let _ = writeln!(s, "max_utt_len = {}", self.max_utt_len);
        let _ = writeln!(s, "max_pos = {}", self.max_pos);
        let _ = writeln!(s, "d_model = {}", self.d_model);
        let _ = writeln!(s, "heads = {}", self.heads);
        let _ = writeln!(s, "encoder_layers = {}", self.encoder_layers);
        let _ = writeln!(s, "alpha0 = {}", self.alpha0);
        let _ = writeln!(s, "t1 = {}", self.t1);
        let _ = writeln!(s, "t2 = {}", self.t2);
        let _ = writeln!(s, "n_per_epoch = {}", self.n_per_epoch);
        let _ = writeln!(s, "lr = {}", self.lr);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "patience = {}", self.patience);
        let _ = writeln!(s, "mask_rate = {}", self.mask_rate);
        let _ = writeln!(s, "leave_out = {}", self.leave_out);
        let _ = writeln!(s, "max_len = {}", self.max_len);
        let _ = writeln!(s, "embeddings = {}", path(&self.embeddings));
        let _ = writeln!(s, "device_threads = {}", self.device_threads);
        s
    }

    /// Write the snapshot as `effective-config.txt` inside `dir`.
    pub fn write_snapshot(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("effective-config.txt"), self.snapshot())?;
        Ok(())
    }
}

/// Package version plus the git description captured at compile time.
pub fn version_string() -> String {
    format!(
        "{} {} ({})",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        option_env!("GIT_DESCRIBE").unwrap_or("untracked build")
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_values_override_defaults_and_comments_are_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "# a training run").unwrap();
        writeln!(f, "d_model = 32   # narrow").unwrap();
        writeln!(f).unwrap();
        writeln!(f, "seed=99").unwrap();
        writeln!(f, "leave_out = wor, mur").unwrap();
        drop(f);
        let cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(cfg.d_model, 32);
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.heads, RunConfig::default().heads);
        let t = cfg.toggles().unwrap();
        assert!(!t.wor && t.uor && t.mwr && !t.mur);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "d_modle = 32\n").unwrap();
        let err = format!("{}", RunConfig::from_file(&path).unwrap_err());
        assert!(err.contains("unknown config key 'd_modle'"), "{err}");
        assert!(err.contains(":1:"), "should name the line: {err}");

        std::fs::write(&path, "seed = banana\n").unwrap();
        let err = format!("{}", RunConfig::from_file(&path).unwrap_err());
        assert!(err.contains("cannot parse value 'banana'"), "{err}");

        std::fs::write(&path, "just some words\n").unwrap();
        let err = format!("{}", RunConfig::from_file(&path).unwrap_err());
        assert!(err.contains("expected key = value"), "{err}");
    }

    #[test]
    fn leaving_out_all_tasks_yields_plain_mle_toggles() {
        let mut cfg = RunConfig::default();
        cfg.leave_out = "wor,uor,mwr,mur".into();
        assert!(!cfg.toggles().unwrap().any());
        cfg.leave_out = "all".into();
        assert!(!cfg.toggles().unwrap().any());
        cfg.leave_out = "dance".into();
        assert!(cfg.toggles().is_err());
        cfg.leave_out = String::new();
        assert_eq!(cfg.toggles().unwrap(), Toggles::all());
    }

    #[test]
    fn snapshot_round_trips_through_the_file_parser() {
        let mut cfg = RunConfig::default();
        cfg.set("d_model", "48").unwrap();
        cfg.set("data", "corpus/train.jsonl").unwrap();
        cfg.set("alpha0", "0.75").unwrap();
        let dir = tempfile::tempdir().unwrap();
        cfg.write_snapshot(dir.path()).unwrap();
        let reparsed = RunConfig::from_file(&dir.path().join("effective-config.txt")).unwrap();
        assert_eq!(reparsed, cfg);
        let text = cfg.snapshot();
        assert!(text.starts_with(&format!("# {}", version_string())));
    }

    #[test]
    fn train_config_carries_the_dialogue_shape_caps() {
        let cfg = RunConfig::default();
        let tc = cfg.train_config().unwrap();
        assert_eq!(tc.max_seg, cfg.window + 1);
        assert_eq!(tc.max_pos, cfg.max_pos);
        assert_eq!(tc.depth, cfg.encoder_layers);
    }
}
