use std::fs;
use std::io::Write;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use serde_json::json;
use tch::{Kind, Tensor};

use super::config::TrainConfig;
use super::schedule::lr_schedule;
use super::trainer::{StepLog, TrainState, Trainer};
use crate::data::codec::save_png;
use crate::data::{load_dataset, DatasetSpec, ImageFolder, UnpairedDataset};
use crate::error::{Error, Result};
use crate::losses::mean_abs_error;
use crate::models::TranslationModel;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const LATEST_FILE: &str = "latest.txt";
pub const SAMPLES_DIR: &str = "samples";

/// The checkpoint named by `root/latest.txt`, if any.
pub fn latest_checkpoint(root: &Path) -> Result<Option<PathBuf>> {
    let pointer = root.join(LATEST_FILE);
    if !pointer.is_file() {
        return Ok(None);
    }
    let name = fs::read_to_string(&pointer).map_err(|e| Error::io(&pointer, e))?;
    let dir = root.join(name.trim());
    if !dir.is_dir() {
        return Err(Error::checkpoint(&pointer, format!("points to missing {}", dir.display())));
    }
    Ok(Some(dir))
}

/// A checkpoint directory itself, or a run directory holding `latest.txt`.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    Ok(latest_checkpoint(path)?.unwrap_or_else(|| path.to_path_buf()))
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn epoch_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("epoch_") && !n.ends_with(".tmp"))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Saves into `root/epoch_NNNN`, repoints `latest.txt` and prunes old
/// checkpoints.
pub fn save_checkpoint(trainer: &mut Trainer, root: &Path) -> Result<PathBuf> {
    let name = format!("epoch_{:04}", trainer.state.epoch);
    let dir = root.join(&name);
    let staging = root.join(format!("{name}.tmp"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    trainer.save(&staging)?;
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    fs::rename(&staging, &dir).map_err(|e| Error::io(&dir, e))?;
    write_atomic(&root.join(LATEST_FILE), name.as_bytes())?;
    let all = epoch_dirs(root)?;
    let keep = trainer.config().keep_checkpoints;
    for old in all.iter().take(all.len().saturating_sub(keep)) {
        fs::remove_dir_all(old).map_err(|e| Error::io(old, e))?;
    }
    trainer.set_last_checkpoint(dir.clone());
    Ok(dir)
}

/// JSON-lines training log with a header line.
struct TrainLog {
    file: fs::File,
    path: PathBuf,
}

impl TrainLog {
    /// Starts a new log, or on resume keeps the header and the records of
    /// steps before `resume_step`.
    fn open(path: &Path, cfg: &TrainConfig, resume_step: Option<u64>) -> Result<Self> {
        let mut kept = Vec::new();
        if let (Some(step), true) = (resume_step, path.is_file()) {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for line in text.lines() {
                let v: serde_json::Value = serde_json::from_str(line)?;
                let keep = match v.get("step").and_then(|s| s.as_u64()) {
                    Some(s) => s < step,
                    None => true,
                };
                if keep {
                    kept.push(line.to_string());
                }
            }
        }
        if kept.is_empty() {
            let header = json!({
                "model": cfg.model_name(),
                "config": cfg,
                "timestamp": chrono::Utc::now().to_rfc3339(),
            });
            kept.push(header.to_string());
        }
        let mut body = kept.join("\n");
        body.push('\n');
        write_atomic(path, body.as_bytes())?;
        let file = fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(Self {
            file,
            path: path.to_path_buf(),
        })
    }

    fn record(&mut self, entry: &StepLog) -> Result<()> {
        let line = serde_json::to_string(entry)?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

fn sample_source(test: &ImageFolder, train: &ImageFolder, k: usize) -> Result<Tensor> {
    let folder = if test.is_empty() { train } else { test };
    let idx: Vec<i64> = (0..k.min(folder.len()) as i64).collect();
    Ok(folder.gather(&idx)?.into_tensor())
}

/// Grid with one row per sample: `a, G(a), F(G(a)), b, F(b), G(F(b))`.
pub fn sample_grid(model: &TranslationModel, ds: &UnpairedDataset, k: usize) -> Result<Tensor> {
    let k = k.max(1);
    let a = sample_source(&ds.test_a, &ds.train_a, k)?;
    let b = sample_source(&ds.test_b, &ds.train_b, k)?;
    let n = a.size()[0].min(b.size()[0]);
    let (a, b) = (a.narrow(0, 0, n), b.narrow(0, 0, n));
    Ok(tch::no_grad(|| {
        let ga = model.g.forward_raw(&a);
        let fga = model.f.forward_raw(&ga);
        let fb = model.f.forward_raw(&b);
        let gfb = model.g.forward_raw(&fb);
        let rows = Tensor::cat(&[a, ga, fga, b, fb, gfb], 3);
        let rows: Vec<Tensor> = (0..n).map(|i| rows.get(i)).collect();
        Tensor::cat(&rows, 1)
    }))
}

/// Mean over both test domains of the cycle reconstruction error
/// `|F(G(a)) - a|` and `|G(F(b)) - b|`.
pub fn test_cycle_mae(model: &TranslationModel, ds: &UnpairedDataset) -> Result<f64> {
    let one = |folder: &ImageFolder, first: &crate::models::Generator, second: &crate::models::Generator| {
        let mut sum = 0.0;
        let mut count = 0i64;
        for chunk in folder.chunks(16) {
            let x = chunk?.into_tensor();
            let n = x.size()[0];
            let err = tch::no_grad(|| mean_abs_error(&second.forward_raw(&first.forward_raw(&x)), &x))?;
            sum += err.to_kind(Kind::Double).double_value(&[]) * n as f64;
            count += n;
        }
        if count == 0 {
            return Err(Error::Argument("test folder is empty".into()));
        }
        Ok(sum / count as f64)
    };
    let a = one(&ds.test_a, &model.g, &model.f)?;
    let b = one(&ds.test_b, &model.f, &model.g)?;
    Ok((a + b) / 2.0)
}

pub fn fit(cfg: &TrainConfig) -> Result<TrainState> {
    fit_with(cfg, |_| ControlFlow::Continue(()))
}

/// Runs training to `cfg.epochs`, resuming from the latest checkpoint when
/// `cfg.resume` is set. `after_epoch` runs once a checkpoint is written and
/// can stop the run early.
pub fn fit_with<F>(cfg: &TrainConfig, mut after_epoch: F) -> Result<TrainState>
where
    F: FnMut(&Trainer) -> ControlFlow<()>,
{
    cfg.validate()?;
    let ds = load_dataset(&DatasetSpec {
        root: cfg.data_root.clone(),
        size: cfg.image_size,
    })?;
    let root = &cfg.checkpoint_dir;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut trainer = match latest_checkpoint(root)? {
        Some(dir) if cfg.resume => Trainer::restore(cfg.clone(), &dir)?,
        _ => Trainer::new(cfg.clone())?,
    };
    let resumed = trainer.last_checkpoint().is_some();
    let mut log = TrainLog::open(&root.join(LOG_FILE), cfg, resumed.then_some(trainer.state.global_step))?;
    let samples = root.join(SAMPLES_DIR);
    fs::create_dir_all(&samples).map_err(|e| Error::io(&samples, e))?;

    for epoch in trainer.state.epoch..cfg.epochs {
        trainer.state.epoch = epoch;
        let lr = lr_schedule(epoch, cfg.epochs, cfg.lr)?;
        for batch in ds.epoch(cfg.seed, epoch, cfg.batch_size) {
            let (x, y) = batch?;
            let x = trainer.prepare(x)?;
            let y = trainer.prepare(y)?;
            trainer.train_step(&x, &y, lr)?;
            let entry = *trainer.state.history.last().expect("step recorded");
            if entry.step % cfg.log_every as u64 == 0 {
                log.record(&entry)?;
            }
        }
        trainer.state.epoch = epoch + 1;
        save_checkpoint(&mut trainer, root)?;
        let grid = sample_grid(&trainer.model, &ds, cfg.sample_count)?;
        save_png(&grid, &samples.join(format!("epoch_{epoch:04}.png")))?;
        if after_epoch(&trainer).is_break() {
            break;
        }
    }
    Ok(trainer.state)
}
