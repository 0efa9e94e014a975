use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::config::TrainConfig;
use super::optim::Adam;
use super::pool::ImagePool;
use crate::augment::{standard_augment, DiffAugParams};
use crate::batch::{ImageBatch, RealBatch};
use crate::error::{Error, Result};
use crate::losses::{
    cycle_loss, identity_loss, lsgan_discriminator_loss, lsgan_generator_loss, ssl_reconstruction_loss,
    total_loss, LossBreakdown, LossComponents,
};
use crate::models::checkpoint::{read_into, read_tensors, write_tensors};
use crate::models::discriminator::ssl_targets;
use crate::models::model::MODEL_CONFIG_FILE;
use crate::models::{DiscOutput, ModelConfig, Quadrant, SslDiscriminator, TranslationModel};
use crate::rng::{RngState, RngStream};

pub const STATE_FILE: &str = "state.json";

/// One logged training step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub epoch: usize,
    pub lr: f64,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone)]
struct Streams {
    pool_x: RngStream,
    pool_y: RngStream,
    crop: RngStream,
    diffaug: RngStream,
    augment: RngStream,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct StreamStates {
    pool_x: RngState,
    pool_y: RngState,
    crop: RngState,
    diffaug: RngState,
    augment: RngState,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            pool_x: RngStream::new(seed, "pool.X"),
            pool_y: RngStream::new(seed, "pool.Y"),
            crop: RngStream::new(seed, "ssl.crop"),
            diffaug: RngStream::new(seed, "diffaug"),
            augment: RngStream::new(seed, "augment"),
        }
    }

    fn states(&self) -> StreamStates {
        StreamStates {
            pool_x: self.pool_x.state(),
            pool_y: self.pool_y.state(),
            crop: self.crop.state(),
            diffaug: self.diffaug.state(),
            augment: self.augment.state(),
        }
    }

    fn from_states(s: &StreamStates) -> Self {
        Self {
            pool_x: RngStream::from_state(&s.pool_x),
            pool_y: RngStream::from_state(&s.pool_y),
            crop: RngStream::from_state(&s.crop),
            diffaug: RngStream::from_state(&s.diffaug),
            augment: RngStream::from_state(&s.augment),
        }
    }
}

/// Counters and loss history. Optimizer moments and pool images are stored
/// next to it as tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Epoch being trained; after a checkpoint, the next epoch to train.
    pub epoch: usize,
    pub global_step: u64,
    pub history: Vec<StepLog>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateFile {
    model: String,
    state: TrainState,
    gen_adam_steps: u64,
    disc_adam_steps: u64,
    rng: StreamStates,
    config: TrainConfig,
}

/// Models, optimizers, image pools and random streams of one training run.
pub struct Trainer {
    cfg: TrainConfig,
    pub model: TranslationModel,
    gen_opt: Adam,
    disc_opt: Adam,
    /// Generated domain-X images, for `dx`.
    pool_x: ImagePool,
    /// Generated domain-Y images, for `dy`.
    pool_y: ImagePool,
    rng: Streams,
    pub state: TrainState,
    last_checkpoint: Option<PathBuf>,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("model", &self.cfg.model_name())
            .field("epoch", &self.state.epoch)
            .field("global_step", &self.state.global_step)
            .finish_non_exhaustive()
    }
}

fn diffaug_apply(p: &Option<DiffAugParams>, t: &Tensor) -> Result<Tensor> {
    match p {
        Some(p) => p.apply(t),
        None => Ok(t.shallow_clone()),
    }
}

fn ssl_term(d: &SslDiscriminator, out: &DiscOutput, real: &RealBatch, q: Quadrant) -> Result<Tensor> {
    let (target_full, target_part) = ssl_targets(real, q);
    let full = d.decode_full(&out.f_full)?;
    let part = d.decode_part(&out.f_part, q)?;
    ssl_reconstruction_loss(full.tensor(), &target_full, part.tensor(), &target_part)
}

fn scalar(t: &Tensor) -> f64 {
    t.double_value(&[])
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let model = TranslationModel::new(cfg.model_config(), cfg.seed)?;
        let gen_opt = Adam::new(model.generator_params(), cfg.beta1, cfg.beta2);
        let disc_opt = Adam::new(model.discriminator_params(), cfg.beta1, cfg.beta2);
        Ok(Self {
            pool_x: ImagePool::new(cfg.pool_size),
            pool_y: ImagePool::new(cfg.pool_size),
            rng: Streams::new(cfg.seed),
            state: TrainState::default(),
            last_checkpoint: None,
            cfg,
            model,
            gen_opt,
            disc_opt,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn last_checkpoint(&self) -> Option<&Path> {
        self.last_checkpoint.as_deref()
    }

    /// Load-time augmentation of a training batch, when enabled.
    pub fn prepare(&mut self, batch: RealBatch) -> Result<RealBatch> {
        if !self.cfg.augment {
            return Ok(batch);
        }
        let size = self.cfg.image_size;
        let rng = &mut self.rng.augment;
        batch.map(|b| standard_augment(b, size, rng))
    }

    fn diverged(&self) -> Error {
        Error::Diverged {
            step: self.state.global_step,
            last_checkpoint: self.last_checkpoint.clone(),
        }
    }

    fn check_batch(&self, b: &RealBatch, other: &RealBatch) -> Result<()> {
        let s = self.cfg.image_size;
        let shape = b.images().shape();
        if shape[2] != s || shape != other.images().shape() {
            return Err(Error::dim(
                format!("two (b, 3, {s}, {s}) batches of equal size"),
                format!("{shape:?} and {:?}", other.images().shape()),
            ));
        }
        Ok(())
    }

    /// One generator update followed by one discriminator update.
    ///
    /// DiffAug parameters are drawn once per discriminator and shared by every
    /// input that discriminator sees in this step, in both phases.
    pub fn train_step(&mut self, x: &RealBatch, y: &RealBatch, lr: f64) -> Result<LossBreakdown> {
        self.check_batch(x, y)?;
        let size = self.cfg.image_size;
        let batch = x.images().batch_size();
        let w = self.cfg.loss_weights();
        let policy = &self.cfg.diffaug;
        let (aug_x, aug_y) = if policy.is_empty() {
            (None, None)
        } else {
            (
                Some(DiffAugParams::sample(policy, batch, size, &mut self.rng.diffaug)),
                Some(DiffAugParams::sample(policy, batch, size, &mut self.rng.diffaug)),
            )
        };
        let (xt, yt) = (x.images().tensor(), y.images().tensor());

        // generators, with the discriminators frozen
        self.model.disc_vs.freeze();
        self.gen_opt.zero_grad();
        let m = &self.model;
        let phase1 = (|| -> Result<_> {
            let fake_y = m.g.forward_raw(xt);
            let fake_x = m.f.forward_raw(yt);
            let adv_g = lsgan_generator_loss(&m.dy.forward_raw(&diffaug_apply(&aug_y, &fake_y)?).logits)?;
            let adv_f = lsgan_generator_loss(&m.dx.forward_raw(&diffaug_apply(&aug_x, &fake_x)?).logits)?;
            let cyc = cycle_loss(xt, &m.f.forward_raw(&fake_y), yt, &m.g.forward_raw(&fake_x))?;
            let id = identity_loss(xt, &m.f.forward_raw(xt), yt, &m.g.forward_raw(yt))?;
            Ok((fake_x, fake_y, adv_g, adv_f, cyc, id))
        })();
        self.model.disc_vs.unfreeze();
        let (fake_x, fake_y, adv_g, adv_f, cyc, id) = phase1?;
        let gen_objective = &adv_g + &adv_f + &cyc * w.lambda_cyc + &id * w.lambda_id;
        if !scalar(&gen_objective).is_finite() {
            return Err(self.diverged());
        }
        gen_objective.backward();
        self.gen_opt.step(lr);

        // discriminators, on pooled fakes and real samples
        let m = &self.model;
        self.disc_opt.zero_grad();
        let pooled_x = self.pool_x.query(&ImageBatch::new(fake_x.detach())?, &mut self.rng.pool_x)?;
        let pooled_y = self.pool_y.query(&ImageBatch::new(fake_y.detach())?, &mut self.rng.pool_y)?;
        let real_x = x.map(|b| ImageBatch::new(diffaug_apply(&aug_x, b.tensor())?))?;
        let real_y = y.map(|b| ImageBatch::new(diffaug_apply(&aug_y, b.tensor())?))?;
        let out_real_x = m.dx.forward_raw(real_x.images().tensor());
        let out_real_y = m.dy.forward_raw(real_y.images().tensor());
        let out_fake_x = m.dx.forward_raw(&diffaug_apply(&aug_x, pooled_x.tensor())?);
        let out_fake_y = m.dy.forward_raw(&diffaug_apply(&aug_y, pooled_y.tensor())?);
        let adv_dx = lsgan_discriminator_loss(&out_real_x.logits, &out_fake_x.logits)?;
        let adv_dy = lsgan_discriminator_loss(&out_real_y.logits, &out_fake_y.logits)?;
        let mut disc_objective = &adv_dx + &adv_dy;
        let (mut ssl_dx, mut ssl_dy) = (0.0, 0.0);
        if self.cfg.ssl {
            let qx = Quadrant::sample(&mut self.rng.crop);
            let qy = Quadrant::sample(&mut self.rng.crop);
            let lx = ssl_term(&m.dx, &out_real_x, &real_x, qx)?;
            let ly = ssl_term(&m.dy, &out_real_y, &real_y, qy)?;
            ssl_dx = scalar(&lx);
            ssl_dy = scalar(&ly);
            disc_objective += (lx + ly) * w.lambda_ssl;
        }
        if !scalar(&disc_objective).is_finite() {
            return Err(self.diverged());
        }
        disc_objective.backward();
        self.disc_opt.step(lr);

        let breakdown = total_loss(
            &LossComponents {
                adv_g: scalar(&adv_g),
                adv_f: scalar(&adv_f),
                adv_dx: scalar(&adv_dx),
                adv_dy: scalar(&adv_dy),
                ssl_dx,
                ssl_dy,
                cyc: scalar(&cyc),
                id: scalar(&id),
            },
            &w,
        )
        .map_err(|_| self.diverged())?;
        self.state.history.push(StepLog {
            step: self.state.global_step,
            epoch: self.state.epoch,
            lr,
            losses: breakdown,
        });
        self.state.global_step += 1;
        Ok(breakdown)
    }

    fn pool_tensors(&self) -> Vec<(String, Tensor)> {
        let named = |prefix: &str, pool: &ImagePool| -> Vec<(String, Tensor)> {
            pool.images()
                .iter()
                .enumerate()
                .map(|(i, t)| (format!("{prefix}.{i:04}"), t.shallow_clone()))
                .collect()
        };
        let mut out = named("x", &self.pool_x);
        out.extend(named("y", &self.pool_y));
        out
    }

    fn optim_tensors(&self) -> Vec<(String, Tensor)> {
        let prefixed = |prefix: &str, opt: &Adam| -> Vec<(String, Tensor)> {
            opt.state_tensors()
                .into_iter()
                .map(|(n, t)| (format!("{prefix}.{n}"), t))
                .collect()
        };
        let mut out = prefixed("gen", &self.gen_opt);
        out.extend(prefixed("disc", &self.disc_opt));
        out
    }

    /// Writes the full training state into `dir`: model tensors and
    /// `model.json` at the top level, `optim/`, `pool/` and `state.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.model.save(dir)?;
        write_tensors(&dir.join("optim"), &self.optim_tensors())?;
        write_tensors(&dir.join("pool"), &self.pool_tensors())?;
        let file = StateFile {
            model: self.cfg.model_name().to_string(),
            state: self.state.clone(),
            gen_adam_steps: self.gen_opt.steps_taken(),
            disc_adam_steps: self.disc_opt.steps_taken(),
            rng: self.rng.states(),
            config: self.cfg.clone(),
        };
        let path = dir.join(STATE_FILE);
        fs::write(&path, serde_json::to_vec_pretty(&file)?).map_err(|e| Error::io(&path, e))
    }

    /// Restores a run saved by [`Trainer::save`]. The stored model
    /// architecture must match `cfg`.
    pub fn restore(cfg: TrainConfig, dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_CONFIG_FILE);
        let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let stored: ModelConfig = serde_json::from_slice(&raw)?;
        if stored != cfg.model_config() {
            return Err(Error::checkpoint(
                dir,
                format!("model {stored:?} does not match config {:?}", cfg.model_config()),
            ));
        }
        let path = dir.join(STATE_FILE);
        let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let file: StateFile = serde_json::from_slice(&raw)?;

        let mut t = Self::new(cfg)?;
        t.model.load_weights(dir)?;
        read_into(&dir.join("optim"), &t.optim_tensors())?;
        t.gen_opt.set_steps(file.gen_adam_steps);
        t.disc_opt.set_steps(file.disc_adam_steps);
        let pools = read_tensors(&dir.join("pool"))?;
        let take = |prefix: &str| -> Vec<Tensor> {
            pools
                .iter()
                .filter(|(n, _)| n.split('.').next() == Some(prefix))
                .map(|(_, s)| s.to_tensor())
                .collect()
        };
        t.pool_x = ImagePool::from_images(t.cfg.pool_size, take("x"));
        t.pool_y = ImagePool::from_images(t.cfg.pool_size, take("y"));
        t.rng = Streams::from_states(&file.rng);
        t.state = file.state;
        t.last_checkpoint = Some(dir.to_path_buf());
        Ok(t)
    }

    pub(crate) fn set_last_checkpoint(&mut self, dir: PathBuf) {
        self.last_checkpoint = Some(dir);
    }
}
