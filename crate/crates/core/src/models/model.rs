use std::path::Path;

use serde::{Deserialize, Serialize};
use tch::{nn, Device, Kind, Tensor};

use super::checkpoint;
use super::discriminator::{DiscriminatorConfig, SslDiscriminator};
use super::generator::{Generator, GeneratorConfig};
use super::layers::{init_normal, param_count};
use crate::error::{Error, Result};

pub const SUPPORTED_SIZES: [i64; 3] = [64, 128, 256];
pub const MODEL_CONFIG_FILE: &str = "model.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: i64,
    pub generator: GeneratorConfig,
    pub disc_filters: i64,
    pub ssl: bool,
}

impl ModelConfig {
    pub fn new(image_size: i64) -> Self {
        Self {
            image_size,
            generator: GeneratorConfig::default(),
            disc_filters: 64,
            ssl: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_SIZES.contains(&self.image_size) {
            return Err(Error::Config(format!(
                "unsupported image size {}; allowed sizes are {:?}",
                self.image_size, SUPPORTED_SIZES
            )));
        }
        if self.generator.filters < 1 || self.disc_filters < 2 {
            return Err(Error::Config("filter counts must be positive".into()));
        }
        Ok(())
    }

    fn disc(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            image_size: self.image_size,
            filters: self.disc_filters,
            ssl: self.ssl,
        }
    }
}

/// The two generators (`g: X → Y`, `f: Y → X`) and the two discriminators
/// (`dx` judges domain X, `dy` judges domain Y).
///
/// Generator and discriminator parameters live in separate variable stores so
/// each side can be frozen while the other is optimized.
pub struct TranslationModel {
    cfg: ModelConfig,
    pub gen_vs: nn::VarStore,
    pub disc_vs: nn::VarStore,
    pub g: Generator,
    pub f: Generator,
    pub dx: SslDiscriminator,
    pub dy: SslDiscriminator,
}

impl std::fmt::Debug for TranslationModel {
    fn fmt(&self, fmt: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fmt.debug_struct("TranslationModel")
            .field("cfg", &self.cfg)
            .finish_non_exhaustive()
    }
}

/// Builds the default architecture for `image_size`.
pub fn init_model(image_size: i64, seed: u64) -> Result<TranslationModel> {
    TranslationModel::new(ModelConfig::new(image_size), seed)
}

impl TranslationModel {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let gen_vs = nn::VarStore::new(Device::Cpu);
        let disc_vs = nn::VarStore::new(Device::Cpu);
        let g = Generator::new(gen_vs.root() / "g", cfg.generator);
        let f = Generator::new(gen_vs.root() / "f", cfg.generator);
        let dx = SslDiscriminator::new(disc_vs.root() / "dx", cfg.disc())?;
        let dy = SslDiscriminator::new(disc_vs.root() / "dy", cfg.disc())?;
        init_normal(&gen_vs, seed);
        init_normal(&disc_vs, seed);
        Ok(Self {
            cfg,
            gen_vs,
            disc_vs,
            g,
            f,
            dx,
            dy,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn set_kind(&mut self, kind: Kind) {
        self.gen_vs.set_kind(kind);
        self.disc_vs.set_kind(kind);
    }

    pub fn generator_params(&self) -> Vec<(String, Tensor)> {
        sorted(&self.gen_vs)
    }

    pub fn discriminator_params(&self) -> Vec<(String, Tensor)> {
        sorted(&self.disc_vs)
    }

    /// All parameters, sorted by name.
    pub fn named_parameters(&self) -> Vec<(String, Tensor)> {
        let mut all = self.generator_params();
        all.extend(self.discriminator_params());
        all.sort_by(|a, b| a.0.cmp(&b.0));
        all
    }

    pub fn generator_param_count(&self) -> i64 {
        param_count(&self.gen_vs) / 2
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        checkpoint::write_tensors(dir, &self.named_parameters())?;
        let path = dir.join(MODEL_CONFIG_FILE);
        std::fs::write(&path, serde_json::to_vec_pretty(&self.cfg)?)
            .map_err(|e| Error::io(&path, e))
    }

    /// Copies the tensors stored in `dir` into this model, checking that the
    /// stored names and shapes match the architecture exactly.
    pub fn load_weights(&mut self, dir: &Path) -> Result<()> {
        let params = self.named_parameters();
        checkpoint::read_into(dir, &params)
    }

    /// Rebuilds a model from a directory written by [`TranslationModel::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_CONFIG_FILE);
        let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let cfg: ModelConfig = serde_json::from_slice(&raw)?;
        let mut model = Self::new(cfg, 0)?;
        model.load_weights(dir)?;
        Ok(model)
    }
}

fn sorted(vs: &nn::VarStore) -> Vec<(String, Tensor)> {
    let mut v: Vec<_> = vs.variables().into_iter().collect();
    v.sort_by(|a, b| a.0.cmp(&b.0));
    v
}
