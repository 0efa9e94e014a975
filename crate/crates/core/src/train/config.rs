use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::DiffAugPolicy;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::models::{GeneratorConfig, ModelConfig};

/// Training configuration, read from `key = value` lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub data_root: PathBuf,
    pub image_size: i64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_cyc: f64,
    pub lambda_id: f64,
    pub lambda_ssl: f64,
    pub ssl: bool,
    /// Comma-separated ops, or empty for no DiffAug.
    #[serde(with = "policy_string")]
    pub diffaug: DiffAugPolicy,
    pub pool_size: usize,
    pub seed: u64,
    pub checkpoint_dir: PathBuf,
    pub log_every: usize,
    /// Random resize-crop and flip of training batches.
    pub augment: bool,
    pub resume: bool,
    /// Checkpoints kept on disk; older ones are deleted.
    pub keep_checkpoints: usize,
    /// Test images per domain in the per-epoch sample grid.
    pub sample_count: usize,
    pub gen_filters: i64,
    pub res_blocks: usize,
    pub disc_filters: i64,
}

mod policy_string {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &DiffAugPolicy, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&super::policy_value(p))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<DiffAugPolicy, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_policy(&s).map_err(serde::de::Error::custom)
    }
}

fn policy_value(p: &DiffAugPolicy) -> String {
    if p.is_empty() {
        "off".into()
    } else {
        p.to_string()
    }
}

fn parse_policy(s: &str) -> Result<DiffAugPolicy> {
    match s.trim() {
        "off" | "none" | "" => Ok(DiffAugPolicy::default()),
        "on" | "full" => Ok(DiffAugPolicy::full()),
        other => other.parse(),
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            image_size: 64,
            epochs: 200,
            batch_size: 8,
            lr: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            lambda_cyc: 10.0,
            lambda_id: 0.5,
            lambda_ssl: 1.0,
            ssl: true,
            diffaug: DiffAugPolicy::default(),
            pool_size: 50,
            seed: 0,
            checkpoint_dir: PathBuf::from("checkpoints"),
            log_every: 1,
            augment: true,
            resume: true,
            keep_checkpoints: 1,
            sample_count: 4,
            gen_filters: 64,
            res_blocks: 9,
            disc_filters: 64,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("invalid value {value:?} for `{key}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for `{key}`: expected on/off"))),
    }
}

impl TrainConfig {
    /// Parses `key = value` lines over the defaults. Blank lines and `#`
    /// comments are skipped; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "data_root" => self.data_root = PathBuf::from(v),
            "image_size" => self.image_size = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "beta1" => self.beta1 = parse_value(key, v)?,
            "beta2" => self.beta2 = parse_value(key, v)?,
            "lambda_cyc" => self.lambda_cyc = parse_value(key, v)?,
            "lambda_id" => self.lambda_id = parse_value(key, v)?,
            "lambda_ssl" => self.lambda_ssl = parse_value(key, v)?,
            "ssl" => self.ssl = parse_bool(key, v)?,
            "diffaug" => self.diffaug = parse_policy(v)?,
            "pool_size" => self.pool_size = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "checkpoint_dir" => self.checkpoint_dir = PathBuf::from(v),
            "log_every" => self.log_every = parse_value(key, v)?,
            "augment" => self.augment = parse_bool(key, v)?,
            "resume" => self.resume = parse_bool(key, v)?,
            "keep_checkpoints" => self.keep_checkpoints = parse_value(key, v)?,
            "sample_count" => self.sample_count = parse_value(key, v)?,
            "gen_filters" => self.gen_filters = parse_value(key, v)?,
            "res_blocks" => self.res_blocks = parse_value(key, v)?,
            "disc_filters" => self.disc_filters = parse_value(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1");
        }
        if self.lr.is_nan() || self.lr <= 0.0 || !self.lr.is_finite() {
            return fail("lr must be > 0");
        }
        if self.epochs < 1 {
            return fail("epochs must be >= 1");
        }
        if self.log_every < 1 {
            return fail("log_every must be >= 1");
        }
        if self.keep_checkpoints < 1 {
            return fail("keep_checkpoints must be >= 1");
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        for (name, w) in [
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_id", self.lambda_id),
            ("lambda_ssl", self.lambda_ssl),
        ] {
            if w.is_nan() || w < 0.0 || !w.is_finite() {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        self.model_config().validate()
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            image_size: self.image_size,
            generator: GeneratorConfig {
                filters: self.gen_filters,
                res_blocks: self.res_blocks,
            },
            disc_filters: self.disc_filters,
            ssl: self.ssl,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda_cyc: self.lambda_cyc,
            lambda_id: self.lambda_id,
            lambda_ssl: self.lambda_ssl,
        }
    }

    /// Model family name recorded in logs.
    pub fn model_name(&self) -> &'static str {
        match (self.ssl, self.diffaug.is_empty()) {
            (true, true) => "scgan",
            (false, true) => "cyclegan-baseline",
            (false, false) => "cyclegan-diffaug",
            (true, false) => "scgan-diffaug",
        }
    }

    /// Every field as a `key = value` line, in a form [`TrainConfig::parse`] accepts.
    pub fn to_kv_string(&self) -> String {
        let onoff = |b: bool| if b { "on" } else { "off" };
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("data_root", self.data_root.display().to_string());
        line("image_size", self.image_size.to_string());
        line("epochs", self.epochs.to_string());
        line("batch_size", self.batch_size.to_string());
        line("lr", self.lr.to_string());
        line("beta1", self.beta1.to_string());
        line("beta2", self.beta2.to_string());
        line("lambda_cyc", self.lambda_cyc.to_string());
        line("lambda_id", self.lambda_id.to_string());
        line("lambda_ssl", self.lambda_ssl.to_string());
        line("ssl", onoff(self.ssl).into());
        line("diffaug", policy_value(&self.diffaug));
        line("pool_size", self.pool_size.to_string());
        line("seed", self.seed.to_string());
        line("checkpoint_dir", self.checkpoint_dir.display().to_string());
        line("log_every", self.log_every.to_string());
        line("augment", onoff(self.augment).into());
        line("resume", onoff(self.resume).into());
        line("keep_checkpoints", self.keep_checkpoints.to_string());
        line("sample_count", self.sample_count.to_string());
        line("gen_filters", self.gen_filters.to_string());
        line("res_blocks", self.res_blocks.to_string());
        line("disc_filters", self.disc_filters.to_string());
        s
    }
}
