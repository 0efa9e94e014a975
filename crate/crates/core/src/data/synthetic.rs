//! Two-domain synthetic tasks with a known ground-truth translation.
//!
//! Domain A images are random anti-aliased shapes on a gray background with
//! additive Gaussian noise. Domain B images come from a disjoint content
//! stream, passed through the task's oracle map, so the domains share a
//! content family but are never paired.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use image::RgbImage;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tch::Tensor;

use super::codec::from_unit;
use super::dataset::{DatasetSpec, SUBFOLDERS};
use crate::batch::ImageBatch;
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const NOISE_STD: f64 = 0.02;
pub const MANIFEST_FILE: &str = "manifest.json";
const STRIPE_AMPLITUDE: f64 = 0.2;
const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ChannelSwap,
    Stripes,
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "channel-swap" => Ok(TaskKind::ChannelSwap),
            "stripes" => Ok(TaskKind::Stripes),
            other => Err(Error::Config(format!(
                "unknown task {other:?}; expected channel-swap or stripes"
            ))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::ChannelSwap => "channel-swap",
            TaskKind::Stripes => "stripes",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub n_train: usize,
    pub n_test: usize,
    pub size: i64,
    pub seed: u64,
}

/// Sinusoidal stripe field `amplitude * sin(2 pi t / period + phase)`, where
/// `t` is the row index for horizontal stripes and the column for vertical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StripeParams {
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
}

impl StripeParams {
    fn field(&self, t: i64) -> f64 {
        self.amplitude * (2.0 * PI * t as f64 / self.period + self.phase).sin()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub task: TaskKind,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub size: i64,
    /// Stripe parameters per file (`trainA/0000.png`), stripes task only.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub stripes: BTreeMap<String, StripeParams>,
}

impl Manifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let raw = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_slice(&raw)?)
    }

    /// Stripe parameters of a dataset file, given relative to the root.
    pub fn stripe_params(&self, rel: &str) -> Result<StripeParams> {
        self.stripes
            .get(rel)
            .copied()
            .ok_or_else(|| Error::UnsupportedOracle(format!("no stripe parameters recorded for {rel}")))
    }
}

/// Ground-truth A → B map of a synthetic task.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// `(R, G, B) → (G, B, R)`.
    ChannelSwap,
    /// Per-image parameters of the horizontal field to replace with a vertical one.
    Stripes(Vec<StripeParams>),
}

/// Rotates channels so that output channel `c` is input channel `c + 1 mod 3`.
pub fn rotate_channels(x: &Tensor) -> Tensor {
    x.index_select(1, &Tensor::from_slice(&[1i64, 2, 0]))
}

fn stripe_field(p: &StripeParams, size: i64, vertical: bool) -> Tensor {
    let values: Vec<f32> = (0..size * size)
        .map(|i| {
            let t = if vertical { i % size } else { i / size };
            p.field(t) as f32
        })
        .collect();
    Tensor::from_slice(&values).view([1, 1, size, size])
}

pub fn oracle_translate(oracle: &Oracle, x: &ImageBatch) -> Result<ImageBatch> {
    match oracle {
        Oracle::ChannelSwap => ImageBatch::new(rotate_channels(x.tensor())),
        Oracle::Stripes(params) => {
            if params.len() as i64 != x.batch_size() {
                return Err(Error::UnsupportedOracle(format!(
                    "stripe parameters for {} images, batch has {}",
                    params.len(),
                    x.batch_size()
                )));
            }
            let s = x.image_size();
            let k = x.tensor().kind();
            let delta: Vec<Tensor> = params
                .iter()
                .map(|p| (stripe_field(p, s, true) - stripe_field(p, s, false)).to_kind(k))
                .collect();
            ImageBatch::new(x.tensor() + Tensor::cat(&delta, 0))
        }
    }
}

/// Channel-major `(3, s, s)` image in `[-1, 1]` with 2-5 shapes and noise.
///
/// Shape colors lean red so that the channel rotation changes the color
/// distribution (to blue-leaning).
pub fn render_content(rng: &mut impl Rng, size: usize) -> Vec<f64> {
    let mut img = vec![0.0f64; 3 * size * size];
    let n_shapes = rng.random_range(2..=5);
    let s = size as f64;
    for _ in 0..n_shapes {
        let ellipse = rng.random_bool(0.5);
        let cx = rng.random_range(0.1..0.9) * s;
        let cy = rng.random_range(0.1..0.9) * s;
        let ax = rng.random_range(0.08..0.3) * s;
        let ay = rng.random_range(0.08..0.3) * s;
        let angle = rng.random_range(0.0..PI);
        let color = [
            rng.random_range(0.2..0.7),
            rng.random_range(-0.7..0.1),
            rng.random_range(-0.5..0.3),
        ];
        let (sin, cos) = angle.sin_cos();
        let inside = |px: f64, py: f64| {
            let dx = px - cx;
            let dy = py - cy;
            let u = (dx * cos + dy * sin) / ax;
            let v = (-dx * sin + dy * cos) / ay;
            if ellipse {
                u * u + v * v <= 1.0
            } else {
                u.abs() <= 1.0 && v.abs() <= 1.0
            }
        };
        for r in 0..size {
            for c in 0..size {
                let mut hits = 0;
                for i in 0..SUPERSAMPLE {
                    for j in 0..SUPERSAMPLE {
                        let py = r as f64 + (i as f64 + 0.5) / SUPERSAMPLE as f64;
                        let px = c as f64 + (j as f64 + 0.5) / SUPERSAMPLE as f64;
                        hits += usize::from(inside(px, py));
                    }
                }
                if hits == 0 {
                    continue;
                }
                let cover = hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64;
                for (ch, &col) in color.iter().enumerate() {
                    let v = &mut img[ch * size * size + r * size + c];
                    *v = col * cover + *v * (1.0 - cover);
                }
            }
        }
    }
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    for v in &mut img {
        *v += noise.sample(rng);
    }
    img
}

fn add_stripes(img: &mut [f64], size: usize, p: &StripeParams, vertical: bool) {
    for ch in 0..3 {
        for r in 0..size {
            for c in 0..size {
                let t = if vertical { c } else { r };
                img[ch * size * size + r * size + c] += p.field(t as i64);
            }
        }
    }
}

fn to_rgb(img: &[f64], size: usize) -> RgbImage {
    let mut out = RgbImage::new(size as u32, size as u32);
    for r in 0..size {
        for c in 0..size {
            let px = [0, 1, 2].map(|ch| from_unit(img[ch * size * size + r * size + c] as f32));
            out.put_pixel(c as u32, r as u32, image::Rgb(px));
        }
    }
    out
}

/// Image `i` of a domain and split. Each image has its own content stream;
/// domain B content is put through the oracle.
fn render(task: &SyntheticTask, domain: char, split: &str, i: usize) -> (Vec<f64>, Option<StripeParams>) {
    let size = task.size as usize;
    let mut rng = RngStream::new(task.seed, &format!("content.{domain}.{split}.{i}"));
    let mut img = render_content(&mut rng, size);
    match task.kind {
        TaskKind::ChannelSwap => {
            if domain == 'B' {
                let plane = size * size;
                let rotated: Vec<f64> = (0..3)
                    .flat_map(|ch| img[((ch + 1) % 3) * plane..((ch + 1) % 3 + 1) * plane].to_vec())
                    .collect();
                img = rotated;
            }
            (img, None)
        }
        TaskKind::Stripes => {
            let p = StripeParams {
                amplitude: STRIPE_AMPLITUDE,
                period: rng.random_range(6.0..12.0),
                phase: rng.random_range(0.0..2.0 * PI),
            };
            add_stripes(&mut img, size, &p, domain == 'B');
            (img, Some(p))
        }
    }
}

fn is_non_empty_dir(path: &Path) -> Result<bool> {
    if !path.exists() {
        return Ok(false);
    }
    let mut entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
    Ok(entries.next().is_some())
}

/// Writes the PNG tree and `manifest.json` under `out`.
pub fn generate_synthetic(task: &SyntheticTask, out: &Path, overwrite: bool) -> Result<DatasetSpec> {
    if !crate::models::SUPPORTED_SIZES.contains(&task.size) {
        return Err(Error::Config(format!(
            "unsupported image size {}; allowed sizes are {:?}",
            task.size,
            crate::models::SUPPORTED_SIZES
        )));
    }
    if is_non_empty_dir(out)? {
        if !overwrite {
            return Err(Error::Argument(format!(
                "output directory {} is not empty (use overwrite to replace it)",
                out.display()
            )));
        }
        for sub in SUBFOLDERS {
            let dir = out.join(sub);
            if dir.exists() {
                std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            }
        }
    }
    let mut stripes = BTreeMap::new();
    for sub in SUBFOLDERS {
        let dir = out.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (split, domain) = sub.split_at(sub.len() - 1);
        let domain = domain.chars().next().expect("suffix");
        let n = if split == "train" { task.n_train } else { task.n_test };
        for i in 0..n {
            let (img, params) = render(task, domain, split, i);
            let name = format!("{i:04}.png");
            let path = dir.join(&name);
            to_rgb(&img, task.size as usize)
                .save(&path)
                .map_err(|e| Error::Decode {
                    path: path.clone(),
                    message: e.to_string(),
                })?;
            if let Some(p) = params {
                stripes.insert(format!("{sub}/{name}"), p);
            }
        }
    }
    let manifest = Manifest {
        task: task.kind,
        seed: task.seed,
        n_train: task.n_train,
        n_test: task.n_test,
        size: task.size,
        stripes,
    };
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(DatasetSpec {
        root: out.to_path_buf(),
        size: task.size,
    })
}
