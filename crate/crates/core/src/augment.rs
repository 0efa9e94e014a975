//! Load-time augmentation and differentiable augmentation of discriminator
//! inputs.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use tch::{Kind, Tensor};

use crate::batch::ImageBatch;
use crate::error::{Error, Result};
use crate::models::discriminator::resize_bilinear;

/// Mirror along the width axis.
pub fn hflip(x: &Tensor) -> Tensor {
    x.flip([3])
}

/// Resize to `round(1.12 * size)`, crop a random `size` window per image and
/// flip each image horizontally with probability 0.5.
pub fn standard_augment(x: &ImageBatch, size: i64, rng: &mut impl Rng) -> Result<ImageBatch> {
    let big = (size as f64 * 1.12).round() as i64;
    let resized = resize_bilinear(x.tensor(), big);
    let items: Vec<Tensor> = (0..x.batch_size())
        .map(|i| {
            let top = rng.random_range(0..=big - size);
            let left = rng.random_range(0..=big - size);
            let flip = rng.random_bool(0.5);
            let crop = resized.narrow(0, i, 1).narrow(2, top, size).narrow(3, left, size);
            if flip {
                hflip(&crop)
            } else {
                crop
            }
        })
        .collect();
    ImageBatch::new(Tensor::cat(&items, 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugOp {
    Color,
    Translation,
    Cutout,
}

impl AugOp {
    fn name(self) -> &'static str {
        match self {
            AugOp::Color => "color",
            AugOp::Translation => "translation",
            AugOp::Cutout => "cutout",
        }
    }
}

/// Ordered list of augmentations, parsed from e.g. `color,translation,cutout`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffAugPolicy {
    ops: Vec<AugOp>,
}

impl DiffAugPolicy {
    pub fn full() -> Self {
        Self {
            ops: vec![AugOp::Color, AugOp::Translation, AugOp::Cutout],
        }
    }

    pub fn ops(&self) -> &[AugOp] {
        &self.ops
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

impl FromStr for DiffAugPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let ops = s
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| match t {
                "color" => Ok(AugOp::Color),
                "translation" => Ok(AugOp::Translation),
                "cutout" => Ok(AugOp::Cutout),
                other => Err(Error::Config(format!("unknown DiffAug policy token {other:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self { ops })
    }
}

impl fmt::Display for DiffAugPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.ops.iter().map(|o| o.name()).collect();
        f.write_str(&names.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Sampled {
    Color {
        brightness: Vec<f64>,
        saturation: Vec<f64>,
        contrast: Vec<f64>,
    },
    /// Per-image `(dx, dy)`: positive `dx` moves content right.
    Translation(Vec<(i64, i64)>),
    /// Per-image `(top, left)` of the zeroed square.
    Cutout(Vec<(i64, i64)>),
}

/// Concrete per-image transform parameters for one batch.
///
/// Sampling once and applying the result to several batches gives real and
/// generated images the same transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffAugParams {
    steps: Vec<Sampled>,
    size: i64,
}

impl DiffAugParams {
    pub fn sample(policy: &DiffAugPolicy, batch: i64, size: i64, rng: &mut impl Rng) -> Self {
        let n = batch as usize;
        let steps = policy
            .ops
            .iter()
            .map(|op| match op {
                AugOp::Color => {
                    let mut brightness = Vec::with_capacity(n);
                    let mut saturation = Vec::with_capacity(n);
                    let mut contrast = Vec::with_capacity(n);
                    for _ in 0..n {
                        brightness.push(rng.random::<f64>() - 0.5);
                        saturation.push(rng.random::<f64>() * 2.0);
                        contrast.push(rng.random::<f64>() + 0.5);
                    }
                    Sampled::Color {
                        brightness,
                        saturation,
                        contrast,
                    }
                }
                AugOp::Translation => {
                    let m = size / 8;
                    Sampled::Translation(
                        (0..n)
                            .map(|_| (rng.random_range(-m..=m), rng.random_range(-m..=m)))
                            .collect(),
                    )
                }
                AugOp::Cutout => {
                    let h = size / 2;
                    Sampled::Cutout(
                        (0..n)
                            .map(|_| (rng.random_range(0..=size - h), rng.random_range(0..=size - h)))
                            .collect(),
                    )
                }
            })
            .collect();
        Self { steps, size }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let size = x.size();
        if size.len() != 4 || size[2] != self.size || size[3] != self.size {
            return Err(Error::dim(
                format!("(b, c, {0}, {0})", self.size),
                format!("{size:?}"),
            ));
        }
        let mut h = x.shallow_clone();
        for step in &self.steps {
            h = match step {
                Sampled::Color {
                    brightness,
                    saturation,
                    contrast,
                } => color(&h, brightness, saturation, contrast),
                Sampled::Translation(shifts) => translate(&h, shifts),
                Sampled::Cutout(offsets) => &h * cutout_mask(offsets, self.size, h.kind()),
            };
        }
        Ok(h)
    }
}

fn per_image(v: &[f64], kind: Kind) -> Tensor {
    Tensor::from_slice(v).to_kind(kind).view([-1, 1, 1, 1])
}

/// Brightness shift, saturation scale about the per-pixel channel mean, then
/// contrast scale about the per-image mean.
fn color(x: &Tensor, brightness: &[f64], saturation: &[f64], contrast: &[f64]) -> Tensor {
    let k = x.kind();
    let x = x + per_image(brightness, k);
    let m = x.mean_dim(&[1i64][..], true, k);
    let x = (&x - &m) * per_image(saturation, k) + &m;
    let m = x.mean_dim(&[1i64, 2, 3][..], true, k);
    (&x - &m) * per_image(contrast, k) + &m
}

/// Integer shift per image with zero fill: `out[r][c] = in[r - dy][c - dx]`.
pub fn translate(x: &Tensor, shifts: &[(i64, i64)]) -> Tensor {
    let size = x.size();
    let (h, w) = (size[2], size[3]);
    let pad = shifts
        .iter()
        .map(|&(dx, dy)| dx.abs().max(dy.abs()))
        .max()
        .unwrap_or(0);
    let padded = x.constant_pad_nd([pad, pad, pad, pad]);
    let items: Vec<Tensor> = shifts
        .iter()
        .enumerate()
        .map(|(i, &(dx, dy))| {
            padded
                .narrow(0, i as i64, 1)
                .narrow(2, pad - dy, h)
                .narrow(3, pad - dx, w)
        })
        .collect();
    Tensor::cat(&items, 0)
}

/// `(b, 1, size, size)` mask of ones with one `size/2` square of zeros per
/// image at `(top, left)`.
pub fn cutout_mask(offsets: &[(i64, i64)], size: i64, kind: Kind) -> Tensor {
    let half = size / 2;
    let mut mask = vec![1.0f32; offsets.len() * (size * size) as usize];
    for (i, &(top, left)) in offsets.iter().enumerate() {
        let base = i * (size * size) as usize;
        for r in top..top + half {
            for c in left..left + half {
                mask[base + (r * size + c) as usize] = 0.0;
            }
        }
    }
    Tensor::from_slice(&mask)
        .view([offsets.len() as i64, 1, size, size])
        .to_kind(kind)
}

/// Samples fresh parameters and applies the policy.
pub fn diffaug(x: &ImageBatch, policy: &DiffAugPolicy, rng: &mut impl Rng) -> Result<ImageBatch> {
    if policy.is_empty() {
        return Ok(x.clone());
    }
    let params = DiffAugParams::sample(policy, x.batch_size(), x.image_size(), rng);
    ImageBatch::new(params.apply(x.tensor())?)
}
