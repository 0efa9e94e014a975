//! ResNet translation generator.
//!
//! Layout (for `filters = 64`):
//!
//! | layer        | op                                   | channels |
//! |--------------|--------------------------------------|----------|
//! | stem         | reflect-pad 3, conv 7x7 s1           | 3 → 64   |
//! | down.0       | conv 3x3 s2                          | 64 → 128 |
//! | down.1       | conv 3x3 s2                          | 128 → 256|
//! | block.i (×9) | reflect-pad 1, conv 3x3, ×2 + skip   | 256      |
//! | up.0         | transposed conv 3x3 s2               | 256 → 128|
//! | up.1         | transposed conv 3x3 s2               | 128 → 64 |
//! | head         | reflect-pad 3, conv 7x7 s1, tanh     | 64 → 3   |
//!
//! Every convolution except the head is followed by instance normalization
//! and ReLU (the second convolution of a residual block has no ReLU).

use serde::{Deserialize, Serialize};
use tch::{nn, nn::Module, Tensor};

use super::layers::{conv, instance_norm, reflect_pad, up_conv};
use crate::batch::ImageBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub filters: i64,
    pub res_blocks: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            filters: 64,
            res_blocks: 9,
        }
    }
}

#[derive(Debug)]
struct ResBlock {
    conv1: nn::Conv2D,
    conv2: nn::Conv2D,
}

impl ResBlock {
    fn new(p: nn::Path, channels: i64) -> Self {
        Self {
            conv1: conv(&p / "conv1", channels, channels, 3, 1, 0),
            conv2: conv(&p / "conv2", channels, channels, 3, 1, 0),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let y = instance_norm(&self.conv1.forward(&reflect_pad(x, 1))).relu();
        let y = instance_norm(&self.conv2.forward(&reflect_pad(&y, 1)));
        x + y
    }
}

#[derive(Debug)]
pub struct Generator {
    stem: nn::Conv2D,
    down: [nn::Conv2D; 2],
    blocks: Vec<ResBlock>,
    up: [nn::ConvTranspose2D; 2],
    head: nn::Conv2D,
}

impl Generator {
    pub fn new(p: nn::Path, cfg: GeneratorConfig) -> Self {
        let f = cfg.filters;
        let down = &p / "down";
        let up = &p / "up";
        let blocks = &p / "block";
        Self {
            stem: conv(&p / "stem", 3, f, 7, 1, 0),
            down: [
                conv(&down / "0", f, 2 * f, 3, 2, 1),
                conv(&down / "1", 2 * f, 4 * f, 3, 2, 1),
            ],
            blocks: (0..cfg.res_blocks)
                .map(|i| ResBlock::new(&blocks / i, 4 * f))
                .collect(),
            up: [
                up_conv(&up / "0", 4 * f, 2 * f),
                up_conv(&up / "1", 2 * f, f),
            ],
            head: conv(&p / "head", f, 3, 7, 1, 0),
        }
    }

    /// Unchecked tensor-level forward pass.
    pub fn forward_raw(&self, x: &Tensor) -> Tensor {
        let mut h = instance_norm(&self.stem.forward(&reflect_pad(x, 3))).relu();
        for d in &self.down {
            h = instance_norm(&d.forward(&h)).relu();
        }
        for b in &self.blocks {
            h = b.forward(&h);
        }
        for u in &self.up {
            h = instance_norm(&u.forward(&h)).relu();
        }
        self.head.forward(&reflect_pad(&h, 3)).tanh()
    }

    pub fn forward(&self, x: &ImageBatch) -> Result<ImageBatch> {
        let s = x.image_size();
        if s % 4 != 0 || s < 4 {
            return Err(Error::dim(
                "spatial size divisible by 4",
                format!("{:?}", x.shape()),
            ));
        }
        let y = self.forward_raw(x.tensor());
        debug_assert_eq!(y.size(), x.shape());
        ImageBatch::new(y)
    }
}
