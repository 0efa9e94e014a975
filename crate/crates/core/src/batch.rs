use tch::Tensor;

use crate::error::{Error, Result};

/// A batch of square RGB images laid out as `(batch, 3, size, size)`.
///
/// Decoded images live in `[-1, 1]`; intermediate results such as
/// augmented discriminator inputs may leave that interval, so the range is
/// checked explicitly with [`ImageBatch::check_range`] where it matters.
#[derive(Debug)]
pub struct ImageBatch(Tensor);

impl ImageBatch {
    pub fn new(t: Tensor) -> Result<Self> {
        let size = t.size();
        if size.len() != 4 || size[1] != 3 || size[2] != size[3] || size[0] < 1 {
            return Err(Error::dim("(b>=1, 3, s, s)", format!("{size:?}")));
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn batch_size(&self) -> i64 {
        self.0.size()[0]
    }

    pub fn image_size(&self) -> i64 {
        self.0.size()[2]
    }

    pub fn shape(&self) -> Vec<i64> {
        self.0.size()
    }

    /// Every element lies in `[-1, 1]`.
    pub fn check_range(&self) -> Result<()> {
        let lo = self.0.min().double_value(&[]);
        let hi = self.0.max().double_value(&[]);
        if lo.is_nan() || hi.is_nan() || lo < -1.0 || hi > 1.0 {
            return Err(Error::Argument(format!(
                "image values outside [-1, 1]: min {lo}, max {hi}"
            )));
        }
        Ok(())
    }

    pub fn require_divisible(&self, by: i64) -> Result<()> {
        let s = self.image_size();
        if s % by != 0 {
            return Err(Error::dim(
                format!("spatial size divisible by {by}"),
                format!("{s}"),
            ));
        }
        Ok(())
    }

    pub fn detach(&self) -> Self {
        Self(self.0.detach())
    }
}

impl Clone for ImageBatch {
    fn clone(&self) -> Self {
        Self(self.0.shallow_clone())
    }
}

/// Images drawn from a dataset, never produced by a generator.
///
/// Self-supervised reconstruction targets are only built from this type, which
/// keeps generated images out of the discriminator's auxiliary loss.
#[derive(Debug, Clone)]
pub struct RealBatch(ImageBatch);

impl RealBatch {
    pub fn from_dataset(batch: ImageBatch) -> Self {
        Self(batch)
    }

    pub fn images(&self) -> &ImageBatch {
        &self.0
    }

    /// Applies an image transform; the result still counts as real data.
    pub fn map(&self, f: impl FnOnce(&ImageBatch) -> Result<ImageBatch>) -> Result<Self> {
        f(&self.0).map(Self)
    }
}
