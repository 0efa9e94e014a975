use rand::Rng;
use tch::Tensor;

use crate::batch::ImageBatch;
use crate::error::Result;

/// History of generated images shown to a discriminator.
///
/// Until the pool is full each incoming image is stored and returned. Once
/// full, each incoming image is swapped with a random stored one with
/// probability 0.5 (the stored one is returned), and otherwise passed through.
#[derive(Debug)]
pub struct ImagePool {
    capacity: usize,
    images: Vec<Tensor>,
}

impl ImagePool {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            images: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Stored images, each `(3, s, s)`.
    pub fn images(&self) -> &[Tensor] {
        &self.images
    }

    pub fn from_images(capacity: usize, images: Vec<Tensor>) -> Self {
        Self { capacity, images }
    }

    pub fn query(&mut self, fresh: &ImageBatch, rng: &mut impl Rng) -> Result<ImageBatch> {
        let fresh = fresh.detach();
        if self.capacity == 0 {
            return Ok(fresh);
        }
        let out: Vec<Tensor> = (0..fresh.batch_size())
            .map(|i| {
                let img = fresh.tensor().get(i).copy();
                if self.images.len() < self.capacity {
                    self.images.push(img.shallow_clone());
                    img
                } else if rng.random::<f64>() < 0.5 {
                    let j = rng.random_range(0..self.capacity);
                    std::mem::replace(&mut self.images[j], img)
                } else {
                    img
                }
            })
            .collect();
        ImageBatch::new(Tensor::stack(&out, 0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use tch::{Device, Kind};

    fn images(values: &[f64]) -> ImageBatch {
        let items: Vec<Tensor> = values
            .iter()
            .map(|&v| Tensor::full([3, 4, 4], v, (Kind::Float, Device::Cpu)))
            .collect();
        ImageBatch::new(Tensor::stack(&items, 0)).unwrap()
    }

    fn ids(b: &ImageBatch) -> Vec<f64> {
        (0..b.batch_size()).map(|i| b.tensor().double_value(&[i, 0, 0, 0])).collect()
    }

    #[test]
    fn zero_capacity_passes_through() {
        let mut pool = ImagePool::new(0);
        let mut rng = RngStream::new(0, "pool");
        let x = images(&[1.0, 2.0]);
        assert_eq!(ids(&pool.query(&x, &mut rng).unwrap()), vec![1.0, 2.0]);
        assert!(pool.is_empty());
    }

    #[test]
    fn fill_phase_returns_fresh_and_stores() {
        let mut pool = ImagePool::new(3);
        let mut rng = RngStream::new(0, "pool");
        assert_eq!(ids(&pool.query(&images(&[1.0, 2.0]), &mut rng).unwrap()), vec![1.0, 2.0]);
        assert_eq!(ids(&pool.query(&images(&[3.0]), &mut rng).unwrap()), vec![3.0]);
        assert_eq!(pool.len(), 3);
    }

    #[test]
    fn swap_returns_stored_image() {
        let mut pool = ImagePool::new(2);
        let mut rng = RngStream::new(0, "pool");
        pool.query(&images(&[1.0, 2.0]), &mut rng).unwrap();
        // replay the stream to predict each decision
        let mut trace = rng.clone();
        let out = ids(&pool.query(&images(&[10.0, 11.0, 12.0, 13.0]), &mut rng).unwrap());
        let mut stored = vec![1.0, 2.0];
        let mut swaps = 0;
        for (k, fresh) in [10.0, 11.0, 12.0, 13.0].into_iter().enumerate() {
            if trace.random::<f64>() < 0.5 {
                let j = trace.random_range(0..2);
                assert_eq!(out[k], stored[j]);
                stored[j] = fresh;
                swaps += 1;
            } else {
                assert_eq!(out[k], fresh);
            }
        }
        assert!(swaps > 0, "seed chosen so that at least one swap happens");
        let kept: Vec<f64> = pool.images().iter().map(|t| t.double_value(&[0, 0, 0])).collect();
        assert_eq!(kept, stored);
    }
}
