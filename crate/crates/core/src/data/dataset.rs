use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use tch::{Kind, Tensor};

use super::codec::{decode_png, rgb_to_u8_tensor, u8_to_unit};
use crate::batch::{ImageBatch, RealBatch};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const SUBFOLDERS: [&str; 4] = ["trainA", "trainB", "testA", "testB"];

/// `root/{trainA,trainB,testA,testB}/*.png`, decoded at `size` pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub root: PathBuf,
    pub size: i64,
}

/// All images of one folder, kept as 8-bit `(n, 3, s, s)`.
#[derive(Debug)]
pub struct ImageFolder {
    pub files: Vec<PathBuf>,
    images: Tensor,
}

impl ImageFolder {
    pub fn load(dir: &Path, size: i64) -> Result<Self> {
        let files = list_pngs(dir)?;
        let decoded = files
            .iter()
            .map(|f| decode_png(f, size as u32).map(|img| rgb_to_u8_tensor(&img)))
            .collect::<Result<Vec<_>>>()?;
        let images = if decoded.is_empty() {
            Tensor::zeros([0, 3, size, size], (Kind::Uint8, tch::Device::Cpu))
        } else {
            Tensor::stack(&decoded, 0)
        };
        Ok(Self { files, images })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// Images at `indices`, normalized to `[-1, 1]`.
    pub fn gather(&self, indices: &[i64]) -> Result<ImageBatch> {
        let idx = Tensor::from_slice(indices);
        ImageBatch::new(u8_to_unit(&self.images.index_select(0, &idx)))
    }

    pub fn all(&self) -> Result<ImageBatch> {
        ImageBatch::new(u8_to_unit(&self.images))
    }

    /// Consecutive chunks of at most `chunk` images.
    pub fn chunks(&self, chunk: usize) -> impl Iterator<Item = Result<ImageBatch>> + '_ {
        let n = self.len() as i64;
        (0..n)
            .step_by(chunk.max(1))
            .map(move |start| {
                let idx: Vec<i64> = (start..(start + chunk as i64).min(n)).collect();
                self.gather(&idx)
            })
    }
}

pub fn list_pngs(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug)]
pub struct UnpairedDataset {
    pub train_a: ImageFolder,
    pub train_b: ImageFolder,
    pub test_a: ImageFolder,
    pub test_b: ImageFolder,
}

pub fn load_dataset(spec: &DatasetSpec) -> Result<UnpairedDataset> {
    for sub in SUBFOLDERS {
        let dir = spec.root.join(sub);
        if !dir.is_dir() {
            return Err(Error::io(
                dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset folder missing"),
            ));
        }
    }
    let load = |sub: &str| ImageFolder::load(&spec.root.join(sub), spec.size);
    let ds = UnpairedDataset {
        train_a: load("trainA")?,
        train_b: load("trainB")?,
        test_a: load("testA")?,
        test_b: load("testB")?,
    };
    for (sub, folder) in [("trainA", &ds.train_a), ("trainB", &ds.train_b)] {
        if folder.is_empty() {
            return Err(Error::io(
                spec.root.join(sub),
                std::io::Error::new(std::io::ErrorKind::NotFound, "no PNG images"),
            ));
        }
    }
    Ok(ds)
}

impl UnpairedDataset {
    pub fn steps_per_epoch(&self, batch_size: usize) -> usize {
        self.train_a.len().max(self.train_b.len()).div_ceil(batch_size)
    }

    /// Batches of one epoch. The shuffle order is a function of `(seed, epoch)`
    /// only; each domain cycles through its own permutation, so the smaller
    /// domain repeats and every batch is full.
    pub fn epoch(&self, seed: u64, epoch: usize, batch_size: usize) -> EpochBatches<'_> {
        EpochBatches {
            ds: self,
            perm_a: permutation(self.train_a.len(), seed, &format!("shuffle.A.{epoch}")),
            perm_b: permutation(self.train_b.len(), seed, &format!("shuffle.B.{epoch}")),
            batch_size,
            step: 0,
            steps: self.steps_per_epoch(batch_size),
        }
    }
}

fn permutation(n: usize, seed: u64, label: &str) -> Vec<i64> {
    let mut p: Vec<i64> = (0..n as i64).collect();
    p.shuffle(&mut RngStream::new(seed, label));
    p
}

pub struct EpochBatches<'a> {
    ds: &'a UnpairedDataset,
    perm_a: Vec<i64>,
    perm_b: Vec<i64>,
    batch_size: usize,
    step: usize,
    steps: usize,
}

impl EpochBatches<'_> {
    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// Skips the first `n` batches without decoding them.
    pub fn skip_to(&mut self, n: usize) {
        self.step = n.min(self.steps);
    }

    fn indices(&self, perm: &[i64]) -> Vec<i64> {
        (0..self.batch_size)
            .map(|j| perm[(self.step * self.batch_size + j) % perm.len()])
            .collect()
    }
}

impl Iterator for EpochBatches<'_> {
    type Item = Result<(RealBatch, RealBatch)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.step >= self.steps {
            return None;
        }
        let ia = self.indices(&self.perm_a);
        let ib = self.indices(&self.perm_b);
        self.step += 1;
        Some((|| {
            let a = self.ds.train_a.gather(&ia)?;
            let b = self.ds.train_b.gather(&ib)?;
            Ok((RealBatch::from_dataset(a), RealBatch::from_dataset(b)))
        })())
    }
}
