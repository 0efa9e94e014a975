//! FID and KID over a seeded feature extractor.
//!
//! The default extractor is a randomly initialized conv net, not Inception:
//! scores are only comparable with other scores from the same extractor and
//! seed, never with published FID/KID values.

pub mod features;
pub mod frechet;
pub mod kid;

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{list_pngs, ImageFolder};
use crate::error::{Error, Result};
pub use features::{read_feature_csv, ExtractorKind, FeatureExtractor, DEFAULT_FEATURE_SEED, FEATURES_FILE};
pub use frechet::{frechet_distance, DistributionStats};
pub use kid::{kid, mmd2_unbiased, KidEstimate, KidOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub extractor: ExtractorKind,
    /// Seeds both the extractor weights and the KID subsets.
    pub seed: u64,
    pub subset_size: usize,
    pub n_subsets: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            extractor: ExtractorKind::RandomConv,
            seed: DEFAULT_FEATURE_SEED,
            subset_size: 100,
            n_subsets: 10,
        }
    }
}

impl EvalOptions {
    fn kid_options(&self) -> KidOptions {
        KidOptions {
            subset_size: self.subset_size,
            n_subsets: self.n_subsets,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fid: f64,
    pub kid_mean: f64,
    pub kid_std: f64,
    /// `kid_mean * 100`, the scale usually quoted for KID.
    pub kid_mean_x100: f64,
    pub kid_x100_convention: bool,
    pub n_real: usize,
    pub n_fake: usize,
    pub feature_dim: usize,
    pub extractor: ExtractorKind,
    pub extractor_seed: u64,
    pub kid_seed: u64,
    pub subset_size: usize,
    pub subset_size_used: usize,
    pub n_subsets: usize,
    pub timestamp: String,
}

/// FID and KID between two feature matrices.
pub fn evaluate_features(real: &DMatrix<f64>, fake: &DMatrix<f64>, opts: &EvalOptions) -> Result<MetricReport> {
    if real.ncols() != fake.ncols() {
        return Err(Error::dim(format!("dimension {}", real.ncols()), format!("dimension {}", fake.ncols())));
    }
    let fid = frechet_distance(&DistributionStats::from_features(real)?, &DistributionStats::from_features(fake)?)?;
    let k = kid(real, fake, &opts.kid_options())?;
    Ok(MetricReport {
        fid,
        kid_mean: k.mean,
        kid_std: k.std,
        kid_mean_x100: k.mean * 100.0,
        kid_x100_convention: true,
        n_real: real.nrows(),
        n_fake: fake.nrows(),
        feature_dim: real.ncols(),
        extractor: opts.extractor,
        extractor_seed: opts.seed,
        kid_seed: opts.seed,
        subset_size: opts.subset_size,
        subset_size_used: k.subset_size,
        n_subsets: opts.n_subsets,
        timestamp: chrono::Utc::now().to_rfc3339(),
    })
}

fn dir_features(dir: &Path, size: u32, extractor: &FeatureExtractor) -> Result<DMatrix<f64>> {
    if extractor.kind() == ExtractorKind::ExternalFile {
        return read_feature_csv(&dir.join(FEATURES_FILE));
    }
    let folder = ImageFolder::load(dir, i64::from(size))?;
    if folder.len() < 2 {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "need at least 2 PNG images"),
        ));
    }
    extractor.extract(folder.chunks(32))
}

/// Compares the PNGs of two directories. Images are decoded at the size of
/// the first real image.
pub fn evaluate_dirs(real_dir: &Path, fake_dir: &Path, opts: &EvalOptions) -> Result<MetricReport> {
    let extractor = FeatureExtractor::new(opts.extractor, opts.seed);
    let size = if opts.extractor == ExtractorKind::ExternalFile {
        0
    } else {
        let first = list_pngs(real_dir)?.into_iter().next().ok_or_else(|| {
            Error::io(real_dir, std::io::Error::new(std::io::ErrorKind::NotFound, "no PNG images"))
        })?;
        image::image_dimensions(&first)
            .map_err(|e| Error::Decode {
                path: first.clone(),
                message: e.to_string(),
            })?
            .0
    };
    let real = dir_features(real_dir, size, &extractor)?;
    let fake = dir_features(fake_dir, size, &extractor)?;
    evaluate_features(&real, &fake, opts)
}
