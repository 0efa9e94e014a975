use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tch::{nn, nn::Module, Device, Kind, Tensor};

use crate::batch::ImageBatch;
use crate::error::{Error, Result};
use crate::models::discriminator::resize_bilinear;
use crate::models::layers::leaky_relu;
use crate::rng::RngStream;

pub const DEFAULT_FEATURE_SEED: u64 = 2021;
pub const FEATURES_FILE: &str = "features.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    RandomConv,
    FlattenDownsample,
    /// Precomputed features read from `features.csv` in each directory.
    ExternalFile,
}

impl FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random-conv" => Ok(Self::RandomConv),
            "flatten-downsample" => Ok(Self::FlattenDownsample),
            "external-file" => Ok(Self::ExternalFile),
            other => Err(Error::Config(format!(
                "unknown extractor {other:?}; expected random-conv, flatten-downsample or external-file"
            ))),
        }
    }
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RandomConv => "random-conv",
            Self::FlattenDownsample => "flatten-downsample",
            Self::ExternalFile => "external-file",
        })
    }
}

/// Four stride-2 3x3 convolutions (32, 64, 128, 256 channels) with
/// LeakyReLU, then global average pooling.
struct RandomConvNet {
    _vs: nn::VarStore,
    convs: Vec<nn::Conv2D>,
}

impl RandomConvNet {
    const CHANNELS: [i64; 4] = [32, 64, 128, 256];

    fn new(seed: u64) -> Self {
        let vs = nn::VarStore::new(Device::Cpu);
        let root = vs.root();
        let mut c_in = 3;
        let convs = Self::CHANNELS
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let cfg = nn::ConvConfig {
                    stride: 2,
                    padding: 1,
                    bias: false,
                    ..Default::default()
                };
                let conv = nn::conv2d(&root / i, c_in, c, 3, cfg);
                // He scaling keeps activations from vanishing through the stack
                let std = (2.0 / (c_in * 9) as f32).sqrt();
                let normal = Normal::new(0.0f32, std).expect("valid std");
                let mut rng = RngStream::new(seed, &format!("features.{i}"));
                let values: Vec<f32> = (0..conv.ws.numel()).map(|_| normal.sample(&mut rng)).collect();
                tch::no_grad(|| {
                    let mut ws = conv.ws.shallow_clone();
                    ws.copy_(&Tensor::from_slice(&values).view(conv.ws.size().as_slice()));
                });
                c_in = c;
                conv
            })
            .collect();
        Self { _vs: vs, convs }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = x.to_kind(Kind::Float);
        for c in &self.convs {
            h = leaky_relu(&c.forward(&h));
        }
        h.mean_dim(&[2i64, 3][..], false, Kind::Float)
    }
}

pub struct FeatureExtractor {
    kind: ExtractorKind,
    seed: u64,
    net: Option<RandomConvNet>,
}

impl fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("kind", &self.kind)
            .field("seed", &self.seed)
            .finish()
    }
}

impl FeatureExtractor {
    pub fn new(kind: ExtractorKind, seed: u64) -> Self {
        let net = (kind == ExtractorKind::RandomConv).then(|| RandomConvNet::new(seed));
        Self { kind, seed, net }
    }

    pub fn kind(&self) -> ExtractorKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Feature dimension, when fixed by the extractor.
    pub fn dim(&self) -> Option<usize> {
        match self.kind {
            ExtractorKind::RandomConv => Some(256),
            ExtractorKind::FlattenDownsample => Some(192),
            ExtractorKind::ExternalFile => None,
        }
    }

    fn batch_features(&self, x: &ImageBatch) -> Result<Tensor> {
        tch::no_grad(|| match self.kind {
            ExtractorKind::RandomConv => Ok(self.net.as_ref().expect("built with kind").forward(x.tensor())),
            ExtractorKind::FlattenDownsample => {
                let small = resize_bilinear(&x.tensor().to_kind(Kind::Float), 8);
                Ok(small.reshape([x.batch_size(), -1]))
            }
            ExtractorKind::ExternalFile => Err(Error::Config(
                "external-file features are read from disk, not computed from images".into(),
            )),
        })
    }

    /// `n x d` feature matrix, rows in input order.
    pub fn extract<I>(&self, batches: I) -> Result<DMatrix<f64>>
    where
        I: IntoIterator<Item = Result<ImageBatch>>,
    {
        let mut rows: Vec<f64> = Vec::new();
        let mut n = 0usize;
        let mut d = 0usize;
        for batch in batches {
            let feats = self.batch_features(&batch?)?.to_kind(Kind::Double).contiguous();
            let size = feats.size();
            n += size[0] as usize;
            d = size[1] as usize;
            rows.extend(Vec::<f64>::try_from(feats.reshape([-1]))?);
        }
        if n < 2 {
            return Err(Error::Argument(format!("need at least 2 images for features, got {n}")));
        }
        Ok(DMatrix::from_row_slice(n, d, &rows))
    }
}

/// Reads a comma-separated matrix, one sample per line.
pub fn read_feature_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    let mut n = 0;
    let mut d = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Argument(format!("{}:{}: {e}", path.display(), i + 1)))?;
        if *d.get_or_insert(row.len()) != row.len() {
            return Err(Error::Argument(format!("{}:{}: ragged row", path.display(), i + 1)));
        }
        values.extend(row);
        n += 1;
    }
    if n < 2 {
        return Err(Error::Argument(format!("{}: need at least 2 rows", path.display())));
    }
    Ok(DMatrix::from_row_slice(n, d.unwrap_or(0), &values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn images(seed: i64, n: i64, s: i64) -> ImageBatch {
        tch::manual_seed(seed);
        ImageBatch::new(Tensor::rand([n, 3, s, s], (Kind::Float, Device::Cpu)) * 2.0 - 1.0).unwrap()
    }

    #[test]
    fn flatten_downsample_is_identity_at_8px() {
        let x = images(0, 3, 8);
        let f = FeatureExtractor::new(ExtractorKind::FlattenDownsample, 0)
            .extract([Ok(x.clone())])
            .unwrap();
        assert_eq!(f.shape(), (3, 192));
        let flat: Vec<f32> = Vec::try_from(x.tensor().get(1).reshape([-1])).unwrap();
        for (j, v) in flat.iter().enumerate() {
            assert_eq!(f[(1, j)], f64::from(*v));
        }
    }

    #[test]
    fn random_conv_dimension_and_determinism() {
        let x = images(1, 4, 32);
        let a = FeatureExtractor::new(ExtractorKind::RandomConv, 2021).extract([Ok(x.clone())]).unwrap();
        let b = FeatureExtractor::new(ExtractorKind::RandomConv, 2021).extract([Ok(x.clone())]).unwrap();
        let c = FeatureExtractor::new(ExtractorKind::RandomConv, 7).extract([Ok(x)]).unwrap();
        assert_eq!(a.ncols(), 256);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rows_follow_input_order_across_batches() {
        let x = images(2, 4, 16);
        let e = FeatureExtractor::new(ExtractorKind::RandomConv, 1);
        let whole = e.extract([Ok(x.clone())]).unwrap();
        let split = e
            .extract([
                ImageBatch::new(x.tensor().narrow(0, 0, 3)),
                ImageBatch::new(x.tensor().narrow(0, 3, 1)),
            ])
            .unwrap();
        assert!((whole - split).abs().max() < 1e-5);
    }

    #[test]
    fn fewer_than_two_images_rejected() {
        let e = FeatureExtractor::new(ExtractorKind::FlattenDownsample, 0);
        assert!(matches!(e.extract([Ok(images(3, 1, 8))]), Err(Error::Argument(_))));
    }

    #[test]
    fn csv_features() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join(FEATURES_FILE);
        std::fs::write(&p, "1,2\n3,4\n\n5,6\n").unwrap();
        let m = read_feature_csv(&p).unwrap();
        assert_eq!(m.shape(), (3, 2));
        assert_eq!(m[(2, 1)], 6.0);
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(read_feature_csv(&p).is_err());
    }
}
