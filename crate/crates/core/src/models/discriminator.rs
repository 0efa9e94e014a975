//! Patch discriminator whose encoder is regularized by small reconstruction
//! decoders.
//!
//! The encoder is a chain of 4x4 stride-2 convolutions with channels
//! `f, 2f, 4f, 8f` plus one extra `8f` stage for every doubling of the input
//! beyond 128 px. Two stage outputs are tapped: `f_part` at 16x16 and `f_full`
//! at 8x8. The logit head is a 1x1 convolution on the fourth stage, whose
//! resolution is always `size / 16`.
//!
//! | size | stage resolutions    | f_part      | f_full     | logits |
//! |------|----------------------|-------------|------------|--------|
//! | 64   | 32 16 8 4            | stage 1, 2f | stage 2, 4f| 4x4    |
//! | 128  | 64 32 16 8           | stage 2, 4f | stage 3, 8f| 8x8    |
//! | 256  | 128 64 32 16 8       | stage 3, 8f | stage 4, 8f| 16x16  |

use rand::Rng;
use tch::{nn, nn::Module, Tensor};

use super::layers::{conv, instance_norm, leaky_relu};
use crate::batch::{ImageBatch, RealBatch};
use crate::error::{Error, Result};

pub const DECODED_SIZE: i64 = 64;
const PART_RES: i64 = 16;
const FULL_RES: i64 = 8;

/// Which half-size quadrant of a feature map (and of its source image) is
/// kept by the crop degradation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrant {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::TopLeft,
        Quadrant::TopRight,
        Quadrant::BottomLeft,
        Quadrant::BottomRight,
    ];

    pub fn sample(rng: &mut impl Rng) -> Self {
        Self::ALL[rng.random_range(0..4)]
    }

    /// Row and column offsets, in units of half the map size.
    fn offsets(self) -> (i64, i64) {
        match self {
            Quadrant::TopLeft => (0, 0),
            Quadrant::TopRight => (0, 1),
            Quadrant::BottomLeft => (1, 0),
            Quadrant::BottomRight => (1, 1),
        }
    }

    /// Half-size crop over the last two dimensions.
    pub fn crop(self, t: &Tensor) -> Tensor {
        let size = t.size();
        let (h, w) = (size[size.len() - 2], size[size.len() - 1]);
        let (r, c) = self.offsets();
        t.narrow(-2, r * h / 2, h / 2).narrow(-1, c * w / 2, w / 2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    pub image_size: i64,
    pub filters: i64,
    pub ssl: bool,
}

impl DiscriminatorConfig {
    pub fn new(image_size: i64) -> Self {
        Self {
            image_size,
            filters: 64,
            ssl: true,
        }
    }

    fn stage_channels(&self) -> Vec<i64> {
        let f = self.filters;
        let mut ch = vec![f, 2 * f, 4 * f, 8 * f];
        let mut s = 128;
        while s < self.image_size {
            ch.push(8 * f);
            s *= 2;
        }
        ch
    }

    /// Index of the stage whose output has `res` x `res` spatial size.
    fn stage_at(&self, res: i64) -> usize {
        let mut s = self.image_size / 2;
        let mut i = 0;
        while s > res {
            s /= 2;
            i += 1;
        }
        i
    }
}

#[derive(Debug)]
struct Decoder {
    convs: [nn::Conv2D; 4],
}

impl Decoder {
    fn new(p: nn::Path, c_in: i64, f: i64) -> Self {
        let c1 = 2 * f;
        let c2 = f;
        let c3 = (f / 2).max(1);
        Self {
            convs: [
                conv(&p / "0", c_in, c1, 3, 1, 1),
                conv(&p / "1", c1, c2, 3, 1, 1),
                conv(&p / "2", c2, c3, 3, 1, 1),
                conv(&p / "3", c3, 3, 3, 1, 1),
            ],
        }
    }

    /// 8x8 features → 64x64 RGB.
    fn forward(&self, x: &Tensor) -> Tensor {
        let mut h = x.shallow_clone();
        for c in &self.convs[..3] {
            let s = h.size()[2] * 2;
            h = leaky_relu(&c.forward(&h.upsample_nearest2d([s, s], None, None)));
        }
        self.convs[3].forward(&h).tanh()
    }
}

#[derive(Debug)]
pub struct SslDecoders {
    full: Decoder,
    part: Decoder,
}

#[derive(Debug)]
pub struct DiscOutput {
    /// `(b, 1, s/16, s/16)` patch logits.
    pub logits: Tensor,
    /// 16x16 encoder features.
    pub f_part: Tensor,
    /// 8x8 encoder features.
    pub f_full: Tensor,
}

#[derive(Debug)]
pub struct SslDiscriminator {
    cfg: DiscriminatorConfig,
    stages: Vec<nn::Conv2D>,
    head: nn::Conv2D,
    decoders: Option<SslDecoders>,
    part_stage: usize,
    full_stage: usize,
}

impl SslDiscriminator {
    /// Decoders are only constructed when `cfg.ssl` is set.
    pub fn new(p: nn::Path, cfg: DiscriminatorConfig) -> Result<Self> {
        if cfg.image_size < DECODED_SIZE || cfg.image_size % 16 != 0 {
            return Err(Error::Config(format!(
                "discriminator input size must be >= 64 and divisible by 16, got {}",
                cfg.image_size
            )));
        }
        let channels = cfg.stage_channels();
        let enc = &p / "enc";
        let mut c_in = 3;
        let stages = channels
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let layer = conv(&enc / i, c_in, c, 4, 2, 1);
                c_in = c;
                layer
            })
            .collect();
        let part_stage = cfg.stage_at(PART_RES);
        let full_stage = cfg.stage_at(FULL_RES);
        let head = conv(&p / "head", channels[3], 1, 1, 1, 0);
        let decoders = cfg.ssl.then(|| SslDecoders {
            full: Decoder::new(&p / "dec_full", channels[full_stage], cfg.filters),
            part: Decoder::new(&p / "dec_part", channels[part_stage], cfg.filters),
        });
        Ok(Self {
            cfg,
            stages,
            head,
            decoders,
            part_stage,
            full_stage,
        })
    }

    pub fn config(&self) -> DiscriminatorConfig {
        self.cfg
    }

    pub fn has_decoders(&self) -> bool {
        self.decoders.is_some()
    }

    pub fn forward_raw(&self, x: &Tensor) -> DiscOutput {
        let mut h = x.shallow_clone();
        let mut logits = None;
        let mut f_part = None;
        let mut f_full = None;
        for (i, stage) in self.stages.iter().enumerate() {
            h = stage.forward(&h);
            if i > 0 {
                h = instance_norm(&h);
            }
            h = leaky_relu(&h);
            if i == 3 {
                logits = Some(self.head.forward(&h));
            }
            if i == self.part_stage {
                f_part = Some(h.shallow_clone());
            }
            if i == self.full_stage {
                f_full = Some(h.shallow_clone());
            }
        }
        DiscOutput {
            logits: logits.expect("encoder has at least four stages"),
            f_part: f_part.expect("16x16 tap exists"),
            f_full: f_full.expect("8x8 tap exists"),
        }
    }

    pub fn forward(&self, x: &ImageBatch) -> Result<DiscOutput> {
        let s = x.image_size();
        if s != self.cfg.image_size {
            return Err(Error::dim(
                format!("(b, 3, {0}, {0})", self.cfg.image_size),
                format!("{:?}", x.shape()),
            ));
        }
        Ok(self.forward_raw(x.tensor()))
    }

    fn decoders(&self) -> Result<&SslDecoders> {
        self.decoders
            .as_ref()
            .ok_or_else(|| Error::Config("discriminator was built without SSL decoders".into()))
    }

    pub fn decode_full(&self, f_full: &Tensor) -> Result<ImageBatch> {
        check_spatial(f_full, FULL_RES)?;
        ImageBatch::new(self.decoders()?.full.forward(f_full))
    }

    /// Crops `quadrant` (8x8) out of the 16x16 `f_part` and decodes it.
    pub fn decode_part(&self, f_part: &Tensor, quadrant: Quadrant) -> Result<ImageBatch> {
        check_spatial(f_part, PART_RES)?;
        ImageBatch::new(self.decoders()?.part.forward(&quadrant.crop(f_part)))
    }
}

fn check_spatial(t: &Tensor, res: i64) -> Result<()> {
    let s = t.size();
    if s.len() != 4 || s[2] != res || s[3] != res {
        return Err(Error::dim(
            format!("(b, c, {res}, {res}) feature map"),
            format!("{s:?}"),
        ));
    }
    Ok(())
}

/// Reconstruction targets for the two decoders: the whole real image and the
/// chosen quadrant of it, each resized to 64x64.
pub fn ssl_targets(real: &RealBatch, quadrant: Quadrant) -> (Tensor, Tensor) {
    let x = real.images().tensor();
    let full = resize_bilinear(x, DECODED_SIZE);
    let part = resize_bilinear(&quadrant.crop(x), DECODED_SIZE);
    (full, part)
}

pub fn resize_bilinear(x: &Tensor, size: i64) -> Tensor {
    if x.size()[2] == size && x.size()[3] == size {
        return x.shallow_clone();
    }
    x.upsample_bilinear2d([size, size], false, None, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::layers::init_normal;
    use tch::{Device, Kind};

    fn build(size: i64, ssl: bool) -> (nn::VarStore, SslDiscriminator) {
        let vs = nn::VarStore::new(Device::Cpu);
        let cfg = DiscriminatorConfig {
            image_size: size,
            filters: 8,
            ssl,
        };
        let d = SslDiscriminator::new(vs.root() / "d", cfg).unwrap();
        init_normal(&vs, 5);
        (vs, d)
    }

    fn zeros(b: i64, s: i64) -> ImageBatch {
        ImageBatch::new(Tensor::zeros([b, 3, s, s], (Kind::Float, Device::Cpu))).unwrap()
    }

    #[test]
    fn logit_map_is_sixteenth_of_input() {
        for (b, s) in [(4, 64), (1, 128), (1, 256)] {
            let (_vs, d) = build(s, true);
            let out = d.forward(&zeros(b, s)).unwrap();
            assert_eq!(out.logits.size(), vec![b, 1, s / 16, s / 16]);
            assert_eq!(out.f_part.size()[2..], [16, 16]);
            assert_eq!(out.f_full.size()[2..], [8, 8]);
        }
    }

    #[test]
    fn feature_channels_follow_schedule() {
        let vs = nn::VarStore::new(Device::Cpu);
        let d = SslDiscriminator::new(vs.root() / "d", DiscriminatorConfig::new(128)).unwrap();
        let out = d.forward(&zeros(1, 128)).unwrap();
        assert_eq!(out.f_full.size(), vec![1, 512, 8, 8]);
        assert_eq!(out.f_part.size(), vec![1, 256, 16, 16]);
    }

    #[test]
    fn rejects_small_inputs() {
        let vs = nn::VarStore::new(Device::Cpu);
        assert!(SslDiscriminator::new(vs.root() / "d", DiscriminatorConfig::new(32)).is_err());
        let (_vs, d) = build(64, true);
        assert!(matches!(d.forward(&zeros(1, 32)), Err(Error::Dimension { .. })));
    }

    #[test]
    fn decoders_emit_64px_images() {
        let (_vs, d) = build(128, true);
        let out = d.forward(&zeros(2, 128)).unwrap();
        let full = d.decode_full(&out.f_full).unwrap();
        assert_eq!(full.shape(), vec![2, 3, 64, 64]);
        for q in Quadrant::ALL {
            let part = d.decode_part(&out.f_part, q).unwrap();
            assert_eq!(part.shape(), vec![2, 3, 64, 64]);
            assert!(part.tensor().abs().max().double_value(&[]) < 1.0);
        }
    }

    #[test]
    fn decode_part_requires_16px_map() {
        let (_vs, d) = build(64, true);
        let out = d.forward(&zeros(1, 64)).unwrap();
        assert!(matches!(
            d.decode_part(&out.f_full, Quadrant::TopLeft),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn each_decoder_has_four_convolutions() {
        let (vs, _d) = build(64, true);
        for dec in ["dec_full", "dec_part"] {
            let n = vs
                .variables()
                .keys()
                .filter(|k| k.starts_with(&format!("d.{dec}.")) && k.ends_with("weight"))
                .count();
            assert_eq!(n, 4, "{dec}");
        }
    }

    #[test]
    fn no_decoders_without_ssl() {
        let (vs, d) = build(64, false);
        assert!(!d.has_decoders());
        assert!(vs.variables().keys().all(|k| !k.contains("dec_")));
    }

    #[test]
    fn bottom_right_crop_is_direct_slice() {
        let t = Tensor::arange(2 * 16 * 16, (Kind::Float, Device::Cpu)).view([1, 2, 16, 16]);
        let crop = Quadrant::BottomRight.crop(&t);
        let direct = t.slice(2, 8, 16, 1).slice(3, 8, 16, 1);
        assert!(crop.equal(&direct));
    }
}
