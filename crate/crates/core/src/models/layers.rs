use rand_distr::{Distribution, Normal};
use tch::{nn, Kind, Tensor};

use crate::rng::RngStream;

pub const INIT_STD: f64 = 0.02;
const NORM_EPS: f64 = 1e-5;

/// Per-sample, per-channel normalization with no affine parameters and no
/// running statistics.
pub fn instance_norm(x: &Tensor) -> Tensor {
    let mean = x.mean_dim(&[2i64, 3][..], true, None::<Kind>);
    let centered = x - &mean;
    let var = centered.square().mean_dim(&[2i64, 3][..], true, None::<Kind>);
    centered / (var + NORM_EPS).sqrt()
}

pub fn reflect_pad(x: &Tensor, pad: i64) -> Tensor {
    x.reflection_pad2d([pad, pad, pad, pad])
}

pub fn leaky_relu(x: &Tensor) -> Tensor {
    x.clamp_min(0.0) + x.clamp_max(0.0) * 0.2
}

pub fn conv(p: nn::Path, c_in: i64, c_out: i64, k: i64, stride: i64, padding: i64) -> nn::Conv2D {
    let cfg = nn::ConvConfig {
        stride,
        padding,
        ..Default::default()
    };
    nn::conv2d(p, c_in, c_out, k, cfg)
}

/// Stride-2 transposed convolution that exactly doubles the spatial size.
pub fn up_conv(p: nn::Path, c_in: i64, c_out: i64) -> nn::ConvTranspose2D {
    let cfg = nn::ConvTransposeConfig {
        stride: 2,
        padding: 1,
        output_padding: 1,
        ..Default::default()
    };
    nn::conv_transpose2d(p, c_in, c_out, 3, cfg)
}

/// Overwrites every variable of `vs`: weights from Normal(0, 0.02), biases 0.
///
/// Each tensor draws from its own stream keyed by `(seed, name)`, so the
/// values of a parameter do not depend on which other parameters exist.
pub fn init_normal(vs: &nn::VarStore, seed: u64) {
    let normal = Normal::new(0.0f32, INIT_STD as f32).expect("valid std");
    let mut vars: Vec<(String, Tensor)> = vs.variables().into_iter().collect();
    vars.sort_by(|a, b| a.0.cmp(&b.0));
    tch::no_grad(|| {
        for (name, mut var) in vars {
            if name.ends_with("weight") {
                let n = var.numel();
                let mut rng = RngStream::new(seed, &name);
                let values: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng)).collect();
                let src = Tensor::from_slice(&values)
                    .view(var.size().as_slice())
                    .to_kind(var.kind());
                var.copy_(&src);
            } else {
                let _ = var.zero_();
            }
        }
    });
}

pub fn param_count(vs: &nn::VarStore) -> i64 {
    vs.variables().values().map(|t| t.numel() as i64).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use tch::Device;

    #[test]
    fn instance_norm_ignores_per_channel_affine() {
        tch::manual_seed(1);
        let t = Tensor::randn([2, 4, 6, 6], (Kind::Double, Device::Cpu));
        let a = Tensor::from_slice(&[0.5f64, 2.0, 3.0, 1.5]).view([1, 4, 1, 1]);
        let b = Tensor::from_slice(&[1.0f64, -2.0, 0.3, 7.0]).view([1, 4, 1, 1]);
        let lhs = instance_norm(&(&t * &a + &b));
        let rhs = instance_norm(&t);
        let err = (lhs - rhs).abs().max().double_value(&[]);
        assert!(err < 1e-4, "max diff {err}");
    }

    #[test]
    fn instance_norm_statistics() {
        tch::manual_seed(2);
        let t = Tensor::randn([3, 2, 5, 5], (Kind::Double, Device::Cpu)) * 4.0 + 1.5;
        let y = instance_norm(&t);
        let mean = y.mean_dim(&[2i64, 3][..], false, None::<Kind>);
        let var = y.var_dim(&[2i64, 3][..], false, false);
        assert!(mean.abs().max().double_value(&[]) < 1e-10);
        assert!((var - 1.0).abs().max().double_value(&[]) < 1e-3);
    }

    #[test]
    fn reflection_padding_mirrors_border() {
        let t = Tensor::arange(9, (Kind::Float, Device::Cpu)).view([1, 1, 3, 3]);
        let p = reflect_pad(&t, 1);
        assert_eq!(p.size(), vec![1, 1, 5, 5]);
        // row 0 of the padded map mirrors row 1 of the input
        assert_eq!(p.double_value(&[0, 0, 0, 1]), t.double_value(&[0, 0, 1, 0]));
    }
}
