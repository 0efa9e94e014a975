#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::Rng;
use scgan::data::synthetic::{generate_synthetic, SyntheticTask, TaskKind};
use scgan::rng::RngStream;
use scgan::train::TrainConfig;
use tch::Tensor;

pub fn synth(root: &Path, kind: TaskKind, n_train: usize, n_test: usize, seed: u64) -> PathBuf {
    let task = SyntheticTask {
        kind,
        n_train,
        n_test,
        size: 64,
        seed,
    };
    generate_synthetic(&task, root, false).unwrap();
    root.to_path_buf()
}

/// Narrow networks at 64 px so short runs finish in seconds.
pub fn tiny_config(data_root: &Path, checkpoint_dir: &Path, ssl: bool, epochs: usize) -> TrainConfig {
    TrainConfig {
        data_root: data_root.to_path_buf(),
        checkpoint_dir: checkpoint_dir.to_path_buf(),
        ssl,
        epochs,
        gen_filters: 8,
        res_blocks: 2,
        disc_filters: 8,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradReport {
    pub coords: usize,
    pub max_rel: f64,
    pub failures: usize,
    /// Coordinates with a gradient above `SIGNIFICANT`; `max_rel` is taken
    /// over these.
    pub significant: usize,
}

impl GradReport {
    pub fn ok(&self) -> bool {
        self.failures == 0 && self.significant > 0
    }
}

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-3;
/// Absolute floor for coordinates whose true gradient is zero, where a
/// relative error is undefined.
pub const ABS_FLOOR: f64 = 1e-8;
/// Gradients smaller than this are rounding noise, e.g. on conv biases that
/// feed an instance norm.
pub const SIGNIFICANT: f64 = 1e-6;

/// Central finite differences on `n` random coordinates of `inputs` (float64
/// leaves with gradients enabled), against the gradient of `loss`.
pub fn grad_check(inputs: &[Tensor], loss: impl Fn() -> Tensor, n: usize, seed: u64) -> GradReport {
    for t in inputs {
        let mut t = t.shallow_clone();
        t.zero_grad();
    }
    loss().backward();
    let grads: Vec<Tensor> = inputs.iter().map(|t| t.grad().copy()).collect();
    let sizes: Vec<i64> = inputs.iter().map(|t| t.numel() as i64).collect();
    let total: i64 = sizes.iter().sum();
    let mut rng = RngStream::new(seed, "gradcheck");
    let mut report = GradReport {
        coords: 0,
        max_rel: 0.0,
        failures: 0,
        significant: 0,
    };
    for _ in 0..n {
        let mut k = rng.random_range(0..total);
        let mut which = 0;
        while k >= sizes[which] {
            k -= sizes[which];
            which += 1;
        }
        let flat = inputs[which].view([-1]);
        let analytic = grads[which].view([-1]).double_value(&[k]);
        let original = flat.double_value(&[k]);
        let eval = |v: f64| {
            tch::no_grad(|| {
                let _ = flat.get(k).fill_(v);
                loss().double_value(&[])
            })
        };
        let numeric = (eval(original + FD_STEP) - eval(original - FD_STEP)) / (2.0 * FD_STEP);
        tch::no_grad(|| {
            let _ = flat.get(k).fill_(original);
        });
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        let rel = if scale > 0.0 { diff / scale } else { 0.0 };
        if scale > SIGNIFICANT {
            report.significant += 1;
            report.max_rel = report.max_rel.max(rel);
        }
        if rel >= REL_TOL && diff > ABS_FLOOR {
            report.failures += 1;
        }
        report.coords += 1;
    }
    report
}

pub fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    (a - b).abs().max().double_value(&[])
}

pub mod scenarios {
    use super::*;
    use scgan::augment::{DiffAugParams, DiffAugPolicy};
    use scgan::losses;
    use scgan::models::discriminator::DiscriminatorConfig;
    use scgan::models::layers::init_normal;
    use scgan::models::{Generator, GeneratorConfig, Quadrant, SslDiscriminator};
    use tch::{nn, Device, Kind};

    fn leaf(shape: &[i64], seed: i64) -> Tensor {
        tch::manual_seed(seed);
        Tensor::randn(shape, (Kind::Double, Device::Cpu)).set_requires_grad(true)
    }

    fn params(vs: &nn::VarStore) -> Vec<Tensor> {
        let mut v: Vec<_> = vs.variables().into_iter().collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v.into_iter().map(|(_, t)| t).collect()
    }

    /// Two-block generator on 16x16 inputs; loss is a fixed random projection
    /// of the output.
    pub fn generator(n: usize) -> GradReport {
        let mut vs = nn::VarStore::new(Device::Cpu);
        let g = Generator::new(
            vs.root(),
            GeneratorConfig {
                filters: 4,
                res_blocks: 2,
            },
        );
        init_normal(&vs, 11);
        vs.set_kind(Kind::Double);
        // larger weights than the 0.02 init keep gradients well above noise
        tch::no_grad(|| {
            for (_, mut p) in vs.variables() {
                let _ = p.g_mul_scalar_(10.0);
            }
        });
        let x = leaf(&[2, 3, 16, 16], 1).tanh().detach();
        let r = leaf(&[2, 3, 16, 16], 2).detach();
        let ps = params(&vs);
        grad_check(&ps, || (g.forward_raw(&x) * &r).sum(Kind::Double), n, 1)
    }

    /// Discriminator at 64 px with both decoders: LSGAN terms on a real and a
    /// fake batch plus the two reconstruction errors.
    pub fn discriminator(n: usize) -> GradReport {
        let mut vs = nn::VarStore::new(Device::Cpu);
        let d = SslDiscriminator::new(
            vs.root(),
            DiscriminatorConfig {
                image_size: 64,
                filters: 4,
                ssl: true,
            },
        )
        .unwrap();
        init_normal(&vs, 12);
        vs.set_kind(Kind::Double);
        tch::no_grad(|| {
            for (_, mut p) in vs.variables() {
                let _ = p.g_mul_scalar_(10.0);
            }
        });
        let real = leaf(&[2, 3, 64, 64], 3).tanh().detach();
        let fake = leaf(&[2, 3, 64, 64], 4).tanh().detach();
        let real_batch = scgan::RealBatch::from_dataset(scgan::ImageBatch::new(real.shallow_clone()).unwrap());
        let q = Quadrant::BottomLeft;
        let (tf, tp) = scgan::models::discriminator::ssl_targets(&real_batch, q);
        let ps = params(&vs);
        grad_check(
            &ps,
            || {
                let out_r = d.forward_raw(&real);
                let out_f = d.forward_raw(&fake);
                let adv = losses::lsgan_discriminator_loss(&out_r.logits, &out_f.logits).unwrap();
                let full = d.decode_full(&out_r.f_full).unwrap();
                let part = d.decode_part(&out_r.f_part, q).unwrap();
                adv + losses::ssl_reconstruction_loss(full.tensor(), &tf, part.tensor(), &tp).unwrap()
            },
            n,
            2,
        )
    }

    /// Every loss, with respect to all of its tensor inputs.
    pub fn losses(n: usize) -> Vec<(&'static str, GradReport)> {
        let shape = [2, 3, 8, 8];
        let a = leaf(&shape, 5);
        let b = leaf(&shape, 6);
        let c = leaf(&shape, 7);
        let e = leaf(&shape, 8);
        vec![
            ("mean_abs_error", grad_check(&[a.shallow_clone(), b.shallow_clone()], || losses::mean_abs_error(&a, &b).unwrap(), n, 3)),
            ("lsgan_generator", grad_check(&[a.shallow_clone()], || losses::lsgan_generator_loss(&a).unwrap(), n, 4)),
            (
                "lsgan_discriminator",
                grad_check(&[a.shallow_clone(), b.shallow_clone()], || losses::lsgan_discriminator_loss(&a, &b).unwrap(), n, 5),
            ),
            (
                "ssl_reconstruction",
                grad_check(
                    &[a.shallow_clone(), b.shallow_clone(), c.shallow_clone(), e.shallow_clone()],
                    || losses::ssl_reconstruction_loss(&a, &b, &c, &e).unwrap(),
                    n,
                    6,
                ),
            ),
            (
                "cycle",
                grad_check(
                    &[a.shallow_clone(), b.shallow_clone(), c.shallow_clone(), e.shallow_clone()],
                    || losses::cycle_loss(&a, &b, &c, &e).unwrap(),
                    n,
                    7,
                ),
            ),
            (
                "identity",
                grad_check(
                    &[a.shallow_clone(), b.shallow_clone(), c.shallow_clone(), e.shallow_clone()],
                    || losses::identity_loss(&a, &b, &c, &e).unwrap(),
                    n,
                    8,
                ),
            ),
        ]
    }

    /// Colour DiffAug with respect to the image, under a fixed projection.
    pub fn diffaug_color(n: usize) -> GradReport {
        let policy: DiffAugPolicy = "color".parse().unwrap();
        let params = DiffAugParams::sample(&policy, 3, 16, &mut RngStream::new(9, "color"));
        let x = leaf(&[3, 3, 16, 16], 9);
        let r = leaf(&[3, 3, 16, 16], 10).detach();
        grad_check(&[x.shallow_clone()], || (params.apply(&x).unwrap() * &r).sum(Kind::Double), n, 9)
    }
}
