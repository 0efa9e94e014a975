//! Training objectives.
//!
//! All tensor losses are differentiable scalars. Expectations over the data
//! distribution are realized as means over batch, channel and spatial
//! dimensions.

use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the cycle-consistency term.
    pub lambda_cyc: f64,
    /// Weight of the identity term.
    pub lambda_id: f64,
    /// Weight of each discriminator's reconstruction term.
    pub lambda_ssl: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cyc: 10.0,
            lambda_id: 0.5,
            lambda_ssl: 1.0,
        }
    }
}

fn non_empty(t: &Tensor, what: &str) -> Result<()> {
    if t.numel() == 0 {
        return Err(Error::Argument(format!("{what} is empty")));
    }
    Ok(())
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.size() != b.size() {
        return Err(Error::dim(format!("{:?}", a.size()), format!("{:?}", b.size())));
    }
    non_empty(a, "input")
}

pub fn mean_abs_error(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape(a, b)?;
    Ok((a - b).abs().mean(None::<Kind>))
}

/// `mean((D(fake) - 1)^2)`.
pub fn lsgan_generator_loss(d_fake_logits: &Tensor) -> Result<Tensor> {
    non_empty(d_fake_logits, "logit map")?;
    Ok((d_fake_logits - 1.0).square().mean(None::<Kind>))
}

/// `mean((D(real) - 1)^2) + mean(D(fake)^2)`.
pub fn lsgan_discriminator_loss(d_real_logits: &Tensor, d_fake_logits: &Tensor) -> Result<Tensor> {
    non_empty(d_real_logits, "real logit map")?;
    non_empty(d_fake_logits, "fake logit map")?;
    Ok((d_real_logits - 1.0).square().mean(None::<Kind>) + d_fake_logits.square().mean(None::<Kind>))
}

/// Sum of the mean absolute reconstruction errors of the full-image and the
/// cropped-part decoders.
pub fn ssl_reconstruction_loss(
    decoded_full: &Tensor,
    target_full: &Tensor,
    decoded_part: &Tensor,
    target_part: &Tensor,
) -> Result<Tensor> {
    Ok(mean_abs_error(decoded_full, target_full)? + mean_abs_error(decoded_part, target_part)?)
}

/// `E|F(G(x)) - x| + E|G(F(y)) - y|`.
pub fn cycle_loss(x: &Tensor, x_cycled: &Tensor, y: &Tensor, y_cycled: &Tensor) -> Result<Tensor> {
    Ok(mean_abs_error(x_cycled, x)? + mean_abs_error(y_cycled, y)?)
}

/// `E|F(x) - x| + E|G(y) - y|`.
pub fn identity_loss(x: &Tensor, f_of_x: &Tensor, y: &Tensor, g_of_y: &Tensor) -> Result<Tensor> {
    Ok(mean_abs_error(f_of_x, x)? + mean_abs_error(g_of_y, y)?)
}

/// Scalar loss values of one training step, before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub adv_g: f64,
    pub adv_f: f64,
    pub adv_dx: f64,
    pub adv_dy: f64,
    pub ssl_dx: f64,
    pub ssl_dy: f64,
    pub cyc: f64,
    pub id: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub adv_g: f64,
    pub adv_f: f64,
    pub adv_dx: f64,
    pub adv_dy: f64,
    pub ssl_dx: f64,
    pub ssl_dy: f64,
    pub cyc: f64,
    pub id: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// The adversarial sum, with each discriminator's reconstruction term
    /// folded into its loss.
    pub fn adversarial(&self, weights: &LossWeights) -> f64 {
        self.adv_g
            + self.adv_f
            + self.adv_dx
            + self.adv_dy
            + weights.lambda_ssl * (self.ssl_dx + self.ssl_dy)
    }
}

/// Combines the step's components into the full objective
/// `adv + lambda_cyc * cyc + lambda_id * id`.
pub fn total_loss(c: &LossComponents, weights: &LossWeights) -> Result<LossBreakdown> {
    let named = [
        ("adv_g", c.adv_g),
        ("adv_f", c.adv_f),
        ("adv_dx", c.adv_dx),
        ("adv_dy", c.adv_dy),
        ("ssl_dx", c.ssl_dx),
        ("ssl_dy", c.ssl_dy),
        ("cyc", c.cyc),
        ("id", c.id),
    ];
    if let Some((name, _)) = named.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numeric {
            component: (*name).to_string(),
        });
    }
    let mut b = LossBreakdown {
        adv_g: c.adv_g,
        adv_f: c.adv_f,
        adv_dx: c.adv_dx,
        adv_dy: c.adv_dy,
        ssl_dx: c.ssl_dx,
        ssl_dy: c.ssl_dy,
        cyc: c.cyc,
        id: c.id,
        total: 0.0,
    };
    b.total = b.adversarial(weights) + weights.lambda_cyc * c.cyc + weights.lambda_id * c.id;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tch::Device;

    fn t(v: &[f64]) -> Tensor {
        Tensor::from_slice(v)
    }

    fn val(r: Result<Tensor>) -> f64 {
        r.unwrap().double_value(&[])
    }

    fn full(v: f64) -> Tensor {
        Tensor::full([2, 3, 4, 4], v, (Kind::Double, Device::Cpu))
    }

    #[test]
    fn generator_loss_values() {
        assert_eq!(val(lsgan_generator_loss(&t(&[1.0, 1.0, 1.0]))), 0.0);
        assert_eq!(val(lsgan_generator_loss(&t(&[0.0, 0.0]))), 1.0);
        assert!((val(lsgan_generator_loss(&t(&[0.5, 1.5]))) - 0.25).abs() < 1e-12);
        assert!(lsgan_generator_loss(&t(&[])).is_err());
    }

    #[test]
    fn discriminator_loss_values() {
        assert_eq!(val(lsgan_discriminator_loss(&t(&[1.0, 1.0]), &t(&[0.0, 0.0]))), 0.0);
        assert_eq!(val(lsgan_discriminator_loss(&t(&[0.0]), &t(&[1.0]))), 2.0);
        assert!((val(lsgan_discriminator_loss(&t(&[0.8]), &t(&[0.3]))) - 0.13).abs() < 1e-12);
        assert!(lsgan_discriminator_loss(&t(&[]), &t(&[1.0])).is_err());
    }

    #[test]
    fn ssl_loss_values() {
        let a = full(0.1);
        let b = full(-0.3);
        assert_eq!(val(ssl_reconstruction_loss(&a, &a, &b, &b)), 0.0);
        let v = val(ssl_reconstruction_loss(&(&a + 0.5), &a, &(&b + 0.5), &b));
        assert!((v - 1.0).abs() < 1e-12);
        let v = val(ssl_reconstruction_loss(&(&a + 0.2), &a, &b, &b));
        assert!((v - 0.2).abs() < 1e-12);
        let small = Tensor::zeros([2, 3, 2, 2], (Kind::Double, Device::Cpu));
        assert!(matches!(
            ssl_reconstruction_loss(&a, &small, &b, &b),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn cycle_loss_values() {
        let x = full(0.3);
        let y = full(-0.7);
        assert_eq!(val(cycle_loss(&x, &x, &y, &y)), 0.0);
        assert!((val(cycle_loss(&x, &(&x + 0.1), &y, &y)) - 0.1).abs() < 1e-12);
        assert!((val(cycle_loss(&x, &(&x + 0.1), &y, &(&y + 0.1))) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn identity_loss_values() {
        let x = full(0.5);
        let y = full(0.2);
        assert_eq!(val(identity_loss(&x, &x, &y, &y)), 0.0);
        assert!((val(identity_loss(&x, &(-&x), &y, &y)) - 1.0).abs() < 1e-12);
        assert!((val(identity_loss(&x, &(&x + 0.05), &y, &(&y + 0.05))) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn total_loss_values() {
        let w = LossWeights::default();
        let c = LossComponents {
            adv_g: 0.25,
            adv_f: 0.25,
            adv_dx: 0.25,
            adv_dy: 0.25,
            cyc: 0.2,
            id: 0.4,
            ..Default::default()
        };
        assert!((total_loss(&c, &w).unwrap().total - 3.2).abs() < 1e-12);
        assert_eq!(total_loss(&LossComponents::default(), &w).unwrap().total, 0.0);
        let zero = LossWeights {
            lambda_cyc: 0.0,
            lambda_id: 0.0,
            lambda_ssl: 1.0,
        };
        assert_eq!(total_loss(&c, &zero).unwrap().total, 1.0);
    }

    #[test]
    fn total_loss_names_nan_component() {
        let c = LossComponents {
            cyc: f64::NAN,
            ..Default::default()
        };
        match total_loss(&c, &LossWeights::default()) {
            Err(Error::Numeric { component }) => assert_eq!(component, "cyc"),
            other => panic!("{other:?}"),
        }
    }

    fn components() -> impl Strategy<Value = LossComponents> {
        prop::array::uniform8(0.0f64..10.0).prop_map(|v| LossComponents {
            adv_g: v[0],
            adv_f: v[1],
            adv_dx: v[2],
            adv_dy: v[3],
            ssl_dx: v[4],
            ssl_dy: v[5],
            cyc: v[6],
            id: v[7],
        })
    }

    proptest! {
        #[test]
        fn total_is_affine_in_weights(c in components(), l1 in 0.0f64..20.0, l2 in 0.0f64..2.0) {
            let base = LossWeights { lambda_cyc: 0.0, lambda_id: 0.0, lambda_ssl: 1.0 };
            let w = LossWeights { lambda_cyc: l1, lambda_id: l2, lambda_ssl: 1.0 };
            let t0 = total_loss(&c, &base).unwrap().total;
            let t1 = total_loss(&c, &w).unwrap().total;
            prop_assert!((t1 - t0 - (l1 * c.cyc + l2 * c.id)).abs() < 1e-9);
        }

        #[test]
        fn losses_are_non_negative(seed in 0i64..1000) {
            tch::manual_seed(seed);
            let opts = (Kind::Double, Device::Cpu);
            let a = Tensor::randn([2, 3, 4, 4], opts);
            let b = Tensor::randn([2, 3, 4, 4], opts);
            prop_assert!(val(lsgan_generator_loss(&a)) >= 0.0);
            prop_assert!(val(lsgan_discriminator_loss(&a, &b)) >= 0.0);
            prop_assert!(val(cycle_loss(&a, &b, &b, &a)) >= 0.0);
            prop_assert!(val(identity_loss(&a, &b, &a, &b)) >= 0.0);
            prop_assert!(val(ssl_reconstruction_loss(&a, &b, &b, &a)) >= 0.0);
        }

        #[test]
        fn cycle_loss_is_symmetric(seed in 0i64..1000) {
            tch::manual_seed(seed);
            let opts = (Kind::Double, Device::Cpu);
            let x = Tensor::randn([2, 3, 4, 4], opts);
            let a = Tensor::randn([2, 3, 4, 4], opts);
            let y = Tensor::randn([1, 3, 8, 8], opts);
            let b = Tensor::randn([1, 3, 8, 8], opts);
            let l = val(cycle_loss(&x, &a, &y, &b));
            let r = val(cycle_loss(&y, &b, &x, &a));
            prop_assert!((l - r).abs() < 1e-12);
        }
    }
}
