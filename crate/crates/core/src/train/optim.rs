use tch::Tensor;

use crate::error::{Error, Result};

const EPS: f64 = 1e-8;

/// Adam with bias correction, holding its moment estimates in plain tensors
/// so they can be checkpointed.
#[derive(Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    step: u64,
    params: Vec<(String, Tensor)>,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: Vec<(String, Tensor)>, beta1: f64, beta2: f64) -> Self {
        let zeros = |p: &Tensor| p.zeros_like();
        let m = params.iter().map(|(_, p)| zeros(p)).collect();
        let v = params.iter().map(|(_, p)| zeros(p)).collect();
        Self {
            beta1,
            beta2,
            step: 0,
            params,
            m,
            v,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in &mut self.params {
            p.zero_grad();
        }
    }

    /// One update from the accumulated gradients. Parameters without a
    /// gradient keep their moments; with `lr == 0` parameters are untouched.
    pub fn step(&mut self, lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        tch::no_grad(|| {
            for (i, (_, p)) in self.params.iter_mut().enumerate() {
                let g = p.grad();
                if !g.defined() {
                    continue;
                }
                let m = &mut self.m[i];
                let v = &mut self.v[i];
                let _ = m.g_mul_scalar_(self.beta1).g_add_(&(&g * (1.0 - self.beta1)));
                let _ = v.g_mul_scalar_(self.beta2).g_add_(&(g.square() * (1.0 - self.beta2)));
                if lr != 0.0 {
                    let denom = v.sqrt() / bc2.sqrt() + EPS;
                    let _ = p.g_sub_(&(&*m / denom * (lr / bc1)));
                }
            }
        });
    }

    /// Moment tensors named `m.<param>` and `v.<param>`.
    pub fn state_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::with_capacity(2 * self.params.len());
        for (i, (name, _)) in self.params.iter().enumerate() {
            out.push((format!("m.{name}"), self.m[i].shallow_clone()));
            out.push((format!("v.{name}"), self.v[i].shallow_clone()));
        }
        out
    }

    pub fn set_steps(&mut self, steps: u64) {
        self.step = steps;
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, (name, _)) in self.params.iter().enumerate() {
            let ok = |t: &Tensor| t.isfinite().all().int64_value(&[]) == 1;
            if !ok(&self.m[i]) || !ok(&self.v[i]) {
                return Err(Error::Numeric {
                    component: format!("Adam moments of {name}"),
                });
            }
        }
        Ok(())
    }
}
