//! Trainable parameters, non-trainable buffers, initialisation and Adam.

use surro_core::rng::SplitMix64;

use crate::error::shape_err;
use crate::{Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    pub adam_m: Vec<f64>,
    pub adam_v: Vec<f64>,
    pub step: u64,
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    pub name: String,
    pub value: Tensor,
}

/// Weight-init scheme: uniform on `[-bound, bound]` with a fan-in bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// `sqrt(6 / fan_in)`, for layers followed by relu.
    He,
    /// `sqrt(3 / fan_in)`, for everything else.
    LeCun,
    Zeros,
    Ones,
}

impl Init {
    pub fn bound(self, fan_in: usize) -> f64 {
        match self {
            Init::He => (6.0 / fan_in as f64).sqrt(),
            Init::LeCun => (3.0 / fan_in as f64).sqrt(),
            Init::Zeros | Init::Ones => 0.0,
        }
    }

    pub fn sample(self, rng: &mut SplitMix64, n: usize, fan_in: usize) -> Vec<f64> {
        match self {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            _ => {
                let b = self.bound(fan_in);
                (0..n).map(|_| rng.uniform(-b, b)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    buffers: Vec<Buffer>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let n = value.len();
        self.params.push(Param {
            name: name.into(),
            value,
            grad: vec![0.0; n],
            adam_m: vec![0.0; n],
            adam_v: vec![0.0; n],
            step: 0,
            frozen: false,
        });
        ParamId(self.params.len() - 1)
    }

    /// Adds a parameter drawn from `init` with the given fan-in.
    pub fn add_init(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        init: Init,
        fan_in: usize,
        rng: &mut SplitMix64,
    ) -> ParamId {
        let n = shape.iter().product();
        let t = Tensor::new(shape, init.sample(rng, n, fan_in)).expect("consistent by construction");
        self.add(name, t)
    }

    pub fn add_buffer(&mut self, name: impl Into<String>, value: Tensor) -> BufferId {
        self.buffers.push(Buffer { name: name.into(), value });
        BufferId(self.buffers.len() - 1)
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor {
        &self.buffers[id.0].value
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor {
        &mut self.buffers[id.0].value
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn buffers(&self) -> &[Buffer] {
        &self.buffers
    }

    pub fn buffers_mut(&mut self) -> &mut [Buffer] {
        &mut self.buffers
    }

    pub fn n_weights(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn set_frozen(&mut self, ids: impl IntoIterator<Item = ParamId>, frozen: bool) {
        for id in ids {
            self.params[id.0].frozen = frozen;
        }
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &[f64]) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.grad.len() != g.len() {
            return Err(shape_err!("gradient for {} has {} values, expected {}", p.name, g.len(), p.grad.len()));
        }
        p.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        Ok(())
    }

    /// One bias-corrected Adam update of every unfrozen parameter. Gradients
    /// are left in place.
    pub fn adam_step(&mut self, opt: &Adam) {
        for p in self.params.iter_mut().filter(|p| !p.frozen) {
            p.step += 1;
            let t = p.step as i32;
            let c1 = 1.0 - opt.beta1.powi(t);
            let c2 = 1.0 - opt.beta2.powi(t);
            let w = p.value.data_mut();
            for i in 0..w.len() {
                let g = p.grad[i];
                p.adam_m[i] = opt.beta1 * p.adam_m[i] + (1.0 - opt.beta1) * g;
                p.adam_v[i] = opt.beta2 * p.adam_v[i] + (1.0 - opt.beta2) * g * g;
                let m_hat = p.adam_m[i] / c1;
                let v_hat = p.adam_v[i] / c2;
                w[i] -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
            }
        }
    }

    /// FNV-1a over the bit patterns of every parameter value, in order.
    pub fn checksum(&self, ids: impl IntoIterator<Item = ParamId>) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for id in ids {
            for x in self.params[id.0].value.data() {
                for byte in x.to_bits().to_le_bytes() {
                    h ^= byte as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn buffer_ids(&self) -> impl Iterator<Item = BufferId> {
        (0..self.buffers.len()).map(BufferId)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_adam_step_is_lr_sized() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(1.0));
        s.accumulate_grad(id, &[0.5]).unwrap();
        s.adam_step(&Adam::new(0.001));
        let w = s.value(id).data()[0];
        assert!((w - (1.0 - 0.001)).abs() < 1e-10, "{w}");
        assert_eq!(s.param(id).step, 1);
        assert_eq!(s.param(id).grad, vec![0.5]);
    }

    #[test]
    fn zero_grad_is_noop() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::from_vec(vec![0.3, -2.0, 7.5]));
        for _ in 0..5 {
            s.adam_step(&Adam::new(0.1));
        }
        assert_eq!(s.value(id).data(), &[0.3, -2.0, 7.5]);
    }

    #[test]
    fn frozen_params_do_not_move() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(1.0));
        s.set_frozen([id], true);
        s.accumulate_grad(id, &[1.0]).unwrap();
        s.adam_step(&Adam::new(0.1));
        assert_eq!(s.value(id).data()[0], 1.0);
    }

    #[test]
    fn identical_runs_identical_trajectories() {
        let run = || {
            let mut rng = SplitMix64::new(3);
            let mut s = ParamStore::new();
            let id = s.add_init("w", &[4, 3], Init::He, 3, &mut rng);
            for k in 0..10 {
                s.zero_grads();
                let g: Vec<f64> = s.value(id).data().iter().map(|w| w * k as f64 - 0.1).collect();
                s.accumulate_grad(id, &g).unwrap();
                s.adam_step(&Adam::new(0.01));
            }
            s
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn init_bounds() {
        let mut rng = SplitMix64::new(1);
        let w = Init::He.sample(&mut rng, 1000, 6);
        assert!(w.iter().all(|x| x.abs() <= 1.0));
        assert!(w.iter().any(|x| x.abs() > 0.9));
    }
}
