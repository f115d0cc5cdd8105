//! Parameterised layers over the tape, and the forward-pass context.

use surro_core::rng::{self, SplitMix64};
use surro_tensor::{BatchStats, BufferId, Graph, Init, ParamId, ParamStore, Tensor, Var, NORM_EPS};

use crate::Result;

pub(crate) const BN_MOMENTUM: f64 = 0.1;

/// Per-forward state: train/eval mode, the dropout key and pending
/// batch-norm running-stat updates.
pub(crate) struct Ctx {
    pub train: bool,
    pub seed: u64,
    pub step: u64,
    pub bn: Vec<(BufferId, BufferId, BatchStats)>,
    /// Weather windows pushed through an encoder under this context.
    pub encoded: usize,
}

impl Ctx {
    pub fn eval() -> Self {
        Self { train: false, seed: 0, step: 0, bn: Vec::new(), encoded: 0 }
    }

    pub fn train(seed: u64, step: u64) -> Self {
        Self { train: true, seed, step, bn: Vec::new(), encoded: 0 }
    }

    /// Dropout keyed by (seed, layer, step); identity in eval mode.
    pub fn dropout(&self, g: &mut Graph, x: Var, p: f64, layer: u64) -> Result<Var> {
        if !self.train || p == 0.0 {
            return Ok(x);
        }
        let key = rng::child_seed(rng::child_seed(self.seed ^ rng::tag("dropout"), layer), self.step);
        Ok(g.dropout(x, p, key)?)
    }

    /// Folds pending batch statistics into the running buffers.
    pub fn apply_bn(self, store: &mut ParamStore) {
        for (mean_id, var_id, stats) in self.bn {
            for (r, b) in store.buffer_mut(mean_id).data_mut().iter_mut().zip(&stats.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
            for (r, b) in store.buffer_mut(var_id).data_mut().iter_mut().zip(&stats.var_unbiased) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
        }
    }
}

/// Allocates named parameters from one seeded stream, in call order.
pub(crate) struct Builder<'a> {
    pub store: &'a mut ParamStore,
    pub rng: SplitMix64,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, seed: u64) -> Self {
        Self { store, rng: SplitMix64::stream(seed, rng::tag("init")) }
    }

    pub fn linear(&mut self, name: &str, fin: usize, fout: usize, init: Init) -> Linear {
        Linear {
            w: self.store.add_init(format!("{name}.w"), &[fout, fin], init, fin, &mut self.rng),
            b: self.store.add_init(format!("{name}.b"), &[fout], Init::Zeros, fin, &mut self.rng),
        }
    }

    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, init: Init) -> Conv {
        Conv {
            w: self.store.add_init(format!("{name}.w"), &[cout, cin, k], init, cin * k, &mut self.rng),
            b: self.store.add_init(format!("{name}.b"), &[cout], Init::Zeros, cin * k, &mut self.rng),
            k,
        }
    }

    pub fn conv_t(&mut self, name: &str, cin: usize, cout: usize) -> ConvT {
        ConvT {
            w: self.store.add_init(format!("{name}.w"), &[cin, cout, 2], Init::He, cin, &mut self.rng),
            b: self.store.add_init(format!("{name}.b"), &[cout], Init::Zeros, cin, &mut self.rng),
        }
    }

    pub fn batch_norm(&mut self, name: &str, c: usize) -> BatchNorm {
        BatchNorm {
            gamma: self.store.add_init(format!("{name}.gamma"), &[c], Init::Ones, c, &mut self.rng),
            beta: self.store.add_init(format!("{name}.beta"), &[c], Init::Zeros, c, &mut self.rng),
            mean: self.store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[c])),
            var: self
                .store
                .add_buffer(format!("{name}.running_var"), Tensor::new(&[c], vec![1.0; c]).expect("consistent")),
        }
    }

    pub fn layer_norm(&mut self, name: &str, d: usize) -> LayerNorm {
        LayerNorm {
            gamma: self.store.add_init(format!("{name}.gamma"), &[d], Init::Ones, d, &mut self.rng),
            beta: self.store.add_init(format!("{name}.beta"), &[d], Init::Zeros, d, &mut self.rng),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Linear {
    pub w: ParamId,
    pub b: ParamId,
}

impl Linear {
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(s, self.w);
        let b = g.param(s, self.b);
        Ok(g.linear(x, w, b)?)
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Conv {
    pub w: ParamId,
    pub b: ParamId,
    pub k: usize,
}

impl Conv {
    /// Stride-1 "same" convolution.
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(s, self.w);
        let b = g.param(s, self.b);
        Ok(g.conv1d(x, w, b, 1, (self.k - 1) / 2)?)
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.w, self.b]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ConvT {
    pub w: ParamId,
    pub b: ParamId,
}

impl ConvT {
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(s, self.w);
        let b = g.param(s, self.b);
        Ok(g.conv_transpose2(x, w, b)?)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub mean: BufferId,
    pub var: BufferId,
}

impl BatchNorm {
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let gamma = g.param(s, self.gamma);
        let beta = g.param(s, self.beta);
        if ctx.train {
            let (y, stats) = g.batch_norm_train(x, gamma, beta, NORM_EPS)?;
            ctx.bn.push((self.mean, self.var, stats));
            Ok(y)
        } else {
            Ok(g.batch_norm_eval(x, gamma, beta, s.buffer(self.mean).data(), s.buffer(self.var).data(), NORM_EPS)?)
        }
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.gamma, self.beta]
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(s, self.gamma);
        let beta = g.param(s, self.beta);
        Ok(g.layer_norm(x, gamma, beta, NORM_EPS)?)
    }

    pub fn ids(&self) -> [ParamId; 2] {
        [self.gamma, self.beta]
    }
}
