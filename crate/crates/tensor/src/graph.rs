//! Reverse-mode tape.
//!
//! Every op appends a node holding its output value and whatever it needs
//! for the backward pass. Nodes are only ever appended, so a node's inputs
//! always precede it and a single reverse sweep visits each node after all
//! of its consumers.

use surro_core::rng::SplitMix64;

use crate::error::shape_err;
use crate::linalg::{gemm, View};
use crate::params::{ParamId, ParamStore};
use crate::{Error, Result, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Per-channel statistics of one training-mode batch-norm call.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (n − 1) variance, the form running statistics track.
    pub var_unbiased: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Add(Var, Var),
    Mul(Var, Var),
    AddConst(Var),
    Scale(Var, f64),
    Relu(Var),
    Dropout(Var, Vec<f64>),
    Linear { x: Var, w: Var, b: Var },
    Conv1d { x: Var, w: Var, b: Var, stride: usize, pad: usize, cols: Vec<f64> },
    ConvT2 { x: Var, w: Var, b: Var },
    Norm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, layout: NormLayout, batch: bool },
    MaxPool2 { x: Var, argmax: Vec<usize> },
    MeanAxis { x: Var, axis: usize },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<f64> },
    Concat(Var, Var),
    Gather { x: Var, idx: Vec<usize> },
    Reshape(Var),
    Mse(Var, Var),
    Sum(Var),
}

/// How normalisation groups map onto a 3-D (or 2-D) tensor.
#[derive(Debug, Clone, Copy)]
enum NormLayout {
    /// Batch norm over `[B, C, T]`: one group per channel, spanning B·T.
    Channel { b: usize, c: usize, t: usize },
    /// Layer norm: one group per row of the trailing dimension `d`.
    Row { rows: usize, d: usize },
}

struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
    consumed: bool,
}

fn dims3(t: &Tensor, what: &str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        ref s => Err(shape_err!("{what} expects a 3-D tensor, got {s:?}")),
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        ref s => Err(shape_err!("{what} expects a 2-D tensor, got {s:?}")),
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let tracked = match op {
            Op::Leaf => false,
            _ => inputs.iter().any(|v| self.nodes[v.0].tracked),
        };
        self.push_tracked(value, op, tracked)
    }

    fn push_tracked(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// Gradient of the last `backward` loss with respect to `v`; `None` for
    /// untracked nodes or nodes the loss does not depend on.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// A constant: never receives a gradient.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push_tracked(t, Op::Leaf, false)
    }

    /// A free variable that receives a gradient (tests and gradient checks).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push_tracked(t, Op::Leaf, true)
    }

    /// The current value of a stored parameter; tracked unless frozen.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.param(id);
        let v = self.push_tracked(p.value.clone(), Op::Param, !p.frozen);
        self.params.push((id, v));
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err!("add: {:?} vs {:?}", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let t = Tensor::new(x.shape(), data)?;
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(shape_err!("mul: {:?} vs {:?}", x.shape(), y.shape()));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let t = Tensor::new(x.shape(), data)?;
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    /// `x + c` where the constant `c` matches the trailing dimensions of `x`
    /// and is broadcast over the leading ones.
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        let xv = self.value(x);
        let s = xv.shape();
        if c.shape().len() > s.len() || s[s.len() - c.shape().len()..] != *c.shape() {
            return Err(shape_err!("add_const: {:?} does not broadcast onto {s:?}", c.shape()));
        }
        let n = c.len();
        let data = xv.data().iter().enumerate().map(|(i, v)| v + c.data()[i % n]).collect();
        let t = Tensor::new(s, data)?;
        Ok(self.push(t, Op::AddConst(x), &[x]))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let xv = self.value(x);
        let t = Tensor::new(xv.shape(), xv.data().iter().map(|v| v * k).collect()).unwrap();
        self.push(t, Op::Scale(x, k), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let t = Tensor::new(xv.shape(), xv.data().iter().map(|v| v.max(0.0)).collect()).unwrap();
        self.push(t, Op::Relu(x), &[x])
    }

    /// Inverted dropout with a mask drawn from `SplitMix64::new(mask_seed)`:
    /// element `i` is kept when the i-th draw is `>= p`, then scaled by
    /// `1/(1−p)`.
    pub fn dropout(&mut self, x: Var, p: f64, mask_seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("dropout p = {p} outside [0, 1)")));
        }
        let xv = self.value(x);
        let mut rng = SplitMix64::new(mask_seed);
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..xv.len()).map(|_| if rng.next_f64() >= p { keep } else { 0.0 }).collect();
        let t = Tensor::new(xv.shape(), xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect())?;
        Ok(self.push(t, Op::Dropout(x, mask), &[x]))
    }

    /// Affine map over the last dimension: `x[..., Fin] · wᵀ + b` with
    /// `w: [Fout, Fin]`, `b: [Fout]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (fout, fin) = dims2(wv, "linear weight")?;
        let xs = xv.shape();
        if xs.last() != Some(&fin) || bv.shape() != [fout] {
            return Err(shape_err!("linear: input {xs:?}, weight {:?}, bias {:?}", wv.shape(), bv.shape()));
        }
        let m = xv.len() / fin;
        let mut out = Vec::with_capacity(m * fout);
        for _ in 0..m {
            out.extend_from_slice(bv.data());
        }
        gemm(m, fin, fout, 1.0, View::rows(xv.data(), 0, fin), View::trans(wv.data(), 0, fin), 1.0, &mut out, 0, fout, 1);
        let mut shape = xs.to_vec();
        *shape.last_mut().unwrap() = fout;
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::Linear { x, w, b }, &[x, w, b]))
    }

    /// 1-D cross-correlation over `[B, Cin, T]` with `w: [Cout, Cin, K]`,
    /// zero padding `pad` on both ends and the given stride.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (bn, cin, t) = dims3(xv, "conv1d input")?;
        let (cout, wcin, k) = dims3(wv, "conv1d weight")?;
        if wcin != cin || bv.shape() != [cout] || stride == 0 || t + 2 * pad < k {
            return Err(shape_err!(
                "conv1d: input {:?}, weight {:?}, bias {:?}, stride {stride}, pad {pad}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            ));
        }
        let tout = (t + 2 * pad - k) / stride + 1;
        let ck = cin * k;
        let nt = bn * tout;
        // im2col: cols[(ci·K + kk), b·Tout + to] = x[b, ci, to·stride + kk − pad]
        let mut cols = vec![0.0; ck * nt];
        let xd = xv.data();
        for ci in 0..cin {
            for kk in 0..k {
                let row = &mut cols[(ci * k + kk) * nt..(ci * k + kk + 1) * nt];
                for b_ in 0..bn {
                    let src = &xd[(b_ * cin + ci) * t..(b_ * cin + ci + 1) * t];
                    for to in 0..tout {
                        let pos = to * stride + kk;
                        if pos >= pad && pos - pad < t {
                            row[b_ * tout + to] = src[pos - pad];
                        }
                    }
                }
            }
        }
        let mut out = vec![0.0; bn * cout * tout];
        for b_ in 0..bn {
            for co in 0..cout {
                out[(b_ * cout + co) * tout..(b_ * cout + co + 1) * tout].fill(bv.data()[co]);
            }
            gemm(
                cout,
                ck,
                tout,
                1.0,
                View::rows(wv.data(), 0, ck),
                View::new(&cols, b_ * tout, nt, 1),
                1.0,
                &mut out,
                b_ * cout * tout,
                tout,
                1,
            );
        }
        let tt = Tensor::new(&[bn, cout, tout], out)?;
        Ok(self.push(tt, Op::Conv1d { x, w, b, stride, pad, cols }, &[x, w, b]))
    }

    /// Stride-2, kernel-2 transposed convolution `[B, Cin, T] → [B, Cout, 2T]`
    /// with `w: [Cin, Cout, 2]`; the exact adjoint of the matching strided
    /// `conv1d` (same weight tensor, no padding).
    pub fn conv_transpose2(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let (bn, cin, t) = dims3(xv, "conv_transpose input")?;
        let (wcin, cout, k) = dims3(wv, "conv_transpose weight")?;
        if wcin != cin || k != 2 || bv.shape() != [cout] {
            return Err(shape_err!(
                "conv_transpose: input {:?}, weight {:?}, bias {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            ));
        }
        let t2 = 2 * t;
        let mut out = vec![0.0; bn * cout * t2];
        for b_ in 0..bn {
            for co in 0..cout {
                out[(b_ * cout + co) * t2..(b_ * cout + co + 1) * t2].fill(bv.data()[co]);
            }
            for kk in 0..2 {
                // Y_k[co, t] = Σ_ci w[ci, co, k] · x[b, ci, t]
                gemm(
                    cout,
                    cin,
                    t,
                    1.0,
                    View::new(wv.data(), kk, 2, cout * 2),
                    View::rows(xv.data(), b_ * cin * t, t),
                    1.0,
                    &mut out,
                    b_ * cout * t2 + kk,
                    t2,
                    2,
                );
            }
        }
        let tt = Tensor::new(&[bn, cout, t2], out)?;
        Ok(self.push(tt, Op::ConvT2 { x, w, b }, &[x, w, b]))
    }

    fn norm(&mut self, x: Var, gamma: Var, beta: Var, layout: NormLayout, stats: Option<(&[f64], &[f64])>, eps: f64) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let groups = match layout {
            NormLayout::Channel { c, .. } => c,
            NormLayout::Row { d, .. } => d,
        };
        if gv.shape() != [groups] || bv.shape() != [groups] {
            return Err(shape_err!("norm: affine params {:?}/{:?}, expected [{groups}]", gv.shape(), bv.shape()));
        }
        let xd = xv.data();
        let n_stat = match layout {
            NormLayout::Channel { c, .. } => c,
            NormLayout::Row { rows, .. } => rows,
        };
        let mut mean = vec![0.0; n_stat];
        let mut var = vec![0.0; n_stat];
        let mut count = 0usize;
        // Visits every element of statistic group `s` in a fixed order.
        let each = |s: usize, f: &mut dyn FnMut(usize)| match layout {
            NormLayout::Channel { b, c, t } => {
                for b_ in 0..b {
                    let off = (b_ * c + s) * t;
                    for i in off..off + t {
                        f(i);
                    }
                }
            }
            NormLayout::Row { d, .. } => {
                for i in s * d..(s + 1) * d {
                    f(i);
                }
            }
        };
        match stats {
            Some((m, v)) => {
                mean.copy_from_slice(m);
                var.copy_from_slice(v);
            }
            None => {
                for s in 0..n_stat {
                    let mut sum = 0.0;
                    let mut n = 0;
                    each(s, &mut |i| {
                        sum += xd[i];
                        n += 1;
                    });
                    let mu = sum / n as f64;
                    let mut sq = 0.0;
                    each(s, &mut |i| sq += (xd[i] - mu) * (xd[i] - mu));
                    mean[s] = mu;
                    var[s] = sq / n as f64;
                    count = n;
                }
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        let (g, be) = (gv.data(), bv.data());
        for s in 0..n_stat {
            each(s, &mut |i| {
                let h = (xd[i] - mean[s]) * inv_std[s];
                xhat[i] = h;
                let ch = match layout {
                    NormLayout::Channel { .. } => s,
                    NormLayout::Row { d, .. } => i % d,
                };
                out[i] = g[ch] * h + be[ch];
            });
        }
        let t = Tensor::new(xv.shape(), out)?;
        let op = Op::Norm { x, gamma, beta, xhat, inv_std, layout, batch: stats.is_none() };
        let v = self.push(t, op, &[x, gamma, beta]);
        let unbiased = if count > 1 {
            var.iter().map(|v| v * count as f64 / (count - 1) as f64).collect()
        } else {
            var
        };
        Ok((v, mean, unbiased))
    }

    fn channel_layout(&self, x: Var) -> Result<NormLayout> {
        let s = self.shape(x);
        match *s {
            [b, c, t] => Ok(NormLayout::Channel { b, c, t }),
            [b, c] => Ok(NormLayout::Channel { b, c, t: 1 }),
            _ => Err(shape_err!("batch_norm expects [B, C] or [B, C, T], got {s:?}")),
        }
    }

    /// Training-mode batch norm: normalises with this batch's per-channel
    /// statistics (biased variance) and returns them for running averages.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let layout = self.channel_layout(x)?;
        let (v, mean, var_unbiased) = self.norm(x, gamma, beta, layout, None, eps)?;
        Ok((v, BatchStats { mean, var_unbiased }))
    }

    /// Inference-mode batch norm with fixed running statistics.
    pub fn batch_norm_eval(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        let layout = self.channel_layout(x)?;
        let NormLayout::Channel { c, .. } = layout else { unreachable!() };
        if mean.len() != c || var.len() != c {
            return Err(shape_err!("batch_norm_eval: running stats for {} channels, input has {c}", mean.len()));
        }
        Ok(self.norm(x, gamma, beta, layout, Some((mean, var)), eps)?.0)
    }

    /// Layer norm over the last dimension.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x);
        let d = *s.last().ok_or_else(|| shape_err!("layer_norm on a 0-D tensor"))?;
        let rows = self.value(x).len() / d;
        Ok(self.norm(x, gamma, beta, NormLayout::Row { rows, d }, None, eps)?.0)
    }

    /// Width-2, stride-2 max pooling over time; an odd trailing step is dropped.
    pub fn maxpool2(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (b, c, t) = dims3(xv, "maxpool")?;
        let th = t / 2;
        if th == 0 {
            return Err(shape_err!("maxpool needs T >= 2, got {t}"));
        }
        let xd = xv.data();
        let mut out = Vec::with_capacity(b * c * th);
        let mut argmax = Vec::with_capacity(b * c * th);
        for row in 0..b * c {
            for j in 0..th {
                let i = row * t + 2 * j;
                let pick = if xd[i + 1] > xd[i] { i + 1 } else { i };
                argmax.push(pick);
                out.push(xd[pick]);
            }
        }
        let tt = Tensor::new(&[b, c, th], out)?;
        Ok(self.push(tt, Op::MaxPool2 { x, argmax }, &[x]))
    }

    fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xv = self.value(x);
        let (a, b, c) = dims3(xv, "mean")?;
        let xd = xv.data();
        let (shape, out) = if axis == 2 {
            let out = (0..a * b).map(|r| xd[r * c..(r + 1) * c].iter().sum::<f64>() / c as f64).collect();
            ([a, b], out)
        } else {
            let mut out = vec![0.0; a * c];
            for i in 0..a {
                for j in 0..b {
                    add_into(&mut out[i * c..(i + 1) * c], &xd[(i * b + j) * c..(i * b + j + 1) * c]);
                }
            }
            out.iter_mut().for_each(|v| *v /= b as f64);
            ([a, c], out)
        };
        let t = Tensor::new(&shape, out)?;
        Ok(self.push(t, Op::MeanAxis { x, axis }, &[x]))
    }

    /// Global average pooling `[B, C, T] → [B, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        self.mean_axis(x, 2)
    }

    /// Mean over the time axis `[B, T, D] → [B, D]`.
    pub fn mean_time(&mut self, x: Var) -> Result<Var> {
        self.mean_axis(x, 1)
    }

    /// Multi-head scaled dot-product attention core on projected
    /// `q, k, v: [B, T, D]`. Head `h` uses columns `h·D/heads ..`; the output
    /// concatenates heads and still needs the output projection.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (b, t, d) = dims3(qv, "attention")?;
        if kv.shape() != qv.shape() || vv.shape() != qv.shape() {
            return Err(shape_err!("attention: q {:?}, k {:?}, v {:?}", qv.shape(), kv.shape(), vv.shape()));
        }
        if heads == 0 || d % heads != 0 {
            return Err(Error::InvalidArgument(format!("model dim {d} not divisible by {heads} heads")));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; b * heads * t * t];
        let mut out = vec![0.0; b * t * d];
        for b_ in 0..b {
            for h in 0..heads {
                let off = b_ * t * d + h * dh;
                let p_off = (b_ * heads + h) * t * t;
                gemm(t, dh, t, scale, View::rows(qv.data(), off, d), View::trans(kv.data(), off, d), 0.0, &mut probs, p_off, t, 1);
                for r in 0..t {
                    let row = &mut probs[p_off + r * t..p_off + (r + 1) * t];
                    let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for x in row.iter_mut() {
                        *x = (*x - mx).exp();
                        z += *x;
                    }
                    row.iter_mut().for_each(|x| *x /= z);
                }
                gemm(t, t, dh, 1.0, View::rows(&probs, p_off, t), View::rows(vv.data(), off, d), 0.0, &mut out, off, d, 1);
            }
        }
        let tt = Tensor::new(&[b, t, d], out)?;
        Ok(self.push(tt, Op::Attention { q, k, v, heads, probs }, &[q, k, v]))
    }

    /// Attention probabilities `[B, heads, T, T]` recorded by an attention node.
    pub fn attention_probs(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention { probs, .. } => Some(probs),
            _ => None,
        }
    }

    /// `[M, Fa] ‖ [M, Fb] → [M, Fa + Fb]`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, fa) = dims2(av, "concat")?;
        let (mb, fb) = dims2(bv, "concat")?;
        if m != mb {
            return Err(shape_err!("concat: {m} rows vs {mb} rows"));
        }
        let mut out = Vec::with_capacity(m * (fa + fb));
        for i in 0..m {
            out.extend_from_slice(&av.data()[i * fa..(i + 1) * fa]);
            out.extend_from_slice(&bv.data()[i * fb..(i + 1) * fb]);
        }
        let t = Tensor::new(&[m, fa + fb], out)?;
        Ok(self.push(t, Op::Concat(a, b), &[a, b]))
    }

    /// Row gather `[N, F] → [idx.len(), F]`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let (n, f) = dims2(xv, "gather")?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(shape_err!("gather: row {bad} out of {n}"));
        }
        let mut out = Vec::with_capacity(idx.len() * f);
        for &i in idx {
            out.extend_from_slice(&xv.data()[i * f..(i + 1) * f]);
        }
        let t = Tensor::new(&[idx.len(), f], out)?;
        Ok(self.push(t, Op::Gather { x, idx: idx.to_vec() }, &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Mean squared error over all elements; a scalar node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (p, t) = (self.value(pred), self.value(target));
        if p.len() != t.len() || p.is_empty() {
            return Err(shape_err!("mse: {} predictions vs {} targets", p.len(), t.len()));
        }
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let out = Tensor::scalar(s / p.len() as f64);
        Ok(self.push(out, Op::Mse(pred, target), &[pred, target]))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Reverse sweep from a scalar `loss`. A graph supports one backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.consumed {
            return Err(Error::StaleTape);
        }
        if self.value(loss).len() != 1 {
            return Err(shape_err!("backward needs a scalar loss, got {:?}", self.shape(loss)));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Adds this graph's parameter gradients into `store`.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) -> Result<()> {
        for &(id, v) in &self.params {
            if let Some(g) = self.grad(v) {
                store.accumulate_grad(id, g)?;
            }
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let nodes = &self.nodes;
        let mut acc = |v: Var, delta: &[f64]| {
            if nodes[v.0].tracked {
                match &mut grads[v.0] {
                    Some(existing) => add_into(existing, delta),
                    slot @ None => *slot = Some(delta.to_vec()),
                }
            }
        };
        let val = |v: Var| nodes[v.0].value.data();
        match &nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                acc(*a, g);
                acc(*b, g);
            }
            Op::Mul(a, b) => {
                let ga: Vec<f64> = g.iter().zip(val(*b)).map(|(g, y)| g * y).collect();
                let gb: Vec<f64> = g.iter().zip(val(*a)).map(|(g, x)| g * x).collect();
                acc(*a, &ga);
                acc(*b, &gb);
            }
            Op::AddConst(x) | Op::Reshape(x) => acc(*x, g),
            Op::Scale(x, k) => {
                let gx: Vec<f64> = g.iter().map(|g| g * k).collect();
                acc(*x, &gx);
            }
            Op::Relu(x) => {
                let gx: Vec<f64> = g.iter().zip(val(*x)).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
                acc(*x, &gx);
            }
            Op::Dropout(x, mask) => {
                let gx: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                acc(*x, &gx);
            }
            Op::Linear { x, w, b } => {
                let (fout, fin) = (nodes[w.0].value.shape()[0], nodes[w.0].value.shape()[1]);
                let m = g.len() / fout;
                if nodes[x.0].tracked {
                    let mut gx = vec![0.0; m * fin];
                    gemm(m, fout, fin, 1.0, View::rows(g, 0, fout), View::rows(val(*w), 0, fin), 0.0, &mut gx, 0, fin, 1);
                    acc(*x, &gx);
                }
                if nodes[w.0].tracked {
                    let mut gw = vec![0.0; fout * fin];
                    gemm(fout, m, fin, 1.0, View::trans(g, 0, fout), View::rows(val(*x), 0, fin), 0.0, &mut gw, 0, fin, 1);
                    acc(*w, &gw);
                }
                if nodes[b.0].tracked {
                    let mut gb = vec![0.0; fout];
                    for r in 0..m {
                        add_into(&mut gb, &g[r * fout..(r + 1) * fout]);
                    }
                    acc(*b, &gb);
                }
            }
            Op::Conv1d { x, w, b, stride, pad, cols } => {
                let (bn, cin, t) = dims3(&nodes[x.0].value, "conv1d")?;
                let (cout, _, k) = dims3(&nodes[w.0].value, "conv1d")?;
                let tout = g.len() / (bn * cout);
                let ck = cin * k;
                let nt = bn * tout;
                if nodes[w.0].tracked {
                    let mut gw = vec![0.0; cout * ck];
                    for b_ in 0..bn {
                        gemm(
                            cout,
                            tout,
                            ck,
                            1.0,
                            View::rows(g, b_ * cout * tout, tout),
                            View::new(cols, b_ * tout, 1, nt),
                            1.0,
                            &mut gw,
                            0,
                            ck,
                            1,
                        );
                    }
                    acc(*w, &gw);
                }
                if nodes[b.0].tracked {
                    let mut gb = vec![0.0; cout];
                    for b_ in 0..bn {
                        for (co, s) in gb.iter_mut().enumerate() {
                            *s += g[(b_ * cout + co) * tout..(b_ * cout + co + 1) * tout].iter().sum::<f64>();
                        }
                    }
                    acc(*b, &gb);
                }
                if nodes[x.0].tracked {
                    let mut gcols = vec![0.0; ck * nt];
                    for b_ in 0..bn {
                        gemm(
                            ck,
                            cout,
                            tout,
                            1.0,
                            View::trans(val(*w), 0, ck),
                            View::rows(g, b_ * cout * tout, tout),
                            0.0,
                            &mut gcols,
                            b_ * tout,
                            nt,
                            1,
                        );
                    }
                    let mut gx = vec![0.0; bn * cin * t];
                    for ci in 0..cin {
                        for kk in 0..k {
                            let row = &gcols[(ci * k + kk) * nt..(ci * k + kk + 1) * nt];
                            for b_ in 0..bn {
                                let dst = &mut gx[(b_ * cin + ci) * t..(b_ * cin + ci + 1) * t];
                                for to in 0..tout {
                                    let pos = to * stride + kk;
                                    if pos >= *pad && pos - pad < t {
                                        dst[pos - pad] += row[b_ * tout + to];
                                    }
                                }
                            }
                        }
                    }
                    acc(*x, &gx);
                }
            }
            Op::ConvT2 { x, w, b } => {
                let (bn, cin, t) = dims3(&nodes[x.0].value, "conv_transpose")?;
                let cout = nodes[w.0].value.shape()[1];
                let t2 = 2 * t;
                if nodes[x.0].tracked {
                    let mut gx = vec![0.0; bn * cin * t];
                    for b_ in 0..bn {
                        for kk in 0..2 {
                            gemm(
                                cin,
                                cout,
                                t,
                                1.0,
                                View::new(val(*w), kk, cout * 2, 2),
                                View::new(g, b_ * cout * t2 + kk, t2, 2),
                                1.0,
                                &mut gx,
                                b_ * cin * t,
                                t,
                                1,
                            );
                        }
                    }
                    acc(*x, &gx);
                }
                if nodes[w.0].tracked {
                    let mut gw = vec![0.0; cin * cout * 2];
                    for b_ in 0..bn {
                        for kk in 0..2 {
                            gemm(
                                cin,
                                t,
                                cout,
                                1.0,
                                View::rows(val(*x), b_ * cin * t, t),
                                View::new(g, b_ * cout * t2 + kk, 2, t2),
                                1.0,
                                &mut gw,
                                kk,
                                cout * 2,
                                2,
                            );
                        }
                    }
                    acc(*w, &gw);
                }
                if nodes[b.0].tracked {
                    let mut gb = vec![0.0; cout];
                    for b_ in 0..bn {
                        for (co, s) in gb.iter_mut().enumerate() {
                            *s += g[(b_ * cout + co) * t2..(b_ * cout + co + 1) * t2].iter().sum::<f64>();
                        }
                    }
                    acc(*b, &gb);
                }
            }
            Op::Norm { x, gamma, beta, xhat, inv_std, layout, batch } => {
                let gam = val(*gamma);
                let groups = gam.len();
                let mut ggam = vec![0.0; groups];
                let mut gbet = vec![0.0; groups];
                let mut gx = vec![0.0; g.len()];
                let visit = |s: usize, f: &mut dyn FnMut(usize, usize)| match *layout {
                    NormLayout::Channel { b, c, t } => {
                        for b_ in 0..b {
                            let off = (b_ * c + s) * t;
                            for i in off..off + t {
                                f(i, s);
                            }
                        }
                    }
                    NormLayout::Row { d, .. } => {
                        for i in s * d..(s + 1) * d {
                            f(i, i % d);
                        }
                    }
                };
                for s in 0..inv_std.len() {
                    let mut sum_d = 0.0;
                    let mut sum_dx = 0.0;
                    let mut n = 0usize;
                    visit(s, &mut |i, ch| {
                        ggam[ch] += g[i] * xhat[i];
                        gbet[ch] += g[i];
                        let dxh = g[i] * gam[ch];
                        sum_d += dxh;
                        sum_dx += dxh * xhat[i];
                        n += 1;
                    });
                    let nf = n as f64;
                    let is = inv_std[s];
                    visit(s, &mut |i, ch| {
                        let dxh = g[i] * gam[ch];
                        gx[i] = if *batch { is / nf * (nf * dxh - sum_d - xhat[i] * sum_dx) } else { is * dxh };
                    });
                }
                acc(*x, &gx);
                acc(*gamma, &ggam);
                acc(*beta, &gbet);
            }
            Op::MaxPool2 { x, argmax } => {
                let mut gx = vec![0.0; nodes[x.0].value.len()];
                for (o, &src) in argmax.iter().enumerate() {
                    gx[src] += g[o];
                }
                acc(*x, &gx);
            }
            Op::MeanAxis { x, axis } => {
                let (a, b, c) = dims3(&nodes[x.0].value, "mean")?;
                let mut gx = vec![0.0; a * b * c];
                if *axis == 2 {
                    for r in 0..a * b {
                        gx[r * c..(r + 1) * c].fill(g[r] / c as f64);
                    }
                } else {
                    for i in 0..a {
                        for j in 0..b {
                            for l in 0..c {
                                gx[(i * b + j) * c + l] = g[i * c + l] / b as f64;
                            }
                        }
                    }
                }
                acc(*x, &gx);
            }
            Op::Attention { q, k, v, heads, probs } => {
                let (b, t, d) = dims3(&nodes[q.0].value, "attention")?;
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let (qd, kd, vd) = (val(*q), val(*k), val(*v));
                let mut gq = vec![0.0; qd.len()];
                let mut gk = vec![0.0; kd.len()];
                let mut gv = vec![0.0; vd.len()];
                let mut dp = vec![0.0; t * t];
                for b_ in 0..b {
                    for h in 0..*heads {
                        let off = b_ * t * d + h * dh;
                        let p_off = (b_ * heads + h) * t * t;
                        let p = &probs[p_off..p_off + t * t];
                        // dV = Pᵀ·dO ; dP = dO·Vᵀ
                        gemm(t, t, dh, 1.0, View::trans(p, 0, t), View::rows(g, off, d), 1.0, &mut gv, off, d, 1);
                        gemm(t, dh, t, 1.0, View::rows(g, off, d), View::trans(vd, off, d), 0.0, &mut dp, 0, t, 1);
                        // dS = P ⊙ (dP − rowsum(dP ⊙ P)), folded with the score scale.
                        for r in 0..t {
                            let pr = &p[r * t..(r + 1) * t];
                            let dr = &mut dp[r * t..(r + 1) * t];
                            let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                            for (dv, pv) in dr.iter_mut().zip(pr) {
                                *dv = pv * (*dv - dot) * scale;
                            }
                        }
                        gemm(t, t, dh, 1.0, View::rows(&dp, 0, t), View::rows(kd, off, d), 1.0, &mut gq, off, d, 1);
                        gemm(t, t, dh, 1.0, View::trans(&dp, 0, t), View::rows(qd, off, d), 1.0, &mut gk, off, d, 1);
                    }
                }
                acc(*q, &gq);
                acc(*k, &gk);
                acc(*v, &gv);
            }
            Op::Concat(a, b) => {
                let fa = nodes[a.0].value.shape()[1];
                let fb = nodes[b.0].value.shape()[1];
                let m = g.len() / (fa + fb);
                let mut ga = Vec::with_capacity(m * fa);
                let mut gb = Vec::with_capacity(m * fb);
                for r in 0..m {
                    let row = &g[r * (fa + fb)..(r + 1) * (fa + fb)];
                    ga.extend_from_slice(&row[..fa]);
                    gb.extend_from_slice(&row[fa..]);
                }
                acc(*a, &ga);
                acc(*b, &gb);
            }
            Op::Gather { x, idx } => {
                let f = nodes[x.0].value.shape()[1];
                let mut gx = vec![0.0; nodes[x.0].value.len()];
                for (o, &src) in idx.iter().enumerate() {
                    add_into(&mut gx[src * f..(src + 1) * f], &g[o * f..(o + 1) * f]);
                }
                acc(*x, &gx);
            }
            Op::Mse(p, t) => {
                let n = val(*p).len() as f64;
                let gp: Vec<f64> = val(*p).iter().zip(val(*t)).map(|(a, b)| 2.0 * (a - b) / n * g[0]).collect();
                let gt: Vec<f64> = gp.iter().map(|x| -x).collect();
                acc(*p, &gp);
                acc(*t, &gt);
            }
            Op::Sum(x) => {
                let gx = vec![g[0]; val(*x).len()];
                acc(*x, &gx);
            }
        }
        Ok(())
    }
}

/// `PE(pos, 2i) = sin(pos / 10000^(2i/D))`, `PE(pos, 2i+1) = cos(...)`, as `[T, D]`.
pub fn sinusoidal_positional_encoding(t: usize, d: usize) -> Result<Tensor> {
    if d % 2 != 0 {
        return Err(Error::InvalidArgument(format!("positional encoding needs an even dim, got {d}")));
    }
    let mut out = vec![0.0; t * d];
    for pos in 0..t {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            out[pos * d + 2 * i] = angle.sin();
            out[pos * d + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(&[t, d], out)
}
