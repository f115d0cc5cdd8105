//! The weather encoders, the autoencoder's decoder and the prediction head.

use surro_core::weather::N_FEATURES;
use surro_tensor::{sinusoidal_positional_encoding, Graph, Init, ParamId, ParamStore, Tensor, Var};

use crate::config::{ConvConfig, EncoderConfig, HeadConfig, TransformerConfig};
use crate::error::invalid;
use crate::layers::{BatchNorm, Builder, Conv, ConvT, Ctx, LayerNorm, Linear};
use crate::Result;

/// `[conv → BN → relu → conv → BN] + skip → relu → maxpool(2)`.
#[derive(Debug, Clone)]
pub(crate) struct ResBlock {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    /// 1×1 projection on the skip path when the channel count changes.
    proj: Option<Conv>,
}

impl ResBlock {
    fn new(b: &mut Builder, name: &str, cin: usize, cout: usize, k: usize) -> Self {
        Self {
            conv1: b.conv(&format!("{name}.conv1"), cin, cout, k, Init::He),
            bn1: b.batch_norm(&format!("{name}.bn1"), cout),
            conv2: b.conv(&format!("{name}.conv2"), cout, cout, k, Init::He),
            bn2: b.batch_norm(&format!("{name}.bn2"), cout),
            proj: (cin != cout).then(|| b.conv(&format!("{name}.proj"), cin, cout, 1, Init::LeCun)),
        }
    }

    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let h = self.conv1.forward(g, s, x)?;
        let h = self.bn1.forward(g, s, h, ctx)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, s, h)?;
        let h = self.bn2.forward(g, s, h, ctx)?;
        let skip = match &self.proj {
            Some(p) => p.forward(g, s, x)?,
            None => x,
        };
        let y = g.add(h, skip)?;
        let y = g.relu(y);
        Ok(g.maxpool2(y)?)
    }

    fn ids(&self) -> Vec<ParamId> {
        let mut v = [self.conv1.ids(), self.bn1.ids(), self.conv2.ids(), self.bn2.ids()].concat();
        if let Some(p) = &self.proj {
            v.extend(p.ids());
        }
        v
    }
}

/// Residual conv blocks with doubling channels, global average pooling and
/// a linear projection to the embedding. Input `[B, d_w, T]`.
#[derive(Debug, Clone)]
pub(crate) struct ConvStack {
    pub blocks: Vec<ResBlock>,
    out: Linear,
    pub channels: Vec<usize>,
}

impl ConvStack {
    pub fn new(b: &mut Builder, prefix: &str, c: &ConvConfig) -> Self {
        let channels: Vec<usize> = (0..c.n_blocks).map(|i| c.first_filters << i).collect();
        let mut cin = N_FEATURES;
        let mut blocks = Vec::new();
        for (i, &ch) in channels.iter().enumerate() {
            blocks.push(ResBlock::new(b, &format!("{prefix}.block{i}"), cin, ch, c.kernel_size));
            cin = ch;
        }
        let out = b.linear(&format!("{prefix}.out"), cin, c.embed_dim, Init::LeCun);
        Self { blocks, out, channels }
    }

    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let t = g.shape(x)[2];
        if t < 1 << self.blocks.len() {
            return Err(invalid(format!("input length {t} too short for {} pooling stages", self.blocks.len())));
        }
        let mut h = x;
        for blk in &self.blocks {
            h = blk.forward(g, s, h, ctx)?;
        }
        let p = g.global_avg_pool(h)?;
        self.out.forward(g, s, p)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = self.blocks.iter().flat_map(ResBlock::ids).collect();
        v.extend(self.out.ids());
        v
    }
}

#[derive(Debug, Clone)]
struct TransformerBlock {
    ln1: LayerNorm,
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    ln2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// Pre-norm transformer encoder: per-step linear embedding, sinusoidal
/// positions, `x + MHA(LN(x))`, `x + FF(LN(x))`, final LN, mean over time.
/// Input `[B, T, d_w]`.
#[derive(Debug, Clone)]
pub(crate) struct TransformerEnc {
    embed: Linear,
    blocks: Vec<TransformerBlock>,
    ln_f: LayerNorm,
    cfg: TransformerConfig,
}

impl TransformerEnc {
    pub fn new(b: &mut Builder, prefix: &str, c: &TransformerConfig) -> Self {
        let d = c.embed_dim;
        let embed = b.linear(&format!("{prefix}.embed"), N_FEATURES, d, Init::LeCun);
        let blocks = (0..c.n_blocks)
            .map(|i| {
                let n = format!("{prefix}.block{i}");
                TransformerBlock {
                    ln1: b.layer_norm(&format!("{n}.ln1"), d),
                    wq: b.linear(&format!("{n}.wq"), d, d, Init::LeCun),
                    wk: b.linear(&format!("{n}.wk"), d, d, Init::LeCun),
                    wv: b.linear(&format!("{n}.wv"), d, d, Init::LeCun),
                    wo: b.linear(&format!("{n}.wo"), d, d, Init::LeCun),
                    ln2: b.layer_norm(&format!("{n}.ln2"), d),
                    ff1: b.linear(&format!("{n}.ff1"), d, c.t_ffnn_size, Init::He),
                    ff2: b.linear(&format!("{n}.ff2"), c.t_ffnn_size, d, Init::LeCun),
                }
            })
            .collect();
        let ln_f = b.layer_norm(&format!("{prefix}.ln_f"), d);
        Self { embed, blocks, ln_f, cfg: *c }
    }

    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var) -> Result<Var> {
        let t = g.shape(x)[1];
        let h = self.embed.forward(g, s, x)?;
        let mut h = g.add_const(h, &sinusoidal_positional_encoding(t, self.cfg.embed_dim)?)?;
        for blk in &self.blocks {
            let n = blk.ln1.forward(g, s, h)?;
            let q = blk.wq.forward(g, s, n)?;
            let k = blk.wk.forward(g, s, n)?;
            let v = blk.wv.forward(g, s, n)?;
            let a = g.attention(q, k, v, self.cfg.heads)?;
            let a = blk.wo.forward(g, s, a)?;
            h = g.add(h, a)?;
            let n = blk.ln2.forward(g, s, h)?;
            let f = blk.ff1.forward(g, s, n)?;
            let f = g.relu(f);
            let f = blk.ff2.forward(g, s, f)?;
            h = g.add(h, f)?;
        }
        let h = self.ln_f.forward(g, s, h)?;
        Ok(g.mean_time(h)?)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v = self.embed.ids().to_vec();
        for b in &self.blocks {
            v.extend(
                [b.ln1.ids(), b.wq.ids(), b.wk.ids(), b.wv.ids(), b.wo.ids(), b.ln2.ids(), b.ff1.ids(), b.ff2.ids()]
                    .concat(),
            );
        }
        v.extend(self.ln_f.ids());
        v
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Encoder {
    Conv(ConvStack),
    Transformer(TransformerEnc),
}

impl Encoder {
    pub fn new(b: &mut Builder, cfg: &EncoderConfig) -> Self {
        match cfg {
            EncoderConfig::Tcn(c) | EncoderConfig::Autoencoder(c) => Encoder::Conv(ConvStack::new(b, "enc", c)),
            EncoderConfig::Transformer(t) => Encoder::Transformer(TransformerEnc::new(b, "enc", t)),
        }
    }

    /// Packs scaled `[T, d_w]` row-major windows into this encoder's input
    /// layout: `[B, d_w, T]` for conv stacks, `[B, T, d_w]` for attention.
    pub fn pack(&self, windows: &[&[f64]], t: usize) -> Result<Tensor> {
        match self {
            Encoder::Conv(_) => pack_channels_first(windows, t),
            Encoder::Transformer(_) => {
                let data: Vec<f64> = windows.iter().flat_map(|w| w.iter().copied()).collect();
                Ok(Tensor::new(&[windows.len(), t, N_FEATURES], data)?)
            }
        }
    }

    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var, ctx: &mut Ctx) -> Result<Var> {
        ctx.encoded += g.shape(x)[0];
        match self {
            Encoder::Conv(c) => c.forward(g, s, x, ctx),
            Encoder::Transformer(t) => t.forward(g, s, x),
        }
    }

    pub fn ids(&self) -> Vec<ParamId> {
        match self {
            Encoder::Conv(c) => c.ids(),
            Encoder::Transformer(t) => t.ids(),
        }
    }
}

pub(crate) fn pack_channels_first(windows: &[&[f64]], t: usize) -> Result<Tensor> {
    let mut data = vec![0.0; windows.len() * N_FEATURES * t];
    for (b, w) in windows.iter().enumerate() {
        if w.len() != t * N_FEATURES {
            return Err(invalid(format!("window has {} values, expected {}", w.len(), t * N_FEATURES)));
        }
        for step in 0..t {
            for f in 0..N_FEATURES {
                data[(b * N_FEATURES + f) * t + step] = w[step * N_FEATURES + f];
            }
        }
    }
    Ok(Tensor::new(&[windows.len(), N_FEATURES, t], data)?)
}

#[derive(Debug, Clone)]
struct UpBlock {
    up: ConvT,
    bn1: BatchNorm,
    conv: Conv,
    bn2: BatchNorm,
}

/// Mirror of [`ConvStack`]: linear back to the pooled shape, then per level
/// `convT(×2) → BN → relu → conv → BN → relu`, then a 1×1 conv to `d_w`.
#[derive(Debug, Clone)]
pub(crate) struct Decoder {
    fc: Linear,
    ups: Vec<UpBlock>,
    out: Conv,
    c_last: usize,
    t_last: usize,
}

pub(crate) const WEEK_HOURS: usize = surro_core::weather::HOURS_PER_WEEK;

impl Decoder {
    pub fn new(b: &mut Builder, c: &ConvConfig, channels: &[usize]) -> Self {
        let n = channels.len();
        let c_last = channels[n - 1];
        let t_last = WEEK_HOURS >> n;
        let fc = b.linear("dec.fc", c.embed_dim, c_last * t_last, Init::He);
        let mut cin = c_last;
        let mut ups = Vec::new();
        for i in 0..n {
            let cout = if i + 1 < n { channels[n - 2 - i] } else { channels[0] };
            let name = format!("dec.up{i}");
            ups.push(UpBlock {
                up: b.conv_t(&format!("{name}.convt"), cin, cout),
                bn1: b.batch_norm(&format!("{name}.bn1"), cout),
                conv: b.conv(&format!("{name}.conv"), cout, cout, c.kernel_size, Init::He),
                bn2: b.batch_norm(&format!("{name}.bn2"), cout),
            });
            cin = cout;
        }
        let out = b.conv("dec.out", cin, N_FEATURES, 1, Init::LeCun);
        Self { fc, ups, out, c_last, t_last }
    }

    /// `[B, embed] → [B, d_w, 168]`.
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, h: Var, ctx: &mut Ctx) -> Result<Var> {
        let bsz = g.shape(h)[0];
        let x = self.fc.forward(g, s, h)?;
        let x = g.relu(x);
        let mut x = g.reshape(x, &[bsz, self.c_last, self.t_last])?;
        for u in &self.ups {
            x = u.up.forward(g, s, x)?;
            x = u.bn1.forward(g, s, x, ctx)?;
            x = g.relu(x);
            x = u.conv.forward(g, s, x)?;
            x = u.bn2.forward(g, s, x, ctx)?;
            x = g.relu(x);
        }
        self.out.forward(g, s, x)
    }
}

/// `n_layers` hidden layers (relu + dropout) then a scalar output.
#[derive(Debug, Clone)]
pub(crate) struct Head {
    layers: Vec<Linear>,
    out: Linear,
    p: f64,
    pub in_dim: usize,
}

impl Head {
    pub fn new(b: &mut Builder, c: &HeadConfig, in_dim: usize) -> Self {
        let mut fin = in_dim;
        let mut layers = Vec::new();
        for (i, w) in c.widths().into_iter().enumerate() {
            layers.push(b.linear(&format!("head.fc{i}"), fin, w, Init::He));
            fin = w;
        }
        let out = b.linear("head.out", fin, 1, Init::LeCun);
        Self { layers, out, p: c.dropout_p, in_dim }
    }

    /// `[M, embed + 14] → [M, 1]`.
    pub fn forward(&self, g: &mut Graph, s: &ParamStore, x: Var, ctx: &Ctx) -> Result<Var> {
        if g.shape(x).get(1) != Some(&self.in_dim) {
            return Err(invalid(format!("head expects {} inputs, got shape {:?}", self.in_dim, g.shape(x))));
        }
        let mut h = x;
        for (i, l) in self.layers.iter().enumerate() {
            h = l.forward(g, s, h)?;
            h = g.relu(h);
            h = ctx.dropout(g, h, self.p, i as u64)?;
        }
        self.out.forward(g, s, h)
    }

    pub fn ids(&self) -> Vec<ParamId> {
        let mut v: Vec<ParamId> = self.layers.iter().flat_map(Linear::ids).collect();
        v.extend(self.out.ids());
        v
    }
}
