//! The assembled surrogate: encoder φ, head f, and the input/target scalings.

use surro_core::sampling::{DesignSpace, DesignVector, N_DESIGN_PARAMS};
use surro_core::weather::{MinMaxScaler, WeatherMatrix, N_FEATURES};
use surro_tensor::{Graph, ParamId, ParamStore, Tensor, Var};

use crate::config::{EncoderConfig, HeadConfig};
use crate::encoder::{Encoder, Head};
use crate::error::invalid;
use crate::layers::{Builder, Ctx};
use crate::{Error, Result};

/// Windows per encoder pass at inference time.
const EMBED_CHUNK: usize = 32;
/// Rows per head pass at inference time.
const HEAD_CHUNK: usize = 4096;

#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub(crate) store: ParamStore,
    pub(crate) encoder: Encoder,
    pub(crate) head: Head,
    pub(crate) encoder_cfg: EncoderConfig,
    pub(crate) head_cfg: HeadConfig,
    pub(crate) scaler: MinMaxScaler,
    pub(crate) space: DesignSpace,
    pub(crate) target_mean: f64,
    pub(crate) target_std: f64,
    pub(crate) input_hours: usize,
    pub(crate) seed: u64,
    pub(crate) trained: bool,
}

impl SurrogateModel {
    /// A freshly initialised (untrained) model; weights drawn from `seed`.
    pub fn new(
        encoder_cfg: EncoderConfig,
        head_cfg: HeadConfig,
        scaler: MinMaxScaler,
        space: DesignSpace,
        input_hours: usize,
        seed: u64,
    ) -> Result<Self> {
        encoder_cfg.validate()?;
        head_cfg.validate()?;
        if scaler.n_features() != N_FEATURES {
            return Err(invalid(format!("scaler has {} features, expected {N_FEATURES}", scaler.n_features())));
        }
        let mut store = ParamStore::new();
        let mut b = Builder::new(&mut store, seed);
        let encoder = Encoder::new(&mut b, &encoder_cfg);
        let head = Head::new(&mut b, &head_cfg, encoder_cfg.embed_dim() + N_DESIGN_PARAMS);
        Ok(Self {
            store,
            encoder,
            head,
            encoder_cfg,
            head_cfg,
            scaler,
            space,
            target_mean: 0.0,
            target_std: 1.0,
            input_hours,
            seed,
            trained: false,
        })
    }

    pub fn encoder_config(&self) -> &EncoderConfig {
        &self.encoder_cfg
    }

    pub fn head_config(&self) -> &HeadConfig {
        &self.head_cfg
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder_cfg.embed_dim()
    }

    /// 168 for weekly models, 8736 for the annual baseline.
    pub fn input_hours(&self) -> usize {
        self.input_hours
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn encoder_ids(&self) -> Vec<ParamId> {
        self.encoder.ids()
    }

    pub fn head_ids(&self) -> Vec<ParamId> {
        self.head.ids()
    }

    pub fn encoder_checksum(&self) -> u64 {
        self.store.checksum(self.encoder.ids())
    }

    /// Encoder output for already-scaled `[T, d_w]` windows, in eval mode.
    pub fn embed_scaled(&self, windows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(EMBED_CHUNK) {
            let mut g = Graph::new();
            let mut ctx = Ctx::eval();
            let x = g.input(self.encoder.pack(chunk, self.input_hours)?);
            let h = self.encoder.forward(&mut g, &self.store, x, &mut ctx)?;
            let e = self.embed_dim();
            out.extend(g.value(h).data().chunks(e).map(<[f64]>::to_vec));
        }
        Ok(out)
    }

    /// Standardised head output for every (embedding, design) pair,
    /// window-major: `out[w * designs.len() + d]`.
    pub(crate) fn head_grid(&self, emb: &[Vec<f64>], designs: &[[f64; N_DESIGN_PARAMS]]) -> Result<Vec<f64>> {
        let nd = designs.len();
        let pairs: Vec<(usize, usize)> = (0..emb.len()).flat_map(|w| (0..nd).map(move |d| (w, d))).collect();
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(HEAD_CHUNK) {
            let mut g = Graph::new();
            let ctx = Ctx::eval();
            let x = head_input(&mut g, chunk.iter().map(|&(w, d)| (&emb[w][..], &designs[d])), self.head.in_dim)?;
            let y = self.head.forward(&mut g, &self.store, x, &ctx)?;
            out.extend_from_slice(g.value(y).data());
        }
        Ok(out)
    }

    /// Predicted kWh for one raw (unscaled) weather window and design.
    pub fn predict(&self, raw: &WeatherMatrix, b: &DesignVector) -> Result<f64> {
        Ok(self.predict_grid(&[raw], std::slice::from_ref(b))?[0])
    }

    /// Predictions for every design × window, design-major:
    /// `out[d * windows.len() + w]`. Each window is encoded once.
    pub fn predict_grid(&self, raw: &[&WeatherMatrix], designs: &[DesignVector]) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::UntrainedModel);
        }
        let scaled = raw
            .iter()
            .map(|m| {
                if m.rows() != self.input_hours || m.cols() != N_FEATURES {
                    return Err(invalid(format!(
                        "weather window is {}×{}, model expects {}×{N_FEATURES}",
                        m.rows(),
                        m.cols(),
                        self.input_hours
                    )));
                }
                Ok(self.scaler.transform_matrix(m)?.data().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = scaled.iter().map(Vec::as_slice).collect();
        let emb = self.embed_scaled(&refs)?;
        let dn = designs.iter().map(|d| self.space.normalize(d)).collect::<surro_core::Result<Vec<_>>>()?;
        let grid = self.head_grid(&emb, &dn)?;
        let nw = raw.len();
        let mut out = vec![0.0; grid.len()];
        for w in 0..nw {
            for d in 0..designs.len() {
                out[d * nw + w] = self.destandardize(grid[w * designs.len() + d]);
            }
        }
        Ok(out)
    }

    pub(crate) fn destandardize(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }

    /// Rounds every weight and buffer through f32, matching the on-disk blob.
    pub(crate) fn round_to_f32(&mut self) {
        round_store(&mut self.store);
    }
}

pub(crate) fn round_store(store: &mut ParamStore) {
    for p in store.params_mut() {
        p.value.data_mut().iter_mut().for_each(|x| *x = *x as f32 as f64);
    }
    for b in store.buffers_mut() {
        b.value.data_mut().iter_mut().for_each(|x| *x = *x as f32 as f64);
    }
}

/// Builds the `[M, embed + 14]` head input from (embedding, design) rows.
pub(crate) fn head_input<'a>(
    g: &mut Graph,
    rows: impl Iterator<Item = (&'a [f64], &'a [f64; N_DESIGN_PARAMS])>,
    in_dim: usize,
) -> Result<Var> {
    let mut data = Vec::new();
    let mut m = 0;
    for (e, d) in rows {
        data.extend_from_slice(e);
        data.extend_from_slice(d);
        m += 1;
    }
    Ok(g.input(Tensor::new(&[m, in_dim], data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ConvConfig, TransformerConfig};
    use surro_core::rng::SplitMix64;
    use surro_tensor::gradcheck;

    fn scaler() -> MinMaxScaler {
        MinMaxScaler::from_bounds(vec![-30.0, 0.0, 0.0, 0.0], vec![35.0, 100.0, 1000.0, 20.0], "test").unwrap()
    }

    fn windows(n: usize, t: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| (0..t * N_FEATURES).map(|_| rng.next_f64()).collect()).collect()
    }

    /// Train-mode loss of the whole model on a small batch: every parameter,
    /// including the encoder's, must pass a finite-difference check.
    fn full_model_gradcheck(enc: EncoderConfig, t: usize) -> f64 {
        let head = HeadConfig { first_hidden: 6, n_layers: 2, dropout_p: 0.2 };
        let m = SurrogateModel::new(enc, head, scaler(), DesignSpace::standard(), t, 5).unwrap();
        let wins = windows(3, t, 9);
        let mut rng = SplitMix64::new(11);
        let designs: Vec<[f64; N_DESIGN_PARAMS]> =
            (0..2).map(|_| std::array::from_fn(|_| rng.next_f64())).collect();
        let targets: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let to_t = |e: Error| surro_tensor::Error::InvalidArgument(e.to_string());
        gradcheck::check_params(&m.store, 1e-5, |g, store| {
            let refs: Vec<&[f64]> = wins.iter().map(Vec::as_slice).collect();
            let mut ctx = Ctx::train(3, 0);
            let x = g.input(m.encoder.pack(&refs, t).map_err(to_t)?);
            let h = m.encoder.forward(g, store, x, &mut ctx).map_err(to_t)?;
            let idx: Vec<usize> = (0..3).flat_map(|w| [w, w]).collect();
            let e = g.gather_rows(h, &idx)?;
            let dv: Vec<f64> = (0..3).flat_map(|_| designs.iter().flatten().copied()).collect();
            let dv = g.input(Tensor::new(&[6, N_DESIGN_PARAMS], dv)?);
            let x = g.concat_cols(e, dv)?;
            let y = m.head.forward(g, store, x, &ctx).map_err(to_t)?;
            let tt = g.input(Tensor::new(&[6, 1], targets.clone())?);
            g.mse(y, tt)
        })
        .unwrap()
    }

    #[test]
    fn tcn_full_model_gradcheck() {
        let c = ConvConfig { first_filters: 3, n_blocks: 1, kernel_size: 3, embed_dim: 8 };
        let err = full_model_gradcheck(EncoderConfig::Tcn(c), 12);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn transformer_full_model_gradcheck() {
        let c = TransformerConfig { embed_dim: 8, heads: 2, t_ffnn_size: 6, n_blocks: 1 };
        let err = full_model_gradcheck(EncoderConfig::Transformer(c), 7);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn conv_stack_halves_time_per_block() {
        let c = ConvConfig { first_filters: 4, n_blocks: 3, kernel_size: 5, embed_dim: 6 };
        let head = HeadConfig { first_hidden: 4, n_layers: 1, dropout_p: 0.0 };
        let m = SurrogateModel::new(EncoderConfig::Tcn(c), head, scaler(), DesignSpace::standard(), 168, 1).unwrap();
        let Encoder::Conv(stack) = &m.encoder else { panic!() };
        assert_eq!(stack.channels, vec![4, 8, 16]);
        let w = windows(2, 168, 1);
        let refs: Vec<&[f64]> = w.iter().map(Vec::as_slice).collect();
        let mut g = Graph::new();
        let mut x = g.input(m.encoder.pack(&refs, 168).unwrap());
        let mut ctx = Ctx::eval();
        let Encoder::Conv(stack) = &m.encoder else { panic!() };
        let mut lens = Vec::new();
        for blk in &stack.blocks {
            x = blk.forward(&mut g, &m.store, x, &mut ctx).unwrap();
            lens.push(g.shape(x)[2]);
        }
        assert_eq!(lens, vec![84, 42, 21]);
    }
}
