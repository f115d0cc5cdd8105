//! Joint training, the annual baseline, autoencoder pretraining and
//! frozen-encoder head training.
//!
//! Mini-batches are tiles: `windows_per_batch` weather windows crossed with
//! a group of designs, so the encoder runs once per window per batch rather
//! than once per sample. Every (window, design) pair is visited exactly once
//! per epoch.

use std::time::Instant;

use serde::Serialize;
use surro_core::dataset::Dataset;
use surro_core::rng::{self, SplitMix64};
use surro_core::sampling::{DesignSpace, N_DESIGN_PARAMS};
use surro_core::weather::{MinMaxScaler, WeeklyWeather, HOURS_PER_WEEK, WEEKS_PER_YEAR};
use surro_tensor::{Adam, Graph, ParamId, ParamStore, Tensor, Var};

use crate::config::{ConvConfig, EncoderConfig, Stage, TrainConfig};
use crate::data::SampleSet;
use crate::encoder::{pack_channels_first, ConvStack, Decoder};
use crate::error::invalid;
use crate::layers::{Builder, Ctx};
use crate::model::{round_store, SurrogateModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub stage: String,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    /// Weather windows pushed through the encoder over the whole run.
    pub encoder_forwards: usize,
    pub model_path: Option<String>,
    /// Excluded from the serialized report so reruns compare byte-equal.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl TrainReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable") + "\n"
    }
}

/// Test hooks; the defaults change nothing.
#[derive(Debug, Clone, Default)]
pub struct TrainHooks {
    /// Replace the first batch loss of this epoch with NaN.
    pub inject_nan_epoch: Option<usize>,
}

fn check_pair(train: &Dataset, val: &Dataset) -> Result<()> {
    if train.scaler() != val.scaler() {
        return Err(invalid("training and validation datasets use different scalers"));
    }
    if train.space() != val.space() {
        return Err(invalid("training and validation datasets use different design spaces"));
    }
    Ok(())
}

/// Approach 1: encoder and head trained end to end on standardized kWh.
pub fn train_joint(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(SurrogateModel, TrainReport)> {
    train_joint_with(train, val, cfg, &TrainHooks::default())
}

pub fn train_joint_with(
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    hooks: &TrainHooks,
) -> Result<(SurrogateModel, TrainReport)> {
    cfg.validate()?;
    if cfg.stage != Stage::Joint {
        return Err(invalid("train_joint needs stage = joint"));
    }
    check_pair(train, val)?;
    let ts = SampleSet::from_dataset(train)?;
    let vs = SampleSet::from_dataset(val)?;
    fit_sets(&ts, &vs, cfg, train.scaler(), train.space(), HOURS_PER_WEEK, hooks)
}

/// Trains `cfg`'s encoder and head on whole-year inputs (one sample per
/// location × design, annual kWh target).
pub fn train_annual_baseline(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(SurrogateModel, TrainReport)> {
    cfg.validate()?;
    check_pair(train, val)?;
    let ts = SampleSet::annual_from_dataset(train)?;
    let vs = SampleSet::annual_from_dataset(val)?;
    fit_sets(&ts, &vs, cfg, train.scaler(), train.space(), HOURS_PER_WEEK * WEEKS_PER_YEAR, hooks_none())
}

fn hooks_none() -> &'static TrainHooks {
    static NONE: TrainHooks = TrainHooks { inject_nan_epoch: None };
    &NONE
}

/// Joint training directly on prepared sample sets, whose windows were
/// scaled with `scaler` and designs normalized over `space`.
pub fn fit_sets(
    ts: &SampleSet,
    vs: &SampleSet,
    cfg: &TrainConfig,
    scaler: &MinMaxScaler,
    space: &DesignSpace,
    input_hours: usize,
    hooks: &TrainHooks,
) -> Result<(SurrogateModel, TrainReport)> {
    cfg.validate()?;
    if ts.t_len != input_hours || vs.t_len != input_hours {
        return Err(invalid(format!("sample sets must hold {input_hours}-hour windows")));
    }
    let head = cfg.head.ok_or_else(|| invalid("missing [head] section"))?;
    let mut model = SurrogateModel::new(cfg.encoder, head, scaler.clone(), space.clone(), input_hours, cfg.seed)?;
    let report = fit(&mut model, ts, vs, cfg, None, hooks)?;
    Ok((model, report))
}

/// Cached embeddings for the frozen-encoder stage.
struct Cache {
    train: Vec<Vec<f64>>,
    val: Vec<Vec<f64>>,
}

/// The shared training loop. With `cache`, the encoder is never run and
/// only the head learns.
fn fit(
    model: &mut SurrogateModel,
    ts: &SampleSet,
    vs: &SampleSet,
    cfg: &TrainConfig,
    cache: Option<&Cache>,
    hooks: &TrainHooks,
) -> Result<TrainReport> {
    let start = Instant::now();
    let (mean, std) = ts.target_stats();
    model.target_mean = mean;
    model.target_std = std;
    let ystd = |t: f64| (t - mean) / std;

    let nw = ts.windows.len();
    let nd = ts.designs.len();
    let wpb = cfg.windows_per_batch.min(nw).max(1);
    let group = (cfg.batch_size / wpb).max(1);
    let opt = Adam::new(cfg.lr);
    let mut shuffle = SplitMix64::stream(cfg.seed, rng::tag("shuffle"));
    let dropout_seed = rng::child_seed(cfg.seed, rng::tag("dropout"));

    let mut report = TrainReport {
        stage: match cfg.stage {
            Stage::Joint => "joint",
            Stage::Autoencoder => "autoencoder",
            Stage::Head => "head",
        }
        .into(),
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        epochs_run: 0,
        encoder_forwards: 0,
        model_path: None,
        wall_time_s: 0.0,
    };
    let mut best: Option<ParamStore> = None;
    let mut step = 0u64;

    for epoch in 0..cfg.max_epochs {
        let wperm = shuffle.permutation(nw);
        let dperm = shuffle.permutation(nd);
        let mut tiles: Vec<(&[usize], &[usize])> = Vec::new();
        for wc in wperm.chunks(wpb) {
            for dc in dperm.chunks(group) {
                tiles.push((wc, dc));
            }
        }
        shuffle.shuffle(&mut tiles);

        let mut sum = 0.0;
        for (i, &(wc, dc)) in tiles.iter().enumerate() {
            let mut g = Graph::new();
            let mut ctx = Ctx::train(dropout_seed, step);
            step += 1;
            let emb = match cache {
                Some(c) => {
                    let data: Vec<f64> = wc.iter().flat_map(|&w| c.train[w].iter().copied()).collect();
                    g.input(Tensor::new(&[wc.len(), model.embed_dim()], data)?)
                }
                None => {
                    let wins: Vec<&[f64]> = wc.iter().map(|&w| ts.windows[w].as_slice()).collect();
                    let x = g.input(model.encoder.pack(&wins, ts.t_len)?);
                    model.encoder.forward(&mut g, &model.store, x, &mut ctx)?
                }
            };
            let mut widx = Vec::with_capacity(wc.len() * dc.len());
            let mut dvals = Vec::with_capacity(wc.len() * dc.len() * N_DESIGN_PARAMS);
            let mut targets = Vec::with_capacity(wc.len() * dc.len());
            for (k, &w) in wc.iter().enumerate() {
                for &d in dc {
                    widx.push(k);
                    dvals.extend_from_slice(&ts.designs[d]);
                    targets.push(ystd(ts.target(w, d)));
                }
            }
            let m = widx.len();
            let e = g.gather_rows(emb, &widx)?;
            let dv = g.input(Tensor::new(&[m, N_DESIGN_PARAMS], dvals)?);
            let x = g.concat_cols(e, dv)?;
            let y = model.head.forward(&mut g, &model.store, x, &ctx)?;
            let t = g.input(Tensor::new(&[m, 1], targets)?);
            let loss = g.mse(y, t)?;
            let mut l = g.value(loss).data()[0];
            if i == 0 && hooks.inject_nan_epoch == Some(epoch) {
                l = f64::NAN;
            }
            if !l.is_finite() {
                return Err(Error::NumericFailure { epoch, what: format!("training loss {l}") });
            }
            g.backward(loss)?;
            model.store.zero_grads();
            g.accumulate_param_grads(&mut model.store)?;
            model.store.adam_step(&opt);
            report.encoder_forwards += ctx.encoded;
            ctx.apply_bn(&mut model.store);
            sum += l * m as f64;
        }
        report.train_loss.push(sum / (nw * nd) as f64);

        let val_emb;
        let emb = match cache {
            Some(c) => &c.val,
            None => {
                let wins: Vec<&[f64]> = vs.windows.iter().map(Vec::as_slice).collect();
                val_emb = model.embed_scaled(&wins)?;
                report.encoder_forwards += wins.len();
                &val_emb
            }
        };
        let pred = model.head_grid(emb, &vs.designs)?;
        let vl = pred.iter().zip(&vs.targets).map(|(p, t)| (p - ystd(*t)).powi(2)).sum::<f64>() / pred.len() as f64;
        if !vl.is_finite() {
            return Err(Error::NumericFailure { epoch, what: format!("validation loss {vl}") });
        }
        report.val_loss.push(vl);
        report.epochs_run = epoch + 1;
        if vl < report.best_val_loss {
            report.best_val_loss = vl;
            report.best_epoch = epoch;
            best = Some(model.store.clone());
        } else if epoch - report.best_epoch >= cfg.patience {
            break;
        }
    }
    if let Some(b) = best {
        model.store = b;
    }
    model.round_to_f32();
    model.trained = true;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Convolutional autoencoder (Approach 2, stage 1): conv encoder to an
/// embedding and a mirrored transposed-conv decoder back to `168 × d_w`.
#[derive(Debug, Clone)]
pub struct Autoencoder {
    pub(crate) store: ParamStore,
    pub(crate) encoder: ConvStack,
    pub(crate) decoder: Decoder,
    pub(crate) cfg: ConvConfig,
    pub(crate) scaler: MinMaxScaler,
    pub(crate) seed: u64,
    pub(crate) trained: bool,
}

impl Autoencoder {
    pub fn new(cfg: ConvConfig, scaler: MinMaxScaler, seed: u64) -> Result<Self> {
        EncoderConfig::Autoencoder(cfg).validate()?;
        let mut store = ParamStore::new();
        let mut b = Builder::new(&mut store, seed);
        let encoder = ConvStack::new(&mut b, "enc", &cfg);
        let decoder = Decoder::new(&mut b, &cfg, &encoder.channels.clone());
        Ok(Self { store, encoder, decoder, cfg, scaler, seed, trained: false })
    }

    pub fn config(&self) -> &ConvConfig {
        &self.cfg
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn encoder_checksum(&self) -> u64 {
        self.store.checksum(self.encoder.ids())
    }

    fn forward(&self, g: &mut Graph, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let h = self.encoder.forward(g, &self.store, x, ctx)?;
        self.decoder.forward(g, &self.store, h, ctx)
    }

    /// Reconstruction `[B, d_w, 168]` of scaled weeks, in eval mode.
    pub fn reconstruct(&self, weeks: &[&[f64]]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let x = g.input(pack_channels_first(weeks, HOURS_PER_WEEK)?);
        let y = self.forward(&mut g, x, &mut Ctx::eval())?;
        Ok(g.value(y).data().to_vec())
    }

    /// Per-element mean squared reconstruction error over scaled weeks.
    pub fn reconstruction_mse(&self, weeks: &[&[f64]]) -> Result<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for chunk in weeks.chunks(32) {
            let x = pack_channels_first(chunk, HOURS_PER_WEEK)?;
            let y = self.reconstruct(chunk)?;
            sum += x.data().iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            n += y.len();
        }
        if n == 0 {
            return Err(invalid("no weeks to reconstruct"));
        }
        Ok(sum / n as f64)
    }
}

fn week_slices(weeks: &[WeeklyWeather]) -> Vec<&[f64]> {
    weeks.iter().map(|w| w.values.data()).collect()
}

/// Approach 2, stage 1: minimizes reconstruction MSE over `train` weeks,
/// early-stopping on `val` weeks. Both must already be scaled by `scaler`.
pub fn train_autoencoder(
    train: &[WeeklyWeather],
    val: &[WeeklyWeather],
    scaler: &MinMaxScaler,
    cfg: &TrainConfig,
) -> Result<(Autoencoder, TrainReport)> {
    cfg.validate()?;
    let conv = match cfg.encoder {
        EncoderConfig::Autoencoder(c) => c,
        _ => return Err(invalid("train_autoencoder needs the autoencoder encoder")),
    };
    if train.is_empty() || val.is_empty() {
        return Err(invalid("autoencoder training needs training and validation weeks"));
    }
    let start = Instant::now();
    let mut ae = Autoencoder::new(conv, scaler.clone(), cfg.seed)?;
    let tw = week_slices(train);
    let vw = week_slices(val);
    let opt = Adam::new(cfg.lr);
    let mut shuffle = SplitMix64::stream(cfg.seed, rng::tag("shuffle"));
    let mut report = TrainReport {
        stage: "autoencoder".into(),
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        epochs_run: 0,
        encoder_forwards: 0,
        model_path: None,
        wall_time_s: 0.0,
    };
    let mut best = None;
    let mut step = 0u64;
    for epoch in 0..cfg.max_epochs {
        let perm = shuffle.permutation(tw.len());
        let mut sum = 0.0;
        for idx in perm.chunks(cfg.batch_size) {
            let wins: Vec<&[f64]> = idx.iter().map(|&i| tw[i]).collect();
            let mut g = Graph::new();
            let mut ctx = Ctx::train(cfg.seed, step);
            step += 1;
            let xt = pack_channels_first(&wins, HOURS_PER_WEEK)?;
            let x = g.input(xt.clone());
            let y = ae.forward(&mut g, x, &mut ctx)?;
            let loss = g.mse(y, x)?;
            let l = g.value(loss).data()[0];
            if !l.is_finite() {
                return Err(Error::NumericFailure { epoch, what: format!("reconstruction loss {l}") });
            }
            g.backward(loss)?;
            ae.store.zero_grads();
            g.accumulate_param_grads(&mut ae.store)?;
            ae.store.adam_step(&opt);
            report.encoder_forwards += ctx.encoded;
            ctx.apply_bn(&mut ae.store);
            sum += l * wins.len() as f64;
        }
        report.train_loss.push(sum / tw.len() as f64);
        let vl = ae.reconstruction_mse(&vw)?;
        report.encoder_forwards += vw.len();
        if !vl.is_finite() {
            return Err(Error::NumericFailure { epoch, what: format!("validation loss {vl}") });
        }
        report.val_loss.push(vl);
        report.epochs_run = epoch + 1;
        if vl < report.best_val_loss {
            report.best_val_loss = vl;
            report.best_epoch = epoch;
            best = Some(ae.store.clone());
        } else if epoch - report.best_epoch >= cfg.patience {
            break;
        }
    }
    if let Some(b) = best {
        ae.store = b;
    }
    round_store(&mut ae.store);
    ae.trained = true;
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok((ae, report))
}

/// Approach 2, stage 2: a head on the frozen pretrained encoder. Weeks are
/// re-scaled with the autoencoder's scaler and embedded exactly once.
pub fn train_head(
    ae: &Autoencoder,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
) -> Result<(SurrogateModel, TrainReport)> {
    cfg.validate()?;
    if !ae.trained {
        return Err(Error::UntrainedModel);
    }
    let head = cfg.head.ok_or_else(|| invalid("missing [head] section"))?;
    if train.space() != val.space() {
        return Err(invalid("training and validation datasets use different design spaces"));
    }
    let train = train.with_scaler(&ae.scaler)?;
    let val = val.with_scaler(&ae.scaler)?;
    let mut model = SurrogateModel::new(
        EncoderConfig::Autoencoder(ae.cfg),
        head,
        ae.scaler.clone(),
        train.space().clone(),
        HOURS_PER_WEEK,
        cfg.seed,
    )?;
    copy_by_name(&ae.store, &mut model.store)?;
    let enc_ids: Vec<ParamId> = model.encoder.ids();
    model.store.set_frozen(enc_ids, true);

    let ts = SampleSet::from_dataset(&train)?;
    let vs = SampleSet::from_dataset(&val)?;
    let tw: Vec<&[f64]> = ts.windows.iter().map(Vec::as_slice).collect();
    let vw: Vec<&[f64]> = vs.windows.iter().map(Vec::as_slice).collect();
    let cache = Cache { train: model.embed_scaled(&tw)?, val: model.embed_scaled(&vw)? };
    let mut head_cfg = cfg.clone();
    head_cfg.stage = Stage::Head;
    let mut report = fit(&mut model, &ts, &vs, &head_cfg, Some(&cache), hooks_none())?;
    report.encoder_forwards += tw.len() + vw.len();
    Ok((model, report))
}

/// Copies every parameter and buffer of `dst` whose name exists in `src`.
fn copy_by_name(src: &ParamStore, dst: &mut ParamStore) -> Result<()> {
    for p in dst.params_mut().iter_mut().filter(|p| p.name.starts_with("enc.")) {
        let s = src
            .params()
            .iter()
            .find(|q| q.name == p.name)
            .ok_or_else(|| invalid(format!("pretrained encoder lacks {}", p.name)))?;
        if s.value.shape() != p.value.shape() {
            return Err(invalid(format!("shape mismatch for {}", p.name)));
        }
        p.value = s.value.clone();
    }
    for b in dst.buffers_mut().iter_mut().filter(|b| b.name.starts_with("enc.")) {
        let s = src
            .buffers()
            .iter()
            .find(|q| q.name == b.name)
            .ok_or_else(|| invalid(format!("pretrained encoder lacks {}", b.name)))?;
        b.value = s.value.clone();
    }
    Ok(())
}
