//! Model directories: `manifest.txt` (configs, scalings, tensor table) and
//! `weights.bin` (little-endian f32, in table order).
//!
//! Weights are rounded through f32 when training finishes, so a loaded model
//! predicts bit-identically to the one that was saved.

use std::fmt::Write;
use std::path::Path;

use surro_core::conf::ConfigFile;
use surro_core::fsio;
use surro_core::sampling::DesignSpace;
use surro_core::weather::MinMaxScaler;
use surro_tensor::ParamStore;

use crate::config::{ConvConfig, EncoderConfig, EncoderKind, HeadConfig};
use crate::model::SurrogateModel;
use crate::train::Autoencoder;
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const WEIGHTS_FILE: &str = "weights.bin";

fn malformed(msg: impl Into<String>) -> Error {
    Error::MalformedModel(msg.into())
}

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn scaler_section(s: &MinMaxScaler) -> String {
    format!("[scaler]\nfitted_on = {}\nmin = {}\nmax = {}\n", s.fitted_on(), join(s.min()), join(s.max()))
}

fn space_section(space: &DesignSpace) -> String {
    let mut s = String::from("[space]\n");
    for p in space.params() {
        let _ = writeln!(s, "{} = {},{}", p.name, p.lo, p.hi);
    }
    s
}

/// Tensor table plus the blob it describes.
fn encode_store(store: &ParamStore) -> (String, Vec<u8>) {
    let mut table = String::from("[tensors]\n");
    let mut blob = Vec::new();
    let entries = store
        .params()
        .iter()
        .map(|p| ("param", &p.name, &p.value))
        .chain(store.buffers().iter().map(|b| ("buffer", &b.name, &b.value)));
    for (kind, name, t) in entries {
        let shape = t.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        let _ = writeln!(table, "{name} = {kind} {shape} {}", blob.len());
        for x in t.data() {
            blob.extend_from_slice(&(*x as f32).to_le_bytes());
        }
    }
    (table, blob)
}

/// Fills `store` (freshly built from the manifest's configs) from the blob.
fn decode_store(conf: &ConfigFile, blob: &[u8], store: &mut ParamStore) -> Result<()> {
    let declared: usize = conf.require("model", "blob_bytes").map_err(|e| malformed(e.to_string()))?;
    if declared != blob.len() {
        return Err(malformed(format!("weights.bin has {} bytes, manifest declares {declared}", blob.len())));
    }
    let keys = conf.keys("tensors");
    let expected = store.params().len() + store.buffers().len();
    if keys.len() != expected {
        return Err(malformed(format!("manifest lists {} tensors, architecture has {expected}", keys.len())));
    }
    let load = |kind: &str, name: &str, data: &mut [f64], shape: &[usize]| -> Result<()> {
        let entry = conf.get_str("tensors", name).ok_or_else(|| malformed(format!("missing tensor {name}")))?;
        let f: Vec<&str> = entry.split_whitespace().collect();
        let want_shape = shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x");
        if f.len() != 3 || f[0] != kind || f[1] != want_shape {
            return Err(malformed(format!("tensor {name}: expected {kind} {want_shape}, found {entry:?}")));
        }
        let off: usize = f[2].parse().map_err(|_| malformed(format!("tensor {name}: bad offset")))?;
        let end = off + 4 * data.len();
        let bytes = blob.get(off..end).ok_or_else(|| malformed(format!("tensor {name} runs past the blob")))?;
        for (x, c) in data.iter_mut().zip(bytes.chunks_exact(4)) {
            *x = f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64;
        }
        Ok(())
    };
    for p in store.params_mut() {
        let shape = p.value.shape().to_vec();
        load("param", &p.name, p.value.data_mut(), &shape)?;
    }
    for b in store.buffers_mut() {
        let shape = b.value.shape().to_vec();
        load("buffer", &b.name, b.value.data_mut(), &shape)?;
    }
    Ok(())
}

fn write_dir(dir: &Path, manifest: String, store: &ParamStore) -> Result<()> {
    let (table, blob) = encode_store(store);
    let manifest = manifest.replacen("[model]\n", &format!("[model]\nblob_bytes = {}\n", blob.len()), 1) + "\n" + &table;
    fsio::create_dir(dir)?;
    fsio::write_atomic(&dir.join(WEIGHTS_FILE), &blob)?;
    fsio::write_atomic(&dir.join(MANIFEST_FILE), manifest.as_bytes())?;
    Ok(())
}

fn read_dir(dir: &Path) -> Result<(ConfigFile, Vec<u8>)> {
    let path = dir.join(MANIFEST_FILE);
    let text = fsio::read_text(&path)?;
    let conf = ConfigFile::parse(&text, &path.display().to_string()).map_err(|e| malformed(e.to_string()))?;
    let version: u32 = conf.require("model", "format_version").map_err(|e| malformed(e.to_string()))?;
    if version != MODEL_FORMAT_VERSION {
        return Err(malformed(format!("unsupported model format_version {version}")));
    }
    let blob = fsio::read_bytes(&dir.join(WEIGHTS_FILE))?;
    Ok((conf, blob))
}

fn read_scaler(conf: &ConfigFile) -> Result<MinMaxScaler> {
    let list = |k: &str| -> Result<Vec<f64>> {
        conf.get_list("scaler", k)
            .ok_or_else(|| malformed(format!("[scaler] missing {k}")))?
            .iter()
            .map(|v| v.parse().map_err(|_| malformed(format!("[scaler] bad {k} value {v:?}"))))
            .collect()
    };
    let fitted_on = conf.get_str("scaler", "fitted_on").unwrap_or("");
    Ok(MinMaxScaler::from_bounds(list("min")?, list("max")?, fitted_on).map_err(|e| malformed(e.to_string()))?)
}

fn read_space(conf: &ConfigFile) -> Result<DesignSpace> {
    let mut space = DesignSpace::standard();
    let names: Vec<&str> = space.names().collect();
    for name in names {
        let v = conf.get_list("space", name).ok_or_else(|| malformed(format!("[space] missing {name}")))?;
        let b: Vec<f64> = v.iter().filter_map(|x| x.parse().ok()).collect();
        if b.len() != 2 {
            return Err(malformed(format!("[space] {name} needs lo,hi")));
        }
        space = space.with_range(name, b[0], b[1]).map_err(|e| malformed(e.to_string()))?;
    }
    Ok(space)
}

fn read_kind(conf: &ConfigFile) -> Result<EncoderKind> {
    let k = conf.get_str("model", "kind").ok_or_else(|| malformed("[model] missing kind"))?;
    k.parse().map_err(|_| malformed(format!("unknown encoder kind {k:?}")))
}

impl SurrogateModel {
    pub fn manifest_text(&self) -> String {
        format!(
            "[model]\nformat_version = {MODEL_FORMAT_VERSION}\nartifact = surrogate\nkind = {}\ninput_hours = {}\nseed = {}\ntarget_mean = {}\ntarget_std = {}\n\n{}\n{}\n{}\n{}",
            self.encoder_cfg.kind().as_str(),
            self.input_hours,
            self.seed,
            self.target_mean,
            self.target_std,
            self.encoder_cfg.to_conf(),
            self.head_cfg.to_conf(),
            scaler_section(&self.scaler),
            space_section(&self.space),
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        if !self.trained {
            return Err(Error::UntrainedModel);
        }
        write_dir(dir, self.manifest_text(), &self.store)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (conf, blob) = read_dir(dir)?;
        if conf.get_str("model", "artifact") != Some("surrogate") {
            return Err(malformed("not a surrogate model directory"));
        }
        let kind = read_kind(&conf)?;
        let m = |e: Error| malformed(e.to_string());
        let enc = EncoderConfig::from_conf(kind, &conf).map_err(m)?;
        let head = HeadConfig::from_conf(&conf, 1).map_err(m)?;
        let num = |k: &str| -> Result<f64> { conf.require("model", k).map_err(|e| malformed(e.to_string())) };
        let input_hours: usize = conf.require("model", "input_hours").map_err(|e| malformed(e.to_string()))?;
        let seed: u64 = conf.require("model", "seed").map_err(|e| malformed(e.to_string()))?;
        let mut model = SurrogateModel::new(enc, head, read_scaler(&conf)?, read_space(&conf)?, input_hours, seed)
            .map_err(m)?;
        model.target_mean = num("target_mean")?;
        model.target_std = num("target_std")?;
        decode_store(&conf, &blob, &mut model.store)?;
        model.trained = true;
        Ok(model)
    }
}

impl Autoencoder {
    pub fn save(&self, dir: &Path) -> Result<()> {
        if !self.trained {
            return Err(Error::UntrainedModel);
        }
        let manifest = format!(
            "[model]\nformat_version = {MODEL_FORMAT_VERSION}\nartifact = autoencoder\nkind = autoencoder\nseed = {}\n\n{}\n{}",
            self.seed,
            EncoderConfig::Autoencoder(self.cfg).to_conf(),
            scaler_section(&self.scaler),
        );
        write_dir(dir, manifest, &self.store)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (conf, blob) = read_dir(dir)?;
        if conf.get_str("model", "artifact") != Some("autoencoder") {
            return Err(malformed("not an autoencoder directory"));
        }
        let cfg: ConvConfig = match EncoderConfig::from_conf(read_kind(&conf)?, &conf) {
            Ok(EncoderConfig::Autoencoder(c)) => c,
            Ok(_) => return Err(malformed("autoencoder directory holds another encoder kind")),
            Err(e) => return Err(malformed(e.to_string())),
        };
        let seed: u64 = conf.require("model", "seed").map_err(|e| malformed(e.to_string()))?;
        let mut ae = Autoencoder::new(cfg, read_scaler(&conf)?, seed)?;
        decode_store(&conf, &blob, &mut ae.store)?;
        ae.trained = true;
        Ok(ae)
    }
}
