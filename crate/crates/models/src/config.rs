//! Encoder, head and training configuration, read from `key = value` files.

use std::fmt::Write;

use surro_core::conf::ConfigFile;

use crate::error::invalid;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Tcn,
    Transformer,
    Autoencoder,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Tcn => "tcn",
            EncoderKind::Transformer => "transformer",
            EncoderKind::Autoencoder => "autoencoder",
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tcn" => Ok(EncoderKind::Tcn),
            "transformer" => Ok(EncoderKind::Transformer),
            "autoencoder" => Ok(EncoderKind::Autoencoder),
            other => Err(invalid(format!("unknown encoder kind {other:?}"))),
        }
    }
}

/// Residual conv stack shared by the TCN and the autoencoder's encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvConfig {
    pub first_filters: usize,
    pub n_blocks: usize,
    pub kernel_size: usize,
    pub embed_dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformerConfig {
    pub embed_dim: usize,
    pub heads: usize,
    pub t_ffnn_size: usize,
    pub n_blocks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncoderConfig {
    Tcn(ConvConfig),
    Transformer(TransformerConfig),
    Autoencoder(ConvConfig),
}

pub const DEFAULT_KERNEL: usize = 5;
pub const DEFAULT_CONV_BLOCKS: usize = 3;
pub const DEFAULT_TRANSFORMER_BLOCKS: usize = 2;

impl EncoderConfig {
    pub fn kind(&self) -> EncoderKind {
        match self {
            EncoderConfig::Tcn(_) => EncoderKind::Tcn,
            EncoderConfig::Transformer(_) => EncoderKind::Transformer,
            EncoderConfig::Autoencoder(_) => EncoderKind::Autoencoder,
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            EncoderConfig::Tcn(c) | EncoderConfig::Autoencoder(c) => c.embed_dim,
            EncoderConfig::Transformer(t) => t.embed_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EncoderConfig::Tcn(c) | EncoderConfig::Autoencoder(c) => {
                if c.first_filters == 0 || c.n_blocks == 0 || c.embed_dim == 0 {
                    return Err(invalid("first_filters, n_blocks and embed_dim must be >= 1"));
                }
                if c.kernel_size % 2 == 0 {
                    return Err(invalid(format!("kernel_size must be odd, got {}", c.kernel_size)));
                }
                if matches!(self, EncoderConfig::Autoencoder(_)) && 168 % (1 << c.n_blocks) != 0 {
                    return Err(invalid(format!("168 is not divisible by 2^{}", c.n_blocks)));
                }
            }
            EncoderConfig::Transformer(t) => {
                if t.embed_dim == 0 || t.heads == 0 || t.t_ffnn_size == 0 || t.n_blocks == 0 {
                    return Err(invalid("transformer sizes must be >= 1"));
                }
                if t.embed_dim % t.heads != 0 {
                    return Err(invalid(format!("embed_dim {} not divisible by heads {}", t.embed_dim, t.heads)));
                }
                if t.embed_dim % 2 != 0 {
                    return Err(invalid("embed_dim must be even for the positional encoding"));
                }
            }
        }
        Ok(())
    }

    pub fn from_conf(kind: EncoderKind, c: &ConfigFile) -> Result<Self> {
        let s = "encoder";
        let cfg = match kind {
            EncoderKind::Tcn | EncoderKind::Autoencoder => {
                let cc = ConvConfig {
                    first_filters: c.require(s, "first_filters")?,
                    n_blocks: c.get_or(s, "n_blocks", DEFAULT_CONV_BLOCKS)?,
                    kernel_size: c.get_or(s, "kernel_size", DEFAULT_KERNEL)?,
                    embed_dim: c.require(s, "embed_dim")?,
                };
                if kind == EncoderKind::Tcn {
                    EncoderConfig::Tcn(cc)
                } else {
                    EncoderConfig::Autoencoder(cc)
                }
            }
            EncoderKind::Transformer => EncoderConfig::Transformer(TransformerConfig {
                embed_dim: c.require(s, "embed_dim")?,
                heads: c.require(s, "heads")?,
                t_ffnn_size: c.require(s, "t_ffnn_size")?,
                n_blocks: c.get_or(s, "n_blocks", DEFAULT_TRANSFORMER_BLOCKS)?,
            }),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `[encoder]` section in the same format `from_conf` reads.
    pub fn to_conf(&self) -> String {
        let mut s = String::from("[encoder]\n");
        match self {
            EncoderConfig::Tcn(c) | EncoderConfig::Autoencoder(c) => {
                let _ = write!(
                    s,
                    "first_filters = {}\nn_blocks = {}\nkernel_size = {}\nembed_dim = {}\n",
                    c.first_filters, c.n_blocks, c.kernel_size, c.embed_dim
                );
            }
            EncoderConfig::Transformer(t) => {
                let _ = write!(
                    s,
                    "embed_dim = {}\nheads = {}\nt_ffnn_size = {}\nn_blocks = {}\n",
                    t.embed_dim, t.heads, t.t_ffnn_size, t.n_blocks
                );
            }
        }
        s
    }
}

/// Prediction head: `n_layers` relu+dropout hidden layers whose widths halve
/// (rounding up) from `first_hidden`, then a scalar output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadConfig {
    pub first_hidden: usize,
    pub n_layers: usize,
    pub dropout_p: f64,
}

/// Approach 1 always uses four hidden layers.
pub const JOINT_HEAD_LAYERS: usize = 4;

impl HeadConfig {
    pub fn widths(&self) -> Vec<usize> {
        (0..self.n_layers).map(|i| self.first_hidden.div_ceil(1 << i)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.first_hidden < 2 {
            return Err(invalid("head first_hidden must be >= 2"));
        }
        if self.n_layers == 0 {
            return Err(invalid("head needs at least one hidden layer"));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(invalid(format!("dropout {} outside [0, 1)", self.dropout_p)));
        }
        Ok(())
    }

    pub fn from_conf(c: &ConfigFile, default_layers: usize) -> Result<Self> {
        let h = HeadConfig {
            first_hidden: c.require("head", "first_hidden")?,
            n_layers: c.get_or("head", "n_layers", default_layers)?,
            dropout_p: c.get_or("head", "dropout", 0.0)?,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn to_conf(&self) -> String {
        format!(
            "[head]\nfirst_hidden = {}\nn_layers = {}\ndropout = {}\n",
            self.first_hidden, self.n_layers, self.dropout_p
        )
    }
}

/// Which training procedure a config drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Encoder and head trained together on the prediction loss.
    Joint,
    /// Unsupervised reconstruction pretraining of the autoencoder.
    Autoencoder,
    /// Head on top of a frozen pretrained encoder.
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub encoder: EncoderConfig,
    pub head: Option<HeadConfig>,
    pub lr: f64,
    pub batch_size: usize,
    /// Distinct weather windows per mini-batch; the rest of the batch is
    /// filled with designs.
    pub windows_per_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub train_locations: Vec<String>,
}

pub const DEFAULT_BATCH: usize = 64;
pub const DEFAULT_WINDOWS_PER_BATCH: usize = 8;
pub const DEFAULT_MAX_EPOCHS: usize = 200;
pub const DEFAULT_PATIENCE: usize = 20;

impl TrainConfig {
    pub fn joint(encoder: EncoderConfig, head: HeadConfig, lr: f64, seed: u64) -> Self {
        Self {
            stage: Stage::Joint,
            encoder,
            head: Some(head),
            lr,
            batch_size: DEFAULT_BATCH,
            windows_per_batch: DEFAULT_WINDOWS_PER_BATCH,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed,
            train_locations: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if let Some(h) = &self.head {
            h.validate()?;
        } else if self.stage != Stage::Autoencoder {
            return Err(invalid("missing [head] section"));
        }
        if self.stage != Stage::Joint && self.encoder.kind() != EncoderKind::Autoencoder {
            return Err(invalid("two-stage training requires the autoencoder encoder"));
        }
        if self.stage == Stage::Joint && self.encoder.kind() == EncoderKind::Autoencoder {
            return Err(invalid("the autoencoder is trained in two stages (stage = autoencoder | head)"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.windows_per_batch == 0 {
            return Err(invalid("batch_size and windows_per_batch must be >= 1"));
        }
        if self.max_epochs == 0 || self.patience >= self.max_epochs {
            return Err(invalid(format!(
                "need 0 < patience < max_epochs, got patience {} and max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.train_locations.len() > 3 && self.stage != Stage::Autoencoder {
            return Err(invalid("at most three training locations"));
        }
        Ok(())
    }

    /// Reads `[train]`, `[encoder]` and `[head]`. `kind_override` replaces
    /// `[train] encoder` when the caller already knows it.
    pub fn from_conf(c: &ConfigFile, kind_override: Option<EncoderKind>) -> Result<Self> {
        let kind = match kind_override {
            Some(k) => k,
            None => c.require_str("train", "encoder")?.parse()?,
        };
        let stage = match c.get_str("train", "stage") {
            None | Some("joint") => {
                if kind == EncoderKind::Autoencoder {
                    Stage::Head
                } else {
                    Stage::Joint
                }
            }
            Some("autoencoder") => Stage::Autoencoder,
            Some("head") => Stage::Head,
            Some(other) => return Err(c.err(format!("[train] unknown stage {other:?}")).into()),
        };
        let encoder = EncoderConfig::from_conf(kind, c)?;
        let default_layers = if stage == Stage::Joint { JOINT_HEAD_LAYERS } else { 3 };
        let head = if c.has_section("head") { Some(HeadConfig::from_conf(c, default_layers)?) } else { None };
        let cfg = TrainConfig {
            stage,
            encoder,
            head,
            lr: c.require("train", "lr")?,
            batch_size: c.get_or("train", "batch_size", DEFAULT_BATCH)?,
            windows_per_batch: c.get_or("train", "windows_per_batch", DEFAULT_WINDOWS_PER_BATCH)?,
            max_epochs: c.get_or("train", "max_epochs", DEFAULT_MAX_EPOCHS)?,
            patience: c.get_or("train", "patience", DEFAULT_PATIENCE)?,
            seed: c.get_or("train", "seed", 0u64)?,
            train_locations: c.get_list("train", "locations").unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_conf(&self) -> String {
        let stage = match self.stage {
            Stage::Joint => "joint",
            Stage::Autoencoder => "autoencoder",
            Stage::Head => "head",
        };
        let mut s = format!(
            "[train]\nencoder = {}\nstage = {stage}\nlocations = {}\nlr = {}\nbatch_size = {}\nwindows_per_batch = {}\nmax_epochs = {}\npatience = {}\nseed = {}\n\n{}",
            self.encoder.kind().as_str(),
            self.train_locations.join(","),
            self.lr,
            self.batch_size,
            self.windows_per_batch,
            self.max_epochs,
            self.patience,
            self.seed,
            self.encoder.to_conf()
        );
        if let Some(h) = &self.head {
            s.push('\n');
            s.push_str(&h.to_conf());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<TrainConfig> {
        TrainConfig::from_conf(&ConfigFile::parse(text, "mem")?, None)
    }

    #[test]
    fn head_width_halving() {
        let h = HeadConfig { first_hidden: 192, n_layers: 4, dropout_p: 0.1 };
        assert_eq!(h.widths(), vec![192, 96, 48, 24]);
        let h = HeadConfig { first_hidden: 457, n_layers: 3, dropout_p: 0.289 };
        assert_eq!(h.widths(), vec![457, 229, 115]);
    }

    #[test]
    fn transformer_divisibility() {
        let ok = EncoderConfig::Transformer(TransformerConfig { embed_dim: 16, heads: 2, t_ffnn_size: 8, n_blocks: 2 });
        assert!(ok.validate().is_ok());
        let bad = EncoderConfig::Transformer(TransformerConfig { embed_dim: 16, heads: 3, t_ffnn_size: 8, n_blocks: 2 });
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn round_trip_and_defaults() {
        let cfg = parse(
            "[train]\nencoder = tcn\nlr = 0.00226\nlocations = edm\n[encoder]\nfirst_filters = 64\nembed_dim = 16\n[head]\nfirst_hidden = 192\ndropout = 0.124\n",
        )
        .unwrap();
        assert_eq!(cfg.stage, Stage::Joint);
        assert_eq!(cfg.batch_size, DEFAULT_BATCH);
        assert_eq!(cfg.head.unwrap().n_layers, 4);
        let EncoderConfig::Tcn(c) = cfg.encoder else { panic!() };
        assert_eq!((c.n_blocks, c.kernel_size), (3, 5));
        assert_eq!(parse(&cfg.to_conf()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse("[train]\nencoder = lstm\nlr = 0.1\n").is_err());
        let e = parse("[train]\nencoder = tcn\nlr = 0.1\npatience = 20\nmax_epochs = 20\n[encoder]\nfirst_filters = 4\nembed_dim = 4\n[head]\nfirst_hidden = 8\n");
        assert!(matches!(e, Err(Error::InvalidConfig(_))));
    }
}
