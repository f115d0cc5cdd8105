//! Weather encoders (TCN, transformer, convolutional autoencoder), the
//! design-conditioned prediction head, training and model files.

pub mod config;
mod data;
mod encoder;
mod error;
mod io;
mod layers;
mod model;
mod train;

pub use config::{
    ConvConfig, EncoderConfig, EncoderKind, HeadConfig, Stage, TrainConfig, TransformerConfig, JOINT_HEAD_LAYERS,
};
pub use data::SampleSet;
pub use error::{Error, Result};
pub use io::{MANIFEST_FILE, MODEL_FORMAT_VERSION, WEIGHTS_FILE};
pub use model::SurrogateModel;
pub use train::{
    fit_sets, train_annual_baseline, train_autoencoder, train_head, train_joint, train_joint_with, Autoencoder,
    TrainHooks, TrainReport,
};
