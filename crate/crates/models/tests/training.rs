use std::fs;

use surro_core::climate::default_suite;
use surro_core::dataset::{build_dataset, Dataset};
use surro_core::sampling::DesignSpace;
use surro_core::weather::{fit_scaler, window_weeks, MinMaxScaler, WeatherMatrix, HOURS_PER_WEEK};
use surro_models::{
    fit_sets, train_autoencoder, train_head, train_joint, train_joint_with, ConvConfig, EncoderConfig, Error,
    HeadConfig, SampleSet, Stage, SurrogateModel, TrainConfig, TrainHooks, TransformerConfig,
};

/// Training and validation datasets for one suite location (primary and
/// alternate year), scaled on the primary year.
fn datasets(loc: usize, n_designs: usize) -> (Dataset, Dataset) {
    let spec = &default_suite()[loc];
    let year = spec.generate().unwrap();
    let alt = spec.generate_alternate().unwrap();
    let scaler = fit_scaler(&window_weeks(&year), year.location_id()).unwrap();
    let space = DesignSpace::standard();
    let train = build_dataset(&[year], &space, n_designs, 7, &scaler).unwrap();
    let val = build_dataset(&[alt], &space, n_designs, 8, &scaler).unwrap();
    (train, val)
}

fn tiny_tcn(seed: u64, epochs: usize) -> TrainConfig {
    let enc = EncoderConfig::Tcn(ConvConfig { first_filters: 4, n_blocks: 2, kernel_size: 3, embed_dim: 6 });
    let mut cfg = TrainConfig::joint(enc, HeadConfig { first_hidden: 16, n_layers: 4, dropout_p: 0.1 }, 0.005, seed);
    cfg.max_epochs = epochs;
    cfg.patience = epochs - 1;
    cfg
}

fn tiny_transformer(seed: u64, epochs: usize) -> TrainConfig {
    let enc = EncoderConfig::Transformer(TransformerConfig { embed_dim: 8, heads: 2, t_ffnn_size: 8, n_blocks: 1 });
    let mut cfg = TrainConfig::joint(enc, HeadConfig { first_hidden: 16, n_layers: 4, dropout_p: 0.0 }, 0.005, seed);
    cfg.max_epochs = epochs;
    cfg.patience = epochs - 1;
    cfg
}

fn ae_config() -> ConvConfig {
    ConvConfig { first_filters: 8, n_blocks: 2, kernel_size: 3, embed_dim: 8 }
}

#[test]
fn embeddings_have_configured_width_for_every_encoder() {
    let (train, _) = datasets(2, 2);
    let refs: Vec<&[f64]> = train.windows()[..5].iter().map(|w| w.values.data()).collect();
    let head = HeadConfig { first_hidden: 4, n_layers: 1, dropout_p: 0.0 };
    for enc in [
        EncoderConfig::Tcn(ConvConfig { first_filters: 4, n_blocks: 3, kernel_size: 5, embed_dim: 7 }),
        EncoderConfig::Transformer(TransformerConfig { embed_dim: 6, heads: 3, t_ffnn_size: 5, n_blocks: 2 }),
        EncoderConfig::Autoencoder(ConvConfig { first_filters: 4, n_blocks: 3, kernel_size: 5, embed_dim: 5 }),
    ] {
        let m = SurrogateModel::new(enc, head, train.scaler().clone(), DesignSpace::standard(), 168, 1).unwrap();
        for n in [1, 5] {
            let e = m.embed_scaled(&refs[..n]).unwrap();
            assert_eq!(e.len(), n);
            assert!(e.iter().all(|v| v.len() == enc.embed_dim()));
        }
    }
}

#[test]
fn encoders_are_batch_equivariant() {
    let (train, _) = datasets(2, 2);
    let refs: Vec<&[f64]> = train.windows()[..6].iter().map(|w| w.values.data()).collect();
    let perm = [4, 0, 5, 2, 1, 3];
    let permuted: Vec<&[f64]> = perm.iter().map(|&i| refs[i]).collect();
    let head = HeadConfig { first_hidden: 4, n_layers: 1, dropout_p: 0.0 };
    for enc in [tiny_tcn(0, 2).encoder, tiny_transformer(0, 2).encoder] {
        let m = SurrogateModel::new(enc, head, train.scaler().clone(), DesignSpace::standard(), 168, 3).unwrap();
        let a = m.embed_scaled(&refs).unwrap();
        let b = m.embed_scaled(&permuted).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(a[i], b[k], "{:?}", enc.kind());
        }
        // one at a time matches the batched pass bit for bit
        assert_eq!(m.embed_scaled(&refs[3..4]).unwrap()[0], a[3]);
    }
}

#[test]
fn untrained_model_refuses_to_predict() {
    let (train, _) = datasets(0, 2);
    let cfg = tiny_tcn(0, 2);
    let m = SurrogateModel::new(cfg.encoder, cfg.head.unwrap(), train.scaler().clone(), DesignSpace::standard(), 168, 0)
        .unwrap();
    let r = m.predict(&train.raw_windows()[0].values, &train.designs()[0]);
    assert!(matches!(r, Err(Error::UntrainedModel)));
}

#[test]
fn joint_training_is_deterministic_and_round_trips() {
    let (train, val) = datasets(2, 3);
    let cfg = tiny_tcn(5, 4);
    let (m1, r1) = train_joint(&train, &val, &cfg).unwrap();
    let (m2, r2) = train_joint(&train, &val, &cfg).unwrap();
    assert_eq!(r1.to_json(), r2.to_json());

    let dir = tempfile::tempdir().unwrap();
    let (p1, p2) = (dir.path().join("a"), dir.path().join("b"));
    m1.save(&p1).unwrap();
    m2.save(&p2).unwrap();
    for f in ["manifest.txt", "weights.bin"] {
        assert_eq!(fs::read(p1.join(f)).unwrap(), fs::read(p2.join(f)).unwrap(), "{f}");
    }

    let loaded = SurrogateModel::load(&p1).unwrap();
    let week = &val.raw_windows()[10].values;
    for d in val.designs() {
        let a = m1.predict(week, d).unwrap();
        assert_eq!(a.to_bits(), loaded.predict(week, d).unwrap().to_bits());
        assert_eq!(a.to_bits(), m1.predict(week, d).unwrap().to_bits());
    }
    let raws: Vec<&WeatherMatrix> = val.raw_windows().iter().map(|w| &w.values).collect();
    let grid = m1.predict_grid(&raws, val.designs()).unwrap();
    assert_eq!(grid[52 + 10].to_bits(), m1.predict(week, &val.designs()[1]).unwrap().to_bits());

    // selection rule: the kept epoch is never worse than the first
    assert!(r1.best_val_loss <= r1.val_loss[0]);
    assert_eq!(r1.val_loss[r1.best_epoch], r1.best_val_loss);
    assert!(r1.val_loss.iter().all(|&v| v >= r1.best_val_loss));
}

#[test]
fn out_of_range_weather_is_scaled_past_one() {
    let (train, val) = datasets(0, 2);
    let (m, _) = train_joint(&train, &val, &tiny_tcn(1, 2)).unwrap();
    let w = &train.raw_windows()[0].values;
    let hot: Vec<f64> = w.data().iter().enumerate().map(|(i, x)| if i % 4 == 0 { x + 60.0 } else { *x }).collect();
    let hot = WeatherMatrix::from_vec(HOURS_PER_WEEK, 4, hot).unwrap();
    assert!(m.predict(&hot, &train.designs()[0]).unwrap().is_finite());
}

#[test]
fn malformed_model_files_are_rejected() {
    let (train, val) = datasets(0, 2);
    let (m, _) = train_joint(&train, &val, &tiny_tcn(1, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m");
    m.save(&p).unwrap();

    let blob = fs::read(p.join("weights.bin")).unwrap();
    fs::write(p.join("weights.bin"), &blob[..blob.len() - 3]).unwrap();
    assert!(matches!(SurrogateModel::load(&p), Err(Error::MalformedModel(_))));
    fs::write(p.join("weights.bin"), &blob).unwrap();
    assert!(SurrogateModel::load(&p).is_ok());

    let manifest = fs::read_to_string(p.join("manifest.txt")).unwrap();
    fs::write(p.join("manifest.txt"), manifest.replace("kind = tcn", "kind = lstm")).unwrap();
    assert!(matches!(SurrogateModel::load(&p), Err(Error::MalformedModel(_))));
}

#[test]
fn nan_loss_is_a_numeric_failure() {
    let (train, val) = datasets(0, 2);
    let hooks = TrainHooks { inject_nan_epoch: Some(1) };
    match train_joint_with(&train, &val, &tiny_tcn(1, 4), &hooks) {
        Err(Error::NumericFailure { epoch, .. }) => assert_eq!(epoch, 1),
        other => panic!("expected NumericFailure, got {:?}", other.map(|r| r.1)),
    }
}

#[test]
fn single_sample_is_memorized() {
    let (train, _) = datasets(3, 1);
    let full = SampleSet::from_dataset(&train).unwrap();
    let one = SampleSet {
        t_len: full.t_len,
        windows: vec![full.windows[20].clone()],
        designs: vec![full.designs[0]],
        targets: vec![full.target(20, 0)],
    };
    let mut cfg = tiny_transformer(2, 300);
    cfg.patience = 299;
    let (_, r) = fit_sets(&one, &one, &cfg, train.scaler(), train.space(), HOURS_PER_WEEK, &TrainHooks::default())
        .unwrap();
    let last = *r.train_loss.last().unwrap();
    assert!(last < 1e-6, "final training loss {last}");
}

fn unit_scaler_weeks() -> (MinMaxScaler, Vec<surro_core::weather::WeeklyWeather>) {
    let year = default_suite()[1].generate().unwrap();
    let weeks = window_weeks(&year);
    let scaler = fit_scaler(&weeks, "vic").unwrap();
    let scaled = weeks.iter().map(|w| scaler.transform(w).unwrap()).collect();
    (scaler, scaled)
}

#[test]
fn autoencoder_memorizes_a_single_week() {
    let (scaler, weeks) = unit_scaler_weeks();
    // the week repeated as a batch of 4
    let one = vec![weeks[30].clone(); 4];
    let wide = ConvConfig { first_filters: 16, ..ae_config() };
    let mut cfg = TrainConfig::joint(EncoderConfig::Autoencoder(wide), HeadConfig {
        first_hidden: 4,
        n_layers: 1,
        dropout_p: 0.0,
    }, 0.01, 3);
    cfg.stage = Stage::Autoencoder;
    cfg.head = None;
    cfg.max_epochs = 600;
    cfg.patience = 599;
    let (ae, _) = train_autoencoder(&one, &one, &scaler, &cfg).unwrap();
    let mse = ae.reconstruction_mse(&[one[0].values.data()]).unwrap();
    assert!(mse < 1e-4, "reconstruction mse {mse}");
}

#[test]
fn head_training_freezes_encoder_and_caches_embeddings() {
    let (train, val) = datasets(2, 3);
    let weeks: Vec<_> = train.windows().to_vec();
    let val_weeks: Vec<_> = val.windows().to_vec();
    let mut cfg = TrainConfig::joint(EncoderConfig::Autoencoder(ae_config()), HeadConfig {
        first_hidden: 16,
        n_layers: 3,
        dropout_p: 0.2,
    }, 0.005, 4);
    cfg.stage = Stage::Autoencoder;
    cfg.max_epochs = 3;
    cfg.patience = 2;
    let (ae, _) = train_autoencoder(&weeks, &val_weeks, train.scaler(), &cfg).unwrap();
    let before = ae.encoder_checksum();

    let dir = tempfile::tempdir().unwrap();
    ae.save(dir.path()).unwrap();
    let ae = surro_models::Autoencoder::load(dir.path()).unwrap();
    assert_eq!(ae.encoder_checksum(), before);

    cfg.stage = Stage::Head;
    cfg.max_epochs = 5;
    cfg.patience = 4;
    let (m, r) = train_head(&ae, &train, &val, &cfg).unwrap();
    assert_eq!(m.encoder_checksum(), before);
    assert_eq!(ae.encoder_checksum(), before);
    // one encoder pass per unique week: 52 training + 52 validation
    assert_eq!(r.encoder_forwards, 104);

    // cached embeddings equal direct evaluation exactly
    let refs: Vec<&[f64]> = train.windows().iter().map(|w| w.values.data()).collect();
    let direct = m.embed_scaled(&refs[7..8]).unwrap();
    assert_eq!(direct[0], m.embed_scaled(&refs).unwrap()[7]);
}
