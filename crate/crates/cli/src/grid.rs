//! Grid files for `cross-eval`.
//!
//! ```text
//! [grid]
//! weather = weather
//! tests = van,vic,tor
//! seed = 0
//! designs = 50
//!
//! [cal]
//! locations = cal
//! encoder = transformer
//! config = transformer/calgary.cfg
//! ```
//!
//! `weather` is a directory written by `gen-weather`; `seed` drives designs,
//! training and evaluation. Each other section is a row named by its header.
//! Optional row keys: `autoencoder = <dir>` (head on a pretrained encoder)
//! and `mode = annual` (annual-input baseline instead of a matrix row).
//! Inline comments are not supported.
//!
//! Relative paths resolve against the grid file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use surro_core::conf::ConfigFile;
use surro_core::weather::HourlyWeatherYear;
use surro_eval::{GridRow, WeatherPair, WeatherSet};
use surro_models::{Autoencoder, EncoderKind, Stage, TrainConfig};

use crate::fail::{CliResult, Failure};

pub struct Grid {
    pub weather_dir: PathBuf,
    pub tests: Vec<String>,
    pub seed: u64,
    pub rows: Vec<GridRow>,
    pub annual_rows: Vec<GridRow>,
    pub config_paths: Vec<PathBuf>,
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses a grid file; `seed` overrides `[grid] seed`. Errors are
/// configuration errors except unreadable referenced model files.
pub fn load(path: &Path, seed: Option<u64>) -> CliResult<Grid> {
    let c = ConfigFile::load(path).map_err(|e| Failure::from(e).into_config())?;
    let base = path.parent().unwrap_or(Path::new("."));
    let cfg_err = |e: surro_core::Error| Failure::from(e).into_config();
    let weather_dir = resolve(base, c.require_str("grid", "weather").map_err(cfg_err)?);
    let tests = c.get_list("grid", "tests").ok_or_else(|| Failure::usage(format!("{}: [grid] missing `tests`", path.display())))?;
    let seed = match seed {
        Some(s) => s,
        None => c.get_or("grid", "seed", 0u64).map_err(cfg_err)?,
    };
    let n_designs: usize = c.get_or("grid", "designs", 50usize).map_err(cfg_err)?;
    if n_designs == 0 {
        return Err(Failure::usage("[grid] designs must be >= 1"));
    }

    let mut rows = Vec::new();
    let mut annual_rows = Vec::new();
    let mut config_paths = Vec::new();
    for id in c.sections().filter(|s| *s != "grid").map(String::from).collect::<Vec<_>>() {
        let locations = c
            .get_list(&id, "locations")
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Failure::usage(format!("{}: [{id}] missing `locations`", path.display())))?;
        let kind: EncoderKind = c.require_str(&id, "encoder").map_err(cfg_err)?.parse().map_err(|e: surro_models::Error| Failure::from(e).into_config())?;
        let cfg_path = resolve(base, c.require_str(&id, "config").map_err(cfg_err)?);
        let conf = ConfigFile::load(&cfg_path).map_err(cfg_err)?;
        let mut cfg = TrainConfig::from_conf(&conf, Some(kind)).map_err(|e| Failure::from(e).into_config())?;
        cfg.seed = seed;
        cfg.train_locations = locations.clone();
        let autoencoder = match c.get_str(&id, "autoencoder") {
            Some(p) => {
                cfg.stage = Stage::Head;
                Some(Arc::new(Autoencoder::load(&resolve(base, p))?))
            }
            None => None,
        };
        if cfg.stage == Stage::Head && autoencoder.is_none() {
            return Err(Failure::usage(format!("[{id}] head rows need `autoencoder = <dir>`")));
        }
        cfg.validate().map_err(|e| Failure::from(e).into_config())?;
        config_paths.push(cfg_path);
        let row = GridRow { id: id.clone(), train_locations: locations, cfg, n_designs, data_seed: seed, autoencoder };
        match c.get_str(&id, "mode") {
            None | Some("weekly") => rows.push(row),
            Some("annual") => annual_rows.push(row),
            Some(other) => return Err(Failure::usage(format!("[{id}] unknown mode {other:?}"))),
        }
    }
    if rows.is_empty() && annual_rows.is_empty() {
        return Err(Failure::usage(format!("{}: no rows", path.display())));
    }
    Ok(Grid { weather_dir, tests, seed, rows, annual_rows, config_paths })
}

pub fn primary_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.csv"))
}

pub fn alternate_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.alt.csv"))
}

pub fn read_year(path: &Path, id: &str) -> CliResult<HourlyWeatherYear> {
    let text = surro_core::fsio::read_text(path)?;
    HourlyWeatherYear::from_csv(id, &text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

/// Loads both years of every listed location; a missing file is a data
/// error naming the file.
pub fn load_weather<'a>(dir: &Path, ids: impl IntoIterator<Item = &'a String>) -> CliResult<WeatherSet> {
    let mut set = WeatherSet::new();
    for id in ids {
        if set.contains_key(id) {
            continue;
        }
        let primary = read_year(&primary_path(dir, id), id)?;
        let alternate = read_year(&alternate_path(dir, id), id)?;
        set.insert(id.clone(), WeatherPair { primary, alternate });
    }
    Ok(set)
}
