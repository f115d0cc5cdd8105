//! The cross-location grid: train one model per row, score it on every
//! test location.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use surro_core::dataset::{build_dataset, Dataset};
use surro_core::sampling::{DesignSpace, DesignVector};
use surro_core::weather::{fit_scaler, window_weeks, HourlyWeatherYear, RawWeek};
use surro_models::{
    train_annual_baseline, train_head, train_joint, Autoencoder, Stage, SurrogateModel, TrainConfig, TrainReport,
};

use crate::evaluate::{evaluate_annual, evaluate_model, evaluation_designs, CellMetrics};
use crate::report::{Cell, EvaluationMatrix};
use crate::{Error, Result};

/// A location's primary weather year and its alternate (validation /
/// same-location test) year.
#[derive(Debug, Clone)]
pub struct WeatherPair {
    pub primary: HourlyWeatherYear,
    pub alternate: HourlyWeatherYear,
}

pub type WeatherSet = BTreeMap<String, WeatherPair>;

#[derive(Debug, Clone)]
pub struct GridRow {
    pub id: String,
    pub train_locations: Vec<String>,
    pub cfg: TrainConfig,
    pub n_designs: usize,
    pub data_seed: u64,
    /// Pretrained encoder for `stage = head` rows.
    pub autoencoder: Option<Arc<Autoencoder>>,
}

#[derive(Debug, Clone)]
pub struct TrainedRow {
    pub id: String,
    pub train_locations: Vec<String>,
    pub model: SurrogateModel,
    pub report: TrainReport,
}

fn pair<'a>(weather: &'a WeatherSet, id: &str) -> Result<&'a WeatherPair> {
    weather.get(id).ok_or_else(|| Error::InvalidArgument(format!("no weather for location {id:?}")))
}

/// Training (primary years) and validation (alternate years) datasets for
/// a set of locations. Both share one scaler, fitted on the union of the
/// training weeks, and the same designs.
pub fn row_datasets(
    locations: &[String],
    weather: &WeatherSet,
    n_designs: usize,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if locations.is_empty() {
        return Err(Error::InvalidArgument("a row needs at least one training location".into()));
    }
    let pairs = locations.iter().map(|l| pair(weather, l)).collect::<Result<Vec<_>>>()?;
    let primary: Vec<HourlyWeatherYear> = pairs.iter().map(|p| p.primary.clone()).collect();
    let alternate: Vec<HourlyWeatherYear> = pairs.iter().map(|p| p.alternate.clone()).collect();
    let weeks: Vec<RawWeek> = primary.iter().flat_map(window_weeks).collect();
    let scaler = fit_scaler(&weeks, &locations.join("+"))?;
    let space = DesignSpace::standard();
    let train = build_dataset(&primary, &space, n_designs, seed, &scaler)?;
    let val = build_dataset(&alternate, &space, n_designs, seed, &scaler)?;
    Ok((train, val))
}

pub fn train_row(row: &GridRow, weather: &WeatherSet) -> Result<TrainedRow> {
    let (train, val) = row_datasets(&row.train_locations, weather, row.n_designs, row.data_seed)?;
    let (model, report) = match row.cfg.stage {
        Stage::Joint => train_joint(&train, &val, &row.cfg)?,
        Stage::Head => {
            let ae = row
                .autoencoder
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("row {}: head stage needs a pretrained autoencoder", row.id)))?;
            train_head(ae, &train, &val, &row.cfg)?
        }
        Stage::Autoencoder => {
            return Err(Error::InvalidArgument(format!("row {}: autoencoder pretraining is not a grid row", row.id)))
        }
    };
    Ok(TrainedRow { id: row.id.clone(), train_locations: row.train_locations.clone(), model, report })
}

/// The year a trained row is tested on: the alternate year for its own
/// training locations, the primary year elsewhere.
pub fn test_year<'a>(train_locations: &[String], test: &str, weather: &'a WeatherSet) -> Result<&'a HourlyWeatherYear> {
    let p = pair(weather, test)?;
    Ok(if train_locations.iter().any(|l| l == test) { &p.alternate } else { &p.primary })
}

pub fn evaluate_row(
    trained: &TrainedRow,
    tests: &[String],
    weather: &WeatherSet,
    designs: &[DesignVector],
) -> Vec<Cell> {
    tests
        .iter()
        .map(|t| {
            let r: Result<CellMetrics> = test_year(&trained.train_locations, t, weather)
                .and_then(|y| evaluate_model(&trained.model, y, designs));
            match r {
                Ok(m) => Cell::Ok(m),
                Err(e) => Cell::Failed(e.to_string()),
            }
        })
        .collect()
}

/// Trains every row (up to `jobs` at a time) and scores each on every test
/// location with the shared evaluation designs. A row or cell that fails
/// is recorded as failed; the matrix is ordered by (row, column) whatever
/// the execution order.
pub fn cross_evaluate(
    rows: &[GridRow],
    tests: &[String],
    weather: &WeatherSet,
    eval_seed: u64,
    jobs: usize,
) -> Result<EvaluationMatrix> {
    if rows.is_empty() || tests.is_empty() {
        return Err(Error::InvalidArgument("grid needs at least one row and one test location".into()));
    }
    for id in rows.iter().flat_map(|r| &r.train_locations).chain(tests) {
        pair(weather, id)?;
    }
    let designs = evaluation_designs(&DesignSpace::standard(), eval_seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let cells: Vec<Vec<Cell>> = pool.install(|| {
        rows.par_iter()
            .map(|row| match train_row(row, weather) {
                Ok(t) => evaluate_row(&t, tests, weather, &designs),
                Err(e) => vec![Cell::Failed(e.to_string()); tests.len()],
            })
            .collect()
    });
    EvaluationMatrix::new(
        rows.iter().map(|r| r.id.clone()).collect(),
        tests.to_vec(),
        cells.into_iter().flatten().collect(),
    )
}

/// §4.6-style baseline: the row's architecture trained on whole-year inputs,
/// scored by annual SMAPE on each test location.
pub fn annual_baseline(
    row: &GridRow,
    tests: &[String],
    weather: &WeatherSet,
    eval_seed: u64,
) -> Result<(SurrogateModel, Vec<(String, f64)>)> {
    let (train, val) = row_datasets(&row.train_locations, weather, row.n_designs, row.data_seed)?;
    let (model, _) = train_annual_baseline(&train, &val, &row.cfg)?;
    let designs = evaluation_designs(&DesignSpace::standard(), eval_seed)?;
    let mut out = Vec::new();
    for t in tests {
        let y = test_year(&row.train_locations, t, weather)?;
        out.push((t.clone(), evaluate_annual(&model, y, &designs)?));
    }
    Ok((model, out))
}

pub fn baseline_csv(row_id: &str, cells: &[(String, f64)]) -> String {
    let mut s = String::from("train_config,test_loc,annual_smape\n");
    for (t, v) in cells {
        s.push_str(&format!("{row_id},{t},{v}\n"));
    }
    s
}
