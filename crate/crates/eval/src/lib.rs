//! Metrics, cross-location evaluation and reports.

mod error;
pub mod evaluate;
pub mod grid;
pub mod metrics;
pub mod report;

pub use error::{Error, Result};
pub use evaluate::{evaluate_annual, evaluate_model, evaluation_designs, CellMetrics, OraclePredictor, WeeklyPredictor};
pub use grid::{annual_baseline, cross_evaluate, evaluate_row, train_row, GridRow, TrainedRow, WeatherPair, WeatherSet};
pub use metrics::{median, pearson, rmse, smape};
pub use report::{Cell, EvaluationMatrix};
