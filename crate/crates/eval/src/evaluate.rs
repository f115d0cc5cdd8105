//! Scoring one predictor on one test location.

use surro_core::oracle::simulate_weekly_energy;
use surro_core::sampling::{lhs_sample, DesignSpace, DesignVector};
use surro_core::weather::{window_weeks, HourlyWeatherYear, WeatherMatrix, WEEKS_PER_YEAR};
use surro_models::SurrogateModel;

use crate::metrics::{median, pearson, rmse, smape};
use crate::{Error, Result};

/// Fresh evaluation designs per run: 30 LHS draws at `seed + 1000`.
pub const EVAL_DESIGNS: usize = 30;
pub const EVAL_SEED_OFFSET: u64 = 1000;

pub fn evaluation_designs(space: &DesignSpace, seed: u64) -> Result<Vec<DesignVector>> {
    Ok(lhs_sample(space, EVAL_DESIGNS, seed.wrapping_add(EVAL_SEED_OFFSET))?)
}

/// Anything that maps raw weekly weather × designs to weekly kWh.
pub trait WeeklyPredictor: Sync {
    /// Design-major: `out[d * weeks.len() + w]`.
    fn predict_weeks(&self, weeks: &[&WeatherMatrix], designs: &[DesignVector]) -> Result<Vec<f64>>;
}

impl WeeklyPredictor for SurrogateModel {
    fn predict_weeks(&self, weeks: &[&WeatherMatrix], designs: &[DesignVector]) -> Result<Vec<f64>> {
        Ok(self.predict_grid(weeks, designs)?)
    }
}

/// The simulator itself as a predictor: zero error by construction.
pub struct OraclePredictor;

impl WeeklyPredictor for OraclePredictor {
    fn predict_weeks(&self, weeks: &[&WeatherMatrix], designs: &[DesignVector]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(weeks.len() * designs.len());
        for d in designs {
            for w in weeks {
                out.push(simulate_weekly_energy(d, w)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetrics {
    pub weekly_smape: f64,
    pub annual_smape: f64,
    pub rmse: f64,
    /// Median over designs of the 52-week Pearson r.
    pub pearson: f64,
}

/// Oracle weekly targets, design-major like [`WeeklyPredictor`].
pub fn oracle_targets(weeks: &[&WeatherMatrix], designs: &[DesignVector]) -> Result<Vec<f64>> {
    OraclePredictor.predict_weeks(weeks, designs)
}

/// Scores `predictor` on every week of `test` for every design: weekly
/// SMAPE and RMSE over all pairs, annual SMAPE over per-design sums of the
/// 52 weeks, Pearson as the per-design median.
pub fn evaluate_model(
    predictor: &dyn WeeklyPredictor,
    test: &HourlyWeatherYear,
    designs: &[DesignVector],
) -> Result<CellMetrics> {
    if designs.is_empty() {
        return Err(Error::InvalidArgument("no evaluation designs".into()));
    }
    let weeks = window_weeks(test);
    let mats: Vec<&WeatherMatrix> = weeks.iter().map(|w| &w.values).collect();
    let actual = oracle_targets(&mats, designs)?;
    let pred = predictor.predict_weeks(&mats, designs)?;
    score(&actual, &pred, designs.len())
}

fn score(actual: &[f64], pred: &[f64], n_designs: usize) -> Result<CellMetrics> {
    if actual.len() != pred.len() || actual.len() != n_designs * WEEKS_PER_YEAR {
        return Err(Error::LengthMismatch(actual.len(), pred.len()));
    }
    if let Some(p) = pred.iter().find(|p| !p.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite prediction {p}")));
    }
    let per = |v: &[f64]| -> Vec<f64> { v.chunks(WEEKS_PER_YEAR).map(|c| c.iter().sum()).collect() };
    let mut rs = Vec::new();
    for (a, p) in actual.chunks(WEEKS_PER_YEAR).zip(pred.chunks(WEEKS_PER_YEAR)) {
        match pearson(a, p) {
            Ok(r) => rs.push(r),
            Err(Error::UndefinedCorrelation(_)) => {}
            Err(e) => return Err(e),
        }
    }
    let pearson = median(&rs).ok_or_else(|| Error::UndefinedCorrelation("every design has a constant series".into()))?;
    Ok(CellMetrics {
        weekly_smape: smape(actual, pred)?,
        annual_smape: smape(&per(actual), &per(pred))?,
        rmse: rmse(actual, pred)?,
        pearson,
    })
}

/// Annual SMAPE of a whole-year model (8736-hour input) on `test`: one
/// prediction per design against the oracle's summed weekly energy.
pub fn evaluate_annual(model: &SurrogateModel, test: &HourlyWeatherYear, designs: &[DesignVector]) -> Result<f64> {
    let weeks = window_weeks(test);
    let mats: Vec<&WeatherMatrix> = weeks.iter().map(|w| &w.values).collect();
    let actual: Vec<f64> =
        oracle_targets(&mats, designs)?.chunks(WEEKS_PER_YEAR).map(|c| c.iter().sum()).collect();
    let year = test.windowed_matrix();
    let pred = model.predict_grid(&[&year], designs)?;
    smape(&actual, &pred)
}

#[cfg(test)]
mod tests {
    use super::*;
    use surro_core::climate::default_suite;

    #[test]
    fn oracle_scores_perfectly() {
        let year = default_suite()[3].generate().unwrap();
        let designs = evaluation_designs(&DesignSpace::standard(), 0).unwrap();
        let m = evaluate_model(&OraclePredictor, &year, &designs).unwrap();
        assert_eq!(m.weekly_smape, 0.0);
        assert_eq!(m.annual_smape, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert!((m.pearson - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_designs_are_offset_from_training_seed() {
        let space = DesignSpace::standard();
        assert_eq!(evaluation_designs(&space, 5).unwrap(), lhs_sample(&space, 30, 1005).unwrap());
        assert_ne!(evaluation_designs(&space, 5).unwrap()[..], lhs_sample(&space, 30, 5).unwrap()[..]);
    }
}
