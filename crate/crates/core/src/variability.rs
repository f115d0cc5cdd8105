//! Weekly-versus-annual weather variability diagnostics.
//!
//! Cosine similarities are taken on min-max scaled features, with the scaler
//! fitted on the union of the two locations being compared, so that no
//! single feature dominates by its units.

use crate::weather::{
    fit_scaler, window_weeks, HourlyWeatherYear, WeatherMatrix, FEATURE_NAMES, N_FEATURES,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PairSimilarity {
    pub loc_a: String,
    pub loc_b: String,
    pub annual_cosine: f64,
    /// Mean over weeks of A of the best cosine against any week of B.
    pub matched_weekly_cosine: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariabilityReport {
    pub weekly_variance: [f64; N_FEATURES],
    pub annual_variance: [f64; N_FEATURES],
    pub pairs: Vec<PairSimilarity>,
}

impl VariabilityReport {
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("metric,feature,value\n");
        for (metric, vals) in [
            ("weekly_variance", &self.weekly_variance),
            ("annual_variance", &self.annual_variance),
        ] {
            for (name, v) in FEATURE_NAMES.iter().zip(vals.iter()) {
                s.push_str(&format!("{metric},{name},{v}\n"));
            }
        }
        s
    }

    pub fn pairs_csv(&self) -> String {
        let mut s = String::from("loc_a,loc_b,annual_cosine,matched_weekly_cosine\n");
        for p in &self.pairs {
            s.push_str(&format!(
                "{},{},{},{}\n",
                p.loc_a, p.loc_b, p.annual_cosine, p.matched_weekly_cosine
            ));
        }
        s
    }
}

fn population_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

pub fn variability_report(locations: &[HourlyWeatherYear]) -> Result<VariabilityReport> {
    if locations.len() < 2 {
        return Err(Error::InsufficientData(
            "variability analysis needs at least two locations".into(),
        ));
    }
    let weeks: Vec<_> = locations.iter().map(window_weeks).collect();

    let mut weekly_variance = [0.0; N_FEATURES];
    let mut annual_variance = [0.0; N_FEATURES];
    for f in 0..N_FEATURES {
        let weekly: Vec<f64> = weeks
            .iter()
            .flatten()
            .map(|w| w.values.column_mean(f))
            .collect();
        let annual: Vec<f64> = locations
            .iter()
            .map(|y| y.hours().iter().map(|h| h.features()[f]).sum::<f64>() / y.hours().len() as f64)
            .collect();
        weekly_variance[f] = population_variance(&weekly);
        annual_variance[f] = population_variance(&annual);
    }

    let mut pairs = Vec::new();
    for i in 0..locations.len() {
        for j in i + 1..locations.len() {
            let scaler = fit_scaler(weeks[i].iter().chain(&weeks[j]), "pair")?;
            let scale = |m: &WeatherMatrix| scaler.transform_matrix(m).map(|s| s.data().to_vec());
            let year_a = scale(&locations[i].leading_matrix(locations[i].hours().len()))?;
            let year_b = scale(&locations[j].leading_matrix(locations[j].hours().len()))?;
            let wa: Vec<Vec<f64>> = weeks[i].iter().map(|w| scale(&w.values)).collect::<Result<_>>()?;
            let wb: Vec<Vec<f64>> = weeks[j].iter().map(|w| scale(&w.values)).collect::<Result<_>>()?;
            let matched = wa
                .iter()
                .map(|a| wb.iter().map(|b| cosine(a, b)).fold(f64::NEG_INFINITY, f64::max))
                .sum::<f64>()
                / wa.len() as f64;
            pairs.push(PairSimilarity {
                loc_a: locations[i].location_id().to_string(),
                loc_b: locations[j].location_id().to_string(),
                annual_cosine: cosine(&year_a, &year_b),
                matched_weekly_cosine: matched,
            });
        }
    }
    Ok(VariabilityReport {
        weekly_variance,
        annual_variance,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::climate::default_suite;

    #[test]
    fn identical_years_are_fully_similar() {
        let y = default_suite()[2].generate().unwrap();
        let r = variability_report(&[y.clone(), y.with_location_id("copy")]).unwrap();
        assert!((r.pairs[0].annual_cosine - 1.0).abs() < 1e-12);
        assert!((r.pairs[0].matched_weekly_cosine - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_location_rejected() {
        let y = default_suite()[0].generate().unwrap();
        assert!(matches!(variability_report(&[y]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn weekly_spread_exceeds_annual_on_suite() {
        let years: Vec<_> = default_suite().iter().map(|l| l.generate().unwrap()).collect();
        let r = variability_report(&years).unwrap();
        assert!(r.weekly_variance[0] > r.annual_variance[0]);
        assert!(r.weekly_variance[1] > r.annual_variance[1]);
        assert_eq!(r.pairs.len(), 45);
        let csv = r.metrics_csv();
        assert_eq!(csv.lines().count(), 1 + 2 * N_FEATURES);
        assert!(csv.starts_with("metric,feature,value\n"));
    }

    #[test]
    fn matching_weeks_beats_whole_year() {
        let suite = default_suite();
        let a = suite[2].generate().unwrap();
        let b = suite[4].generate().unwrap();
        let r = variability_report(&[a, b]).unwrap();
        assert!(r.pairs[0].matched_weekly_cosine >= r.pairs[0].annual_cosine - 1e-9);
    }
}
