//! Error metrics: RMSE (Eq. 6 style), SMAPE and Pearson's r.

use crate::{Error, Result};

fn check(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(actual.len(), predicted.len()));
    }
    if actual.is_empty() {
        return Err(Error::InvalidArgument("metrics need at least one value".into()));
    }
    Ok(())
}

/// Symmetric mean absolute percentage error in percent, in `[0, 200]`.
/// A term with both values zero contributes 0.
pub fn smape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    let sum: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| {
            let den = (a.abs() + p.abs()) / 2.0;
            if den == 0.0 {
                0.0
            } else {
                (a - p).abs() / den
            }
        })
        .sum();
    Ok(sum / actual.len() as f64 * 100.0)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    let ss: f64 = actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum();
    Ok((ss / actual.len() as f64).sqrt())
}

pub fn pearson(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    if actual.len() < 2 {
        return Err(Error::UndefinedCorrelation("needs at least two points".into()));
    }
    let n = actual.len() as f64;
    let ma = actual.iter().sum::<f64>() / n;
    let mp = predicted.iter().sum::<f64>() / n;
    let (mut sap, mut saa, mut spp) = (0.0, 0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        let (da, dp) = (a - ma, p - mp);
        sap += da * dp;
        saa += da * da;
        spp += dp * dp;
    }
    if saa == 0.0 || spp == 0.0 {
        return Err(Error::UndefinedCorrelation("constant sequence".into()));
    }
    Ok((sap / (saa.sqrt() * spp.sqrt())).clamp(-1.0, 1.0))
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}
