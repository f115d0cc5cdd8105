//! Hourly weather years, 168-hour windows and the unclipped min-max scaler.

use crate::{Error, Result};

pub const HOURS_PER_YEAR: usize = 8760;
pub const HOURS_PER_WEEK: usize = 168;
pub const WEEKS_PER_YEAR: usize = 52;
/// Hours covered by the 52 weekly windows; the trailing day is dropped.
pub const WINDOWED_HOURS: usize = HOURS_PER_WEEK * WEEKS_PER_YEAR;
pub const N_FEATURES: usize = 4;

pub const FEATURE_NAMES: [&str; N_FEATURES] = ["drybulb", "rel_humidity", "ghi", "wind"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourRecord {
    pub drybulb_c: f64,
    pub rel_humidity_pct: f64,
    pub ghi_whm2: f64,
    pub wind_ms: f64,
}

impl HourRecord {
    pub fn features(&self) -> [f64; N_FEATURES] {
        [
            self.drybulb_c,
            self.rel_humidity_pct,
            self.ghi_whm2,
            self.wind_ms,
        ]
    }

    fn check(&self, row: usize) -> Result<()> {
        let f = self.features();
        if let Some(col) = f.iter().position(|v| !v.is_finite()) {
            return Err(Error::malformed(row, col, "non-finite value"));
        }
        if !(0.0..=100.0).contains(&self.rel_humidity_pct) {
            return Err(Error::malformed(
                row,
                1,
                format!("relative humidity {} outside [0, 100]", self.rel_humidity_pct),
            ));
        }
        if self.ghi_whm2 < 0.0 {
            return Err(Error::malformed(row, 2, "negative irradiance"));
        }
        if self.wind_ms < 0.0 {
            return Err(Error::malformed(row, 3, "negative wind speed"));
        }
        Ok(())
    }
}

/// One location's year of hourly weather. Always exactly 8760 valid records.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyWeatherYear {
    location_id: String,
    hours: Vec<HourRecord>,
}

impl HourlyWeatherYear {
    pub fn new(location_id: impl Into<String>, hours: Vec<HourRecord>) -> Result<Self> {
        if hours.len() != HOURS_PER_YEAR {
            return Err(Error::malformed(
                hours.len(),
                0,
                format!("expected {HOURS_PER_YEAR} hourly records, found {}", hours.len()),
            ));
        }
        for (i, h) in hours.iter().enumerate() {
            h.check(i)?;
        }
        Ok(Self {
            location_id: location_id.into(),
            hours,
        })
    }

    pub fn location_id(&self) -> &str {
        &self.location_id
    }

    pub fn hours(&self) -> &[HourRecord] {
        &self.hours
    }

    pub fn with_location_id(mut self, id: impl Into<String>) -> Self {
        self.location_id = id.into();
        self
    }

    /// The first `hours` records as a time × feature matrix.
    pub fn leading_matrix(&self, hours: usize) -> WeatherMatrix {
        let hours = hours.min(self.hours.len());
        let data = self.hours[..hours]
            .iter()
            .flat_map(|h| h.features())
            .collect();
        WeatherMatrix::from_vec(hours, N_FEATURES, data).expect("consistent by construction")
    }

    /// The 8736 windowed hours as one matrix (annual-model input).
    pub fn windowed_matrix(&self) -> WeatherMatrix {
        self.leading_matrix(WINDOWED_HOURS)
    }

    /// Reads the internal weather CSV (`drybulb_c,rel_humidity_pct,ghi_whm2,wind_ms`).
    pub fn from_csv(location_id: impl Into<String>, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == CSV_HEADER => {}
            _ => return Err(Error::malformed(0, 0, "missing weather CSV header")),
        }
        let mut hours = Vec::with_capacity(HOURS_PER_YEAR);
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let row = lineno - 1;
            let mut vals = [0.0; N_FEATURES];
            let mut fields = line.split(',');
            for (col, v) in vals.iter_mut().enumerate() {
                let field = fields
                    .next()
                    .ok_or_else(|| Error::malformed(row, col, "missing field"))?;
                *v = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::malformed(row, col, format!("not a number: {field:?}")))?;
            }
            hours.push(HourRecord {
                drybulb_c: vals[0],
                rel_humidity_pct: vals[1],
                ghi_whm2: vals[2],
                wind_ms: vals[3],
            });
        }
        Self::new(location_id, hours)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(HOURS_PER_YEAR * 32);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for h in &self.hours {
            // `{}` on f64 prints the shortest representation that round-trips.
            out.push_str(&format!(
                "{},{},{},{}\n",
                h.drybulb_c, h.rel_humidity_pct, h.ghi_whm2, h.wind_ms
            ));
        }
        out
    }
}

pub const CSV_HEADER: &str = "drybulb_c,rel_humidity_pct,ghi_whm2,wind_ms";

/// Row-major time × feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl WeatherMatrix {
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn column_mean(&self, c: usize) -> f64 {
        (0..self.rows).map(|r| self.get(r, c)).sum::<f64>() / self.rows as f64
    }
}

/// A raw-unit 168 × d_w window.
#[derive(Debug, Clone, PartialEq)]
pub struct RawWeek {
    pub week_index: usize,
    pub values: WeatherMatrix,
}

/// A scaled 168 × d_w window. Values may leave `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeeklyWeather {
    pub week_index: usize,
    pub values: WeatherMatrix,
}

/// Splits a year into 52 consecutive, non-overlapping 168-hour blocks from
/// hour 0. Hours 8736..8760 belong to no window.
pub fn window_weeks(year: &HourlyWeatherYear) -> Vec<RawWeek> {
    (0..WEEKS_PER_YEAR)
        .map(|w| {
            let start = w * HOURS_PER_WEEK;
            let data = year.hours[start..start + HOURS_PER_WEEK]
                .iter()
                .flat_map(|h| h.features())
                .collect();
            RawWeek {
                week_index: w,
                values: WeatherMatrix::from_vec(HOURS_PER_WEEK, N_FEATURES, data)
                    .expect("consistent by construction"),
            }
        })
        .collect()
}

/// Per-feature affine map onto `[0, 1]` over the fit set; never clipped.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    max: Vec<f64>,
    fitted_on: String,
}

impl MinMaxScaler {
    pub fn from_bounds(min: Vec<f64>, max: Vec<f64>, fitted_on: impl Into<String>) -> Result<Self> {
        if min.len() != max.len() || min.is_empty() {
            return Err(Error::Shape("scaler bounds must be equal-length and non-empty".into()));
        }
        for (i, (lo, hi)) in min.iter().zip(&max).enumerate() {
            if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::DegenerateFeature {
                    feature: feature_name(i),
                });
            }
        }
        Ok(Self {
            min,
            max,
            fitted_on: fitted_on.into(),
        })
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    pub fn fitted_on(&self) -> &str {
        &self.fitted_on
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    pub fn scale_value(&self, feature: usize, x: f64) -> f64 {
        (x - self.min[feature]) / (self.max[feature] - self.min[feature])
    }

    pub fn transform_matrix(&self, m: &WeatherMatrix) -> Result<WeatherMatrix> {
        if m.cols != self.n_features() {
            return Err(Error::Shape(format!(
                "scaler has {} features, input has {}",
                self.n_features(),
                m.cols
            )));
        }
        let data = m
            .data
            .iter()
            .enumerate()
            .map(|(i, &x)| self.scale_value(i % m.cols, x))
            .collect();
        Ok(WeatherMatrix {
            rows: m.rows,
            cols: m.cols,
            data,
        })
    }

    pub fn transform(&self, week: &RawWeek) -> Result<WeeklyWeather> {
        Ok(WeeklyWeather {
            week_index: week.week_index,
            values: self.transform_matrix(&week.values)?,
        })
    }

    /// `scaler.txt` layout: `fitted_on = ...` then one `feature,min,max` line per feature.
    pub fn to_text(&self) -> String {
        let mut s = format!("fitted_on = {}\nfeature,min,max\n", self.fitted_on);
        for i in 0..self.n_features() {
            s.push_str(&format!("{},{},{}\n", feature_name(i), self.min[i], self.max[i]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::Parse {
            path: "scaler.txt".into(),
            line,
            reason: reason.into(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let fitted_on = match lines.next() {
            Some((_, l)) => l
                .trim()
                .strip_prefix("fitted_on")
                .and_then(|r| r.trim_start().strip_prefix('='))
                .map(|r| r.trim().to_string())
                .ok_or_else(|| bad(1, "expected `fitted_on = ...`"))?,
            None => return Err(bad(1, "empty scaler file")),
        };
        match lines.next() {
            Some((_, l)) if l.trim() == "feature,min,max" => {}
            _ => return Err(bad(2, "expected `feature,min,max` header")),
        }
        let (mut min, mut max) = (Vec::new(), Vec::new());
        for (i, l) in lines {
            let parts: Vec<&str> = l.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(bad(i + 1, "expected three fields"));
            }
            min.push(parts[1].parse().map_err(|_| bad(i + 1, "bad min"))?);
            max.push(parts[2].parse().map_err(|_| bad(i + 1, "bad max"))?);
        }
        Self::from_bounds(min, max, fitted_on)
    }
}

fn feature_name(i: usize) -> String {
    FEATURE_NAMES
        .get(i)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("feature{i}"))
}

/// Per-feature min/max over every timestep of every provided week.
pub fn fit_scaler<'a, I>(train_weeks: I, location_id: &str) -> Result<MinMaxScaler>
where
    I: IntoIterator<Item = &'a RawWeek>,
{
    let mut min: Vec<f64> = Vec::new();
    let mut max: Vec<f64> = Vec::new();
    let mut seen = 0usize;
    for week in train_weeks {
        let m = &week.values;
        if seen == 0 {
            min = vec![f64::INFINITY; m.cols];
            max = vec![f64::NEG_INFINITY; m.cols];
        } else if m.cols != min.len() {
            return Err(Error::Shape("weeks disagree on feature count".into()));
        }
        for r in 0..m.rows {
            for (c, &x) in m.row(r).iter().enumerate() {
                min[c] = min[c].min(x);
                max[c] = max[c].max(x);
            }
        }
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::InsufficientData("no weeks to fit a scaler on".into()));
    }
    MinMaxScaler::from_bounds(min, max, location_id)
}
