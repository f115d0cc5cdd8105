//! Training views over a [`Dataset`]: each unique weather window once, each
//! design once, and a dense target grid.

use surro_core::dataset::Dataset;
use surro_core::sampling::N_DESIGN_PARAMS;
use surro_core::weather::{HOURS_PER_WEEK, N_FEATURES, WEEKS_PER_YEAR};

use crate::error::invalid;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    /// Timesteps per window (168 weekly, 8736 annual).
    pub t_len: usize,
    /// Scaled windows, row-major `[t_len, d_w]`.
    pub windows: Vec<Vec<f64>>,
    pub designs: Vec<[f64; N_DESIGN_PARAMS]>,
    /// `targets[w * designs.len() + d]`, in kWh.
    pub targets: Vec<f64>,
}

impl SampleSet {
    /// One sample per (week, design) pair.
    pub fn from_dataset(ds: &Dataset) -> Result<Self> {
        let nd = ds.designs().len();
        let windows: Vec<Vec<f64>> = ds.windows().iter().map(|w| w.values.data().to_vec()).collect();
        let mut targets = vec![f64::NAN; windows.len() * nd];
        for s in ds.samples() {
            targets[s.window * nd + s.design] = s.kwh;
        }
        let set = Self { t_len: HOURS_PER_WEEK, windows, designs: ds.designs_scaled().to_vec(), targets };
        set.check()?;
        Ok(set)
    }

    /// One sample per (location, design): the 52 scaled weeks back to back
    /// (8736 h) and the summed weekly energy as target.
    pub fn annual_from_dataset(ds: &Dataset) -> Result<Self> {
        let nd = ds.designs().len();
        let n_loc = ds.years().len();
        let mut windows = Vec::with_capacity(n_loc);
        for l in 0..n_loc {
            let weeks = &ds.windows()[l * WEEKS_PER_YEAR..(l + 1) * WEEKS_PER_YEAR];
            windows.push(weeks.iter().flat_map(|w| w.values.data().iter().copied()).collect());
        }
        let mut targets = vec![0.0; n_loc * nd];
        for s in ds.samples() {
            targets[s.location * nd + s.design] += s.kwh;
        }
        let set = Self { t_len: HOURS_PER_WEEK * WEEKS_PER_YEAR, windows, designs: ds.designs_scaled().to_vec(), targets };
        set.check()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn target(&self, w: usize, d: usize) -> f64 {
        self.targets[w * self.designs.len() + d]
    }

    fn check(&self) -> Result<()> {
        if self.windows.is_empty() || self.designs.is_empty() {
            return Err(invalid("sample set needs at least one window and one design"));
        }
        if self.windows.iter().any(|w| w.len() != self.t_len * N_FEATURES) {
            return Err(invalid("window length mismatch"));
        }
        if self.targets.len() != self.windows.len() * self.designs.len() || self.targets.iter().any(|t| !t.is_finite()) {
            return Err(invalid("target grid is incomplete"));
        }
        Ok(())
    }

    /// Mean and (population) standard deviation of the targets.
    pub fn target_stats(&self) -> (f64, f64) {
        let n = self.targets.len() as f64;
        let mean = self.targets.iter().sum::<f64>() / n;
        let var = self.targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        (mean, if std > 1e-12 { std } else { 1.0 })
    }
}
