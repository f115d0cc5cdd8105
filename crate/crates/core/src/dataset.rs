//! Training datasets: scaled weekly windows × normalized designs × oracle targets.
//!
//! Windows and designs are stored once and samples refer to them by index,
//! so a 52 × 50 location costs 52 windows rather than 2600 copies.

use std::path::Path;

use crate::conf::ConfigFile;
use crate::fsio;
use crate::oracle::simulate_weekly_energy;
use crate::sampling::{lhs_sample, DesignSpace, DesignVector, N_DESIGN_PARAMS};
use crate::weather::{window_weeks, HourlyWeatherYear, MinMaxScaler, RawWeek, WeeklyWeather, WEEKS_PER_YEAR};
use crate::{Error, Result};

pub const DATASET_FORMAT_VERSION: u32 = 1;

/// One (window, design) pair and its oracle target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeeklySample {
    /// Index into [`Dataset::windows`]; equals `location * 52 + week_index`.
    pub window: usize,
    pub design: usize,
    pub location: usize,
    pub week_index: usize,
    pub kwh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub location_ids: Vec<String>,
    pub design_seed: u64,
    pub n_designs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    years: Vec<HourlyWeatherYear>,
    raw: Vec<RawWeek>,
    windows: Vec<WeeklyWeather>,
    designs: Vec<DesignVector>,
    designs_scaled: Vec<[f64; N_DESIGN_PARAMS]>,
    samples: Vec<WeeklySample>,
    scaler: MinMaxScaler,
    space: DesignSpace,
    provenance: Provenance,
}

/// Draws `n_designs` LHS designs from `seed` and crosses them with every week
/// of every location.
pub fn build_dataset(
    locations: &[HourlyWeatherYear],
    space: &DesignSpace,
    n_designs: usize,
    seed: u64,
    scaler: &MinMaxScaler,
) -> Result<Dataset> {
    let designs = lhs_sample(space, n_designs, seed)?;
    build_dataset_with_designs(locations, space, designs, seed, scaler)
}

/// As [`build_dataset`] with an explicit design set (validation and test
/// sets reuse or redraw designs independently of the weather).
pub fn build_dataset_with_designs(
    locations: &[HourlyWeatherYear],
    space: &DesignSpace,
    designs: Vec<DesignVector>,
    design_seed: u64,
    scaler: &MinMaxScaler,
) -> Result<Dataset> {
    let raw: Vec<RawWeek> = locations.iter().flat_map(window_weeks).collect();
    let mut targets = Vec::with_capacity(locations.len() * designs.len() * WEEKS_PER_YEAR);
    for l in 0..locations.len() {
        for d in &designs {
            for w in 0..WEEKS_PER_YEAR {
                targets.push(simulate_weekly_energy(d, &raw[l * WEEKS_PER_YEAR + w].values)?);
            }
        }
    }
    assemble(locations.to_vec(), raw, space, designs, design_seed, scaler, targets)
}

fn assemble(
    years: Vec<HourlyWeatherYear>,
    raw: Vec<RawWeek>,
    space: &DesignSpace,
    designs: Vec<DesignVector>,
    design_seed: u64,
    scaler: &MinMaxScaler,
    targets: Vec<f64>,
) -> Result<Dataset> {
    if years.is_empty() {
        return Err(Error::InsufficientData("dataset needs at least one location".into()));
    }
    if designs.is_empty() {
        return Err(Error::InvalidArgument("dataset needs at least one design".into()));
    }
    let n_designs = designs.len();
    if targets.len() != years.len() * n_designs * WEEKS_PER_YEAR {
        return Err(Error::Shape(format!(
            "expected {} targets, got {}",
            years.len() * n_designs * WEEKS_PER_YEAR,
            targets.len()
        )));
    }
    let windows = raw.iter().map(|w| scaler.transform(w)).collect::<Result<Vec<_>>>()?;
    let designs_scaled = designs.iter().map(|d| space.normalize(d)).collect::<Result<Vec<_>>>()?;
    let mut samples = Vec::with_capacity(targets.len());
    let mut k = 0;
    for location in 0..years.len() {
        for design in 0..n_designs {
            for week_index in 0..WEEKS_PER_YEAR {
                samples.push(WeeklySample {
                    window: location * WEEKS_PER_YEAR + week_index,
                    design,
                    location,
                    week_index,
                    kwh: targets[k],
                });
                k += 1;
            }
        }
    }
    let provenance = Provenance {
        location_ids: years.iter().map(|y| y.location_id().to_string()).collect(),
        design_seed,
        n_designs,
    };
    Ok(Dataset {
        years,
        raw,
        windows,
        designs,
        designs_scaled,
        samples,
        scaler: scaler.clone(),
        space: space.clone(),
        provenance,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[WeeklySample] {
        &self.samples
    }

    pub fn windows(&self) -> &[WeeklyWeather] {
        &self.windows
    }

    pub fn raw_windows(&self) -> &[RawWeek] {
        &self.raw
    }

    pub fn years(&self) -> &[HourlyWeatherYear] {
        &self.years
    }

    pub fn designs(&self) -> &[DesignVector] {
        &self.designs
    }

    pub fn designs_scaled(&self) -> &[[f64; N_DESIGN_PARAMS]] {
        &self.designs_scaled
    }

    pub fn scaler(&self) -> &MinMaxScaler {
        &self.scaler
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// The same samples with windows re-scaled by another scaler (e.g. the
    /// one a pretrained autoencoder was fitted with).
    pub fn with_scaler(&self, scaler: &MinMaxScaler) -> Result<Dataset> {
        let mut out = self.clone();
        out.windows = self.raw.iter().map(|w| scaler.transform(w)).collect::<Result<_>>()?;
        out.scaler = scaler.clone();
        Ok(out)
    }

    pub fn manifest_text(&self) -> String {
        format!(
            "[dataset]\nformat_version = {DATASET_FORMAT_VERSION}\nlocations = {}\ndesign_seed = {}\nn_designs = {}\nn_samples = {}\n",
            self.provenance.location_ids.join(","),
            self.provenance.design_seed,
            self.provenance.n_designs,
            self.samples.len()
        )
    }

    /// Writes `manifest.txt`, `designs.csv`, `scaler.txt` and, per location,
    /// `<id>/weather.csv` and `<id>/targets.csv`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fsio::create_dir(dir)?;
        fsio::write_atomic(&dir.join("manifest.txt"), self.manifest_text().as_bytes())?;
        fsio::write_atomic(&dir.join("designs.csv"), self.space.designs_to_csv(&self.designs).as_bytes())?;
        fsio::write_atomic(&dir.join("scaler.txt"), self.scaler.to_text().as_bytes())?;
        let per_loc = self.designs.len() * WEEKS_PER_YEAR;
        for (l, year) in self.years.iter().enumerate() {
            let sub = dir.join(year.location_id());
            fsio::write_atomic(&sub.join("weather.csv"), year.to_csv().as_bytes())?;
            let mut t = String::from("design_index,week_index,kwh\n");
            for s in &self.samples[l * per_loc..(l + 1) * per_loc] {
                t.push_str(&format!("{},{},{}\n", s.design, s.week_index, s.kwh));
            }
            fsio::write_atomic(&sub.join("targets.csv"), t.as_bytes())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest = ConfigFile::load(&dir.join("manifest.txt"))?;
        let version: u32 = manifest.require("dataset", "format_version")?;
        if version != DATASET_FORMAT_VERSION {
            return Err(manifest.err(format!("unsupported dataset format_version {version}")));
        }
        let ids = manifest
            .get_list("dataset", "locations")
            .ok_or_else(|| manifest.err("[dataset] missing field `locations`"))?;
        let design_seed: u64 = manifest.require("dataset", "design_seed")?;
        let space = DesignSpace::standard();
        let designs = space.designs_from_csv(&fsio::read_text(&dir.join("designs.csv"))?)?;
        let scaler = MinMaxScaler::from_text(&fsio::read_text(&dir.join("scaler.txt"))?)?;

        let mut years = Vec::new();
        let mut targets = Vec::new();
        for id in &ids {
            let sub = dir.join(id);
            years.push(HourlyWeatherYear::from_csv(id.clone(), &fsio::read_text(&sub.join("weather.csv"))?)?);
            let path = sub.join("targets.csv");
            let text = fsio::read_text(&path)?;
            let mut expect = (0..designs.len()).flat_map(|d| (0..WEEKS_PER_YEAR).map(move |w| (d, w)));
            for (i, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
                let bad = |reason: &str| Error::Parse {
                    path: path.clone(),
                    line: i + 1,
                    reason: reason.to_string(),
                };
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 3 {
                    return Err(bad("expected design_index,week_index,kwh"));
                }
                let d: usize = f[0].trim().parse().map_err(|_| bad("bad design_index"))?;
                let w: usize = f[1].trim().parse().map_err(|_| bad("bad week_index"))?;
                let kwh: f64 = f[2].trim().parse().map_err(|_| bad("bad kwh"))?;
                if expect.next() != Some((d, w)) {
                    return Err(bad("rows out of (design, week) order"));
                }
                targets.push(kwh);
            }
            if expect.next().is_some() {
                return Err(Error::Parse {
                    path: path.clone(),
                    line: text.lines().count(),
                    reason: "too few target rows".into(),
                });
            }
        }
        let raw = years.iter().flat_map(window_weeks).collect();
        assemble(years, raw, &space, designs, design_seed, &scaler, targets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::climate::default_suite;
    use crate::weather::fit_scaler;

    fn year(i: usize) -> HourlyWeatherYear {
        default_suite()[i].generate().unwrap()
    }

    #[test]
    fn sizes_follow_locations_times_designs() {
        let a = year(2);
        let b = year(4);
        let scaler = fit_scaler(&window_weeks(&a), "tor").unwrap();
        let space = DesignSpace::standard();
        assert_eq!(build_dataset(&[a.clone()], &space, 50, 7, &scaler).unwrap().len(), 2600);
        let two = build_dataset(&[a, b], &space, 50, 7, &scaler).unwrap();
        assert_eq!(two.len(), 5200);
        let s = two.samples()[2600 + 52 + 3];
        assert_eq!((s.location, s.design, s.week_index, s.window), (1, 1, 3, 55));
    }

    #[test]
    fn deterministic_and_round_trips() {
        let a = year(4);
        let scaler = fit_scaler(&window_weeks(&a), "cal").unwrap();
        let space = DesignSpace::standard();
        let d1 = build_dataset(&[a.clone()], &space, 6, 3, &scaler).unwrap();
        let d2 = build_dataset(&[a], &space, 6, 3, &scaler).unwrap();
        assert_eq!(d1, d2);

        let tmp = tempfile::tempdir().unwrap();
        d1.save(tmp.path()).unwrap();
        let back = Dataset::load(tmp.path()).unwrap();
        assert_eq!(back, d1);
        let tmp2 = tempfile::tempdir().unwrap();
        back.save(tmp2.path()).unwrap();
        for f in ["manifest.txt", "designs.csv", "scaler.txt", "cal/targets.csv", "cal/weather.csv"] {
            assert_eq!(
                std::fs::read(tmp.path().join(f)).unwrap(),
                std::fs::read(tmp2.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn rescaling_keeps_targets() {
        let a = year(0);
        let space = DesignSpace::standard();
        let s1 = fit_scaler(&window_weeks(&a), "van").unwrap();
        let s2 = fit_scaler(&window_weeks(&year(9)), "whi").unwrap();
        let d = build_dataset(&[a], &space, 3, 1, &s1).unwrap();
        let r = d.with_scaler(&s2).unwrap();
        assert_eq!(r.samples(), d.samples());
        assert_ne!(r.windows(), d.windows());
        assert_eq!(r.scaler(), &s2);
    }
}
