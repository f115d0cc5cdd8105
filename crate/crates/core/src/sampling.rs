//! The 14-parameter design space and Latin hypercube sampling over it.

use crate::rng::{self, SplitMix64};
use crate::{Error, Result};

pub const N_DESIGN_PARAMS: usize = 14;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamRange {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

/// Indices into a [`DesignVector`], in design-space order.
pub mod param {
    pub const WALL_INSULATION: usize = 0;
    pub const ROOF_INSULATION: usize = 1;
    pub const WINDOW_U: usize = 2;
    pub const WINDOW_SHGC: usize = 3;
    pub const VISIBLE_TRANSMITTANCE: usize = 4;
    pub const WALL_THICKNESS: usize = 5;
    pub const ROOF_THICKNESS: usize = 6;
    pub const NORTH_AXIS: usize = 7;
    pub const WALL_ABSORPTANCE: usize = 8;
    pub const ROOF_ABSORPTANCE: usize = 9;
    pub const EQUIPMENT_GAIN: usize = 10;
    pub const WINDOW_SCALE: usize = 11;
    pub const HEATING_SETPOINT: usize = 12;
    pub const COOLING_SETPOINT: usize = 13;
}

#[rustfmt::skip]
const STANDARD: [(&str, f64, f64); N_DESIGN_PARAMS] = [
    ("wall_insulation_m",      0.02,  0.10),
    ("roof_insulation_m",      0.02,  0.10),
    ("window_u_wm2k",          1.2,   2.0),
    ("window_shgc",            0.3,   0.7),
    ("visible_transmittance",  0.5,   1.0),
    ("wall_thickness_m",       0.1,   0.5),
    ("roof_thickness_m",       0.1,   0.5),
    ("north_axis_deg",         0.0,   360.0),
    ("wall_absorptance",       0.5,   0.9),
    ("roof_absorptance",       0.5,   0.9),
    ("equipment_gain_wm2",     5.0,   15.0),
    ("window_scale",           0.5,   1.0),
    ("heating_setpoint_c",     18.0,  22.0),
    ("cooling_setpoint_c",     24.0,  28.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    params: Vec<ParamRange>,
}

impl Default for DesignSpace {
    fn default() -> Self {
        Self::standard()
    }
}

impl DesignSpace {
    /// The medium-office design space with its 14 bounded parameters.
    pub fn standard() -> Self {
        Self {
            params: STANDARD
                .iter()
                .map(|&(name, lo, hi)| ParamRange { name, lo, hi })
                .collect(),
        }
    }

    /// Narrows (or widens) one parameter's range.
    pub fn with_range(mut self, name: &str, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidArgument(format!("{name}: hi must exceed lo")));
        }
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown design parameter {name}")))?;
        p.lo = lo;
        p.hi = hi;
        Ok(self)
    }

    pub fn params(&self) -> &[ParamRange] {
        &self.params
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.params.iter().map(|p| p.name)
    }

    pub fn midpoint(&self) -> DesignVector {
        let mut v = [0.0; N_DESIGN_PARAMS];
        for (x, p) in v.iter_mut().zip(&self.params) {
            *x = 0.5 * (p.lo + p.hi);
        }
        DesignVector(v)
    }

    pub fn contains(&self, b: &DesignVector) -> bool {
        self.first_out_of_range(b).is_none()
    }

    fn first_out_of_range(&self, b: &DesignVector) -> Option<usize> {
        b.0.iter()
            .zip(&self.params)
            .position(|(&v, p)| !(v >= p.lo && v <= p.hi))
    }

    pub fn check(&self, b: &DesignVector) -> Result<()> {
        match self.first_out_of_range(b) {
            None => Ok(()),
            Some(i) => {
                let p = &self.params[i];
                Err(Error::InvalidArgument(format!(
                    "{} = {} outside [{}, {}]",
                    p.name, b.0[i], p.lo, p.hi
                )))
            }
        }
    }

    /// Scales each parameter onto `[0, 1]` by its range.
    pub fn normalize(&self, b: &DesignVector) -> Result<[f64; N_DESIGN_PARAMS]> {
        self.check(b)?;
        let mut out = [0.0; N_DESIGN_PARAMS];
        for ((o, &v), p) in out.iter_mut().zip(&b.0).zip(&self.params) {
            *o = (v - p.lo) / (p.hi - p.lo);
        }
        Ok(out)
    }

    pub fn designs_to_csv(&self, designs: &[DesignVector]) -> String {
        let mut s = self.names().collect::<Vec<_>>().join(",");
        s.push('\n');
        for d in designs {
            let row: Vec<String> = d.0.iter().map(|v| v.to_string()).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn designs_from_csv(&self, text: &str) -> Result<Vec<DesignVector>> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().unwrap_or("");
        let expected = self.names().collect::<Vec<_>>().join(",");
        if header.trim() != expected {
            return Err(Error::InvalidArgument("designs.csv header does not match the design space".into()));
        }
        lines
            .enumerate()
            .map(|(i, line)| {
                let vals: Vec<f64> = line
                    .split(',')
                    .map(|f| f.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::InvalidArgument(format!("designs.csv row {}: bad number", i + 1)))?;
                let arr: [f64; N_DESIGN_PARAMS] = vals.try_into().map_err(|_| {
                    Error::InvalidArgument(format!("designs.csv row {}: expected {N_DESIGN_PARAMS} values", i + 1))
                })?;
                let d = DesignVector(arr);
                self.check(&d)?;
                Ok(d)
            })
            .collect()
    }
}

/// Raw-unit building design, ordered as [`DesignSpace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignVector(pub [f64; N_DESIGN_PARAMS]);

impl DesignVector {
    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

pub fn normalize_design(space: &DesignSpace, b: &DesignVector) -> Result<[f64; N_DESIGN_PARAMS]> {
    space.normalize(b)
}

/// `n` Latin hypercube points in `[0, 1)^dims`, returned point-major.
///
/// For each dimension `d` an independent permutation assigns strata to
/// points, drawn from stream `d` of `seed`; each point sits uniformly within
/// its stratum.
pub fn lhs_unit(n: usize, dims: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("LHS needs at least one sample".into()));
    }
    let mut points = vec![vec![0.0; dims]; n];
    for d in 0..dims {
        let mut rng = SplitMix64::stream(seed, d as u64);
        let strata = rng.permutation(n);
        for (point, &s) in points.iter_mut().zip(&strata) {
            // Keep the draw strictly inside its stratum even after rounding.
            let u = (s as f64 + rng.next_f64()) / n as f64;
            point[d] = u.min(((s + 1) as f64 / n as f64).next_down());
        }
    }
    Ok(points)
}

pub fn lhs_sample(space: &DesignSpace, n: usize, seed: u64) -> Result<Vec<DesignVector>> {
    let unit = lhs_unit(n, N_DESIGN_PARAMS, rng::child_seed(seed, rng::tag("lhs")))?;
    Ok(unit
        .into_iter()
        .map(|u| {
            let mut v = [0.0; N_DESIGN_PARAMS];
            for ((x, &ui), p) in v.iter_mut().zip(&u).zip(space.params()) {
                *x = (p.lo + ui * (p.hi - p.lo)).clamp(p.lo, p.hi);
            }
            DesignVector(v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_points_one_per_quarter() {
        let pts = lhs_unit(4, 1, 11).unwrap();
        let mut xs: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        for (k, x) in xs.iter().enumerate() {
            assert!(*x >= k as f64 / 4.0 && *x < (k + 1) as f64 / 4.0, "{xs:?}");
        }
    }

    #[test]
    fn single_sample_in_range() {
        let space = DesignSpace::standard();
        let d = lhs_sample(&space, 1, 5).unwrap();
        assert_eq!(d.len(), 1);
        assert!(space.contains(&d[0]));
    }

    #[test]
    fn zero_samples_rejected() {
        assert!(matches!(
            lhs_sample(&DesignSpace::standard(), 0, 1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn deterministic() {
        let s = DesignSpace::standard();
        assert_eq!(lhs_sample(&s, 50, 9).unwrap(), lhs_sample(&s, 50, 9).unwrap());
        assert_ne!(lhs_sample(&s, 50, 9).unwrap(), lhs_sample(&s, 50, 10).unwrap());
    }

    #[test]
    fn normalization_examples() {
        let s = DesignSpace::standard();
        let mut b = s.midpoint();
        b.0[param::WALL_INSULATION] = 0.02;
        assert_eq!(s.normalize(&b).unwrap()[0], 0.0);
        b.0[param::WALL_INSULATION] = 0.10;
        assert_eq!(s.normalize(&b).unwrap()[0], 1.0);
        assert_eq!(s.normalize(&b).unwrap()[param::NORTH_AXIS], 0.5);
        b.0[param::COOLING_SETPOINT] = 23.0;
        assert!(matches!(s.normalize(&b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn csv_round_trip() {
        let s = DesignSpace::standard();
        let d = lhs_sample(&s, 7, 3).unwrap();
        assert_eq!(s.designs_from_csv(&s.designs_to_csv(&d)).unwrap(), d);
    }

    proptest! {
        #[test]
        fn one_sample_per_stratum(n in 1usize..1000, seed in any::<u64>()) {
            let pts = lhs_unit(n, 3, seed).unwrap();
            for d in 0..3 {
                let mut seen = vec![false; n];
                for p in &pts {
                    let k = (p[d] * n as f64).floor() as usize;
                    prop_assert!(k < n);
                    prop_assert!(!seen[k]);
                    seen[k] = true;
                }
            }
        }

        #[test]
        fn normalized_samples_in_unit_cube(n in 1usize..60, seed in any::<u64>()) {
            let s = DesignSpace::standard();
            for d in lhs_sample(&s, n, seed).unwrap() {
                let u = s.normalize(&d).unwrap();
                prop_assert!(u.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
    }
}
