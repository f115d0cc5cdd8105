//! EnergyPlus weather (EPW) ingestion.
//!
//! Only four columns are read from each data row (0-based): 6 dry-bulb
//! temperature, 8 relative humidity, 13 global horizontal radiation and
//! 21 wind speed. The location id is the second field of the `LOCATION`
//! header line.

use crate::weather::{HourRecord, HourlyWeatherYear, HOURS_PER_YEAR};
use crate::{Error, Result};

pub const HEADER_LINES: usize = 8;
pub const MIN_FIELDS: usize = 35;

const DRYBULB: usize = 6;
const REL_HUMIDITY: usize = 8;
const GHI: usize = 13;
const WIND: usize = 21;

/// Parses a full EPW file. Data rows are numbered from 0 in errors.
pub fn parse_epw(raw: &[u8]) -> Result<HourlyWeatherYear> {
    let text = String::from_utf8_lossy(raw);
    let mut lines = text.lines();

    let location = lines
        .next()
        .ok_or_else(|| Error::malformed(0, 0, "empty EPW input"))?;
    let location_id = location
        .split(',')
        .nth(1)
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::malformed(0, 1, "LOCATION header has no name field"))?;
    for i in 1..HEADER_LINES {
        if lines.next().is_none() {
            return Err(Error::malformed(0, 0, format!("truncated header at line {}", i + 1)));
        }
    }

    let mut hours = Vec::with_capacity(HOURS_PER_YEAR);
    for (row, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < MIN_FIELDS {
            return Err(Error::malformed(
                row,
                fields.len(),
                format!("expected at least {MIN_FIELDS} fields, found {}", fields.len()),
            ));
        }
        let num = |col: usize| -> Result<f64> {
            let f = fields[col].trim();
            f.parse::<f64>()
                .map_err(|_| Error::malformed(row, col, format!("not a number: {f:?}")))
        };
        let rec = HourRecord {
            drybulb_c: num(DRYBULB)?,
            rel_humidity_pct: num(REL_HUMIDITY)?,
            ghi_whm2: num(GHI)?,
            wind_ms: num(WIND)?,
        };
        // Report range violations with the EPW column rather than the feature slot.
        if !(0.0..=100.0).contains(&rec.rel_humidity_pct) {
            return Err(Error::malformed(
                row,
                REL_HUMIDITY,
                format!("relative humidity {} outside [0, 100]", rec.rel_humidity_pct),
            ));
        }
        if rec.ghi_whm2 < 0.0 {
            return Err(Error::malformed(row, GHI, "negative irradiance"));
        }
        if rec.wind_ms < 0.0 {
            return Err(Error::malformed(row, WIND, "negative wind speed"));
        }
        hours.push(rec);
    }
    if hours.len() != HOURS_PER_YEAR {
        return Err(Error::malformed(
            hours.len(),
            0,
            format!("expected {HOURS_PER_YEAR} data rows, found {}", hours.len()),
        ));
    }
    HourlyWeatherYear::new(location_id, hours)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Builds a syntactically valid EPW with `rows` data rows.
    pub fn fixture(rows: usize, edit: impl Fn(usize, &mut Vec<String>)) -> String {
        let mut s = String::new();
        s.push_str("LOCATION,Testville,ON,CAN,CWEC,716240,43.67,-79.63,-5.0,173.0\n");
        for h in [
            "DESIGN CONDITIONS,0",
            "TYPICAL/EXTREME PERIODS,0",
            "GROUND TEMPERATURES,0",
            "HOLIDAYS/DAYLIGHT SAVINGS,No,0,0,0",
            "COMMENTS 1,fixture",
            "COMMENTS 2,fixture",
            "DATA PERIODS,1,1,Data,Sunday, 1/ 1,12/31",
        ] {
            s.push_str(h);
            s.push('\n');
        }
        for r in 0..rows {
            let mut f: Vec<String> = (0..35).map(|_| "0".to_string()).collect();
            f[0] = "2001".into();
            f[1] = ((r / 744) + 1).to_string();
            f[3] = ((r % 24) + 1).to_string();
            f[6] = format!("{:.1}", (r % 30) as f64 - 10.0);
            f[8] = "65".into();
            f[13] = if (6..18).contains(&(r % 24)) { "300".into() } else { "0".into() };
            f[21] = "3.6".into();
            edit(r, &mut f);
            s.push_str(&f.join(","));
            s.push('\n');
        }
        s
    }

    #[test]
    fn extracts_fields() {
        let text = fixture(8760, |r, f| {
            if r == 0 {
                f[6] = "-5.0".into();
            }
        });
        let y = parse_epw(text.as_bytes()).unwrap();
        assert_eq!(y.location_id(), "Testville");
        assert_eq!(y.hours()[0].drybulb_c, -5.0);
        assert_eq!(y.hours()[0].rel_humidity_pct, 65.0);
        assert_eq!(y.hours()[7].ghi_whm2, 300.0);
        assert_eq!(y.hours()[7].wind_ms, 3.6);
    }

    #[test]
    fn short_file_rejected() {
        let text = fixture(8759, |_, _| {});
        assert!(matches!(
            parse_epw(text.as_bytes()),
            Err(Error::MalformedWeather { row: 8759, .. })
        ));
    }

    #[test]
    fn humidity_out_of_range_rejected() {
        let text = fixture(8760, |r, f| {
            if r == 12 {
                f[8] = "101".into();
            }
        });
        match parse_epw(text.as_bytes()) {
            Err(Error::MalformedWeather { row, column, .. }) => assert_eq!((row, column), (12, 8)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unparseable_field_reports_position() {
        let text = fixture(8760, |r, f| {
            if r == 40 {
                f[21] = "fast".into();
            }
        });
        match parse_epw(text.as_bytes()) {
            Err(Error::MalformedWeather { row, column, .. }) => assert_eq!((row, column), (40, 21)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_fields_rejected() {
        let text = fixture(8760, |r, f| {
            if r == 3 {
                f.truncate(30);
            }
        });
        assert!(matches!(
            parse_epw(text.as_bytes()),
            Err(Error::MalformedWeather { row: 3, .. })
        ));
    }
}
