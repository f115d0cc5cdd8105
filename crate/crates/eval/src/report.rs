//! The evaluation matrix and its CSV / SVG heatmap renderings.

use std::fmt::Write;
use std::path::Path;

use surro_core::fsio;

use crate::evaluate::CellMetrics;
use crate::{Error, Result};

pub const CSV_HEADER: &str = "train_config,test_loc,weekly_smape,annual_smape,rmse,pearson";
const FAILED: &str = "failed";

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Ok(CellMetrics),
    Failed(String),
}

impl Cell {
    pub fn metrics(&self) -> Option<&CellMetrics> {
        match self {
            Cell::Ok(m) => Some(m),
            Cell::Failed(_) => None,
        }
    }
}

/// Rows are training configurations, columns test locations.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationMatrix {
    rows: Vec<String>,
    cols: Vec<String>,
    cells: Vec<Cell>,
}

impl EvaluationMatrix {
    pub fn new(rows: Vec<String>, cols: Vec<String>, cells: Vec<Cell>) -> Result<Self> {
        if cells.len() != rows.len() * cols.len() {
            return Err(Error::InvalidArgument(format!(
                "{} cells for a {}×{} matrix",
                cells.len(),
                rows.len(),
                cols.len()
            )));
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn rows(&self) -> &[String] {
        &self.rows
    }

    pub fn cols(&self) -> &[String] {
        &self.cols
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn get(&self, r: usize, c: usize) -> &Cell {
        &self.cells[r * self.cols.len() + c]
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for (r, row) in self.rows.iter().enumerate() {
            for (c, col) in self.cols.iter().enumerate() {
                match self.get(r, c) {
                    Cell::Ok(m) => {
                        let _ = writeln!(s, "{row},{col},{},{},{},{}", m.weekly_smape, m.annual_smape, m.rmse, m.pearson);
                    }
                    Cell::Failed(_) => {
                        let _ = writeln!(s, "{row},{col},{FAILED},{FAILED},{FAILED},{FAILED}");
                    }
                }
            }
        }
        s
    }

    /// Parses [`to_csv`](Self::to_csv) output. Row and column order follow
    /// first appearance; every (row, column) pair must appear exactly once.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            Some(h) => return Err(Error::InvalidArgument(format!("unexpected CSV header {h:?}"))),
            None => return Err(Error::InvalidArgument("empty matrix CSV".into())),
        }
        let mut rows: Vec<String> = Vec::new();
        let mut cols: Vec<String> = Vec::new();
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 6 {
                return Err(Error::InvalidArgument(format!("CSV line {}: expected 6 fields", i + 2)));
            }
            let cell = if f[2..].iter().all(|v| *v == FAILED) {
                Cell::Failed("failed".into())
            } else {
                let num = |v: &str| {
                    v.parse::<f64>().map_err(|_| Error::InvalidArgument(format!("CSV line {}: bad number {v:?}", i + 2)))
                };
                Cell::Ok(CellMetrics {
                    weekly_smape: num(f[2])?,
                    annual_smape: num(f[3])?,
                    rmse: num(f[4])?,
                    pearson: num(f[5])?,
                })
            };
            if !rows.iter().any(|r| r == f[0]) {
                rows.push(f[0].to_string());
            }
            if !cols.iter().any(|c| c == f[1]) {
                cols.push(f[1].to_string());
            }
            entries.push((f[0].to_string(), f[1].to_string(), cell));
        }
        if entries.is_empty() {
            return Err(Error::InvalidArgument("matrix CSV has no cells".into()));
        }
        let mut cells: Vec<Option<Cell>> = vec![None; rows.len() * cols.len()];
        for (r, c, cell) in entries {
            let ri = rows.iter().position(|x| *x == r).expect("row recorded");
            let ci = cols.iter().position(|x| *x == c).expect("column recorded");
            let slot = &mut cells[ri * cols.len() + ci];
            if slot.is_some() {
                return Err(Error::InvalidArgument(format!("duplicate cell {r},{c}")));
            }
            *slot = Some(cell);
        }
        let cells = cells
            .into_iter()
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidArgument("matrix CSV is missing cells".into()))?;
        Self::new(rows, cols, cells)
    }

    /// Heatmap of weekly SMAPE (annual in parentheses), coloured from green
    /// at 0 % to red at the matrix maximum; failed cells are grey.
    pub fn to_svg(&self) -> Result<String> {
        if self.is_empty() {
            return Err(Error::InvalidArgument("cannot render an empty matrix".into()));
        }
        let max = self
            .cells
            .iter()
            .filter_map(|c| c.metrics().map(|m| m.weekly_smape))
            .fold(0.0, f64::max);
        let (cw, ch, left, top) = (110.0, 36.0, 140.0, 50.0);
        let width = left + cw * self.cols.len() as f64 + 10.0;
        let height = top + ch * self.rows.len() as f64 + 10.0;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        let _ = writeln!(s, "<text x=\"4\" y=\"16\">weekly SMAPE % (annual)</text>");
        for (c, col) in self.cols.iter().enumerate() {
            let x = left + cw * (c as f64 + 0.5);
            let _ = writeln!(s, "<text x=\"{x}\" y=\"{}\" text-anchor=\"middle\">{}</text>", top - 8.0, escape(col));
        }
        for (r, row) in self.rows.iter().enumerate() {
            let y = top + ch * r as f64;
            let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>", left - 6.0, y + ch / 2.0 + 4.0, escape(row));
            for c in 0..self.cols.len() {
                let x = left + cw * c as f64;
                let (fill, label) = match self.get(r, c) {
                    Cell::Ok(m) => (heat_color(m.weekly_smape, max), format!("{:.2} ({:.2})", m.weekly_smape, m.annual_smape)),
                    Cell::Failed(_) => ("#bdbdbd".to_string(), FAILED.to_string()),
                };
                let _ = writeln!(
                    s,
                    "<rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"{fill}\" stroke=\"#ffffff\"/>"
                );
                let _ = writeln!(
                    s,
                    "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>",
                    x + cw / 2.0,
                    y + ch / 2.0 + 4.0
                );
            }
        }
        s.push_str("</svg>\n");
        Ok(s)
    }

    /// Writes `matrix.csv` and `heatmap.svg` into `dir`, each atomically.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let svg = self.to_svg()?;
        fsio::create_dir(dir)?;
        fsio::write_atomic(&dir.join("matrix.csv"), self.to_csv().as_bytes())?;
        fsio::write_atomic(&dir.join("heatmap.svg"), svg.as_bytes())?;
        Ok(())
    }
}

const GREEN: (u8, u8, u8) = (0x1a, 0x98, 0x50);
const RED: (u8, u8, u8) = (0xd7, 0x30, 0x27);

/// Linear green (#1a9850) → red (#d73027) ramp over `[0, max]`.
pub fn heat_color(value: f64, max: f64) -> String {
    let t = if max > 0.0 { (value / max).clamp(0.0, 1.0) } else { 0.0 };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(GREEN.0, RED.0), mix(GREEN.1, RED.1), mix(GREEN.2, RED.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(w: f64) -> Cell {
        Cell::Ok(CellMetrics { weekly_smape: w, annual_smape: w / 2.0, rmse: 1.0, pearson: 0.9 })
    }

    #[test]
    fn color_endpoints() {
        assert_eq!(heat_color(0.0, 20.0), "#1a9850");
        assert_eq!(heat_color(20.0, 20.0), "#d73027");
        assert_eq!(heat_color(0.0, 0.0), "#1a9850");
    }

    #[test]
    fn csv_round_trip() {
        let mx = EvaluationMatrix::new(
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into(), "z".into()],
            vec![m(1.0), m(2.5), Cell::Failed("boom".into()), m(0.0), m(7.25), m(1.0 / 3.0)],
        )
        .unwrap();
        let csv = mx.to_csv();
        assert_eq!(csv.lines().count(), 1 + 6);
        let back = EvaluationMatrix::from_csv(&csv).unwrap();
        assert_eq!(back.to_csv(), csv);
        let svg = back.to_svg().unwrap();
        assert!(svg.contains("#1a9850") && svg.contains("#d73027") && svg.contains("#bdbdbd"));
        assert!(svg.contains("7.25 (3.62)"));
    }

    #[test]
    fn empty_inputs_rejected() {
        assert!(EvaluationMatrix::from_csv("").is_err());
        assert!(EvaluationMatrix::from_csv(&format!("{CSV_HEADER}\n")).is_err());
        assert!(EvaluationMatrix::new(vec![], vec![], vec![]).unwrap().to_svg().is_err());
    }
}
