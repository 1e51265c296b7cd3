//! Gridded annual-average concentration field.
//!
//! Two on-disk forms are understood: ESRI ASCII Grid (`.asc`, optionally
//! gzipped) and a headered `x,y,value` CSV of cell centres.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::geometry::Rect;
use crate::io::open_maybe_gz;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("i/o error reading grid: {0}")]
    Io(#[from] std::io::Error),
    #[error("grid parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid grid: {0}")]
    Invalid(String),
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> RasterError {
    RasterError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

/// Regular raster of concentrations in µg/m³.
///
/// Row 0 is the northernmost row, matching the ESRI ASCII layout; the
/// origin is the lower-left corner of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationGrid {
    origin_x: f64,
    origin_y: f64,
    cell_width: f64,
    cell_height: f64,
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl ConcentrationGrid {
    /// `values` is row-major, `None` marking nodata cells.
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_width: f64,
        cell_height: f64,
        n_rows: usize,
        n_cols: usize,
        values: Vec<Option<f64>>,
    ) -> Result<Self, RasterError> {
        if !(cell_width > 0.0 && cell_height > 0.0) || !cell_width.is_finite() || !cell_height.is_finite() {
            return Err(RasterError::Invalid("cell size must be positive".into()));
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(RasterError::Invalid("origin must be finite".into()));
        }
        if n_rows == 0 || n_cols == 0 {
            return Err(RasterError::Invalid("grid must have at least one row and column".into()));
        }
        if values.len() != n_rows * n_cols {
            return Err(RasterError::Invalid(format!(
                "expected {} values for {n_rows}x{n_cols}, got {}",
                n_rows * n_cols,
                values.len()
            )));
        }
        let mut vals = Vec::with_capacity(values.len());
        let mut valid = Vec::with_capacity(values.len());
        for (i, v) in values.into_iter().enumerate() {
            match v {
                Some(x) if !x.is_finite() || x < 0.0 => {
                    return Err(RasterError::Invalid(format!(
                        "cell {} (row {}, col {}) has value {x}; concentrations must be finite and non-negative",
                        i,
                        i / n_cols,
                        i % n_cols
                    )))
                }
                Some(x) => {
                    vals.push(x);
                    valid.push(true);
                }
                None => {
                    vals.push(0.0);
                    valid.push(false);
                }
            }
        }
        Ok(ConcentrationGrid {
            origin_x,
            origin_y,
            cell_width,
            cell_height,
            n_rows,
            n_cols,
            values: vals,
            valid,
        })
    }

    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }

    pub fn cell_size(&self) -> (f64, f64) {
        (self.cell_width, self.cell_height)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.n_cols + col;
        self.valid[i].then(|| self.values[i])
    }

    /// Planar rectangle of a cell.
    pub fn cell_rect(&self, row: usize, col: usize) -> Rect {
        let min_x = self.origin_x + col as f64 * self.cell_width;
        let min_y = self.origin_y + (self.n_rows - 1 - row) as f64 * self.cell_height;
        Rect::new(min_x, min_y, min_x + self.cell_width, min_y + self.cell_height)
    }

    pub fn extent(&self) -> Rect {
        Rect::new(
            self.origin_x,
            self.origin_y,
            self.origin_x + self.n_cols as f64 * self.cell_width,
            self.origin_y + self.n_rows as f64 * self.cell_height,
        )
    }

    /// Cell containing a planar point, if the point is inside the grid.
    /// Points on an interior edge belong to the cell to the east/north.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let u = (x - self.origin_x) / self.cell_width;
        let v = (y - self.origin_y) / self.cell_height;
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (c, rv) = (u.floor() as usize, v.floor() as usize);
        if c >= self.n_cols || rv >= self.n_rows {
            return None;
        }
        Some((self.n_rows - 1 - rv, c))
    }

    /// Same grid with every coordinate shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        ConcentrationGrid {
            origin_x: self.origin_x + dx,
            origin_y: self.origin_y + dy,
            ..self.clone()
        }
    }

    /// Loads `.asc` / `.asc.gz` as ESRI ASCII and `.csv` / `.csv.gz` as x,y,value.
    pub fn load(path: &Path) -> Result<Self, RasterError> {
        let name = path.to_string_lossy().to_ascii_lowercase();
        let reader = open_maybe_gz(path)?;
        if name.ends_with(".csv") || name.ends_with(".csv.gz") {
            Self::read_xyz_csv(reader)
        } else {
            Self::read_esri_ascii(reader)
        }
    }

    pub fn read_esri_ascii<R: BufRead>(mut reader: R) -> Result<Self, RasterError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        let mut tokens = text.split_whitespace().peekable();

        let mut ncols = None;
        let mut nrows = None;
        let mut x = None;
        let mut y = None;
        let mut centre_x = false;
        let mut centre_y = false;
        let mut cellsize = None;
        let mut dx = None;
        let mut dy = None;
        let mut nodata: Option<f64> = None;

        while let Some(tok) = tokens.peek() {
            if !tok.starts_with(|c: char| c.is_ascii_alphabetic()) {
                break;
            }
            let key = tokens.next().unwrap().to_ascii_lowercase();
            let raw = tokens
                .next()
                .ok_or_else(|| parse_err("header", format!("missing value for {key}")))?;
            let num = |s: &str| -> Result<f64, RasterError> {
                s.parse::<f64>()
                    .map_err(|_| parse_err("header", format!("bad number {s:?} for {key}")))
            };
            match key.as_str() {
                "ncols" => ncols = Some(num(raw)? as usize),
                "nrows" => nrows = Some(num(raw)? as usize),
                "xllcorner" => x = Some(num(raw)?),
                "yllcorner" => y = Some(num(raw)?),
                "xllcenter" => {
                    x = Some(num(raw)?);
                    centre_x = true;
                }
                "yllcenter" => {
                    y = Some(num(raw)?);
                    centre_y = true;
                }
                "cellsize" => cellsize = Some(num(raw)?),
                "dx" => dx = Some(num(raw)?),
                "dy" => dy = Some(num(raw)?),
                "nodata_value" => nodata = Some(num(raw)?),
                other => return Err(parse_err("header", format!("unknown keyword {other:?}"))),
            }
        }

        let missing = |k: &str| parse_err("header", format!("missing {k}"));
        let ncols = ncols.ok_or_else(|| missing("ncols"))?;
        let nrows = nrows.ok_or_else(|| missing("nrows"))?;
        let w = dx.or(cellsize).ok_or_else(|| missing("cellsize"))?;
        let h = dy.or(cellsize).ok_or_else(|| missing("cellsize"))?;
        let mut ox = x.ok_or_else(|| missing("xllcorner"))?;
        let mut oy = y.ok_or_else(|| missing("yllcorner"))?;
        if centre_x {
            ox -= w / 2.0;
        }
        if centre_y {
            oy -= h / 2.0;
        }

        let mut values = Vec::with_capacity(ncols * nrows);
        for (i, tok) in tokens.enumerate() {
            let v: f64 = tok.parse().map_err(|_| {
                parse_err(
                    format!("cell {i} (row {}, col {})", i / ncols.max(1), i % ncols.max(1)),
                    format!("bad number {tok:?}"),
                )
            })?;
            let is_nodata = nodata.is_some_and(|nd| v == nd) || v.is_nan();
            values.push((!is_nodata).then_some(v));
        }
        Self::new(ox, oy, w, h, nrows, ncols, values)
    }

    /// Reads a headered `x,y,value` CSV of cell centres on a regular lattice.
    /// Lattice points absent from the file, and empty or `NA` values, are nodata.
    pub fn read_xyz_csv<R: Read>(reader: R) -> Result<Self, RasterError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| parse_err("header", e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| parse_err("header", format!("missing column {name:?}")))
        };
        let (ix, iy, iv) = (col("x")?, col("y")?, col("value")?);

        let mut pts = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let line = format!("line {}", n + 2);
            let rec = rec.map_err(|e| parse_err(line.clone(), e.to_string()))?;
            let get = |i: usize| rec.get(i).unwrap_or("");
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| parse_err(line.clone(), format!("bad number {s:?}")))
            };
            let x = num(get(ix))?;
            let y = num(get(iy))?;
            let raw = get(iv);
            let v = if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                None
            } else {
                Some(num(raw)?)
            };
            pts.push((x, y, v));
        }
        if pts.is_empty() {
            return Err(RasterError::Invalid("empty x,y,value grid".into()));
        }

        let lattice = |mut uniq: Vec<f64>, axis: &str| -> Result<(f64, f64, usize), RasterError> {
            uniq.sort_by(f64::total_cmp);
            uniq.dedup();
            if uniq.len() == 1 {
                return Err(RasterError::Invalid(format!(
                    "cannot infer {axis} spacing from a single column of points"
                )));
            }
            let step = uniq.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            let first = uniq[0];
            let n = ((uniq[uniq.len() - 1] - first) / step).round() as usize + 1;
            Ok((first, step, n))
        };
        let (x0, w, ncols) = lattice(pts.iter().map(|p| p.0).collect(), "x")?;
        let (y0, h, nrows) = lattice(pts.iter().map(|p| p.1).collect(), "y")?;

        let mut values: Vec<Option<f64>> = vec![None; nrows * ncols];
        for &(x, y, v) in &pts {
            let fc = (x - x0) / w;
            let fr = (y - y0) / h;
            if (fc - fc.round()).abs() > 1e-6 || (fr - fr.round()).abs() > 1e-6 {
                return Err(RasterError::Invalid(format!(
                    "point ({x}, {y}) is not on the regular lattice"
                )));
            }
            let c = fc.round() as usize;
            let r = nrows - 1 - fr.round() as usize;
            values[r * ncols + c] = v;
        }
        Self::new(x0 - w / 2.0, y0 - h / 2.0, w, h, nrows, ncols, values)
    }

    /// Writes the grid as ESRI ASCII with a `-9999` nodata sentinel.
    pub fn write_esri_ascii<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "ncols {}", self.n_cols)?;
        writeln!(out, "nrows {}", self.n_rows)?;
        writeln!(out, "xllcorner {}", self.origin_x)?;
        writeln!(out, "yllcorner {}", self.origin_y)?;
        if self.cell_width == self.cell_height {
            writeln!(out, "cellsize {}", self.cell_width)?;
        } else {
            writeln!(out, "dx {}", self.cell_width)?;
            writeln!(out, "dy {}", self.cell_height)?;
        }
        writeln!(out, "NODATA_value -9999")?;
        for r in 0..self.n_rows {
            let row: Vec<String> = (0..self.n_cols)
                .map(|c| match self.value(r, c) {
                    Some(v) => v.to_string(),
                    None => "-9999".to_string(),
                })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ASC: &str = "ncols 3\nnrows 2\nxllcorner 10\nyllcorner 20\ncellsize 2\nNODATA_value -9999\n1 2 3\n4 -9999 6\n";

    #[test]
    fn reads_esri_ascii() {
        let g = ConcentrationGrid::read_esri_ascii(ASC.as_bytes()).unwrap();
        assert_eq!((g.n_rows(), g.n_cols()), (2, 3));
        assert_eq!(g.value(0, 0), Some(1.0));
        assert_eq!(g.value(1, 1), None);
        // row 0 is the top row
        assert_eq!(g.cell_rect(0, 0), Rect::new(10., 22., 12., 24.));
        assert_eq!(g.cell_rect(1, 2), Rect::new(14., 20., 16., 22.));
        assert_eq!(g.locate(15.0, 21.0), Some((1, 2)));
        assert_eq!(g.locate(9.0, 21.0), None);
    }

    #[test]
    fn header_is_case_insensitive_and_accepts_centres() {
        let text = "NCOLS 1\nNROWS 1\nXLLCENTER 1\nYLLCENTER 1\nCELLSIZE 2\n5\n";
        let g = ConcentrationGrid::read_esri_ascii(text.as_bytes()).unwrap();
        assert_eq!(g.origin(), (0.0, 0.0));
        assert_eq!(g.value(0, 0), Some(5.0));
    }

    #[test]
    fn wrong_value_count_is_invalid() {
        let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2 3\n";
        assert!(matches!(
            ConcentrationGrid::read_esri_ascii(text.as_bytes()),
            Err(RasterError::Invalid(_))
        ));
    }

    #[test]
    fn negative_concentration_is_invalid() {
        let text = "ncols 1\nnrows 1\nxllcorner 0\nyllcorner 0\ncellsize 1\n-2\n";
        assert!(ConcentrationGrid::read_esri_ascii(text.as_bytes()).is_err());
    }

    #[test]
    fn ascii_round_trip() {
        let g = ConcentrationGrid::read_esri_ascii(ASC.as_bytes()).unwrap();
        let mut buf = Vec::new();
        g.write_esri_ascii(&mut buf).unwrap();
        assert_eq!(ConcentrationGrid::read_esri_ascii(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn reads_xyz_csv_with_gaps() {
        let text = "x,y,value\n11,23,1\n13,23,2\n15,23,3\n11,21,4\n15,21,6\n";
        let g = ConcentrationGrid::read_xyz_csv(text.as_bytes()).unwrap();
        let a = ConcentrationGrid::read_esri_ascii(ASC.as_bytes()).unwrap();
        assert_eq!(g, a);
    }

    #[test]
    fn xyz_off_lattice_is_invalid() {
        let text = "x,y,value\n0,0,1\n1,0,1\n1.7,1,1\n0,1,1\n";
        assert!(ConcentrationGrid::read_xyz_csv(text.as_bytes()).is_err());
    }
}
