//! Tract-level concentration surface from a raster, and urban/rural
//! classification of tracts.
//!
//! Each cell's weight in a tract mean is the planar area of
//! `cell ∩ tract`. Clipping runs in grid-index space (cells become unit
//! squares), so results do not drift when grid and tracts are shifted
//! together.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geoid::TractId;
use crate::geometry::{
    polygon_rect_overlap, ring_triangle_overlap, triangulate, ClipScratch, GeometryError, Point,
    Polygon, Rect, Triangle,
};
use crate::numeric::pairwise_sum;
use crate::raster::ConcentrationGrid;

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("duplicate tract GEOID {0}")]
    DuplicateGeoid(TractId),
    #[error("no tracts supplied")]
    NoTracts,
    #[error("tract {geoid}: {source}")]
    Geometry {
        geoid: TractId,
        #[source]
        source: GeometryError,
    },
    #[error("surface invariant violated: {0}")]
    Invalid(String),
    #[error("surface CSV: {0}")]
    Csv(String),
}

/// A census tract's boundary: one or more polygons, possibly with holes.
#[derive(Debug, Clone, PartialEq)]
pub struct TractGeometry {
    geoid: TractId,
    polygons: Vec<Polygon>,
}

impl TractGeometry {
    pub fn new(geoid: TractId, polygons: Vec<Polygon>) -> Self {
        TractGeometry { geoid, polygons }
    }

    pub fn geoid(&self) -> TractId {
        self.geoid
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    pub fn area(&self) -> f64 {
        self.polygons.iter().map(Polygon::area).sum()
    }

    pub fn bbox(&self) -> Option<Rect> {
        self.polygons.iter().map(Polygon::bbox).reduce(|a, b| a.union(&b))
    }

    pub fn contains(&self, p: Point) -> bool {
        self.polygons.iter().any(|poly| poly.contains(p))
    }
}

/// Positive-area overlap of a tract with one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellWeight {
    pub row: usize,
    pub col: usize,
    /// Overlap area in planar units².
    pub area: f64,
}

/// Every cell (including nodata cells) with positive overlap, in row-major order.
pub fn cell_weights(grid: &ConcentrationGrid, tract: &TractGeometry) -> Vec<CellWeight> {
    let (ox, oy) = grid.origin();
    let (cw, ch) = grid.cell_size();
    let local: Vec<Polygon> = tract
        .polygons()
        .iter()
        .map(|p| p.to_local(ox, oy, cw, ch))
        .collect();
    let Some(bb) = local.iter().map(Polygon::bbox).reduce(|a, b| a.union(&b)) else {
        return Vec::new();
    };
    let (n_rows, n_cols) = (grid.n_rows(), grid.n_cols());
    let clamp = |v: f64, hi: usize| v.max(0.0).min(hi as f64) as usize;
    let (c0, c1) = (clamp(bb.min_x.floor(), n_cols), clamp(bb.max_x.ceil(), n_cols));
    let (v0, v1) = (clamp(bb.min_y.floor(), n_rows), clamp(bb.max_y.ceil(), n_rows));

    let mut scratch = ClipScratch::default();
    let mut out = Vec::new();
    // rows north to south, matching the raster's storage order
    for vr in (v0..v1).rev() {
        let row = n_rows - 1 - vr;
        for col in c0..c1 {
            let cell = Rect::new(col as f64, vr as f64, col as f64 + 1.0, vr as f64 + 1.0);
            let a: f64 = local
                .iter()
                .map(|p| polygon_rect_overlap(p, &cell, &mut scratch))
                .sum();
            if a > 0.0 {
                out.push(CellWeight {
                    row,
                    col,
                    area: a * cw * ch,
                });
            }
        }
    }
    out
}

/// Coverage-weighted mean of the non-nodata cells under a tract, or `None`
/// when the tract has no valid coverage.
pub fn zonal_weighted_mean(grid: &ConcentrationGrid, tract: &TractGeometry) -> Option<f64> {
    let mut weighted = Vec::new();
    let mut areas = Vec::new();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in cell_weights(grid, tract) {
        if let Some(v) = grid.value(w.row, w.col) {
            weighted.push(v * w.area);
            areas.push(w.area);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let total = pairwise_sum(&areas);
    if !(total > 0.0) {
        return None;
    }
    // a convex combination can only leave [lo, hi] through rounding
    Some((pairwise_sum(&weighted) / total).clamp(lo, hi))
}

/// Per-tract concentrations for one year; tracts without valid coverage are
/// listed in `excluded`.
#[derive(Debug, Clone, PartialEq)]
pub struct TractSurface {
    year: i32,
    entries: BTreeMap<TractId, f64>,
    excluded: Vec<TractId>,
}

impl TractSurface {
    pub fn new(
        year: i32,
        entries: BTreeMap<TractId, f64>,
        excluded: Vec<TractId>,
    ) -> Result<Self, SurfaceError> {
        if let Some((g, v)) = entries.iter().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(SurfaceError::Invalid(format!("tract {g} has concentration {v}")));
        }
        let mut excluded = excluded;
        excluded.sort();
        excluded.dedup();
        if let Some(g) = excluded.iter().find(|g| entries.contains_key(g)) {
            return Err(SurfaceError::Invalid(format!(
                "tract {g} is both excluded and present"
            )));
        }
        Ok(TractSurface {
            year,
            entries,
            excluded,
        })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn get(&self, geoid: &TractId) -> Option<f64> {
        self.entries.get(geoid).copied()
    }

    pub fn entries(&self) -> &BTreeMap<TractId, f64> {
        &self.entries
    }

    pub fn excluded(&self) -> &[TractId] {
        &self.excluded
    }

    /// Writes `geoid,year,pm25` rows in ascending GEOID order.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["geoid", "year", "pm25"])?;
        for (g, v) in &self.entries {
            w.write_record([g.as_str(), &self.year.to_string(), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `geoid,year,pm25` rows, one surface per year present.
    pub fn read_csv<R: Read>(input: R) -> Result<BTreeMap<i32, TractSurface>, SurfaceError> {
        #[derive(Deserialize)]
        struct Row {
            geoid: TractId,
            year: i32,
            pm25: f64,
        }
        let mut by_year: BTreeMap<i32, BTreeMap<TractId, f64>> = BTreeMap::new();
        for rec in csv::Reader::from_reader(input).deserialize::<Row>() {
            let row = rec.map_err(|e| SurfaceError::Csv(e.to_string()))?;
            if by_year.entry(row.year).or_default().insert(row.geoid, row.pm25).is_some() {
                return Err(SurfaceError::DuplicateGeoid(row.geoid));
            }
        }
        by_year
            .into_iter()
            .map(|(y, e)| Ok((y, TractSurface::new(y, e, Vec::new())?)))
            .collect()
    }
}

/// Evaluates every tract against the grid (in parallel) and merges the
/// results in ascending GEOID order.
pub fn build_tract_surface(
    grid: &ConcentrationGrid,
    tracts: &[TractGeometry],
    year: i32,
) -> Result<TractSurface, SurfaceError> {
    if tracts.is_empty() {
        return Err(SurfaceError::NoTracts);
    }
    let mut seen = BTreeSet::new();
    for t in tracts {
        if !seen.insert(t.geoid()) {
            return Err(SurfaceError::DuplicateGeoid(t.geoid()));
        }
    }
    let results: Vec<(TractId, Option<f64>)> = tracts
        .par_iter()
        .map(|t| (t.geoid(), zonal_weighted_mean(grid, t)))
        .collect();

    let mut entries = BTreeMap::new();
    let mut excluded = Vec::new();
    for (g, v) in results {
        match v {
            Some(v) => {
                entries.insert(g, v);
            }
            None => excluded.push(g),
        }
    }
    if !excluded.is_empty() {
        tracing::warn!(
            year,
            count = excluded.len(),
            "tracts without valid grid coverage excluded from the surface"
        );
    }
    TractSurface::new(year, entries, excluded)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UrbanClass {
    Urban,
    Rural,
}

impl UrbanClass {
    pub fn as_str(self) -> &'static str {
        match self {
            UrbanClass::Urban => "urban",
            UrbanClass::Rural => "rural",
        }
    }
}

struct UrbanPiece {
    sign: f64,
    bbox: Rect,
    triangles: Vec<Triangle>,
}

/// Urban-area polygons, triangulated once so that arbitrary (concave) tract
/// rings can be clipped against convex pieces. Polygons are assumed not to
/// overlap one another, as with Census urban-area boundaries.
pub struct UrbanAreas {
    polygons: Vec<Polygon>,
    pieces: Vec<UrbanPiece>,
}

impl UrbanAreas {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        let pieces = polygons
            .iter()
            .flat_map(|p| p.signed_rings())
            .map(|(sign, ring)| UrbanPiece {
                sign,
                bbox: ring.bbox(),
                triangles: triangulate(ring),
            })
            .collect();
        UrbanAreas { polygons, pieces }
    }

    pub fn polygons(&self) -> &[Polygon] {
        &self.polygons
    }

    /// Area of `polygon ∩ urban areas`.
    pub fn overlap_area(&self, polygon: &Polygon) -> f64 {
        let mut scratch = ClipScratch::default();
        let bb = polygon.bbox();
        let mut total = 0.0;
        for (ts, ring) in polygon.signed_rings() {
            for piece in self.pieces.iter().filter(|p| p.bbox.intersects(&bb)) {
                let a: f64 = piece
                    .triangles
                    .iter()
                    .map(|t| ring_triangle_overlap(ring, t, &mut scratch))
                    .sum();
                total += ts * piece.sign * a;
            }
        }
        total.max(0.0)
    }
}

/// Urban iff at least half the tract's area lies inside urban polygons.
pub fn classify_urban(
    tract: &TractGeometry,
    urban: &UrbanAreas,
) -> Result<UrbanClass, GeometryError> {
    let area = tract.area();
    if !(area > 0.0) {
        return Err(GeometryError::Degenerate(format!(
            "tract {} has zero area",
            tract.geoid()
        )));
    }
    let overlap: f64 = tract.polygons().iter().map(|p| urban.overlap_area(p)).sum();
    Ok(if overlap / area >= 0.5 {
        UrbanClass::Urban
    } else {
        UrbanClass::Rural
    })
}

/// Urban/rural class of every tract.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UrbanMask {
    classification: BTreeMap<TractId, UrbanClass>,
}

impl UrbanMask {
    pub fn build(urban: &UrbanAreas, tracts: &[TractGeometry]) -> Result<Self, SurfaceError> {
        let classes: Vec<(TractId, Result<UrbanClass, GeometryError>)> = tracts
            .par_iter()
            .map(|t| (t.geoid(), classify_urban(t, urban)))
            .collect();
        let mut classification = BTreeMap::new();
        for (geoid, c) in classes {
            let c = c.map_err(|source| SurfaceError::Geometry { geoid, source })?;
            classification.insert(geoid, c);
        }
        Ok(UrbanMask { classification })
    }

    pub fn from_classification(classification: BTreeMap<TractId, UrbanClass>) -> Self {
        UrbanMask { classification }
    }

    pub fn class(&self, geoid: &TractId) -> Option<UrbanClass> {
        self.classification.get(geoid).copied()
    }

    pub fn classification(&self) -> &BTreeMap<TractId, UrbanClass> {
        &self.classification
    }

    /// Writes `geoid,class` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["geoid", "class"])?;
        for (g, c) in &self.classification {
            w.write_record([g.as_str(), c.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}
