//! Minimal GeoJSON reader/writer.
//!
//! Supported input: a `FeatureCollection` whose features carry `Polygon` or
//! `MultiPolygon` geometries. Tract files must give each feature a string
//! `GEOID` property. Coordinates are taken as already-projected planar x/y.

use std::io::{Read, Write};
use std::path::Path;

use serde_json::{json, Value};
use thiserror::Error;

use crate::geoid::TractId;
use crate::geometry::{GeometryError, Point, Polygon};
use crate::io::open_maybe_gz;
use crate::zonal::TractGeometry;

#[derive(Debug, Error)]
pub enum GeoJsonError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("feature {index}: {message}")]
    Feature { index: usize, message: String },
    #[error("feature {index}: {source}")]
    Geometry {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("{0}")]
    Structure(String),
}

fn feature_err(index: usize, message: impl Into<String>) -> GeoJsonError {
    GeoJsonError::Feature {
        index,
        message: message.into(),
    }
}

fn parse_ring(v: &Value, index: usize) -> Result<Vec<Point>, GeoJsonError> {
    let arr = v
        .as_array()
        .ok_or_else(|| feature_err(index, "ring is not an array"))?;
    arr.iter()
        .map(|pos| {
            let xy = pos
                .as_array()
                .filter(|a| a.len() >= 2)
                .ok_or_else(|| feature_err(index, "position must be [x, y]"))?;
            match (xy[0].as_f64(), xy[1].as_f64()) {
                (Some(x), Some(y)) => Ok(Point::new(x, y)),
                _ => Err(feature_err(index, "non-numeric coordinate")),
            }
        })
        .collect()
}

fn parse_polygon(v: &Value, index: usize) -> Result<Polygon, GeoJsonError> {
    let rings = v
        .as_array()
        .ok_or_else(|| feature_err(index, "polygon coordinates are not an array"))?
        .iter()
        .map(|r| parse_ring(r, index))
        .collect::<Result<Vec<_>, _>>()?;
    Polygon::from_rings(rings).map_err(|source| GeoJsonError::Geometry { index, source })
}

fn parse_geometry(geom: &Value, index: usize) -> Result<Vec<Polygon>, GeoJsonError> {
    let kind = geom
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| feature_err(index, "geometry has no type"))?;
    let coords = geom
        .get("coordinates")
        .ok_or_else(|| feature_err(index, "geometry has no coordinates"))?;
    match kind {
        "Polygon" => Ok(vec![parse_polygon(coords, index)?]),
        "MultiPolygon" => coords
            .as_array()
            .ok_or_else(|| feature_err(index, "multipolygon coordinates are not an array"))?
            .iter()
            .map(|p| parse_polygon(p, index))
            .collect(),
        other => Err(feature_err(index, format!("unsupported geometry type {other:?}"))),
    }
}

/// One parsed feature: its `GEOID` property (if any) and polygons.
pub struct Feature {
    pub geoid: Option<String>,
    pub polygons: Vec<Polygon>,
}

pub fn read_features<R: Read>(reader: R) -> Result<Vec<Feature>, GeoJsonError> {
    let doc: Value = serde_json::from_reader(reader)?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(GeoJsonError::Structure("expected a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| GeoJsonError::Structure("FeatureCollection has no features array".into()))?;
    features
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let geom = f
                .get("geometry")
                .filter(|g| !g.is_null())
                .ok_or_else(|| feature_err(index, "missing geometry"))?;
            let geoid = match f.get("properties").and_then(|p| p.get("GEOID")) {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.clone()),
                Some(other) => {
                    return Err(feature_err(
                        index,
                        format!("GEOID must be a string, found {other}"),
                    ))
                }
            };
            Ok(Feature {
                geoid,
                polygons: parse_geometry(geom, index)?,
            })
        })
        .collect()
}

/// Reads tract polygons; every feature needs a valid 11-digit `GEOID`.
pub fn read_tracts<R: Read>(reader: R) -> Result<Vec<TractGeometry>, GeoJsonError> {
    read_features(reader)?
        .into_iter()
        .enumerate()
        .map(|(index, f)| {
            let raw = f
                .geoid
                .ok_or_else(|| feature_err(index, "missing GEOID property"))?;
            let geoid: TractId = raw
                .parse()
                .map_err(|e| feature_err(index, format!("{e}")))?;
            Ok(TractGeometry::new(geoid, f.polygons))
        })
        .collect()
}

/// Reads a polygon set (properties ignored), e.g. urban-area boundaries.
pub fn read_polygons<R: Read>(reader: R) -> Result<Vec<Polygon>, GeoJsonError> {
    Ok(read_features(reader)?
        .into_iter()
        .flat_map(|f| f.polygons)
        .collect())
}

pub fn load_tracts(path: &Path) -> Result<Vec<TractGeometry>, GeoJsonError> {
    read_tracts(open_maybe_gz(path)?)
}

pub fn load_polygons(path: &Path) -> Result<Vec<Polygon>, GeoJsonError> {
    read_polygons(open_maybe_gz(path)?)
}

fn polygon_coords(p: &Polygon) -> Value {
    let ring = |r: &crate::geometry::Ring| {
        let mut pts: Vec<Value> = r.points().iter().map(|p| json!([p.x, p.y])).collect();
        pts.push(pts[0].clone());
        Value::Array(pts)
    };
    Value::Array(p.signed_rings().map(|(_, r)| ring(r)).collect())
}

/// Writes features as a FeatureCollection; `geoid` becomes the `GEOID` property.
pub fn write_features<W: Write>(
    mut out: W,
    features: &[(Option<&str>, &[Polygon])],
) -> std::io::Result<()> {
    let feats: Vec<Value> = features
        .iter()
        .map(|(geoid, polys)| {
            let geometry = if polys.len() == 1 {
                json!({"type": "Polygon", "coordinates": polygon_coords(&polys[0])})
            } else {
                json!({"type": "MultiPolygon", "coordinates": polys.iter().map(polygon_coords).collect::<Vec<_>>()})
            };
            let properties = match geoid {
                Some(g) => json!({ "GEOID": g }),
                None => json!({}),
            };
            json!({"type": "Feature", "properties": properties, "geometry": geometry})
        })
        .collect();
    let doc = json!({"type": "FeatureCollection", "features": feats});
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)
}
