//! Mobility-adjusted air pollution exposure analytics.
//!
//! The crate turns a concentration raster, census tract boundaries and
//! LODES-style worker tables into home (H), workplace (W) and blended
//! home-work (HW) exposures, then derives disparity, inequality and
//! measurement-error metrics from them.

pub mod bias;
pub mod disparity;
pub mod exposure;
pub mod geoid;
pub mod geojson;
pub mod geometry;
pub mod ingest;
pub mod io;
pub mod numeric;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod zonal;
