//! LODES-style worker tables: parsing block-level RAC/WAC/OD files,
//! validating category sums and rolling blocks up to tracts.

mod lodes;
mod rollup;
mod schema;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lodes::{read_area_table, read_od_table, AreaBlockTable, BlockRow, OdBlockRow, OdBlockTable};
pub use rollup::{
    aggregate_od, aggregate_to_tracts, validate_table, OdMatrix, RowViolation, TractCounts,
    ValidationReport, WorkerTable,
};
pub use schema::{
    lodes_area_schemas, lodes_od_schemas, Category, Characteristic, ColumnLayout, GroupColumn,
    GroupSchema,
};

use crate::geoid::MalformedGeocode;

/// Whether a table counts workers where they live or where they work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Residence,
    Workplace,
}

impl Role {
    /// Block key column in LODES RAC (`h_geocode`) and WAC (`w_geocode`) files.
    pub fn key_column(self) -> &'static str {
        match self {
            Role::Residence => "h_geocode",
            Role::Workplace => "w_geocode",
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{file}: CSV error: {message}")]
    Csv { file: String, message: String },
    #[error("{file}: missing required column {column:?}")]
    MissingColumn { file: String, column: String },
    #[error("{file}: characteristic {characteristic} is only partially present (missing {missing:?})")]
    PartialCharacteristic {
        file: String,
        characteristic: Characteristic,
        missing: Vec<String>,
    },
    #[error("{file} line {line}: {source}")]
    Geocode {
        file: String,
        line: u64,
        #[source]
        source: MalformedGeocode,
    },
    #[error("{file} line {line}: column {column} has non-integer count {value:?}")]
    BadCount {
        file: String,
        line: u64,
        column: String,
        value: String,
    },
    #[error("data row {} (block {geocode}): {characteristic}: {detail}", .row + 1)]
    Validation {
        /// Zero-based index into the combined block rows.
        row: usize,
        geocode: String,
        characteristic: String,
        detail: String,
    },
    #[error("schema error: {0}")]
    Schema(String),
}
