//! Block-level LODES CSV readers.
//!
//! RAC/WAC files are keyed by `h_geocode`/`w_geocode` with total `C000`;
//! OD files by `w_geocode,h_geocode` with total `S000`. Category columns are
//! matched against the supplied schemas; other columns are ignored with a
//! warning.

use std::collections::BTreeSet;
use std::io::Read;

use csv::ByteRecord;

use super::schema::{ColumnLayout, GroupSchema};
use super::{IngestError, Role};
use crate::geoid::BlockId;

/// One block's worker counts; `counts` follows the table's [`ColumnLayout`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRow {
    pub geocode: BlockId,
    pub total: i64,
    pub counts: Vec<i64>,
}

/// One home-block/work-block commuting link.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OdBlockRow {
    pub home: BlockId,
    pub work: BlockId,
    pub total: i64,
    pub counts: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AreaBlockTable {
    pub role: Role,
    pub layout: ColumnLayout,
    pub rows: Vec<BlockRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdBlockTable {
    pub layout: ColumnLayout,
    pub rows: Vec<OdBlockRow>,
}

impl AreaBlockTable {
    /// Appends another file's rows (e.g. another state); layouts must agree.
    pub fn append(&mut self, other: AreaBlockTable) -> Result<(), IngestError> {
        if other.layout != self.layout || other.role != self.role {
            return Err(IngestError::Schema(
                "cannot combine tables with different roles or category columns".into(),
            ));
        }
        self.rows.extend(other.rows);
        Ok(())
    }
}

impl OdBlockTable {
    pub fn append(&mut self, other: OdBlockTable) -> Result<(), IngestError> {
        if other.layout != self.layout {
            return Err(IngestError::Schema(
                "cannot combine OD tables with different category columns".into(),
            ));
        }
        self.rows.extend(other.rows);
        Ok(())
    }
}

struct Header {
    layout: ColumnLayout,
    // header position of each layout column
    positions: Vec<usize>,
}

fn position(headers: &[String], name: &str, file: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::MissingColumn {
            file: file.to_string(),
            column: name.to_string(),
        })
}

fn resolve_header(
    file: &str,
    headers: &[String],
    schemas: &[GroupSchema],
    fixed: &[&str],
) -> Result<Header, IngestError> {
    let present: BTreeSet<&str> = headers.iter().map(String::as_str).collect();
    let mut selected = Vec::new();
    for s in schemas {
        let missing: Vec<String> = s
            .codes()
            .filter(|c| !present.contains(c))
            .map(str::to_string)
            .collect();
        if missing.is_empty() {
            selected.push(s.clone());
        } else if missing.len() < s.categories.len() {
            return Err(IngestError::PartialCharacteristic {
                file: file.to_string(),
                characteristic: s.characteristic,
                missing,
            });
        }
    }
    let known: BTreeSet<&str> = schemas
        .iter()
        .flat_map(GroupSchema::codes)
        .chain(fixed.iter().copied())
        .collect();
    let unknown: Vec<&str> = headers
        .iter()
        .map(String::as_str)
        .filter(|h| !known.contains(h))
        .collect();
    if !unknown.is_empty() {
        tracing::warn!(file, columns = ?unknown, "ignoring unknown columns");
    }
    let layout = ColumnLayout::new(selected)?;
    let positions = layout
        .codes()
        .iter()
        .map(|c| position(headers, c, file))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Header { layout, positions })
}

fn read_headers<R: Read>(rdr: &mut csv::Reader<R>, file: &str) -> Result<Vec<String>, IngestError> {
    Ok(rdr
        .headers()
        .map_err(|e| IngestError::Csv {
            file: file.to_string(),
            message: e.to_string(),
        })?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

struct Fields<'a> {
    rec: &'a ByteRecord,
    file: &'a str,
    line: u64,
}

impl Fields<'_> {
    fn text(&self, i: usize) -> &str {
        std::str::from_utf8(self.rec.get(i).unwrap_or(b"")).unwrap_or("").trim()
    }

    fn block(&self, i: usize) -> Result<BlockId, IngestError> {
        self.text(i).parse().map_err(|source| IngestError::Geocode {
            file: self.file.to_string(),
            line: self.line,
            source,
        })
    }

    fn count(&self, i: usize, column: &str) -> Result<i64, IngestError> {
        let raw = self.text(i);
        raw.parse().map_err(|_| IngestError::BadCount {
            file: self.file.to_string(),
            line: self.line,
            column: column.to_string(),
            value: raw.to_string(),
        })
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).from_reader(reader)
}

/// Reads a RAC (`Role::Residence`) or WAC (`Role::Workplace`) block file.
pub fn read_area_table<R: Read>(
    reader: R,
    file: &str,
    role: Role,
    schemas: &[GroupSchema],
) -> Result<AreaBlockTable, IngestError> {
    let mut rdr = csv_reader(reader);
    let headers = read_headers(&mut rdr, file)?;
    let key = role.key_column();
    let ik = position(&headers, key, file)?;
    let it = position(&headers, "C000", file)?;
    let header = resolve_header(file, &headers, schemas, &[key, "C000"])?;

    let mut rows = Vec::new();
    let mut rec = ByteRecord::new();
    let mut line = 1u64;
    while rdr.read_byte_record(&mut rec).map_err(|e| IngestError::Csv {
        file: file.to_string(),
        message: e.to_string(),
    })? {
        line += 1;
        let f = Fields { rec: &rec, file, line };
        let counts = header
            .positions
            .iter()
            .zip(header.layout.codes())
            .map(|(&p, c)| f.count(p, c))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(BlockRow {
            geocode: f.block(ik)?,
            total: f.count(it, "C000")?,
            counts,
        });
    }
    Ok(AreaBlockTable {
        role,
        layout: header.layout,
        rows,
    })
}

/// Reads an OD block file (`w_geocode,h_geocode,S000,...`).
pub fn read_od_table<R: Read>(
    reader: R,
    file: &str,
    schemas: &[GroupSchema],
) -> Result<OdBlockTable, IngestError> {
    let mut rdr = csv_reader(reader);
    let headers = read_headers(&mut rdr, file)?;
    let iw = position(&headers, "w_geocode", file)?;
    let ih = position(&headers, "h_geocode", file)?;
    let it = position(&headers, "S000", file)?;
    let header = resolve_header(file, &headers, schemas, &["w_geocode", "h_geocode", "S000"])?;

    let mut rows = Vec::new();
    let mut rec = ByteRecord::new();
    let mut line = 1u64;
    while rdr.read_byte_record(&mut rec).map_err(|e| IngestError::Csv {
        file: file.to_string(),
        message: e.to_string(),
    })? {
        line += 1;
        let f = Fields { rec: &rec, file, line };
        let counts = header
            .positions
            .iter()
            .zip(header.layout.codes())
            .map(|(&p, c)| f.count(p, c))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(OdBlockRow {
            home: f.block(ih)?,
            work: f.block(iw)?,
            total: f.count(it, "S000")?,
            counts,
        });
    }
    Ok(OdBlockTable {
        layout: header.layout,
        rows,
    })
}
