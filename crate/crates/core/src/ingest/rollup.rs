//! Block → tract rollup and table validation. All arithmetic is on i64
//! counts, so rollups preserve totals exactly.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use super::lodes::{BlockRow, OdBlockRow};
use super::schema::{ColumnLayout, GroupSchema};
use super::{IngestError, Role};
use crate::geoid::TractId;

const CHUNK: usize = 1 << 14;

/// Worker total plus per-category counts (ordered by the table layout).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TractCounts {
    pub total: i64,
    pub counts: Vec<i64>,
}

impl TractCounts {
    fn zero(width: usize) -> Self {
        TractCounts {
            total: 0,
            counts: vec![0; width],
        }
    }

    fn add(&mut self, total: i64, counts: &[i64]) {
        self.total += total;
        for (a, b) in self.counts.iter_mut().zip(counts) {
            *a += b;
        }
    }
}

/// Tract-level worker counts for one role and year.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerTable {
    role: Role,
    year: i32,
    layout: ColumnLayout,
    rows: BTreeMap<TractId, TractCounts>,
}

impl WorkerTable {
    pub fn new(role: Role, year: i32, layout: ColumnLayout, rows: BTreeMap<TractId, TractCounts>) -> Self {
        WorkerTable {
            role,
            year,
            layout,
            rows,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn layout(&self) -> &ColumnLayout {
        &self.layout
    }

    pub fn rows(&self) -> &BTreeMap<TractId, TractCounts> {
        &self.rows
    }

    pub fn rows_mut(&mut self) -> &mut BTreeMap<TractId, TractCounts> {
        &mut self.rows
    }

    pub fn grand_total(&self) -> i64 {
        self.rows.values().map(|r| r.total).sum()
    }

    pub fn column_total(&self, index: usize) -> i64 {
        self.rows.values().map(|r| r.counts[index]).sum()
    }

    /// `geoid,year,total,<category codes...>`
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["geoid".to_string(), "year".into(), "total".into()];
        header.extend(self.layout.codes().iter().cloned());
        w.write_record(&header)?;
        for (g, r) in &self.rows {
            let mut rec = vec![g.to_string(), self.year.to_string(), r.total.to_string()];
            rec.extend(r.counts.iter().map(i64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tract-to-tract commuting flows for one year.
#[derive(Debug, Clone, PartialEq)]
pub struct OdMatrix {
    year: i32,
    layout: ColumnLayout,
    entries: BTreeMap<(TractId, TractId), TractCounts>,
}

impl OdMatrix {
    pub fn new(year: i32, layout: ColumnLayout, entries: BTreeMap<(TractId, TractId), TractCounts>) -> Self {
        OdMatrix {
            year,
            layout,
            entries,
        }
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn layout(&self) -> &ColumnLayout {
        &self.layout
    }

    /// Keyed by `(home_tract, work_tract)`.
    pub fn entries(&self) -> &BTreeMap<(TractId, TractId), TractCounts> {
        &self.entries
    }

    pub fn grand_total(&self) -> i64 {
        self.entries.values().map(|r| r.total).sum()
    }

    /// `h_geoid,w_geoid,year,total,<category codes...>`
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["h_geoid".to_string(), "w_geoid".into(), "year".into(), "total".into()];
        header.extend(self.layout.codes().iter().cloned());
        w.write_record(&header)?;
        for ((h, wk), r) in &self.entries {
            let mut rec = vec![h.to_string(), wk.to_string(), self.year.to_string(), r.total.to_string()];
            rec.extend(r.counts.iter().map(i64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A problem found in one row, attributed to a characteristic (or "total").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub characteristic: String,
    pub detail: String,
}

fn row_issues(layout: &ColumnLayout, total: i64, counts: &[i64]) -> Vec<Issue> {
    let mut issues = Vec::new();
    if total < 0 {
        issues.push(Issue {
            characteristic: "total".into(),
            detail: format!("negative total {total}"),
        });
    }
    for (i, schema) in layout.schemas().iter().enumerate() {
        let span = layout.span(i);
        let cells = &counts[span.clone()];
        if let Some(k) = cells.iter().position(|&c| c < 0) {
            issues.push(Issue {
                characteristic: schema.characteristic.to_string(),
                detail: format!("negative count {} in {}", cells[k], layout.codes()[span.start + k]),
            });
            continue;
        }
        if schema.complete {
            let sum: i64 = cells.iter().sum();
            if sum != total {
                issues.push(Issue {
                    characteristic: schema.characteristic.to_string(),
                    detail: format!("categories sum to {sum} but total is {total}"),
                });
            }
        }
    }
    issues
}

fn first_issue(layout: &ColumnLayout, row: usize, geocode: &str, total: i64, counts: &[i64]) -> Result<(), IngestError> {
    if counts.len() != layout.width() {
        return Err(IngestError::Validation {
            row,
            geocode: geocode.to_string(),
            characteristic: "layout".into(),
            detail: format!("expected {} category counts, found {}", layout.width(), counts.len()),
        });
    }
    match row_issues(layout, total, counts).into_iter().next() {
        None => Ok(()),
        Some(i) => Err(IngestError::Validation {
            row,
            geocode: geocode.to_string(),
            characteristic: i.characteristic,
            detail: i.detail,
        }),
    }
}

fn merge<K: Ord>(parts: Vec<BTreeMap<K, TractCounts>>) -> BTreeMap<K, TractCounts> {
    let mut out: BTreeMap<K, TractCounts> = BTreeMap::new();
    for part in parts {
        for (k, v) in part {
            match out.get_mut(&k) {
                Some(acc) => acc.add(v.total, &v.counts),
                None => {
                    out.insert(k, v);
                }
            }
        }
    }
    out
}

/// Sums validated block rows into tract rows. Chunks are accumulated in
/// parallel and merged in chunk order; integer sums make the result
/// independent of row order.
pub fn aggregate_to_tracts(
    rows: &[BlockRow],
    layout: &ColumnLayout,
    role: Role,
    year: i32,
) -> Result<WorkerTable, IngestError> {
    let width = layout.width();
    let parts = rows
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc: BTreeMap<TractId, TractCounts> = BTreeMap::new();
            for (i, r) in chunk.iter().enumerate() {
                first_issue(layout, ci * CHUNK + i, r.geocode.as_str(), r.total, &r.counts)?;
                acc.entry(r.geocode.tract())
                    .or_insert_with(|| TractCounts::zero(width))
                    .add(r.total, &r.counts);
            }
            Ok(acc)
        })
        .collect::<Vec<Result<_, IngestError>>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WorkerTable::new(role, year, layout.clone(), merge(parts)))
}

/// Sums validated OD block pairs into `(home_tract, work_tract)` flows.
pub fn aggregate_od(rows: &[OdBlockRow], layout: &ColumnLayout, year: i32) -> Result<OdMatrix, IngestError> {
    let width = layout.width();
    let parts = rows
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut acc: BTreeMap<(TractId, TractId), TractCounts> = BTreeMap::new();
            for (i, r) in chunk.iter().enumerate() {
                let label = format!("{}->{}", r.home, r.work);
                first_issue(layout, ci * CHUNK + i, &label, r.total, &r.counts)?;
                acc.entry((r.home.tract(), r.work.tract()))
                    .or_insert_with(|| TractCounts::zero(width))
                    .add(r.total, &r.counts);
            }
            Ok(acc)
        })
        .collect::<Vec<Result<_, IngestError>>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(OdMatrix::new(year, layout.clone(), merge(parts)))
}

/// A tract row that breaks non-negativity or a category-sum identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowViolation {
    pub geoid: TractId,
    pub issues: Vec<Issue>,
}

impl RowViolation {
    pub fn characteristics(&self) -> Vec<&str> {
        self.issues.iter().map(|i| i.characteristic.as_str()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<RowViolation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every tract row against the given schemas (those whose columns
/// the table carries). Never fails; problems are returned in the report.
pub fn validate_table(table: &WorkerTable, schemas: &[GroupSchema]) -> ValidationReport {
    let layout = table.layout();
    let selected: Vec<GroupSchema> = schemas
        .iter()
        .filter(|s| s.codes().all(|c| layout.index_of(c).is_some()))
        .cloned()
        .collect();
    let check_layout = ColumnLayout::new(selected).unwrap_or_else(|_| ColumnLayout::empty());
    let idx: Vec<usize> = check_layout
        .codes()
        .iter()
        .map(|c| layout.index_of(c).expect("filtered above"))
        .collect();

    let violations = table
        .rows()
        .iter()
        .filter_map(|(g, r)| {
            let counts: Vec<i64> = idx.iter().map(|&i| r.counts[i]).collect();
            let issues = row_issues(&check_layout, r.total, &counts);
            (!issues.is_empty()).then(|| RowViolation { geoid: *g, issues })
        })
        .collect();
    ValidationReport { violations }
}
