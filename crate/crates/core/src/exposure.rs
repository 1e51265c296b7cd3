//! Home (H), workplace (W) and blended home-work (HW) exposures.
//!
//! Group means are worker-weighted means of tract concentrations. H and W
//! come either from residence/workplace tables or, for HW, from the OD
//! population, where every commuting pair contributes its home value, its
//! work value and their blend.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geoid::TractId;
use crate::ingest::{Characteristic, ColumnLayout, OdMatrix, Role, TractCounts, WorkerTable};
use crate::numeric::pairwise_sum;
use crate::zonal::{TractSurface, UrbanClass, UrbanMask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExposureError {
    #[error("empty population: {0}")]
    EmptyPopulation(String),
    #[error("percentile {0} outside [0, 1]")]
    InvalidPercentile(f64),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid home/work fractions ({home}, {work}): both must lie in (0, 1) and sum to 1")]
    InvalidFractions { home: f64, work: f64 },
    #[error("surface is for {surface}, table is for {table}")]
    YearMismatch { surface: i32, table: i32 },
}

/// Time-activity split between home and work tracts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwWeights {
    pub home_fraction: f64,
    pub work_fraction: f64,
}

impl Default for HwWeights {
    fn default() -> Self {
        HwWeights {
            home_fraction: 0.794,
            work_fraction: 0.206,
        }
    }
}

impl HwWeights {
    pub fn new(home_fraction: f64, work_fraction: f64) -> Result<Self, ExposureError> {
        let w = HwWeights {
            home_fraction,
            work_fraction,
        };
        w.check()?;
        Ok(w)
    }

    pub fn check(&self) -> Result<(), ExposureError> {
        let open = |f: f64| f > 0.0 && f < 1.0;
        if open(self.home_fraction) && open(self.work_fraction) && self.home_fraction + self.work_fraction == 1.0 {
            Ok(())
        } else {
            Err(ExposureError::InvalidFractions {
                home: self.home_fraction,
                work: self.work_fraction,
            })
        }
    }
}

/// `home_fraction·h + work_fraction·w`, evaluated as `h + work_fraction·(w − h)`
/// so that equal inputs return `h` exactly.
pub fn hw_blend(h: f64, w: f64, weights: HwWeights) -> f64 {
    h + weights.work_fraction * (w - h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Locus {
    H,
    W,
    HW,
}

impl Locus {
    pub fn as_str(self) -> &'static str {
        match self {
            Locus::H => "H",
            Locus::W => "W",
            Locus::HW => "HW",
        }
    }

    pub fn of_role(role: Role) -> Self {
        match role {
            Role::Residence => Locus::H,
            Role::Workplace => Locus::W,
        }
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    All,
    Urban,
    Rural,
}

impl Stratum {
    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::All => "all",
            Stratum::Urban => "urban",
            Stratum::Rural => "rural",
        }
    }

    pub fn admits(self, class: Option<UrbanClass>) -> bool {
        match self {
            Stratum::All => true,
            Stratum::Urban => class == Some(UrbanClass::Urban),
            Stratum::Rural => class == Some(UrbanClass::Rural),
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A worker group: everyone (`all`, or `od_all` for the OD population) or
/// one category of a characteristic, written `characteristic:CODE`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Group {
    pub characteristic: Option<Characteristic>,
    pub code: String,
}

impl Group {
    pub fn all() -> Self {
        Group {
            characteristic: None,
            code: "all".into(),
        }
    }

    pub fn od_all() -> Self {
        Group {
            characteristic: None,
            code: "od_all".into(),
        }
    }

    pub fn category(characteristic: Characteristic, code: &str) -> Self {
        Group {
            characteristic: Some(characteristic),
            code: code.to_string(),
        }
    }

    pub fn is_total(&self) -> bool {
        self.characteristic.is_none()
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.characteristic {
            None => f.write_str(&self.code),
            Some(c) => write!(f, "{}:{}", c, self.code),
        }
    }
}

/// The total group followed by every category column of `layout`; the
/// index selects the count column (`None` = total).
pub fn groups_of(layout: &ColumnLayout, total: Group) -> Vec<(Group, Option<usize>)> {
    std::iter::once((total, None))
        .chain(
            layout
                .columns()
                .map(|c| (Group::category(c.characteristic, &c.category.code), Some(c.index))),
        )
        .collect()
}

pub(crate) fn count_of(counts: &TractCounts, index: Option<usize>) -> i64 {
    match index {
        None => counts.total,
        Some(i) => counts.counts[i],
    }
}

fn check_weights(values: &[f64], weights: &[f64]) -> Result<(), ExposureError> {
    if values.len() != weights.len() {
        return Err(ExposureError::InvalidWeights(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(ExposureError::InvalidWeights(format!("weight {w} is not a non-negative number")));
    }
    Ok(())
}

/// Σ(value·weight)/Σ(weight), ignoring zero-weight entries. The result is
/// clamped to the range of the contributing values.
pub fn population_weighted_mean(values: &[f64], weights: &[f64]) -> Result<f64, ExposureError> {
    check_weights(values, weights)?;
    let total = pairwise_sum(weights);
    if total <= 0.0 {
        return Err(ExposureError::EmptyPopulation("weights sum to zero".into()));
    }
    let products: Vec<f64> = values.iter().zip(weights).map(|(v, w)| v * w).collect();
    let mean = pairwise_sum(&products) / total;
    let (lo, hi) = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v)));
    Ok(mean.clamp(lo, hi))
}

const QUANTILE_SLACK: f64 = 1e-12;

/// A weighted sample sorted by value, for repeated quantile queries.
///
/// Equal values keep their input order, so callers that pass tracts in
/// ascending geoid order get geoid tie-breaking.
#[derive(Debug, Clone)]
pub struct WeightedDistribution {
    values: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WeightedDistribution {
    pub fn new(values: &[f64], weights: &[f64]) -> Result<Self, ExposureError> {
        check_weights(values, weights)?;
        let mut pairs: Vec<(f64, f64)> = values
            .iter()
            .zip(weights)
            .filter(|(_, w)| **w > 0.0)
            .map(|(v, w)| (*v, *w))
            .collect();
        if pairs.is_empty() {
            return Err(ExposureError::EmptyPopulation("no positive weights".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut acc = 0.0;
        let cumulative = pairs
            .iter()
            .map(|(_, w)| {
                acc += w;
                acc
            })
            .collect();
        Ok(WeightedDistribution {
            values: pairs.into_iter().map(|p| p.0).collect(),
            cumulative,
        })
    }

    pub fn total_weight(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    /// Smallest value whose cumulative weight reaches `p` of the total.
    ///
    /// `p·Σw` is compared with a relative slack of 1e-12 so that a decimal
    /// `p` such as 0.1 behaves as the exact fraction it denotes.
    pub fn quantile(&self, p: f64) -> Result<f64, ExposureError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ExposureError::InvalidPercentile(p));
        }
        let total = self.total_weight();
        let target = p * total - QUANTILE_SLACK * total;
        let i = self.cumulative.partition_point(|&c| c < target);
        Ok(self.values[i.min(self.values.len() - 1)])
    }
}

/// Left-continuous weighted quantile without interpolation.
pub fn weighted_percentile(values: &[f64], weights: &[f64], p: f64) -> Result<f64, ExposureError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ExposureError::InvalidPercentile(p));
    }
    WeightedDistribution::new(values, weights)?.quantile(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureRecord {
    pub year: i32,
    pub group: Group,
    pub locus: Locus,
    pub stratum: Stratum,
    pub mean: f64,
    pub p10: f64,
    pub p90: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub year: i32,
    pub group: Group,
    pub stratum: Stratum,
    /// H − HW
    pub error: f64,
    /// 100·(H − HW)/H; undefined when H is zero.
    pub percent_error: Option<f64>,
}

/// Weight that could not be used because its tract (or either end of an
/// OD pair) has no concentration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dropped {
    pub workers: i64,
    pub units: usize,
    pub tracts: Vec<TractId>,
}

struct Summary {
    mean: f64,
    p10: f64,
    p90: f64,
    weight: f64,
}

fn summarize(values: &[f64], weights: &[f64]) -> Result<Summary, ExposureError> {
    let dist = WeightedDistribution::new(values, weights)?;
    Ok(Summary {
        mean: population_weighted_mean(values, weights)?,
        p10: dist.quantile(0.1)?,
        p90: dist.quantile(0.9)?,
        weight: pairwise_sum(weights),
    })
}

/// One tract of a worker table that has a concentration.
#[derive(Debug, Clone)]
pub struct ResolvedTract<'a> {
    pub geoid: TractId,
    pub value: f64,
    pub class: Option<UrbanClass>,
    pub counts: &'a TractCounts,
}

/// Joins a worker table to the surface in ascending geoid order.
pub fn resolve_tracts<'a>(
    surface: &TractSurface,
    table: &'a WorkerTable,
    urban: Option<&UrbanMask>,
) -> (Vec<ResolvedTract<'a>>, Dropped) {
    let mut dropped = Dropped::default();
    let mut out = Vec::with_capacity(table.rows().len());
    for (g, counts) in table.rows() {
        match surface.get(g) {
            Some(value) => out.push(ResolvedTract {
                geoid: *g,
                value,
                class: urban.and_then(|m| m.class(g)),
                counts,
            }),
            None => {
                if counts.total > 0 {
                    dropped.workers += counts.total;
                    dropped.units += 1;
                    dropped.tracts.push(*g);
                }
            }
        }
    }
    (out, dropped)
}

#[derive(Debug, Clone)]
pub struct GroupExposures {
    pub records: Vec<ExposureRecord>,
    pub dropped: Dropped,
    /// Group/stratum combinations skipped for having no workers.
    pub empty: Vec<(Group, Stratum)>,
}

/// Worker-weighted exposure of every group of `table` in every stratum.
/// The locus follows the table role (residence → H, workplace → W).
pub fn compute_group_exposures(
    surface: &TractSurface,
    table: &WorkerTable,
    urban: Option<&UrbanMask>,
    strata: &[Stratum],
) -> Result<GroupExposures, ExposureError> {
    if surface.year() != table.year() {
        return Err(ExposureError::YearMismatch {
            surface: surface.year(),
            table: table.year(),
        });
    }
    let locus = Locus::of_role(table.role());
    let (tracts, dropped) = resolve_tracts(surface, table, urban);
    if dropped.workers > 0 {
        tracing::warn!(
            year = table.year(),
            locus = locus.as_str(),
            tracts = dropped.units,
            workers = dropped.workers,
            "dropping workers in tracts without a concentration"
        );
    }
    let tasks: Vec<(Group, Option<usize>, Stratum)> = groups_of(table.layout(), Group::all())
        .into_iter()
        .flat_map(|(g, i)| strata.iter().map(move |s| (g.clone(), i, *s)))
        .collect();
    let results: Vec<Result<Option<ExposureRecord>, ExposureError>> = tasks
        .par_iter()
        .map(|(group, idx, stratum)| {
            let (values, weights): (Vec<f64>, Vec<f64>) = tracts
                .iter()
                .filter(|t| stratum.admits(t.class))
                .map(|t| (t.value, count_of(t.counts, *idx) as f64))
                .unzip();
            match summarize(&values, &weights) {
                Ok(s) => Ok(Some(ExposureRecord {
                    year: table.year(),
                    group: group.clone(),
                    locus,
                    stratum: *stratum,
                    mean: s.mean,
                    p10: s.p10,
                    p90: s.p90,
                    weight: s.weight,
                })),
                Err(ExposureError::EmptyPopulation(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();

    let mut records = Vec::new();
    let mut empty = Vec::new();
    for ((group, _, stratum), r) in tasks.into_iter().zip(results) {
        match r? {
            Some(rec) => records.push(rec),
            None => {
                tracing::warn!(year = table.year(), group = %group, stratum = stratum.as_str(), locus = locus.as_str(), "group has no workers; record omitted");
                empty.push((group, stratum));
            }
        }
    }
    Ok(GroupExposures {
        records,
        dropped,
        empty,
    })
}

/// An OD tract pair whose home and work tracts both have concentrations.
#[derive(Debug, Clone)]
pub struct ResolvedPair<'a> {
    pub home: TractId,
    pub work: TractId,
    pub h: f64,
    pub w: f64,
    /// Urban class of the home tract.
    pub class: Option<UrbanClass>,
    pub counts: &'a TractCounts,
}

#[derive(Debug, Clone)]
pub struct OdPopulation<'a> {
    pub year: i32,
    pub layout: &'a ColumnLayout,
    /// In ascending `(home, work)` order.
    pub pairs: Vec<ResolvedPair<'a>>,
    pub dropped: Dropped,
}

impl<'a> OdPopulation<'a> {
    /// Drops (and logs) pairs touching a tract without a concentration.
    pub fn resolve(
        surface: &TractSurface,
        od: &'a OdMatrix,
        urban: Option<&UrbanMask>,
    ) -> Result<Self, ExposureError> {
        if surface.year() != od.year() {
            return Err(ExposureError::YearMismatch {
                surface: surface.year(),
                table: od.year(),
            });
        }
        let mut dropped = Dropped::default();
        let mut missing = std::collections::BTreeSet::new();
        let mut pairs = Vec::with_capacity(od.entries().len());
        for ((home, work), counts) in od.entries() {
            match (surface.get(home), surface.get(work)) {
                (Some(h), Some(w)) => pairs.push(ResolvedPair {
                    home: *home,
                    work: *work,
                    h,
                    w,
                    class: urban.and_then(|m| m.class(home)),
                    counts,
                }),
                (h, w) => {
                    if h.is_none() {
                        missing.insert(*home);
                    }
                    if w.is_none() {
                        missing.insert(*work);
                    }
                    if counts.total > 0 {
                        dropped.workers += counts.total;
                        dropped.units += 1;
                    }
                }
            }
        }
        dropped.tracts = missing.into_iter().collect();
        if dropped.workers > 0 {
            tracing::warn!(
                year = od.year(),
                pairs = dropped.units,
                workers = dropped.workers,
                "dropping OD pairs that touch tracts without a concentration"
            );
        }
        Ok(OdPopulation {
            year: od.year(),
            layout: od.layout(),
            pairs,
            dropped,
        })
    }

    pub fn groups(&self) -> Vec<(Group, Option<usize>)> {
        groups_of(self.layout, Group::od_all())
    }
}

#[derive(Debug, Clone)]
pub struct HwExposures {
    pub records: Vec<ExposureRecord>,
    pub errors: Vec<ErrorRecord>,
    pub dropped: Dropped,
    pub empty: Vec<(Group, Stratum)>,
}

/// H, W and HW over the OD population, plus the H − HW error, for every
/// OD group and stratum (assigned by home tract).
pub fn compute_hw_exposures(
    surface: &TractSurface,
    od: &OdMatrix,
    weights: HwWeights,
    urban: Option<&UrbanMask>,
    strata: &[Stratum],
) -> Result<HwExposures, ExposureError> {
    weights.check()?;
    let pop = OdPopulation::resolve(surface, od, urban)?;
    if pop.pairs.iter().all(|p| p.counts.total <= 0) {
        return Err(ExposureError::EmptyPopulation(format!(
            "no OD workers with resolvable home and work tracts in {}",
            od.year()
        )));
    }
    let year = od.year();
    let tasks: Vec<(Group, Option<usize>, Stratum)> = pop
        .groups()
        .into_iter()
        .flat_map(|(g, i)| strata.iter().map(move |s| (g.clone(), i, *s)))
        .collect();
    type Out = Option<(Vec<ExposureRecord>, ErrorRecord)>;
    let results: Vec<Result<Out, ExposureError>> = tasks
        .par_iter()
        .map(|(group, idx, stratum)| {
            let sel: Vec<&ResolvedPair> = pop.pairs.iter().filter(|p| stratum.admits(p.class)).collect();
            let wts: Vec<f64> = sel.iter().map(|p| count_of(p.counts, *idx) as f64).collect();
            let hs: Vec<f64> = sel.iter().map(|p| p.h).collect();
            let ws: Vec<f64> = sel.iter().map(|p| p.w).collect();
            let hws: Vec<f64> = sel.iter().map(|p| hw_blend(p.h, p.w, weights)).collect();
            let mut recs = Vec::with_capacity(3);
            for (locus, vals) in [(Locus::H, &hs), (Locus::W, &ws), (Locus::HW, &hws)] {
                let s = match summarize(vals, &wts) {
                    Ok(s) => s,
                    Err(ExposureError::EmptyPopulation(_)) => return Ok(None),
                    Err(e) => return Err(e),
                };
                recs.push(ExposureRecord {
                    year,
                    group: group.clone(),
                    locus,
                    stratum: *stratum,
                    mean: s.mean,
                    p10: s.p10,
                    p90: s.p90,
                    weight: s.weight,
                });
            }
            let (h, hw) = (recs[0].mean, recs[2].mean);
            let error = h - hw;
            let err = ErrorRecord {
                year,
                group: group.clone(),
                stratum: *stratum,
                error,
                percent_error: (h != 0.0).then(|| 100.0 * error / h),
            };
            Ok(Some((recs, err)))
        })
        .collect();

    let mut out = HwExposures {
        records: Vec::new(),
        errors: Vec::new(),
        dropped: pop.dropped.clone(),
        empty: Vec::new(),
    };
    for ((group, _, stratum), r) in tasks.into_iter().zip(results) {
        match r? {
            Some((recs, err)) => {
                out.records.extend(recs);
                out.errors.push(err);
            }
            None => {
                tracing::warn!(year, group = %group, stratum = stratum.as_str(), "OD group has no workers; record omitted");
                out.empty.push((group, stratum));
            }
        }
    }
    Ok(out)
}
