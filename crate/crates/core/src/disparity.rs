//! Between-group disparity and inequality metrics.
//!
//! The scalar kernels (`extreme_group_gap`, `percentile_bin_curve`,
//! `atkinson`, `threshold_share`, ...) are pure functions. The `*_table`
//! helpers sweep them over exposure records or resolved tracts and return
//! report rows in a fixed order.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::exposure::{count_of, groups_of, ExposureRecord, Group, Locus, ResolvedTract, Stratum};
use crate::geoid::TractId;
use crate::ingest::{Characteristic, ColumnLayout};
use crate::numeric::pairwise_sum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DisparityError {
    #[error("{context}: need at least {needed} groups, found {found}")]
    InsufficientGroups {
        context: String,
        needed: usize,
        found: usize,
    },
    #[error("need at least {needed} tracts, found {found}")]
    InsufficientTracts { needed: usize, found: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("empty population")]
    EmptyPopulation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapResult {
    pub most_exposed: Group,
    pub least_exposed: Group,
    pub absolute_diff: f64,
    /// Percent of the reference (national) value.
    pub percent_diff: f64,
    /// `None` when the least-exposed value is zero.
    pub ratio: Option<f64>,
}

/// Gap between the highest- and lowest-exposed groups. Ties go to the
/// group that sorts first.
pub fn extreme_group_gap(means: &[(Group, f64)], national_mean: f64) -> Result<GapResult, DisparityError> {
    if means.len() < 2 {
        return Err(DisparityError::InsufficientGroups {
            context: "extreme-group gap".into(),
            needed: 2,
            found: means.len(),
        });
    }
    if !(national_mean > 0.0) {
        return Err(DisparityError::Domain(format!("national mean {national_mean} is not positive")));
    }
    let mut sorted: Vec<&(Group, f64)> = means.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut hi = sorted[0];
    let mut lo = sorted[0];
    for g in &sorted[1..] {
        if g.1 > hi.1 {
            hi = g;
        }
        if g.1 < lo.1 {
            lo = g;
        }
    }
    let absolute_diff = hi.1 - lo.1;
    Ok(GapResult {
        most_exposed: hi.0.clone(),
        least_exposed: lo.0.clone(),
        absolute_diff,
        percent_diff: 100.0 * absolute_diff / national_mean,
        ratio: (lo.1 > 0.0).then(|| hi.1 / lo.1),
    })
}

/// One tract's input to the group-composition rankings.
#[derive(Debug, Clone, PartialEq)]
pub struct BinTract {
    pub geoid: TractId,
    /// Group share of the tract's workers.
    pub fraction: f64,
    /// Group workers in the tract.
    pub count: f64,
    pub concentration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bin {
    /// 1-based, lowest group fraction first.
    pub index: usize,
    pub n_tracts: usize,
    /// Group-weighted concentration; `None` if the bin has no group workers.
    pub exposure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercentileBinCurve {
    pub bins: Vec<Bin>,
}

/// Splits `n` ranked items into `n_bins` contiguous runs whose sizes differ
/// by at most one, longer runs first.
fn bin_bounds(n: usize, n_bins: usize) -> Vec<std::ops::Range<usize>> {
    let (base, rem) = (n / n_bins, n % n_bins);
    let mut start = 0;
    (0..n_bins)
        .map(|i| {
            let len = base + usize::from(i < rem);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Ranks tracts by group fraction (ties by geoid) and reports the
/// group-weighted concentration of each of `n_bins` bins.
pub fn percentile_bin_curve(tracts: &[BinTract], n_bins: usize) -> Result<PercentileBinCurve, DisparityError> {
    if n_bins < 2 {
        return Err(DisparityError::Contract(format!("bin count {n_bins} is below 2")));
    }
    if tracts.len() < n_bins {
        return Err(DisparityError::InsufficientTracts {
            needed: n_bins,
            found: tracts.len(),
        });
    }
    let mut ranked: Vec<&BinTract> = tracts.iter().collect();
    ranked.sort_by(|a, b| a.fraction.total_cmp(&b.fraction).then(a.geoid.cmp(&b.geoid)));
    let bins = bin_bounds(ranked.len(), n_bins)
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let part = &ranked[r];
            let w: Vec<f64> = part.iter().map(|t| t.count).collect();
            let wc: Vec<f64> = part.iter().map(|t| t.count * t.concentration).collect();
            let total = pairwise_sum(&w);
            Bin {
                index: i + 1,
                n_tracts: part.len(),
                exposure: (total > 0.0).then(|| pairwise_sum(&wc) / total),
            }
        })
        .collect();
    Ok(PercentileBinCurve { bins })
}

/// Top-decile minus bottom-decile exposure of a 10-bin curve.
pub fn decile_contrast(curve: &PercentileBinCurve) -> Result<Option<f64>, DisparityError> {
    if curve.bins.len() != 10 {
        return Err(DisparityError::Contract(format!(
            "decile contrast needs 10 bins, curve has {}",
            curve.bins.len()
        )));
    }
    Ok(match (curve.bins[0].exposure, curve.bins[9].exposure) {
        (Some(lo), Some(hi)) => Some(hi - lo),
        _ => None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecileShares {
    /// Mean group fraction per concentration decile, cleanest first.
    pub shares: [f64; 10],
    pub top_minus_bottom: f64,
}

/// Ranks tracts by concentration (ties by geoid) into deciles and averages
/// the group fraction within each.
pub fn population_share_by_concentration_decile(tracts: &[BinTract]) -> Result<DecileShares, DisparityError> {
    if tracts.len() < 10 {
        return Err(DisparityError::InsufficientTracts {
            needed: 10,
            found: tracts.len(),
        });
    }
    let mut ranked: Vec<&BinTract> = tracts.iter().collect();
    ranked.sort_by(|a, b| a.concentration.total_cmp(&b.concentration).then(a.geoid.cmp(&b.geoid)));
    let mut shares = [0.0; 10];
    for (i, r) in bin_bounds(ranked.len(), 10).into_iter().enumerate() {
        let f: Vec<f64> = ranked[r.clone()].iter().map(|t| t.fraction).collect();
        shares[i] = pairwise_sum(&f) / r.len() as f64;
    }
    Ok(DecileShares {
        shares,
        top_minus_bottom: shares[9] - shares[0],
    })
}

/// Between-group Atkinson index of `y` with population shares `f`.
///
/// `ε = 1` uses the geometric-mean limit.
pub fn atkinson(f: &[f64], y: &[f64], epsilon: f64) -> Result<f64, DisparityError> {
    if f.len() != y.len() || f.is_empty() {
        return Err(DisparityError::Contract("shares and values must be non-empty and equally long".into()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(DisparityError::Domain(format!("aversion parameter {epsilon} must be finite and >= 0")));
    }
    if let Some(v) = y.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(DisparityError::Domain(format!("group value {v} must be positive")));
    }
    if let Some(s) = f.iter().find(|s| !(**s > 0.0)) {
        return Err(DisparityError::Domain(format!("population share {s} must be positive")));
    }
    let fsum = pairwise_sum(f);
    if (fsum - 1.0).abs() > 1e-9 {
        return Err(DisparityError::Domain(format!("population shares sum to {fsum}, not 1")));
    }
    let w: Vec<f64> = f.iter().map(|f| f / fsum).collect();
    let ybar = pairwise_sum(&w.iter().zip(y).map(|(w, y)| w * y).collect::<Vec<_>>());
    // Relative deviations u sum to zero under w, so only the second- and
    // higher-order parts of (1+u)^e and ln(1+u) are accumulated. Near-equal
    // groups then keep full relative precision.
    let u: Vec<f64> = y.iter().map(|y| (y - ybar) / ybar).collect();
    let ai = if epsilon == 1.0 {
        let logs: Vec<f64> = w.iter().zip(&u).map(|(w, u)| w * log_tail(*u)).collect();
        -pairwise_sum(&logs).exp_m1()
    } else {
        let e = 1.0 - epsilon;
        let terms: Vec<f64> = w.iter().zip(&u).map(|(w, u)| w * power_tail(*u, e)).collect();
        -(pairwise_sum(&terms).ln_1p() / e).exp_m1()
    };
    Ok(ai.max(0.0))
}

/// `(1+u)^e − 1 − e·u`
fn power_tail(u: f64, e: f64) -> f64 {
    if u.abs() > 0.5 {
        return (e * u.ln_1p()).exp_m1() - e * u;
    }
    let mut term = e * (e - 1.0) / 2.0 * u * u;
    let mut sum = term;
    for k in 2..400 {
        term *= (e - k as f64) / (k + 1) as f64 * u;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `ln(1+u) − u`
fn log_tail(u: f64) -> f64 {
    if u.abs() > 0.5 {
        return u.ln_1p() - u;
    }
    let mut pow = u * u;
    let mut sum = -pow / 2.0;
    for k in 3..400 {
        pow *= -u;
        let term = -pow / k as f64;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `(group − state)/national`.
pub fn state_disparity(group_mean: f64, state_mean: f64, national_mean: f64) -> Result<f64, DisparityError> {
    if !(national_mean > 0.0) {
        return Err(DisparityError::Domain(format!("national mean {national_mean} is not positive")));
    }
    Ok((group_mean - state_mean) / national_mean)
}

/// Percent of the weight whose value strictly exceeds `threshold`.
pub fn threshold_share(values: &[f64], weights: &[f64], threshold: f64) -> Result<f64, DisparityError> {
    if values.len() != weights.len() {
        return Err(DisparityError::Contract("values and weights differ in length".into()));
    }
    let total = pairwise_sum(weights);
    if !(total > 0.0) {
        return Err(DisparityError::EmptyPopulation);
    }
    let above: Vec<f64> = values
        .iter()
        .zip(weights)
        .map(|(v, w)| if *v > threshold { *w } else { 0.0 })
        .collect();
    Ok((100.0 * pairwise_sum(&above) / total).clamp(0.0, 100.0))
}

/// Population coefficient of variation of group exceedance shares.
pub fn cov_of_shares(qs: &[f64]) -> Result<f64, DisparityError> {
    if qs.len() < 2 {
        return Err(DisparityError::InsufficientGroups {
            context: "coefficient of variation".into(),
            needed: 2,
            found: qs.len(),
        });
    }
    let n = qs.len() as f64;
    let mean = pairwise_sum(qs) / n;
    if !(mean > 0.0) {
        return Err(DisparityError::Domain("mean exceedance share is zero".into()));
    }
    let sq: Vec<f64> = qs.iter().map(|q| (q - mean) * (q - mean)).collect();
    Ok((pairwise_sum(&sq) / n).sqrt() / mean)
}

// ---------------------------------------------------------------------------
// Sweeps producing report rows.

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GapMetric {
    Mean,
    P10,
    P90,
}

impl GapMetric {
    pub const ALL: [GapMetric; 3] = [GapMetric::Mean, GapMetric::P10, GapMetric::P90];

    pub fn as_str(self) -> &'static str {
        match self {
            GapMetric::Mean => "mean",
            GapMetric::P10 => "p10",
            GapMetric::P90 => "p90",
        }
    }

    fn of(self, r: &ExposureRecord) -> f64 {
        match self {
            GapMetric::Mean => r.mean,
            GapMetric::P10 => r.p10,
            GapMetric::P90 => r.p90,
        }
    }
}

impl fmt::Display for GapMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRecord {
    pub year: i32,
    pub characteristic: Characteristic,
    pub locus: Locus,
    pub stratum: Stratum,
    pub metric: GapMetric,
    pub gap: GapResult,
}

/// A metric that could not be computed; logged and listed in the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub what: String,
    pub reason: String,
}

type SliceKey = (i32, Characteristic, Locus, Stratum);

fn by_characteristic(records: &[ExposureRecord]) -> BTreeMap<SliceKey, Vec<&ExposureRecord>> {
    let mut out: BTreeMap<SliceKey, Vec<&ExposureRecord>> = BTreeMap::new();
    for r in records {
        if let Some(c) = r.group.characteristic {
            out.entry((r.year, c, r.locus, r.stratum)).or_default().push(r);
        }
    }
    out
}

fn total_record<'a>(records: &'a [ExposureRecord], key: &SliceKey) -> Option<&'a ExposureRecord> {
    records
        .iter()
        .find(|r| r.group.is_total() && r.year == key.0 && r.locus == key.2 && r.stratum == key.3)
}

/// Extreme-group gaps for every characteristic/locus/stratum/metric of one
/// source (a residence, workplace or OD table) whose records include the
/// source's total group. Percentages are of the total group's value of the
/// same metric.
pub fn gap_table(records: &[ExposureRecord]) -> (Vec<GapRecord>, Vec<Skipped>) {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (key, recs) in by_characteristic(records) {
        let what = format!("gap {} {} {} {}", key.0, key.1, key.2, key.3);
        let Some(total) = total_record(records, &key) else {
            skipped.push(Skipped {
                what,
                reason: "no total-population record".into(),
            });
            continue;
        };
        for metric in GapMetric::ALL {
            let means: Vec<(Group, f64)> = recs.iter().map(|r| (r.group.clone(), metric.of(r))).collect();
            match extreme_group_gap(&means, metric.of(total)) {
                Ok(gap) => out.push(GapRecord {
                    year: key.0,
                    characteristic: key.1,
                    locus: key.2,
                    stratum: key.3,
                    metric,
                    gap,
                }),
                Err(e) => {
                    tracing::warn!(%what, metric = metric.as_str(), error = %e, "gap skipped");
                    skipped.push(Skipped {
                        what: format!("{what} {metric}"),
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    (out, skipped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtkinsonRecord {
    pub year: i32,
    pub characteristic: Characteristic,
    pub locus: Locus,
    pub stratum: Stratum,
    pub epsilon: f64,
    pub atkinson: f64,
}

/// Atkinson index on inverse group mean concentrations, with group shares
/// taken from record weights, for every ε.
pub fn atkinson_table(records: &[ExposureRecord], epsilons: &[f64]) -> (Vec<AtkinsonRecord>, Vec<Skipped>) {
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for (key, recs) in by_characteristic(records) {
        let total = pairwise_sum(&recs.iter().map(|r| r.weight).collect::<Vec<_>>());
        let f: Vec<f64> = recs.iter().map(|r| r.weight / total).collect();
        let y: Vec<f64> = recs.iter().map(|r| 1.0 / r.mean).collect();
        for &eps in epsilons {
            match atkinson(&f, &y, eps) {
                Ok(ai) => out.push(AtkinsonRecord {
                    year: key.0,
                    characteristic: key.1,
                    locus: key.2,
                    stratum: key.3,
                    epsilon: eps,
                    atkinson: ai,
                }),
                Err(e) => {
                    let what = format!("atkinson {} {} {} {} eps={eps}", key.0, key.1, key.2, key.3);
                    tracing::warn!(%what, error = %e, "atkinson index skipped");
                    skipped.push(Skipped {
                        what,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    (out, skipped)
}

/// Tract-level composition of one group.
pub fn bin_tracts(tracts: &[ResolvedTract], index: Option<usize>, stratum: Stratum) -> Vec<BinTract> {
    tracts
        .iter()
        .filter(|t| stratum.admits(t.class) && t.counts.total > 0)
        .map(|t| {
            let count = count_of(t.counts, index) as f64;
            BinTract {
                geoid: t.geoid,
                fraction: count / t.counts.total as f64,
                count,
                concentration: t.value,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinRecord {
    pub year: i32,
    pub group: Group,
    pub locus: Locus,
    pub stratum: Stratum,
    pub n_bins: usize,
    pub bin: Bin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastRecord {
    pub year: i32,
    pub group: Group,
    pub locus: Locus,
    pub stratum: Stratum,
    pub bottom: Option<f64>,
    pub top: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShareRecord {
    pub year: i32,
    pub group: Group,
    pub locus: Locus,
    pub stratum: Stratum,
    pub shares: DecileShares,
}

#[derive(Debug, Clone, Default)]
pub struct CompositionTables {
    pub bins: Vec<BinRecord>,
    pub contrasts: Vec<ContrastRecord>,
    pub shares: Vec<ShareRecord>,
    pub skipped: Vec<Skipped>,
}

/// Percentile-bin curves (for each requested bin count), decile contrasts
/// and concentration-decile shares for every category group of a
/// residence or workplace table.
pub fn composition_tables(
    tracts: &[ResolvedTract],
    layout: &ColumnLayout,
    year: i32,
    locus: Locus,
    strata: &[Stratum],
    bin_counts: &[usize],
) -> CompositionTables {
    let mut out = CompositionTables::default();
    for (group, idx) in groups_of(layout, Group::all()).into_iter().skip(1) {
        for &stratum in strata {
            let bt = bin_tracts(tracts, idx, stratum);
            let ctx = format!("{year} {group} {locus} {stratum}");
            for &n in bin_counts {
                match percentile_bin_curve(&bt, n) {
                    Ok(curve) => {
                        if n == 10 {
                            let delta = decile_contrast(&curve).expect("ten bins");
                            out.contrasts.push(ContrastRecord {
                                year,
                                group: group.clone(),
                                locus,
                                stratum,
                                bottom: curve.bins[0].exposure,
                                top: curve.bins[9].exposure,
                                delta,
                            });
                        }
                        out.bins.extend(curve.bins.into_iter().map(|bin| BinRecord {
                            year,
                            group: group.clone(),
                            locus,
                            stratum,
                            n_bins: n,
                            bin,
                        }));
                    }
                    Err(e) => {
                        tracing::warn!(context = %ctx, n_bins = n, error = %e, "percentile bins skipped");
                        out.skipped.push(Skipped {
                            what: format!("bins {ctx} n_bins={n}"),
                            reason: e.to_string(),
                        });
                    }
                }
            }
            match population_share_by_concentration_decile(&bt) {
                Ok(shares) => out.shares.push(ShareRecord {
                    year,
                    group: group.clone(),
                    locus,
                    stratum,
                    shares,
                }),
                Err(e) => {
                    tracing::warn!(context = %ctx, error = %e, "decile shares skipped");
                    out.skipped.push(Skipped {
                        what: format!("decile shares {ctx}"),
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateRecord {
    pub year: i32,
    pub state: String,
    pub group: Group,
    pub locus: Locus,
    pub value: f64,
}

fn weighted_mean(units: &[&ResolvedTract], index: Option<usize>) -> Option<f64> {
    let w: Vec<f64> = units.iter().map(|t| count_of(t.counts, index) as f64).collect();
    let wv: Vec<f64> = units.iter().zip(&w).map(|(t, w)| w * t.value).collect();
    let total = pairwise_sum(&w);
    (total > 0.0).then(|| pairwise_sum(&wv) / total)
}

/// State-normalised disparity of every group: the group's mean within the
/// state minus the state's all-worker mean, over the national all-worker
/// mean. States are the first two geoid digits of each unit.
pub fn state_table(
    units: &[ResolvedTract],
    layout: &ColumnLayout,
    total: Group,
    year: i32,
    locus: Locus,
) -> Result<Vec<StateRecord>, DisparityError> {
    let all: Vec<&ResolvedTract> = units.iter().collect();
    let national = weighted_mean(&all, None).ok_or(DisparityError::EmptyPopulation)?;
    let mut by_state: BTreeMap<&str, Vec<&ResolvedTract>> = BTreeMap::new();
    for u in units {
        by_state.entry(u.geoid.state()).or_default().push(u);
    }
    let groups = groups_of(layout, total);
    let mut out = Vec::new();
    for (state, members) in by_state {
        let Some(state_mean) = weighted_mean(&members, None) else {
            continue;
        };
        for (group, idx) in &groups {
            if let Some(m) = weighted_mean(&members, *idx) {
                out.push(StateRecord {
                    year,
                    state: state.to_string(),
                    group: group.clone(),
                    locus,
                    value: state_disparity(m, state_mean, national)?,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdRecord {
    pub year: i32,
    pub group: Group,
    pub locus: Locus,
    pub stratum: Stratum,
    pub threshold: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovRecord {
    pub year: i32,
    pub characteristic: Characteristic,
    pub locus: Locus,
    pub stratum: Stratum,
    pub threshold: f64,
    /// `None` when no group exceeds the threshold.
    pub cov: Option<f64>,
}

/// Exceedance shares of every group for every threshold, and their
/// coefficient of variation across the categories of each characteristic.
pub fn threshold_table(
    units: &[ResolvedTract],
    layout: &ColumnLayout,
    total: Group,
    year: i32,
    locus: Locus,
    strata: &[Stratum],
    thresholds: &[f64],
) -> (Vec<ThresholdRecord>, Vec<CovRecord>, Vec<Skipped>) {
    let groups = groups_of(layout, total);
    let mut shares = Vec::new();
    let mut covs = Vec::new();
    let mut skipped = Vec::new();
    for &stratum in strata {
        let sel: Vec<&ResolvedTract> = units.iter().filter(|u| stratum.admits(u.class)).collect();
        let values: Vec<f64> = sel.iter().map(|u| u.value).collect();
        for &t in thresholds {
            let mut per_char: BTreeMap<Characteristic, Vec<f64>> = BTreeMap::new();
            for (group, idx) in &groups {
                let w: Vec<f64> = sel.iter().map(|u| count_of(u.counts, *idx) as f64).collect();
                let Ok(q) = threshold_share(&values, &w, t) else {
                    continue;
                };
                if let Some(c) = group.characteristic {
                    per_char.entry(c).or_default().push(q);
                }
                shares.push(ThresholdRecord {
                    year,
                    group: group.clone(),
                    locus,
                    stratum,
                    threshold: t,
                    q,
                });
            }
            for (c, qs) in per_char {
                match cov_of_shares(&qs) {
                    Ok(v) => covs.push(CovRecord {
                        year,
                        characteristic: c,
                        locus,
                        stratum,
                        threshold: t,
                        cov: Some(v),
                    }),
                    Err(DisparityError::Domain(_)) => covs.push(CovRecord {
                        year,
                        characteristic: c,
                        locus,
                        stratum,
                        threshold: t,
                        cov: None,
                    }),
                    Err(e) => {
                        let what = format!("threshold cov {year} {c} {locus} {stratum} T={t}");
                        tracing::warn!(%what, error = %e, "coefficient of variation skipped");
                        skipped.push(Skipped {
                            what,
                            reason: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    (shares, covs, skipped)
}
