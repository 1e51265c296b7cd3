//! CSV report writers. Column orders are fixed; floats use the shortest
//! representation that round-trips, and undefined values are empty fields.

use std::io::Write;

use crate::bias::{BiasRecord, WilcoxonRecord};
use crate::disparity::{
    AtkinsonRecord, BinRecord, ContrastRecord, CovRecord, GapRecord, ShareRecord, StateRecord,
    ThresholdRecord,
};
use crate::exposure::{ErrorRecord, ExposureRecord};

pub const EXPOSURE_HEADER: &[&str] = &["year", "group", "locus", "stratum", "mean", "p10", "p90", "weight"];
pub const ERROR_HEADER: &[&str] = &["year", "group", "stratum", "error", "percent_error"];
pub const GAPS_HEADER: &[&str] = &[
    "year",
    "characteristic",
    "locus",
    "stratum",
    "metric",
    "most_exposed",
    "least_exposed",
    "absolute_diff",
    "percent_diff",
    "ratio",
];
pub const BINS_HEADER: &[&str] = &["year", "group", "locus", "stratum", "n_bins", "bin", "n_tracts", "exposure"];
pub const CONTRAST_HEADER: &[&str] = &["year", "group", "locus", "stratum", "bottom", "top", "delta"];
pub const SHARES_HEADER: &[&str] = &[
    "year",
    "group",
    "locus",
    "stratum",
    "d01",
    "d02",
    "d03",
    "d04",
    "d05",
    "d06",
    "d07",
    "d08",
    "d09",
    "d10",
    "top_minus_bottom",
];
pub const ATKINSON_HEADER: &[&str] = &["year", "characteristic", "locus", "stratum", "epsilon", "atkinson"];
pub const STATE_HEADER: &[&str] = &["year", "state", "group", "locus", "value"];
pub const THRESHOLD_HEADER: &[&str] = &["year", "group", "locus", "stratum", "threshold", "q"];
pub const THRESHOLD_COV_HEADER: &[&str] = &["year", "characteristic", "locus", "stratum", "threshold", "cov"];
pub const BIAS_HEADER: &[&str] = &["year", "group", "stratum", "sigma2", "phi", "omega2", "bias"];
pub const WILCOXON_HEADER: &[&str] = &["year", "group", "stratum", "n_a", "n_b", "u", "z", "p"];

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_rows<W, I>(out: W, header: &[&str], rows: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_exposure<W: Write>(out: W, rows: &[ExposureRecord]) -> csv::Result<()> {
    write_rows(
        out,
        EXPOSURE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.group.to_string(),
                r.locus.to_string(),
                r.stratum.to_string(),
                num(r.mean),
                num(r.p10),
                num(r.p90),
                num(r.weight),
            ]
        }),
    )
}

pub fn write_errors<W: Write>(out: W, rows: &[ErrorRecord]) -> csv::Result<()> {
    write_rows(
        out,
        ERROR_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.group.to_string(),
                r.stratum.to_string(),
                num(r.error),
                opt(r.percent_error),
            ]
        }),
    )
}

pub fn write_gaps<W: Write>(out: W, rows: &[GapRecord]) -> csv::Result<()> {
    write_rows(
        out,
        GAPS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.characteristic.to_string(),
                r.locus.to_string(),
                r.stratum.to_string(),
                r.metric.to_string(),
                r.gap.most_exposed.to_string(),
                r.gap.least_exposed.to_string(),
                num(r.gap.absolute_diff),
                num(r.gap.percent_diff),
                opt(r.gap.ratio),
            ]
        }),
    )
}

pub fn write_bins<W: Write>(out: W, rows: &[BinRecord]) -> csv::Result<()> {
    write_rows(
        out,
        BINS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.group.to_string(),
                r.locus.to_string(),
                r.stratum.to_string(),
                r.n_bins.to_string(),
                r.bin.index.to_string(),
                r.bin.n_tracts.to_string(),
                opt(r.bin.exposure),
            ]
        }),
    )
}

pub fn write_contrasts<W: Write>(out: W, rows: &[ContrastRecord]) -> csv::Result<()> {
    write_rows(
        out,
        CONTRAST_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.group.to_string(),
                r.locus.to_string(),
                r.stratum.to_string(),
                opt(r.bottom),
                opt(r.top),
                opt(r.delta),
            ]
        }),
    )
}

pub fn write_decile_shares<W: Write>(out: W, rows: &[ShareRecord]) -> csv::Result<()> {
    write_rows(
        out,
        SHARES_HEADER,
        rows.iter().map(|r| {
            let mut rec = vec![
                r.year.to_string(),
                r.group.to_string(),
                r.locus.to_string(),
                r.stratum.to_string(),
            ];
            rec.extend(r.shares.shares.iter().map(|s| num(*s)));
            rec.push(num(r.shares.top_minus_bottom));
            rec
        }),
    )
}

pub fn write_atkinson<W: Write>(out: W, rows: &[AtkinsonRecord]) -> csv::Result<()> {
    write_rows(
        out,
        ATKINSON_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.characteristic.to_string(),
                r.locus.to_string(),
                r.stratum.to_string(),
                num(r.epsilon),
                num(r.atkinson),
            ]
        }),
    )
}

pub fn write_state<W: Write>(out: W, rows: &[StateRecord]) -> csv::Result<()> {
    write_rows(
        out,
        STATE_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.state.clone(),
                r.group.to_string(),
                r.locus.to_string(),
                num(r.value),
            ]
        }),
    )
}

pub fn write_threshold<W: Write>(out: W, rows: &[ThresholdRecord]) -> csv::Result<()> {
    write_rows(
        out,
        THRESHOLD_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.group.to_string(),
                r.locus.to_string(),
                r.stratum.to_string(),
                num(r.threshold),
                num(r.q),
            ]
        }),
    )
}

pub fn write_threshold_cov<W: Write>(out: W, rows: &[CovRecord]) -> csv::Result<()> {
    write_rows(
        out,
        THRESHOLD_COV_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.characteristic.to_string(),
                r.locus.to_string(),
                r.stratum.to_string(),
                num(r.threshold),
                opt(r.cov),
            ]
        }),
    )
}

pub fn write_bias<W: Write>(out: W, rows: &[BiasRecord]) -> csv::Result<()> {
    write_rows(
        out,
        BIAS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.group.to_string(),
                r.stratum.to_string(),
                num(r.moments.sigma2),
                num(r.moments.phi),
                num(r.moments.omega2),
                opt(r.bias),
            ]
        }),
    )
}

pub fn write_wilcoxon<W: Write>(out: W, rows: &[WilcoxonRecord]) -> csv::Result<()> {
    write_rows(
        out,
        WILCOXON_HEADER,
        rows.iter().map(|r| {
            vec![
                r.year.to_string(),
                r.group.to_string(),
                r.stratum.to_string(),
                num(r.result.n_a),
                num(r.result.n_b),
                num(r.result.u),
                num(r.result.z),
                num(r.result.p),
            ]
        }),
    )
}
