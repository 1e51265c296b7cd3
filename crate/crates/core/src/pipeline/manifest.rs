use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Stage;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DroppedWeight {
    /// Workers whose tract (or OD pair end) had no concentration.
    pub workers: i64,
    /// Tracts or OD pairs they came from.
    pub units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    /// Data rows written per output file.
    pub rows: BTreeMap<String, usize>,
    /// Wall-clock time; the only field that differs between identical runs.
    pub seconds: f64,
}

/// Summary of one run, written as `manifest.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    /// SHA-256 of the configuration as parsed.
    pub config_hash: String,
    /// SHA-256 of each input file, keyed by its configured path.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    /// Keyed by `year/source` (`rac`, `wac` or `od`).
    pub dropped: BTreeMap<String, DroppedWeight>,
    pub dropped_weight_total: i64,
    /// Tracts without grid coverage, per year.
    pub excluded_tracts: BTreeMap<i32, Vec<String>>,
    /// SHA-256 of each report file.
    pub outputs: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn record_dropped(&mut self, key: String, workers: i64, units: usize) {
        self.dropped.insert(key, DroppedWeight { workers, units });
        self.dropped_weight_total = self.dropped.values().map(|d| d.workers).sum();
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    /// The manifest with timings zeroed, for comparing runs.
    pub fn without_timings(&self) -> RunManifest {
        let mut m = self.clone();
        for s in &mut m.stages {
            s.seconds = 0.0;
        }
        m
    }
}
