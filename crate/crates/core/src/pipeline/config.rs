//! Run configuration (JSON). Relative paths resolve against the directory
//! holding the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::exposure::{HwWeights, Stratum};
use crate::ingest::{lodes_area_schemas, lodes_od_schemas, GroupSchema};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Surface,
    Exposure,
    Disparity,
    Bias,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Ingest, Stage::Surface, Stage::Exposure, Stage::Disparity, Stage::Bias];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Surface => "surface",
            Stage::Exposure => "exposure",
            Stage::Disparity => "disparity",
            Stage::Bias => "bias",
        }
    }

    /// Stages whose results this stage consumes.
    pub fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Ingest | Stage::Surface => &[],
            Stage::Exposure | Stage::Bias => &[Stage::Ingest, Stage::Surface],
            Stage::Disparity => &[Stage::Ingest, Stage::Surface, Stage::Exposure],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?} (expected ingest, surface, exposure, disparity or bias)"))
    }
}

fn default_bins() -> usize {
    100
}

pub fn default_epsilons() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
}

pub fn default_thresholds() -> Vec<f64> {
    vec![12.0, 10.0, 5.0]
}

fn yes() -> bool {
    true
}

fn all_stages() -> Vec<Stage> {
    Stage::ALL.to_vec()
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub years: Vec<i32>,
    /// Concentration grid per year (ESRI ASCII, or `x,y,value` CSV).
    pub grids: BTreeMap<i32, PathBuf>,
    /// Tract polygons (GeoJSON with a `GEOID` property).
    pub tracts: PathBuf,
    /// Urban-area polygons; without them only the `all` stratum is reported.
    #[serde(default)]
    pub urban_areas: Option<PathBuf>,
    #[serde(default)]
    pub rac: BTreeMap<i32, Vec<PathBuf>>,
    #[serde(default)]
    pub wac: BTreeMap<i32, Vec<PathBuf>>,
    #[serde(default)]
    pub od: BTreeMap<i32, Vec<PathBuf>>,
    #[serde(default)]
    pub hw_weights: HwWeights,
    #[serde(default = "default_bins")]
    pub percentile_bins: usize,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    /// Report urban and rural strata alongside `all`.
    #[serde(default = "yes")]
    pub strata: bool,
    #[serde(default = "all_stages")]
    pub stages: Vec<Stage>,
    /// Overrides the built-in LODES RAC/WAC schemas.
    #[serde(default)]
    pub area_schemas: Option<Vec<GroupSchema>>,
    /// Overrides the built-in LODES OD schemas.
    #[serde(default)]
    pub od_schemas: Option<Vec<GroupSchema>>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(skip)]
    base_dir: PathBuf,
}

impl RunConfig {
    /// A configuration with defaults for everything but the required inputs.
    pub fn new(years: Vec<i32>, grids: BTreeMap<i32, PathBuf>, tracts: PathBuf) -> Self {
        RunConfig {
            years,
            grids,
            tracts,
            urban_areas: None,
            rac: BTreeMap::new(),
            wac: BTreeMap::new(),
            od: BTreeMap::new(),
            hw_weights: HwWeights::default(),
            percentile_bins: default_bins(),
            epsilons: default_epsilons(),
            thresholds: default_thresholds(),
            strata: true,
            stages: all_stages(),
            area_schemas: None,
            od_schemas: None,
            output_dir: default_output(),
            threads: None,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut c: RunConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("invalid config: {e}")))?;
        c.base_dir = base_dir.to_path_buf();
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn set_base_dir(&mut self, dir: &Path) {
        self.base_dir = dir.to_path_buf();
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn area_schemas(&self) -> Vec<GroupSchema> {
        self.area_schemas.clone().unwrap_or_else(lodes_area_schemas)
    }

    pub fn od_schemas(&self) -> Vec<GroupSchema> {
        self.od_schemas.clone().unwrap_or_else(lodes_od_schemas)
    }

    pub fn strata_list(&self) -> Vec<Stratum> {
        if self.strata && self.urban_areas.is_some() {
            vec![Stratum::All, Stratum::Urban, Stratum::Rural]
        } else {
            vec![Stratum::All]
        }
    }

    /// Bin counts for percentile curves: the configured count plus deciles.
    pub fn bin_counts(&self) -> Vec<usize> {
        let mut v = vec![self.percentile_bins];
        if self.percentile_bins != 10 {
            v.push(10);
        }
        v
    }

    /// Stages to execute: `target` and its prerequisites, or every
    /// configured stage and their prerequisites.
    pub fn plan(&self, target: Option<Stage>) -> BTreeSet<Stage> {
        let mut out = BTreeSet::new();
        let roots: Vec<Stage> = match target {
            Some(t) => vec![t],
            None => self.stages.clone(),
        };
        for s in roots {
            out.insert(s);
            out.extend(s.requires().iter().copied());
        }
        out
    }

    /// Every input file the given stages read, as written in the config.
    pub fn inputs(&self, plan: &BTreeSet<Stage>) -> Vec<PathBuf> {
        let mut v = Vec::new();
        if plan.contains(&Stage::Surface) {
            v.push(self.tracts.clone());
            if let Some(u) = &self.urban_areas {
                v.push(u.clone());
            }
            for y in &self.years {
                if let Some(g) = self.grids.get(y) {
                    v.push(g.clone());
                }
            }
        }
        if plan.contains(&Stage::Ingest) {
            for y in &self.years {
                for map in [&self.rac, &self.wac, &self.od] {
                    v.extend(map.get(y).into_iter().flatten().cloned());
                }
            }
        }
        v
    }

    pub fn validate(&self, target: Option<Stage>) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.years.is_empty() {
            return err("years must not be empty".into());
        }
        let uniq: BTreeSet<i32> = self.years.iter().copied().collect();
        if uniq.len() != self.years.len() {
            return err("years contain duplicates".into());
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return err(format!("threshold {t} must be positive"));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
            return err(format!("aversion parameter {e} must be non-negative"));
        }
        if self.percentile_bins < 2 {
            return err(format!("percentile_bins {} must be at least 2", self.percentile_bins));
        }
        if self.threads == Some(0) {
            return err("threads must be at least 1".into());
        }
        self.hw_weights
            .check()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for (name, schemas) in [("area_schemas", &self.area_schemas), ("od_schemas", &self.od_schemas)] {
            if let Some(s) = schemas {
                crate::ingest::ColumnLayout::new(s.clone())
                    .map_err(|e| PipelineError::Config(format!("{name}: {e}")))?;
            }
        }

        let plan = self.plan(target);
        if plan.contains(&Stage::Surface) {
            if let Some(y) = self.years.iter().find(|y| !self.grids.contains_key(y)) {
                return err(format!("no grid configured for year {y}"));
            }
        }
        if plan.contains(&Stage::Exposure) {
            for y in &self.years {
                if [&self.rac, &self.wac, &self.od].iter().all(|m| m.get(y).is_none_or(Vec::is_empty)) {
                    return err(format!("no worker tables configured for year {y}"));
                }
            }
        }
        if plan.contains(&Stage::Bias) {
            if let Some(y) = self.years.iter().find(|y| self.od.get(y).is_none_or(Vec::is_empty)) {
                return err(format!("bias stage needs OD tables for year {y}"));
            }
        }
        for p in self.inputs(&plan) {
            let full = self.resolve(&p);
            if !full.is_file() {
                return err(format!("input file {} does not exist", full.display()));
            }
        }
        Ok(())
    }
}
