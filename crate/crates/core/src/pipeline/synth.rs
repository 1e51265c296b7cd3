//! Deterministic synthetic inputs: a concentration grid, square tracts in two
//! states, an urban core and block-level OD/RAC/WAC tables that agree.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geojson::write_features;
use crate::geometry::{Polygon, Rect};
use crate::ingest::{Category, Characteristic, GroupSchema};
use crate::raster::ConcentrationGrid;

use super::{PipelineError, RunConfig};

const CELLS_PER_TRACT: usize = 4;
const BLOCKS_PER_TRACT: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gradient {
    /// The same concentration everywhere.
    Uniform,
    /// Rising from west to east.
    Linear,
    /// A central peak that also attracts most jobs.
    WorkHotspot,
}

impl FromStr for Gradient {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Gradient::Uniform),
            "linear" => Ok(Gradient::Linear),
            "work_hotspot" | "work-hotspot" | "hotspot" => Ok(Gradient::WorkHotspot),
            _ => Err(format!("unknown gradient {s:?} (uniform, linear, work_hotspot)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_tracts: usize,
    pub n_groups: usize,
    pub gradient: Gradient,
    pub year: i32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 1,
            n_tracts: 144,
            n_groups: 4,
            gradient: Gradient::Linear,
            year: 2018,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dir: PathBuf,
    pub config_path: PathBuf,
    pub grid_path: PathBuf,
    pub tracts_path: PathBuf,
    pub urban_path: PathBuf,
    pub rac_path: PathBuf,
    pub wac_path: PathBuf,
    pub od_path: PathBuf,
    pub workers: i64,
}

struct Layout {
    cols: usize,
    rows: usize,
}

impl Layout {
    fn new(n: usize) -> Self {
        let cols = (n as f64).sqrt().ceil() as usize;
        Layout {
            cols,
            rows: n.div_ceil(cols),
        }
    }

    fn width(&self) -> f64 {
        (self.cols * CELLS_PER_TRACT) as f64
    }

    fn height(&self) -> f64 {
        (self.rows * CELLS_PER_TRACT) as f64
    }

    fn tract_rect(&self, i: usize) -> Rect {
        let s = CELLS_PER_TRACT as f64;
        let (r, c) = (i / self.cols, i % self.cols);
        Rect::new(c as f64 * s, r as f64 * s, (c + 1) as f64 * s, (r + 1) as f64 * s)
    }
}

fn concentration(g: Gradient, x: f64, y: f64, layout: &Layout) -> f64 {
    let (w, h) = (layout.width(), layout.height());
    match g {
        Gradient::Uniform => 10.0,
        Gradient::Linear => 4.0 + 12.0 * x / w,
        Gradient::WorkHotspot => {
            let s = 0.2 * w.max(h);
            let d2 = (x - w / 2.0).powi(2) + (y - h / 2.0).powi(2);
            6.0 + 14.0 * (-d2 / (2.0 * s * s)).exp()
        }
    }
}

fn geoid(n_tracts: usize, i: usize) -> String {
    let state = if i < n_tracts / 2 { "06" } else { "32" };
    format!("{state}001{i:06}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Synth(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> PipelineError + '_ {
    move |e| io_err(path, e)
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

/// Writes a complete synthetic input set plus `config.json` into `dir`.
pub fn synth(spec: &SynthSpec, dir: &Path) -> Result<SynthOutput, PipelineError> {
    if spec.n_tracts < 2 {
        return Err(PipelineError::Synth("need at least 2 tracts".into()));
    }
    if !(1..=20).contains(&spec.n_groups) {
        return Err(PipelineError::Synth("groups must be between 1 and 20".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let layout = Layout::new(spec.n_tracts);
    let year = spec.year;

    // grid, row 0 at the top
    let (nr, nc) = (layout.rows * CELLS_PER_TRACT, layout.cols * CELLS_PER_TRACT);
    let mut values = Vec::with_capacity(nr * nc);
    for r in 0..nr {
        for c in 0..nc {
            let (x, y) = (c as f64 + 0.5, (nr - 1 - r) as f64 + 0.5);
            let mut v = concentration(spec.gradient, x, y, &layout);
            if spec.gradient != Gradient::Uniform {
                v += rng.random_range(-0.25..0.25);
            }
            values.push(Some(v));
        }
    }
    let grid = ConcentrationGrid::new(0.0, 0.0, 1.0, 1.0, nr, nc, values)
        .map_err(|e| PipelineError::Synth(e.to_string()))?;
    let grid_name = format!("grid_{year}.asc");
    let grid_path = dir.join(&grid_name);
    grid.write_esri_ascii(create(&grid_path)?)
        .map_err(|e| io_err(&grid_path, e))?;

    // tracts and urban core
    let ids: Vec<String> = (0..spec.n_tracts).map(|i| geoid(spec.n_tracts, i)).collect();
    let polys: Vec<Polygon> = (0..spec.n_tracts).map(|i| Polygon::rect(&layout.tract_rect(i))).collect();
    let tracts_path = dir.join("tracts.geojson");
    let features: Vec<(Option<&str>, &[Polygon])> = ids
        .iter()
        .zip(&polys)
        .map(|(g, p)| (Some(g.as_str()), std::slice::from_ref(p)))
        .collect();
    write_features(create(&tracts_path)?, &features).map_err(|e| io_err(&tracts_path, e))?;
    let (w, h) = (layout.width(), layout.height());
    let core = Polygon::rect(&Rect::new(0.25 * w, 0.25 * h, 0.75 * w, 0.75 * h));
    let urban_path = dir.join("urban.geojson");
    write_features(create(&urban_path)?, &[(None, std::slice::from_ref(&core))])
        .map_err(|e| io_err(&urban_path, e))?;

    // workers
    let n_blocks = spec.n_tracts * BLOCKS_PER_TRACT;
    let block_id = |b: usize| format!("{}{:04}", ids[b / BLOCKS_PER_TRACT], 1000 + b % BLOCKS_PER_TRACT);
    let centre = |b: usize| {
        let r = layout.tract_rect(b / BLOCKS_PER_TRACT);
        ((r.min_x + r.max_x) / 2.0, (r.min_y + r.max_y) / 2.0)
    };
    let attraction: Vec<f64> = (0..n_blocks)
        .map(|b| match spec.gradient {
            Gradient::WorkHotspot => {
                let (x, y) = centre(b);
                (0.4 * concentration(spec.gradient, x, y, &layout)).exp()
            }
            _ => 1.0,
        })
        .collect();
    let work_pick = WeightedIndex::new(&attraction).map_err(|e| PipelineError::Synth(e.to_string()))?;
    let g = spec.n_groups;
    let mut od: BTreeMap<(usize, usize), Vec<i64>> = BTreeMap::new();
    for home in 0..n_blocks {
        let (x, _) = centre(home);
        let u = 2.0 * x / w - 1.0;
        let group_w: Vec<f64> = (0..g)
            .map(|k| {
                let rank = if g > 1 { k as f64 / (g - 1) as f64 - 0.5 } else { 0.0 };
                (1.5 * rank * u).exp()
            })
            .collect();
        let group_pick = WeightedIndex::new(&group_w).map_err(|e| PipelineError::Synth(e.to_string()))?;
        let n = rng.random_range(40..160);
        for _ in 0..n {
            let k = group_pick.sample(&mut rng);
            let work = work_pick.sample(&mut rng);
            od.entry((home, work)).or_insert_with(|| vec![0; g])[k] += 1;
        }
    }
    let mut rac = vec![vec![0i64; g]; n_blocks];
    let mut wac = vec![vec![0i64; g]; n_blocks];
    for ((hb, wb), c) in &od {
        for k in 0..g {
            rac[*hb][k] += c[k];
            wac[*wb][k] += c[k];
        }
    }

    let race: Vec<String> = (1..=g).map(|k| format!("CR{k:02}")).collect();
    let income: Vec<String> = (1..=g).map(|k| format!("SE{k:02}")).collect();

    let rac_name = format!("rac_{year}.csv");
    let wac_name = format!("wac_{year}.csv");
    let od_name = format!("od_{year}.csv");
    for (name, key, table) in [(&rac_name, "h_geocode", &rac), (&wac_name, "w_geocode", &wac)] {
        let path = dir.join(name);
        let mut wr = csv::Writer::from_writer(create(&path)?);
        let mut header = vec![key.to_string(), "C000".to_string()];
        header.extend(race.iter().cloned());
        wr.write_record(&header).map_err(csv_err(&path))?;
        for (b, c) in table.iter().enumerate() {
            let total: i64 = c.iter().sum();
            if total == 0 {
                continue;
            }
            let mut rec = vec![block_id(b), total.to_string()];
            rec.extend(c.iter().map(|v| v.to_string()));
            wr.write_record(&rec).map_err(csv_err(&path))?;
        }
        wr.flush().map_err(|e| io_err(&path, e))?;
    }
    let od_path = dir.join(&od_name);
    {
        let mut wr = csv::Writer::from_writer(create(&od_path)?);
        let mut header = vec!["w_geocode".to_string(), "h_geocode".to_string(), "S000".to_string()];
        header.extend(income.iter().cloned());
        wr.write_record(&header).map_err(csv_err(&od_path))?;
        for ((hb, wb), c) in &od {
            let mut rec = vec![block_id(*wb), block_id(*hb), c.iter().sum::<i64>().to_string()];
            rec.extend(c.iter().map(|v| v.to_string()));
            wr.write_record(&rec).map_err(csv_err(&od_path))?;
        }
        wr.flush().map_err(|e| io_err(&od_path, e))?;
    }

    let schema = |ch, codes: &[String]| GroupSchema {
        characteristic: ch,
        categories: codes
            .iter()
            .map(|c| Category {
                code: c.clone(),
                label: format!("synthetic group {c}"),
            })
            .collect(),
        complete: true,
    };
    let mut cfg = RunConfig::new(
        vec![year],
        BTreeMap::from([(year, PathBuf::from(&grid_name))]),
        PathBuf::from("tracts.geojson"),
    );
    cfg.urban_areas = Some(PathBuf::from("urban.geojson"));
    cfg.rac.insert(year, vec![PathBuf::from(&rac_name)]);
    cfg.wac.insert(year, vec![PathBuf::from(&wac_name)]);
    cfg.od.insert(year, vec![PathBuf::from(&od_name)]);
    cfg.area_schemas = Some(vec![schema(Characteristic::Race, &race)]);
    cfg.od_schemas = Some(vec![schema(Characteristic::OdIncome, &income)]);
    let config_path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&cfg).map_err(|e| PipelineError::Synth(e.to_string()))?;
    text.push('\n');
    std::fs::write(&config_path, text).map_err(|e| io_err(&config_path, e))?;

    Ok(SynthOutput {
        dir: dir.to_path_buf(),
        config_path,
        grid_path,
        tracts_path,
        urban_path,
        rac_path: dir.join(rac_name),
        wac_path: dir.join(wac_name),
        od_path,
        workers: od.values().flatten().sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = SynthSpec::default();
        let oa = synth(&spec, a.path()).unwrap();
        let ob = synth(&spec, b.path()).unwrap();
        assert_eq!(oa.workers, ob.workers);
        for name in ["grid_2018.asc", "tracts.geojson", "rac_2018.csv", "wac_2018.csv", "od_2018.csv", "config.json"] {
            let x = std::fs::read(a.path().join(name)).unwrap();
            let y = std::fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
    }

    #[test]
    fn config_loads_and_validates() {
        let d = tempfile::tempdir().unwrap();
        let out = synth(&SynthSpec::default(), d.path()).unwrap();
        let cfg = RunConfig::load(&out.config_path).unwrap();
        cfg.validate(None).unwrap();
    }

    #[test]
    fn rejects_bad_specs() {
        let d = tempfile::tempdir().unwrap();
        let mut s = SynthSpec::default();
        s.n_tracts = 1;
        assert!(synth(&s, d.path()).is_err());
        s.n_tracts = 4;
        s.n_groups = 0;
        assert!(synth(&s, d.path()).is_err());
    }

    #[test]
    fn gradient_names() {
        assert_eq!("work_hotspot".parse::<Gradient>().unwrap(), Gradient::WorkHotspot);
        assert!("steep".parse::<Gradient>().is_err());
    }
}
