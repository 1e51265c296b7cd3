#![allow(dead_code)]

//! Nine-tract fixture: a 6×6 grid of unit cells, 2×2-cell tracts in a 3×3
//! layout, one nodata cell, two states and an urban middle row.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use flate2::write::GzEncoder;
use flate2::Compression;

pub const VALUES: [f64; 9] = [4.0, 6.0, 8.0, 10.0, 11.5, 12.5, 14.0, 16.0, 18.0];

/// (CR01, CR02) residents per tract.
pub const RAC: [(i64, i64); 9] = [(3, 1), (2, 2), (1, 3), (4, 0), (2, 2), (2, 6), (1, 1), (1, 1), (0, 0)];
/// (tract, CR01, CR02) jobs.
pub const WAC: [(usize, i64, i64); 5] = [(1, 2, 6), (3, 4, 0), (4, 0, 4), (5, 4, 4), (7, 6, 2)];
/// (home, work, SE01, SE02) commuters.
pub const OD: [(usize, usize, i64, i64); 7] = [
    (0, 3, 1, 1),
    (1, 4, 2, 0),
    (2, 5, 0, 2),
    (3, 4, 1, 1),
    (6, 7, 2, 2),
    (7, 7, 1, 1),
    (8, 5, 1, 1),
];

pub fn geoid(i: usize) -> String {
    if i < 5 {
        format!("06001{:06}", (i + 1) * 100)
    } else {
        format!("32003{:06}", (i + 1) * 100)
    }
}

fn block(i: usize, n: usize) -> String {
    format!("{}{}", geoid(i), 1000 + n)
}

fn cell_value(x: usize, y: usize) -> Option<f64> {
    let i = (y / 2) * 3 + x / 2;
    let t = VALUES[i];
    let (top, left) = (y % 2 == 1, x % 2 == 0);
    if i == 0 {
        return match (top, left) {
            (true, true) => None,
            (true, false) => Some(t),
            (false, true) => Some(t - 1.0),
            (false, false) => Some(t + 1.0),
        };
    }
    Some(match (top, left) {
        (true, true) => t - 1.0,
        (true, false) => t + 1.0,
        (false, true) => t - 0.5,
        (false, false) => t + 0.5,
    })
}

pub fn grid_text(blank_tract: Option<usize>) -> String {
    let mut s = String::from("ncols 6\nnrows 6\nxllcorner 0\nyllcorner 0\ncellsize 1\nNODATA_value -9999\n");
    for row in 0..6 {
        let y = 5 - row;
        let line: Vec<String> = (0..6)
            .map(|x| {
                let tract = (y / 2) * 3 + x / 2;
                match cell_value(x, y) {
                    Some(v) if Some(tract) != blank_tract => v.to_string(),
                    _ => "-9999".into(),
                }
            })
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

fn square(x: usize, y: usize, side: usize) -> String {
    let (x0, y0, x1, y1) = (x, y, x + side, y + side);
    format!("[[[{x0},{y0}],[{x1},{y0}],[{x1},{y1}],[{x0},{y1}],[{x0},{y0}]]]")
}

fn tracts_geojson() -> String {
    let feats: Vec<String> = (0..9)
        .map(|i| {
            format!(
                r#"{{"type":"Feature","properties":{{"GEOID":"{}"}},"geometry":{{"type":"Polygon","coordinates":{}}}}}"#,
                geoid(i),
                square((i % 3) * 2, (i / 3) * 2, 2)
            )
        })
        .collect();
    format!(r#"{{"type":"FeatureCollection","features":[{}]}}"#, feats.join(","))
}

const URBAN: &str = r#"{"type":"FeatureCollection","features":[{"type":"Feature","properties":{},"geometry":{"type":"Polygon","coordinates":[[[0,2],[6,2],[6,4],[0,4],[0,2]]]}}]}"#;

const CONFIG: &str = r#"{
  "years": [2018],
  "grids": {"2018": "grid.asc"},
  "tracts": "tracts.geojson",
  "urban_areas": "urban.geojson",
  "rac": {"2018": ["rac.csv"]},
  "wac": {"2018": ["wac.csv.gz"]},
  "od": {"2018": ["od_a.csv", "od_b.csv"]},
  "percentile_bins": 3,
  "area_schemas": [
    {"characteristic": "race", "categories": [{"code": "CR01", "label": "first"}, {"code": "CR02", "label": "second"}]}
  ],
  "od_schemas": [
    {"characteristic": "od_income", "categories": [{"code": "SE01", "label": "low"}, {"code": "SE02", "label": "high"}]}
  ],
  "output_dir": "out"
}
"#;

fn rac_csv() -> String {
    let mut s = String::from("h_geocode,C000,CR01,CR02,createdate\n");
    for (i, (a, b)) in RAC.iter().enumerate() {
        if i == 1 {
            // split over two blocks
            s.push_str(&format!("{},2,1,1,20190101\n", block(i, 1)));
            s.push_str(&format!("{},2,1,1,20190101\n", block(i, 2)));
        } else {
            s.push_str(&format!("{},{},{a},{b},20190101\n", block(i, 1), a + b));
        }
    }
    s
}

fn wac_csv() -> String {
    let mut s = String::from("w_geocode,C000,CR01,CR02\n");
    for (i, a, b) in WAC {
        s.push_str(&format!("{},{},{a},{b}\n", block(i, 1), a + b));
    }
    s
}

fn od_csv(rows: &[(usize, usize, i64, i64)]) -> String {
    let mut s = String::from("w_geocode,h_geocode,S000,SE01,SE02\n");
    for (h, w, a, b) in rows {
        s.push_str(&format!("{},{},{},{a},{b}\n", block(*w, 1), block(*h, 1), a + b));
    }
    s
}

/// Writes the fixture into `dir` and returns the config path.
pub fn write_nine_tract(dir: &Path) -> PathBuf {
    write_nine_tract_with(dir, None)
}

/// As [`write_nine_tract`], optionally blanking every cell of one tract.
pub fn write_nine_tract_with(dir: &Path, blank_tract: Option<usize>) -> PathBuf {
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("grid.asc"), grid_text(blank_tract)).unwrap();
    std::fs::write(dir.join("tracts.geojson"), tracts_geojson()).unwrap();
    std::fs::write(dir.join("urban.geojson"), URBAN).unwrap();
    std::fs::write(dir.join("rac.csv"), rac_csv()).unwrap();
    let mut gz = GzEncoder::new(Vec::new(), Compression::default());
    gz.write_all(wac_csv().as_bytes()).unwrap();
    std::fs::write(dir.join("wac.csv.gz"), gz.finish().unwrap()).unwrap();
    std::fs::write(dir.join("od_a.csv"), od_csv(&OD[..4])).unwrap();
    std::fs::write(dir.join("od_b.csv"), od_csv(&OD[4..])).unwrap();
    let path = dir.join("config.json");
    std::fs::write(&path, CONFIG).unwrap();
    path
}

pub type Row = BTreeMap<String, String>;

pub fn read_rows(path: &Path) -> Vec<Row> {
    let mut rdr = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let headers = rdr.headers().unwrap().clone();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            headers.iter().zip(r.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect()
        })
        .collect()
}

pub fn find<'a>(rows: &'a [Row], keys: &[(&str, &str)]) -> &'a Row {
    let hits: Vec<&Row> = rows
        .iter()
        .filter(|r| keys.iter().all(|(k, v)| r.get(*k).map(String::as_str) == Some(*v)))
        .collect();
    assert_eq!(hits.len(), 1, "expected one row matching {keys:?}, found {}", hits.len());
    hits[0]
}

pub fn num(row: &Row, col: &str) -> f64 {
    row[col].parse().unwrap_or_else(|_| panic!("{col}={:?} is not a number", row[col]))
}

/// Every file in `dir`, by name.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}
