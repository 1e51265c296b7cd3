mod common;

use common::{find, geoid, num, read_rows, snapshot, write_nine_tract, write_nine_tract_with, Row};
use mobexpo_core::pipeline::{run, PipelineError, RunConfig, RunOptions, Stage};

fn run_fixture(threads: usize) -> (tempfile::TempDir, mobexpo_core::pipeline::RunManifest) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&write_nine_tract(dir.path())).unwrap();
    let opts = RunOptions {
        threads: Some(threads),
        ..Default::default()
    };
    let m = run(&cfg, &opts).unwrap();
    (dir, m)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn exposure<'a>(rows: &'a [Row], group: &str, locus: &str, stratum: &str) -> &'a Row {
    find(rows, &[("group", group), ("locus", locus), ("stratum", stratum)])
}

#[test]
fn surface_matches_cell_means() {
    let (dir, m) = run_fixture(2);
    let rows = read_rows(&dir.path().join("out/surface.csv"));
    assert_eq!(rows.len(), 9);
    for (i, v) in common::VALUES.iter().enumerate() {
        let r = find(&rows, &[("geoid", geoid(i).as_str())]);
        assert_eq!(num(r, "pm25"), *v, "tract {i}");
        assert_eq!(r["year"], "2018");
    }
    let urban = read_rows(&dir.path().join("out/urban.csv"));
    let n_urban = urban.iter().filter(|r| r.values().any(|v| v == "urban")).count();
    assert_eq!(n_urban, 3);
    assert!(m.excluded_tracts[&2018].is_empty());
    assert_eq!(m.dropped_weight_total, 0);
}

#[test]
fn home_and_work_exposures_match_workbook() {
    let (dir, _) = run_fixture(3);
    let rows = read_rows(&dir.path().join("out/exposure.csv"));
    // (group, locus, stratum, mean, p10, p90, weight)
    let book: &[(&str, &str, &str, f64, f64, f64, f64)] = &[
        ("all", "H", "all", 9.9375, 4.0, 14.0, 32.0),
        ("all", "H", "urban", 11.625, 10.0, 12.5, 16.0),
        ("all", "H", "rural", 8.25, 4.0, 16.0, 16.0),
        ("race:CR01", "H", "all", 9.375, 4.0, 14.0, 16.0),
        ("race:CR01", "H", "urban", 11.0, 10.0, 12.5, 8.0),
        ("race:CR01", "H", "rural", 7.75, 4.0, 16.0, 8.0),
        ("race:CR02", "H", "all", 10.5, 6.0, 14.0, 16.0),
        ("race:CR02", "H", "urban", 12.25, 11.5, 12.5, 8.0),
        ("race:CR02", "H", "rural", 8.75, 4.0, 16.0, 8.0),
        ("all", "W", "all", 11.3125, 6.0, 16.0, 32.0),
        ("all", "W", "urban", 11.625, 10.0, 12.5, 16.0),
        ("all", "W", "rural", 11.0, 6.0, 16.0, 16.0),
        ("race:CR01", "W", "all", 12.375, 6.0, 16.0, 16.0),
        ("race:CR01", "W", "urban", 11.25, 10.0, 12.5, 8.0),
        ("race:CR01", "W", "rural", 13.5, 6.0, 16.0, 8.0),
        ("race:CR02", "W", "all", 10.25, 6.0, 16.0, 16.0),
        ("race:CR02", "W", "urban", 12.0, 11.5, 12.5, 8.0),
        ("race:CR02", "W", "rural", 8.5, 6.0, 16.0, 8.0),
    ];
    for &(g, l, s, mean, p10, p90, w) in book {
        let r = exposure(&rows, g, l, s);
        assert_eq!(
            (num(r, "mean"), num(r, "p10"), num(r, "p90"), num(r, "weight")),
            (mean, p10, p90, w),
            "{g} {l} {s}"
        );
    }
}

#[test]
fn od_exposures_and_error_match_workbook() {
    let (dir, _) = run_fixture(4);
    let rows = read_rows(&dir.path().join("out/exposure.csv"));
    let errors = read_rows(&dir.path().join("out/error.csv"));
    // (group, stratum, H, W, HW, error, percent error, weight)
    let book: &[(&str, &str, f64, f64, f64, f64, f64, f64)] = &[
        ("od_all", "all", 11.25, 13.25, 11.662, -0.412, -3.6622222222222223, 16.0),
        ("od_all", "urban", 10.0, 11.5, 10.309, -0.309, -3.09, 2.0),
        ("od_all", "rural", 80.0 / 7.0, 13.5, 11.855285714285714, -0.4267142857142857, -3.73375, 14.0),
        ("od_income:SE01", "all", 11.0, 13.125, 11.43775, -0.43775, -3.9795454545454545, 8.0),
        ("od_income:SE02", "all", 11.5, 13.375, 11.88625, -0.38625, -3.358695652173913, 8.0),
        ("od_income:SE02", "rural", 82.0 / 7.0, 13.642857142857142, 12.111571428571429, -0.3972857142857143, -3.3914634146341465, 7.0),
    ];
    for &(g, s, h, w, hw, err, pct, weight) in book {
        let rh = exposure(&rows, g, "H", s);
        let rw = exposure(&rows, g, "W", s);
        let rhw = exposure(&rows, g, "HW", s);
        assert!(close(num(rh, "mean"), h), "{g} {s} H {}", rh["mean"]);
        assert!(close(num(rw, "mean"), w), "{g} {s} W {}", rw["mean"]);
        assert!(close(num(rhw, "mean"), hw), "{g} {s} HW {}", rhw["mean"]);
        assert_eq!(num(rhw, "weight"), weight);
        let e = find(&errors, &[("group", g), ("stratum", s)]);
        assert!(close(num(e, "error"), err), "{g} {s} error {}", e["error"]);
        assert!(close(num(e, "percent_error"), pct), "{g} {s} pct {}", e["percent_error"]);
    }
    let all_hw = exposure(&rows, "od_all", "HW", "all");
    assert!(close(num(all_hw, "p10"), 5.236));
    assert!(close(num(all_hw, "p90"), 16.867));
}

#[test]
fn threshold_and_state_tables_match_workbook() {
    let (dir, _) = run_fixture(1);
    let q = read_rows(&dir.path().join("out/threshold.csv"));
    let book: &[(&str, &str, f64)] = &[
        ("all", "12", 37.5),
        ("all", "10", 50.0),
        ("all", "5", 87.5),
        ("race:CR01", "12", 25.0),
        ("race:CR01", "10", 37.5),
        ("race:CR01", "5", 81.25),
        ("race:CR02", "12", 50.0),
        ("race:CR02", "10", 62.5),
        ("race:CR02", "5", 93.75),
    ];
    for &(g, t, want) in book {
        let r = find(&q, &[("group", g), ("locus", "H"), ("stratum", "all"), ("threshold", t)]);
        assert_eq!(num(r, "q"), want, "{g} T={t}");
    }
    let cov = read_rows(&dir.path().join("out/threshold_cov.csv"));
    let r = find(&cov, &[("locus", "H"), ("stratum", "all"), ("threshold", "12")]);
    // shares 25 and 50: population sd 12.5 over mean 37.5
    assert!(close(num(r, "cov"), 1.0 / 3.0));

    let st = read_rows(&dir.path().join("out/state_disparity.csv"));
    let book: &[(&str, &str, f64)] = &[
        ("06", "all", 0.0),
        ("06", "race:CR01", 4.0 / 2385.0),
        ("06", "race:CR02", -2.0 / 795.0),
        ("32", "all", 0.0),
        ("32", "race:CR01", 20.0 / 477.0),
        ("32", "race:CR02", -10.0 / 477.0),
    ];
    for &(s, g, want) in book {
        let r = find(&st, &[("state", s), ("group", g), ("locus", "H")]);
        assert!((num(r, "value") - want).abs() < 1e-15, "{s} {g} {}", r["value"]);
    }
}

#[test]
fn gaps_name_the_extreme_groups() {
    let (dir, _) = run_fixture(2);
    let gaps = read_rows(&dir.path().join("out/gaps.csv"));
    let r = find(
        &gaps,
        &[("characteristic", "race"), ("locus", "H"), ("stratum", "all"), ("metric", "mean")],
    );
    assert_eq!(r["most_exposed"], "race:CR02");
    assert_eq!(r["least_exposed"], "race:CR01");
    assert_eq!(num(r, "absolute_diff"), 1.125);
    assert!(close(num(r, "percent_diff"), 100.0 * 1.125 / 9.9375));
    assert!(close(num(r, "ratio"), 10.5 / 9.375));
}

#[test]
fn byte_identical_across_thread_counts() {
    let (d1, m1) = run_fixture(1);
    let base = snapshot(&d1.path().join("out"));
    for t in [4, 8] {
        let (d, m) = run_fixture(t);
        let snap = snapshot(&d.path().join("out"));
        assert_eq!(base.keys().collect::<Vec<_>>(), snap.keys().collect::<Vec<_>>());
        for (name, bytes) in &base {
            if name != "manifest.json" {
                assert_eq!(bytes, &snap[name], "{name} differs with {t} threads");
            }
        }
        assert_eq!(m1.without_timings(), m.without_timings());
    }
}

#[test]
fn manifest_records_outputs_and_inputs() {
    let (dir, m) = run_fixture(2);
    assert_eq!(m.inputs.len(), 7);
    assert!(m.inputs.contains_key("wac.csv.gz"));
    for name in ["exposure.csv", "bias.csv", "wilcoxon.csv", "gaps.csv", "atkinson.csv"] {
        let bytes = std::fs::read(dir.path().join("out").join(name)).unwrap();
        assert_eq!(m.outputs[name], mobexpo_core::io::sha256_bytes(&bytes), "{name}");
    }
    assert_eq!(m.stage(Stage::Exposure).unwrap().rows["exposure.csv"], 9 + 9 + 27);
    let text = std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    let parsed: mobexpo_core::pipeline::RunManifest = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, m);
}

#[test]
fn uncovered_tract_is_dropped_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&write_nine_tract_with(dir.path(), Some(8))).unwrap();
    let m = run(&cfg, &RunOptions::default()).unwrap();
    assert_eq!(m.excluded_tracts[&2018], vec![geoid(8)]);
    // tract 8 has no residents or jobs; one OD link of 2 commuters lives there
    assert_eq!(m.dropped["2018/rac"].workers, 0);
    assert_eq!(m.dropped["2018/od"].workers, 2);
    assert_eq!(m.dropped["2018/od"].units, 1);
    assert_eq!(m.dropped_weight_total, 2);
    let rows = read_rows(&dir.path().join("out/exposure.csv"));
    assert_eq!(num(exposure(&rows, "od_all", "H", "all"), "weight"), 14.0);
}

#[test]
fn stage_gating() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&write_nine_tract(dir.path())).unwrap();
    let m = run(
        &cfg,
        &RunOptions {
            target: Some(Stage::Surface),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(m.stages.len(), 1);
    assert!(!dir.path().join("out/rac_tracts_2018.csv").exists());
    assert!(dir.path().join("out/surface.csv").exists());
    assert!(!dir.path().join("out/exposure.csv").exists());

    cfg.od.clear();
    std::fs::remove_file(dir.path().join("od_a.csv")).unwrap();
    cfg.stages = vec![Stage::Ingest, Stage::Surface, Stage::Exposure, Stage::Disparity];
    let out = dir.path().join("no_od");
    run(
        &cfg,
        &RunOptions {
            output_dir: Some(out.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(out.join("gaps.csv").exists());
    assert!(!out.join("bias.csv").exists());
    assert!(!out.join("error.csv").exists());
}

#[test]
fn bad_block_row_names_stage_and_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::load(&write_nine_tract(dir.path())).unwrap();
    let mut text = std::fs::read_to_string(dir.path().join("od_b.csv")).unwrap();
    text = text.replacen(",4,2,2\n", ",5,2,2\n", 1);
    std::fs::write(dir.path().join("od_b.csv"), text).unwrap();
    match run(&cfg, &RunOptions::default()) {
        Err(PipelineError::Stage { stage, input, message }) => {
            assert_eq!(stage, Stage::Ingest);
            assert!(input.contains("od_b.csv"), "{input}");
            assert!(message.contains("od_income"), "{message}");
        }
        other => panic!("expected an ingest error, got {other:?}"),
    }
}

#[test]
fn empty_years_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::load(&write_nine_tract(dir.path())).unwrap();
    cfg.years.clear();
    assert!(matches!(run(&cfg, &RunOptions::default()), Err(PipelineError::Config(_))));
}

#[test]
fn bias_tables_are_written() {
    let (dir, _) = run_fixture(2);
    let bias = read_rows(&dir.path().join("out/bias.csv"));
    let r = find(&bias, &[("group", "od_all"), ("stratum", "all")]);
    let (s2, phi, w2) = (num(r, "sigma2"), num(r, "phi"), num(r, "omega2"));
    assert!(phi * phi <= s2 * w2 * (1.0 + 1e-9));
    assert!(close(num(r, "bias"), (s2 + phi) / (s2 + 2.0 * phi + w2)));
    let wx = read_rows(&dir.path().join("out/wilcoxon.csv"));
    let r = find(&wx, &[("group", "od_all"), ("stratum", "all")]);
    assert_eq!(num(r, "n_a"), 16.0);
    let p = num(r, "p");
    assert!(p > 0.0 && p <= 1.0);
}
