use std::path::Path;
use std::process::{Command, Output};

fn mobexpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mobexpo"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn mobexpo")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn synth_into(dir: &Path, extra: &[&str]) -> String {
    let d = dir.to_str().unwrap();
    let mut args = vec!["synth", "--seed", "5", "--tracts", "36", "--out", d];
    args.extend_from_slice(extra);
    let out = mobexpo(&args);
    assert!(out.status.success(), "{}", text(&out.stderr));
    dir.join("config.json").to_str().unwrap().to_string()
}

#[test]
fn synth_then_run_writes_every_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), &[]);
    let out = mobexpo(&["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("wrote"));
    for f in [
        "surface.csv",
        "urban.csv",
        "exposure.csv",
        "error.csv",
        "gaps.csv",
        "atkinson.csv",
        "bins.csv",
        "decile_contrast.csv",
        "decile_shares.csv",
        "state_disparity.csv",
        "threshold.csv",
        "threshold_cov.csv",
        "bias.csv",
        "wilcoxon.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join("out").join(f).exists(), "{f} missing");
    }
}

#[test]
fn thread_count_does_not_change_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), &["--gradient", "work_hotspot"]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (o, t) in [(&a, "1"), (&b, "8")] {
        let out = mobexpo(&["run", "-c", &cfg, "--out", o.to_str().unwrap(), "--threads", t]);
        assert!(out.status.success(), "{}", text(&out.stderr));
    }
    for e in std::fs::read_dir(&a).unwrap() {
        let name = e.unwrap().file_name();
        if name == "manifest.json" {
            continue;
        }
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn stage_subcommand_stops_after_its_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), &[]);
    let out = mobexpo(&["exposure", "-c", &cfg]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let o = dir.path().join("out");
    assert!(o.join("exposure.csv").exists());
    assert!(!o.join("gaps.csv").exists());
    assert!(!o.join("bias.csv").exists());

    let out = mobexpo(&["run", "-c", &cfg, "--stage", "bias", "--out", dir.path().join("b").to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(dir.path().join("b/bias.csv").exists());
    assert!(!dir.path().join("b/gaps.csv").exists());
}

#[test]
fn validate_reports_ok_and_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), &[]);
    let out = mobexpo(&["validate", "-c", &cfg]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(text(&out.stdout).starts_with("ok"));

    std::fs::remove_file(dir.path().join("wac_2018.csv")).unwrap();
    let out = mobexpo(&["validate", "-c", &cfg]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("wac_2018.csv"), "{}", text(&out.stderr));
}

#[test]
fn bad_input_fails_with_stage_name() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), &[]);
    let rac = dir.path().join("rac_2018.csv");
    let mut body = std::fs::read_to_string(&rac).unwrap();
    body.push_str("not-a-block,1,1,0,0,0\n");
    std::fs::write(&rac, body).unwrap();
    let out = mobexpo(&["run", "-c", &cfg]);
    assert!(!out.status.success());
    let err = text(&out.stderr);
    assert!(err.contains("stage ingest") && err.contains("rac_2018.csv"), "{err}");
}

#[test]
fn single_group_skips_group_comparisons() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synth_into(dir.path(), &["--groups", "1"]);
    let out = mobexpo(&["run", "-c", &cfg]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let manifest = std::fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("need at least 2 groups"));
    let gaps = std::fs::read_to_string(dir.path().join("out/gaps.csv")).unwrap();
    assert_eq!(gaps.lines().count(), 1);
    assert!(dir.path().join("out/bias.csv").exists());
}

#[test]
fn usage_errors_exit_nonzero() {
    assert!(!mobexpo(&["synth", "--gradient", "steep", "--out", "x"]).status.success());
    assert!(!mobexpo(&["run"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let out = mobexpo(&["synth", "--tracts", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(text(&out.stderr).contains("at least 2 tracts"));
}
