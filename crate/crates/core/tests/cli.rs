use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

const BIN: &str = env!("CARGO_BIN_EXE_linetrace");

fn small_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "schema_version": 1,
        "seed": 5,
        "corpus": { "dir": dir.join("corpus"), "count": 2, "phantom": { "size": [256, 256] } },
        "results_dir": dir.join("results"),
        "report_dir": dir.join("report"),
        "pipeline": {
            "stage1": { "backend": { "kind": "oracle", "params": {} } },
            "stage2": { "patch_count": 20, "patch_size": [128, 128] },
            "working_size": [256, 256]
        }
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn linetrace(args: &[&str], env_seed: Option<&str>) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env_remove("LINETRACE_SEED");
    if let Some(s) = env_seed {
        cmd.env("LINETRACE_SEED", s);
    }
    cmd.output().unwrap()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn error_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str::<Value>(line).unwrap_or_else(|e| panic!("not JSON ({e}): {text}"))["error"].clone()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_config_key_is_a_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"schema_version": 1, "bogus_key": 3}"#).unwrap();
    let out = linetrace(&["--config", s(&cfg), "synth", "--out", s(&dir.path().join("c"))], None);
    let err = error_json(&out);
    assert!(err["kind"].as_str().is_some_and(|k| !k.is_empty()));
    assert!(err["message"].as_str().unwrap().contains("bogus_key"), "{err}");
}

#[test]
fn wrong_schema_version_is_a_param_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("old.json");
    fs::write(&cfg, r#"{"schema_version": 99}"#).unwrap();
    let err = error_json(&linetrace(&["--config", s(&cfg), "synth"], None));
    assert_eq!(err["kind"], "param");
}

#[test]
fn eval_of_empty_results_fails_but_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let report = dir.path().join("rep");
    let out = linetrace(
        &["--config", s(&cfg), "eval", "--results", s(&empty), "--out", s(&report)],
        None,
    );
    let err = error_json(&out);
    assert_eq!(err["kind"], "param");
    assert_eq!(err["stage"], Value::Null);
    let echoed = read_json(&report.join("config.resolved.json"));
    assert_eq!(echoed["seed"], 5);
}

#[test]
fn seed_comes_from_flag_then_env_then_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let synth = |name: &str, flag: Option<&str>, env: Option<&str>| {
        let out_dir = dir.path().join(name);
        let mut args = vec!["--config", s(&cfg)];
        if let Some(f) = flag {
            args.extend(["--seed", f]);
        }
        let out_s = out_dir.to_str().unwrap().to_string();
        args.extend(["synth", "--out", &out_s]);
        ok(&linetrace(&args, env));
        (
            read_json(&out_dir.join("config.resolved.json"))["seed"].clone(),
            fs::read(out_dir.join("manifest.json")).unwrap(),
        )
    };
    let (cfg_seed, base) = synth("a", None, None);
    assert_eq!(cfg_seed, 5);
    let (env_seed, from_env) = synth("b", None, Some("9"));
    assert_eq!(env_seed, 9);
    assert_ne!(from_env, base);
    let (flag_seed, from_flag) = synth("c", Some("9"), Some("123"));
    assert_eq!(flag_seed, 9);
    assert_eq!(from_flag, from_env);
}

#[test]
fn malformed_seed_env_is_rejected() {
    let err = error_json(&linetrace(&["synth", "--out", "/nonexistent/never"], Some("twelve")));
    assert_eq!(err["kind"], "param");
}

#[test]
fn zero_jobs_is_rejected() {
    let err = error_json(&linetrace(&["--jobs", "0", "synth", "--out", "/nonexistent/never"], None));
    assert_eq!(err["kind"], "param");
}

#[test]
fn run_eval_ablate_produce_the_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let c = s(&cfg);
    ok(&linetrace(&["--config", c, "synth"], None));
    ok(&linetrace(&["--config", c, "run"], None));

    let results = dir.path().join("results");
    assert!(results.join("config.resolved.json").is_file());
    let manifest = read_json(&dir.path().join("corpus/manifest.json"));
    for entry in manifest["entries"].as_array().unwrap() {
        let id = entry["id"].as_str().unwrap();
        let d = results.join(id);
        for f in ["stage1.png", "stage2.png", "stage3.png", "final.png", "overlay.png", "result.json"] {
            assert!(d.join(f).is_file(), "{id}/{f} missing");
        }
        let img = image::open(dir.path().join("corpus").join(entry["image"].as_str().unwrap())).unwrap();
        let overlay = image::open(d.join("overlay.png")).unwrap();
        assert_eq!((overlay.width(), overlay.height()), (img.width(), img.height()));
        let rec = read_json(&d.join("result.json"));
        assert_eq!(rec["id"], id);
        assert_eq!(rec["stages"], "{1,2,3}");
        assert!(rec.get("timings").is_none(), "timings are opt-in");
        assert!(rec.get("error").is_none());
    }

    ok(&linetrace(&["--config", c, "eval"], None));
    let report = dir.path().join("report");
    let csv = fs::read_to_string(report.join("report.csv")).unwrap();
    assert!(csv.starts_with("id,rmse_px,rmse_mm,dsc,components,no_mfp,tip_row,tip_col,stage_times"));
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(read_json(&report.join("report.json"))["n"], 2);
    assert!(report.join("baseline/report.json").is_file());
    assert!(report.join("paired.csv").is_file());

    let abl = dir.path().join("ablation");
    ok(&linetrace(&["--config", c, "ablate", "--out", s(&abl)], None));
    let rows = fs::read_to_string(abl.join("ablation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 5, "header plus four stage sets:\n{rows}");
    assert_eq!(read_json(&abl.join("ablation.json")).as_array().unwrap().len(), 4);
}

#[test]
fn reconnect_command_joins_a_broken_bar() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = image::GrayImage::new(40, 120);
    for y in (5..50).chain(70..110) {
        for x in 18..22 {
            m.put_pixel(x, y, image::Luma([255]));
        }
    }
    let input = dir.path().join("mask.png");
    m.save(&input).unwrap();
    let out = dir.path().join("out");
    ok(&linetrace(&["reconnect", "--input", s(&input), "--out", s(&out)], None));
    let joined = image::open(out.join("reconnected.png")).unwrap().to_luma8();
    assert!((50..70).all(|y| joined.get_pixel(20, y)[0] > 0));
    let tip = read_json(&out.join("tip.json"));
    assert_eq!(tip["point"]["row"], 109, "{tip}");
}
