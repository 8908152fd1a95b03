//! Runs the binary end to end and checks outputs and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cheapseg(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cheapseg"))
        .args(args)
        .current_dir(dir)
        .env("CHEAPSEG_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

const SPEC: &str = r#"{
  "classes": [
    {"name": "sky", "color": [90, 150, 230], "texture": {"kind": "flat"}},
    {"name": "grass", "color": [40, 170, 40], "texture": {"kind": "stripes", "period": 2}},
    {"name": "wall", "color": [200, 200, 190], "texture": {"kind": "checker", "period": 4}},
    {"name": "road", "color": [70, 70, 70], "texture": {"kind": "noise", "amplitude": 12}}
  ],
  "categories": [
    {"name": "field", "slots": [
      {"class": 0, "placement": {"kind": "band", "weight": 1.0}},
      {"class": 1, "placement": {"kind": "band", "weight": 1.0}}]},
    {"name": "street", "slots": [
      {"class": 2, "placement": {"kind": "band", "weight": 1.0}},
      {"class": 3, "placement": {"kind": "band", "weight": 1.0}}]}
  ],
  "train": 12, "val": 4, "test": 4, "width": 24, "height": 24, "pixel_noise": 3
}"#;

const CONFIG: &str =
    r#"{"stf": {"patch_size": 7, "trees": 2, "candidates": 40}, "dstf": {"cap_fraction": 0.5}}"#;

#[test]
fn full_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("spec.json"), SPEC).unwrap();
    fs::write(d.join("config.json"), CONFIG).unwrap();

    ok(&cheapseg(
        &[
            "gen-synth",
            "--spec",
            "spec.json",
            "--out",
            "data",
            "--seed",
            "3",
        ],
        d,
    ));
    assert!(d.join("data/manifest.json").is_file());

    ok(&cheapseg(
        &[
            "--config",
            "config.json",
            "train",
            "--manifest",
            "data/manifest.json",
            "--out",
            "model",
        ],
        d,
    ));
    for f in [
        "meta.json",
        "stf.bin",
        "recognizer.bin",
        "specialist_0.bin",
        "ilp.bin",
        "ilp_multiclass.bin",
        "location.bin",
        "report.json",
        "omega.csv",
    ] {
        assert!(d.join("model").join(f).is_file(), "missing {f}");
    }

    ok(&cheapseg(
        &[
            "predict",
            "--bundle",
            "model",
            "--manifest",
            "data/manifest.json",
            "--split",
            "test",
            "--out",
            "pred",
            "--color",
        ],
        d,
    ));
    let preds: Vec<_> = fs::read_dir(d.join("pred"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(preds.len(), 8, "{preds:?}");

    ok(&cheapseg(
        &[
            "evaluate",
            "--predictions",
            "pred",
            "--manifest",
            "data/manifest.json",
            "--csv",
            "m.csv",
            "--json",
            "m.json",
        ],
        d,
    ));
    let csv = fs::read_to_string(d.join("m.csv")).unwrap();
    assert!(csv.starts_with("class,recall,iou\n"));
    assert!(csv.contains("\naverage,"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert!(json["recall"]["global"].as_f64().unwrap() > 0.5);

    let sweep = ok(&cheapseg(
        &[
            "sweep-omega",
            "--bundle",
            "model",
            "--manifest",
            "data/manifest.json",
            "--omegas",
            "0,0.5,1",
        ],
        d,
    ));
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(
        lines[0],
        "omega,average_recall,global_recall,appearance_evaluations"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[3].ends_with(",0"));

    let grid = ok(&cheapseg(
        &[
            "ablate",
            "--bundle",
            "model",
            "--manifest",
            "data/manifest.json",
            "--ideal",
        ],
        d,
    ));
    assert_eq!(grid.lines().count(), 1 + 2 * 4);

    // identical rerun gives byte-identical predictions
    ok(&cheapseg(
        &[
            "predict",
            "--bundle",
            "model",
            "--out",
            "pred2",
            "data/img_0000.ppm",
        ],
        d,
    ));
    ok(&cheapseg(
        &[
            "predict",
            "--bundle",
            "model",
            "--out",
            "pred3",
            "data/img_0000.ppm",
        ],
        d,
    ));
    assert_eq!(
        fs::read(d.join("pred2/img_0000.pgm")).unwrap(),
        fs::read(d.join("pred3/img_0000.pgm")).unwrap()
    );
}

#[test]
fn print_config_dumps_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&cheapseg(&["--print-config"], tmp.path()));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["seed"], 42);
    assert!(v["crf"]["omega"].is_number());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let code = |args: &[&str]| cheapseg(args, d).status.code();

    assert_eq!(code(&["--help"]), Some(0));
    assert_eq!(code(&["train", "--bogus"]), Some(1));
    assert_eq!(code(&[]), Some(1));
    assert_eq!(
        code(&["gen-synth", "--preset", "nope", "--out", "x"]),
        Some(1)
    );
    assert_eq!(
        code(&["train", "--manifest", "missing.json", "--out", "m"]),
        Some(2)
    );
    assert_eq!(
        code(&[
            "ablate",
            "--bundle",
            "nothing",
            "--manifest",
            "missing.json"
        ]),
        Some(2)
    );

    fs::write(d.join("bad.json"), r#"{"crf": {"omgea": 0.5}}"#).unwrap();
    assert_eq!(code(&["--config", "bad.json", "--print-config"]), Some(2));
    fs::write(d.join("range.json"), r#"{"crf": {"omega": 2.0}}"#).unwrap();
    assert_eq!(code(&["--config", "range.json", "--print-config"]), Some(1));
}
