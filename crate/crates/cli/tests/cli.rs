use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn calibfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_calibfuse")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn simulate(dir: &Path) {
    let out = calibfuse(&[
        "simulate",
        "--preset",
        "hetero1",
        "--seed",
        "3",
        "--frames",
        "20",
        "--calibration-frames",
        "60",
        "--out",
        &s(dir),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

/// AP column of the first data row of a report CSV.
fn first_ap(report: &Path) -> f64 {
    let text = fs::read_to_string(report).unwrap();
    let row = text.lines().find(|l| !l.starts_with('#') && !l.starts_with("method")).unwrap();
    row.split(',').nth(1).unwrap().parse().unwrap()
}

#[test]
fn simulate_writes_the_documented_layout() {
    let tmp = TempDir::new().unwrap();
    simulate(tmp.path());
    for rel in [
        "scenario.toml",
        "splits.toml",
        "manifest.json",
        "eval/ground_truth.jsonl",
        "eval/detections/ego.jsonl",
        "eval/detections/cav1.jsonl",
        "eval/detections/cav2.jsonl",
        "calibration/ego.csv",
        "calibration/cav2.csv",
    ] {
        assert!(tmp.path().join(rel).is_file(), "missing {rel}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["tool"], "calibfuse");
    assert_eq!(manifest["seed"], 3);
    assert!(manifest["outputs"].as_array().unwrap().len() >= 8);
}

#[test]
fn repeated_runs_produce_identical_outputs() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    simulate(a.path());
    simulate(b.path());
    for rel in ["eval/ground_truth.jsonl", "eval/detections/cav2.jsonl", "calibration/cav1.csv", "splits.toml"] {
        assert_eq!(fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
    // manifests differ only in timings; the recorded digests agree
    let digests = |d: &Path| {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        (m["config_digest"].clone(), m["outputs"].as_array().unwrap().iter().map(|o| o["sha256"].clone()).collect::<Vec<_>>())
    };
    assert_eq!(digests(a.path()), digests(b.path()));
}

#[test]
fn full_pipeline_and_trivial_reports() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    simulate(d);
    let out = calibfuse(&["calibrate", "--samples", &s(&d.join("calibration")), "--out", &s(&d.join("cal"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(d.join("cal/cav2.toml").is_file());

    let out = calibfuse(&[
        "fuse",
        "--detections",
        &s(&d.join("eval/detections")),
        "--calibrators",
        &s(&d.join("cal")),
        "--out",
        &s(&d.join("fused.jsonl")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(d.join("fused.jsonl.manifest.json").is_file());

    let gt = s(&d.join("eval/ground_truth.jsonl"));
    let out = calibfuse(&["evaluate", "--fused", &s(&d.join("fused.jsonl")), "--gt", &gt, "--out", &s(&d.join("r.csv"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let ap = first_ap(&d.join("r.csv"));
    assert!(ap > 0.0 && ap < 1.0, "{ap}");

    // ground truth scored as detections is perfect
    let out = calibfuse(&["evaluate", "--fused", &gt, "--gt", &gt, "--out", &s(&d.join("perfect.csv"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(first_ap(&d.join("perfect.csv")), 1.0);

    // no detections at all
    fs::write(d.join("empty.jsonl"), "").unwrap();
    let out = calibfuse(&["evaluate", "--fused", &s(&d.join("empty.jsonl")), "--gt", &gt, "--out", &s(&d.join("empty.csv"))]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(first_ap(&d.join("empty.csv")), 0.0);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();

    // config: preset without a seed, out-of-range phi, unknown aggregator
    let out = calibfuse(&["simulate", "--preset", "homo", "--out", &s(&d.join("x"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("seed"));
    fs::write(d.join("scenario.toml"), "frames = 5\nagents = []\n").unwrap();
    let out = calibfuse(&["simulate", "--config", &s(&d.join("scenario.toml")), "--out", &s(&d.join("x"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    simulate(&d.join("sim"));
    let dets = s(&d.join("sim/eval/detections"));
    let out = calibfuse(&["fuse", "--detections", &dets, "--calibrator", "identity", "--phi", "2", "--out", &s(&d.join("f.jsonl"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    let out = calibfuse(&["fuse", "--detections", &dets, "--aggregator", "wbf", "--out", &s(&d.join("f.jsonl"))]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));

    // data: a calibrator missing in strict mode, single-class samples, malformed records
    fs::create_dir_all(d.join("partial")).unwrap();
    fs::write(d.join("partial/ego.toml"), "kind = \"dbs\"\na = 1.0\nb = 1.0\n").unwrap();
    let out = calibfuse(&["fuse", "--detections", &dets, "--calibrators", &s(&d.join("partial")), "--out", &s(&d.join("f.jsonl"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("cav1"), "{}", stderr(&out));
    let out = calibfuse(&[
        "fuse",
        "--detections",
        &dets,
        "--calibrators",
        &s(&d.join("partial")),
        "--strict",
        "false",
        "--out",
        &s(&d.join("f.jsonl")),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    fs::write(d.join("ones.csv"), "raw_score,label\n0.3,1\n0.8,1\n").unwrap();
    let out = calibfuse(&["calibrate", "--samples", &s(&d.join("ones.csv")), "--out", &s(&d.join("c.toml"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    fs::write(d.join("bad.jsonl"), "{\"frame\": 0, \"agent_id\": \n").unwrap();
    let gt = s(&d.join("sim/eval/ground_truth.jsonl"));
    let out = calibfuse(&["evaluate", "--fused", &s(&d.join("bad.jsonl")), "--gt", &gt, "--out", &s(&d.join("r.csv"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    // io: inputs that do not exist
    let out = calibfuse(&["fuse", "--detections", &s(&d.join("nowhere")), "--calibrator", "identity", "--out", &s(&d.join("f.jsonl"))]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let out = calibfuse(&["calibrate", "--samples", &s(&d.join("nowhere.csv")), "--out", &s(&d.join("c.toml"))]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
}

#[test]
fn report_writes_every_table() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let out = calibfuse(&["report", "--preset", "hetero2", "--seed", "5", "--frames", "20", "--calibration-frames", "60", "--out", &s(d)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = fs::read_to_string(d.join("report.csv")).unwrap();
    for m in ["no_fusion", "nms", "nms+dbs", "psa", "psa+dbs"] {
        assert!(report.lines().any(|l| l.starts_with(&format!("{m},"))), "{m} missing");
        assert!(d.join(format!("pr/{m}.csv")).is_file());
    }
    assert!(report.starts_with("# iou_variant=3d iou_threshold=0.7"));
    assert!(d.join("reliability/cav2_raw.csv").is_file() && d.join("reliability/cav2_calibrated.csv").is_file());
    assert!(d.join("calibrators/ego.toml").is_file());
}
