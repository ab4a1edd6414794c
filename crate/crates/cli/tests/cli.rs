use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use semrate_core::{write_attn_file, AttentionGrid};

fn semrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semrate"))
        .args(args)
        .env_remove("SEMRATE_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = semrate(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_category(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    v["error"]["category"].as_str().unwrap().to_string()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn allocate_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let attn = dir.path().join("three.attn");
    let grid = AttentionGrid::new(1, 3, vec![0.5, 0.3, 0.2]).unwrap();
    fs::write(&attn, write_attn_file(&grid).unwrap()).unwrap();
    let out = ok(&["allocate", "--attn", p(&attn), "--rate", "100"]);
    let got: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let golden: serde_json::Value =
        serde_json::from_str(include_str!("golden/allocate_p3_r100.json")).unwrap();
    assert_eq!(got, golden);
}

#[test]
fn encode_decode_is_lossless_at_full_rate() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&[
        "synth",
        "--out",
        p(&corpus),
        "--count",
        "2",
        "--rows",
        "3",
        "--cols",
        "5",
        "--seed",
        "9",
    ]);
    let image = corpus.join("synth_0001.ppm");
    let attn = corpus.join("synth_0001.attn");
    let frame = dir.path().join("f.smrf");
    let decoded = dir.path().join("d.ppm");
    let rate = (196 * 15).to_string();
    ok(&[
        "encode",
        "--image",
        p(&image),
        "--attn",
        p(&attn),
        "--rate",
        &rate,
        "--out",
        p(&frame),
    ]);
    let out = ok(&[
        "decode",
        "--frame",
        p(&frame),
        "--out",
        p(&decoded),
        "--original",
        p(&image),
        "--attn",
        p(&attn),
    ]);
    assert_eq!(fs::read(&decoded).unwrap(), fs::read(&image).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["payload_bytes"], 196 * 15);
    assert_eq!(report["metrics"]["psnr"], serde_json::Value::Null);
    assert_eq!(report["histogram"], serde_json::json!([0, 0, 0, 0, 15]));
}

#[test]
fn deduct_overhead_keeps_frame_within_budget() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    ok(&[
        "synth",
        "--out",
        p(&corpus),
        "--count",
        "1",
        "--rows",
        "4",
        "--cols",
        "4",
    ]);
    let frame = dir.path().join("f.smrf");
    let args = |extra: &[&'static str]| {
        let mut a = vec![
            "encode".to_string(),
            "--image".into(),
            p(&corpus.join("synth_0000.ppm")).into(),
            "--attn".into(),
            p(&corpus.join("synth_0000.attn")).into(),
            "--rate".into(),
            "500".into(),
            "--out".into(),
            p(&frame).into(),
        ];
        a.extend(extra.iter().map(|s| s.to_string()));
        a
    };
    let a = args(&["--deduct-overhead"]);
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(fs::read(&frame).unwrap().len() <= 500);
    let a = args(&[]);
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(fs::read(&frame).unwrap().len() > 500);
}

#[test]
fn run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let trace = dir.path().join("t.trace");
    ok(&["synth", "--out", p(&corpus), "--count", "6", "--seed", "3"]);
    ok(&[
        "trace",
        "--blocks",
        "50",
        "--out",
        p(&trace),
        "--seed",
        "4",
        "gilbert-elliott",
        "--p-gb",
        "0.2",
        "--p-bg",
        "0.5",
        "--r-good",
        "3000",
        "--r-bad",
        "400",
    ]);
    let mut outputs = Vec::new();
    for jobs in ["1", "1", "4"] {
        let csv = dir.path().join(format!("run{}.csv", outputs.len()));
        ok(&[
            "run",
            "--corpus",
            p(&corpus),
            "--trace",
            p(&trace),
            "--out",
            p(&csv),
            "--jobs",
            jobs,
        ]);
        outputs.push(fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("index,r,bytes_used,level0,"));

    let jsonl = ok(&[
        "run",
        "--corpus",
        p(&corpus),
        "--trace",
        p(&trace),
        "--format",
        "jsonl",
    ]);
    assert_eq!(String::from_utf8(jsonl.stdout).unwrap().lines().count(), 6);
}

#[test]
fn seed_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&[
        "trace",
        "--out",
        p(&a),
        "--seed",
        "17",
        "iid-uniform",
        "--lo",
        "0",
        "--hi",
        "999",
    ]);
    let status = Command::new(env!("CARGO_BIN_EXE_semrate"))
        .args([
            "trace",
            "--out",
            p(&b),
            "iid-uniform",
            "--lo",
            "0",
            "--hi",
            "999",
        ])
        .env("SEMRATE_SEED", "17")
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        vec!["allocate", "--attn", "x", "--rate", "1", "--bogus"],
        vec!["allocate", "--attn", "x"],
        vec![
            "--table", "0,12,x", "allocate", "--attn", "x", "--rate", "1",
        ],
        vec![
            "--table",
            "0,10,24,48,196",
            "allocate",
            "--attn",
            "x",
            "--rate",
            "1",
        ],
        vec![
            "trace",
            "--out",
            "t",
            "gilbert-elliott",
            "--p-gb",
            "2",
            "--p-bg",
            "0",
            "--r-good",
            "1",
            "--r-bad",
            "1",
        ],
        vec!["frobnicate"],
    ] {
        let out = semrate(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    for cmd in ["allocate", "encode", "decode", "trace", "run", "synth"] {
        assert!(semrate(&[cmd, "--help"]).status.success());
    }
}

#[test]
fn data_errors_exit_1_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let missing = semrate(&[
        "allocate",
        "--attn",
        p(&dir.path().join("nope")),
        "--rate",
        "5",
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(error_category(&missing), "io");

    let junk = dir.path().join("junk");
    fs::write(&junk, b"SMRF not really a frame").unwrap();
    let out_ppm = dir.path().join("out.ppm");
    let bad = semrate(&["decode", "--frame", p(&junk), "--out", p(&out_ppm)]);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(error_category(&bad), "frame");
    assert!(!out_ppm.exists());

    let corpus = dir.path().join("corpus");
    ok(&[
        "synth",
        "--out",
        p(&corpus),
        "--count",
        "1",
        "--rows",
        "2",
        "--cols",
        "2",
    ]);
    let wrong = dir.path().join("wrong.attn");
    fs::write(
        &wrong,
        write_attn_file(&AttentionGrid::uniform(3, 3).unwrap()).unwrap(),
    )
    .unwrap();
    let frame = dir.path().join("f");
    let mismatch = semrate(&[
        "encode",
        "--image",
        p(&corpus.join("synth_0000.ppm")),
        "--attn",
        p(&wrong),
        "--rate",
        "100",
        "--out",
        p(&frame),
    ]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert_eq!(error_category(&mismatch), "dimension");
    assert!(!frame.exists());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 3);
}
