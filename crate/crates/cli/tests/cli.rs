use std::path::Path;
use std::process::{Command, Output};

use nslbp_core::sensor::{encode_idx_images, encode_pgm};
use nslbp_core::synth::{random_image, random_network, rng, textured_image, SynthParams};

fn nslbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nslbp")).args(args).env("NSLBP_THREADS", "2").output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn verify_random_images_passes() {
    let out = nslbp(&["verify", "--count", "10", "--seed", "3", "--apx", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("10 images, apx 2, 0 mismatching"));
}

#[test]
fn missing_files_are_config_errors() {
    let out = nslbp(&["verify", "--network", "/does/not/exist.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/does/not/exist.json"));
    let out = nslbp(&["report", "--trace", "/does/not/exist.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_nslbp")).args(["verify", "--count", "1"]).env("NSLBP_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        let out = nslbp(&["run", "--count", "3", "--seed", "11", "--apx", "1", "--out", p(d)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["ofmaps.jsonl", "trace.jsonl", "report.json", "report.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn loads_idx_and_pgm_datasets() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(5);
    let images: Vec<_> = (0..3).map(|_| random_image(&mut r, 12, 12, 8)).collect();
    let idx = dir.path().join("images.idx");
    std::fs::write(&idx, encode_idx_images(&images).unwrap()).unwrap();
    let spec = random_network(2, &SynthParams { height: 12, width: 12, ..SynthParams::default() });
    let net = dir.path().join("net.json");
    std::fs::write(&net, spec.to_json()).unwrap();
    let out = nslbp(&["verify", "--network", p(&net), "--images", p(&idx), "--apx", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("3 images"));

    let pgms = dir.path().join("pgm");
    std::fs::create_dir(&pgms).unwrap();
    for i in 0..2 {
        std::fs::write(pgms.join(format!("{i}.pgm")), encode_pgm(&textured_image(&mut r, 12, 12, 8))).unwrap();
    }
    let out = nslbp(&["verify", "--network", p(&net), "--images", p(&pgms)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("2 images"));

    // geometry that does not fit the network
    let small = dir.path().join("small.pgm");
    std::fs::write(&small, encode_pgm(&random_image(&mut r, 4, 4, 8))).unwrap();
    assert_eq!(nslbp(&["verify", "--network", p(&net), "--images", p(&small)]).status.code(), Some(2));
}

#[test]
fn compile_emits_parseable_programs() {
    let dir = tempfile::tempdir().unwrap();
    let out = nslbp(&["compile", "--seed", "4", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("plan.json")).unwrap()).unwrap();
    let programs: Vec<String> = plan["layers"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|l| l.get("programs"))
        .flat_map(|ps| ps.as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()))
        .collect();
    assert!(!programs.is_empty());
    for f in programs {
        let text = std::fs::read_to_string(dir.path().join(&f)).unwrap();
        nslbp_core::isa::parse_program(&text).unwrap_or_else(|e| panic!("{f}: {e}"));
    }
}

#[test]
fn report_compare_and_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    for apx in ["0", "2"] {
        let d = dir.path().join(apx);
        assert!(nslbp(&["run", "--count", "2", "--apx", apx, "--out", p(&d)]).status.success());
    }
    let (t0, t2) = (dir.path().join("0/trace.jsonl"), dir.path().join("2/trace.jsonl"));
    let out = nslbp(&["report", "--trace", &format!("exact={}", p(&t0)), "--trace", &format!("apx2={}", p(&t2)), "--format", "csv"]);
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("numerator,denominator,energy_ratio,delay_ratio"));
    assert!(csv.contains("apx2,exact,0."), "{csv}");

    let cal = dir.path().join("cal.json");
    assert!(nslbp(&["calibrate", "--target", "37.4", "--out", p(&cal)]).status.success());
    let cfg = nslbp_core::config::SimConfig::load(&cal).unwrap();
    assert_eq!(cfg, nslbp_core::config::SimConfig::default());

    let out = nslbp(&["margin", "--sigma", "0,30", "--trials", "2000"]);
    let reports: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(reports[0]["errors"], 0);
    assert!(reports[1]["errors"].as_u64().unwrap() > 0);
}
