use std::path::Path;
use std::process::{Command, Output};

use nuclei_core::io;
use nuclei_core::selfcheck::{cases, same_up_to_relabel};
use nuclei_core::LabelMap;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

/// sha256 of `nuclei synth --seed 42` (64x64, 5 disks, radius 3..8, gap 2).
const SEED42_SHA256: &str = "887c16879e153c7f8855b14482ffda72cd89c624c2648aeb2ab209d7ca35f388";

fn nuclei(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nuclei"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = nuclei(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn sha256(path: impl AsRef<Path>) -> String {
    let bytes = std::fs::read(path).unwrap();
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[test]
fn synth_is_pinned_and_deterministic() {
    let d = TempDir::new().unwrap();
    let (a, b) = (p(&d, "a.pgm"), p(&d, "b.pgm"));
    ok(&["synth", "--seed", "42", "-o", &a]);
    ok(&["synth", "--seed", "42", "-o", &b]);
    assert_eq!(sha256(&a), SEED42_SHA256);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let labels = io::load_label_map(&a).unwrap();
    assert_eq!(labels.dims(), (64, 64));
    assert_eq!(labels.instance_ids(), vec![1, 2, 3, 4, 5]);
}

#[test]
fn synth_zero_instances_and_infeasible() {
    let d = TempDir::new().unwrap();
    let z = p(&d, "z.pgm");
    ok(&["synth", "--count", "0", "-o", &z]);
    assert!(io::load_label_map(&z).unwrap().as_slice().iter().all(|&v| v == 0));

    let out = nuclei(&[
        "synth",
        "--count",
        "60",
        "--radius-min",
        "10",
        "--radius-max",
        "12",
        "-o",
        &p(&d, "x"),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("placed only"));
}

#[test]
fn encode_square_matches_hand_values() {
    let d = TempDir::new().unwrap();
    let input = p(&d, "sq.pgm");
    let square = LabelMap::from_fn(5, 5, |r, c| {
        u32::from((1..=3).contains(&r) && (1..=3).contains(&c))
    });
    io::save_label_map(&input, &square).unwrap();
    let se = p(&d, "se.sef");
    ok(&["encode", "-i", &input, "-m", "se", "-o", &se]);

    let bytes = std::fs::read(&se).unwrap();
    assert!(bytes.starts_with(b"SEF1 5 5 1\n"));
    assert_eq!(bytes.len(), 11 + 25 * 4);
    let f = io::load_sef1(&se).unwrap();
    assert_eq!(f.get(2, 2, 0), 1.0);
    assert_eq!(f.get(0, 0, 0), -1.0);
    assert_eq!(f.get(0, 2, 0), -(0.5f64.sqrt()) as f32);
    for (r, c) in [(1, 1), (1, 2), (3, 3), (2, 1)] {
        assert_eq!(f.get(r, c, 0), 0.0);
    }

    let dir = p(&d, "dir.pgm");
    ok(&["encode", "-i", &input, "-m", "dir", "-o", &dir]);
    assert!(std::fs::read(&dir).unwrap().starts_with(b"P5\n5 5\n65535\n"));
    let hv = p(&d, "hv.sef");
    ok(&["encode", "-i", &input, "-m", "hv", "-o", &hv]);
    assert_eq!(io::load_sef1(&hv).unwrap().channels(), 2);
}

#[test]
fn encode_position_on_background_is_zero() {
    let d = TempDir::new().unwrap();
    let input = p(&d, "e.pgm");
    io::save_label_map(&input, &LabelMap::filled(6, 7, 0)).unwrap();
    let out = p(&d, "pos.sef");
    ok(&["encode", "-i", &input, "-m", "pos", "-o", &out]);
    assert!(io::load_sef1(&out).unwrap().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn encode_rejects_unknown_method() {
    let d = TempDir::new().unwrap();
    let input = p(&d, "e.pgm");
    io::save_label_map(&input, &LabelMap::filled(3, 3, 0)).unwrap();
    let out = nuclei(&["encode", "-i", &input, "-m", "sdf", "-o", &p(&d, "o")]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sdf"));
}

#[test]
fn postprocess_round_trip_and_validation() {
    let d = TempDir::new().unwrap();
    let (labels, sem, se, back) = (p(&d, "l.pgm"), p(&d, "s.pgm"), p(&d, "se.sef"), p(&d, "b.pgm"));
    ok(&[
        "synth", "--seed", "7", "--count", "8", "--shape", "ellipse", "-o", &labels,
    ]);
    ok(&[
        "encode",
        "-i",
        &labels,
        "-m",
        "se",
        "-o",
        &se,
        "--semantic-out",
        &sem,
    ]);
    ok(&["postprocess", "--semantic", &sem, "--structure", &se, "-o", &back]);
    let (a, b) = (
        io::load_label_map(&labels).unwrap(),
        io::load_label_map(&back).unwrap(),
    );
    assert!(same_up_to_relabel(&a, &b));

    let bad = nuclei(&[
        "postprocess",
        "--semantic",
        &sem,
        "--structure",
        &se,
        "--tp",
        "-0.1",
        "--tn",
        "-0.1",
        "-o",
        &back,
    ]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("t_n < t_p"));

    let (empty, blank) = (p(&d, "e.pgm"), p(&d, "eo.pgm"));
    io::save_semantic(
        &empty,
        &nuclei_core::SemanticMask::filled(64, 64, Default::default()),
    )
    .unwrap();
    ok(&[
        "postprocess",
        "--semantic",
        &empty,
        "--structure",
        &se,
        "-o",
        &blank,
    ]);
    assert!(io::load_label_map(&blank)
        .unwrap()
        .as_slice()
        .iter()
        .all(|&v| v == 0));

    let small = p(&d, "small.pgm");
    io::save_semantic(
        &small,
        &nuclei_core::SemanticMask::filled(4, 4, Default::default()),
    )
    .unwrap();
    let mismatch = nuclei(&[
        "postprocess",
        "--semantic",
        &small,
        "--structure",
        &se,
        "-o",
        &blank,
    ]);
    assert!(!mismatch.status.success());
}

#[test]
fn evaluate_reports() {
    let d = TempDir::new().unwrap();
    let a = p(&d, "a.pgm");
    ok(&["synth", "--seed", "3", "-o", &a]);
    let out = ok(&["evaluate", "--pred", &a, "--gt", &a]);
    let text = String::from_utf8(out.stdout).unwrap();
    let keys: Vec<usize> = ["\"dice\"", "\"aji\"", "\"hausdorff\"", "\"pq\"", "\"matches\""]
        .iter()
        .map(|k| text.find(k).expect("key present"))
        .collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]), "documented key order");
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["dice"], 1.0);
    assert_eq!(v["aji"], 1.0);
    assert_eq!(v["hausdorff"], 0.0);
    assert_eq!(v["pq"], 1.0);
    assert_eq!(v["matches"].as_array().unwrap().len(), 5);
    assert_eq!(v["matches"][0], serde_json::json!([1, 1, 1.0]));

    let (pred, gt) = cases::aji_point_four();
    let (pp, gp, report) = (p(&d, "p.pgm"), p(&d, "g.pgm"), p(&d, "r.json"));
    io::save_label_map(&pp, &pred).unwrap();
    io::save_label_map(&gp, &gt).unwrap();
    ok(&["evaluate", "--pred", &pp, "--gt", &gp, "--json", &report]);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["aji"], 0.4);

    let mismatch = nuclei(&["evaluate", "--pred", &a, "--gt", &gp]);
    assert!(!mismatch.status.success());
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("dimension"));
}

#[test]
fn invariance_report_shape() {
    let d = TempDir::new().unwrap();
    let a = p(&d, "a.pgm");
    ok(&["synth", "--seed", "42", "-o", &a]);
    let v: serde_json::Value = serde_json::from_slice(&ok(&["invariance", "-i", &a]).stdout).unwrap();
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4 * 6);
    for row in rows {
        if row["encoder"] == "se" || row["encoder"] == "pos" {
            assert_eq!(row["max_abs_error"], 0.0);
            assert_eq!(row["pipeline_dice_bias"], 0.0);
        }
    }
    assert!(v["relation"]["outward_h_vs_hv_h"].as_f64().unwrap() > 0.9);
}

#[test]
fn selfcheck_passes_and_detects_fault() {
    let out = ok(&["selfcheck"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("PASS").count(), 9, "{text}");
    let bad = nuclei(&["selfcheck", "--inject-fault"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}
