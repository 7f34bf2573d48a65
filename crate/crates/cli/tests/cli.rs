use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn enkg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_enkg")).args(args).current_dir(cwd).output().unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn write_trace(path: &Path, logits: &[f32], vocab: u32, frames: u32, sites: u32) {
    let mut bytes = b"LGTR".to_vec();
    for v in [1u32, vocab, frames, sites] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.push(0);
    for l in logits {
        bytes.extend_from_slice(&l.to_le_bytes());
    }
    fs::write(path, bytes).unwrap();
}

#[test]
fn sample_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&enkg(&["sample", "--probs", "0.4,0.3,0.2,0.1", "--strategy", "enkg", "--seed", "7"], dir.path()));
    assert!((v["h_norm"].as_f64().unwrap() - 0.923220).abs() < 1e-5);
    assert_eq!(v["p_target"], 0.9);
    assert_eq!(v["cutoff"], 3);
    assert!(v["token"].as_u64().unwrap() < 3);
}

#[test]
fn sample_uniform_greedy_and_one_hot_guard() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&enkg(&["sample", "--uniform", "16", "--strategy", "greedy"], dir.path()));
    assert_eq!(v["token"], 0);
    let v = ok_json(&enkg(&["sample", "--probs", "1,0,0", "--strategy", "enkg"], dir.path()));
    assert_eq!(v["guard_triggered"], true);
    assert_eq!(v["cutoff"], 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| enkg(args, dir.path()).status.code().unwrap();
    assert_eq!(code(&["sample", "--probs", "0.5,0.6"]), 4);
    assert_eq!(code(&["sample", "--probs", "0.5,0.5", "--strategy", "top-p", "--p", "1.5"]), 2);
    assert_eq!(code(&["sample", "--probs", "0.5,0.5", "--strategy", "bogus"]), 2);
    assert_eq!(code(&["heatmap", "missing.lgtr", "0", "x.ppm"]), 3);
    fs::write(dir.path().join("bad.json"), "{not json").unwrap();
    assert_eq!(code(&["rollout", "--config", "bad.json"]), 2);
    fs::write(dir.path().join("empty.json"), r#"{"base": "top_k", "grid": [], "seeds": [1]}"#).unwrap();
    assert_eq!(code(&["sweep", "empty.json"]), 2);
    fs::write(dir.path().join("junk.lgtr"), b"nope").unwrap();
    assert_eq!(code(&["replay", "junk.lgtr"]), 3);
}

#[test]
fn enkg_freezes_less_than_greedy() {
    let dir = tempfile::tempdir().unwrap();
    let g = ok_json(&enkg(&["rollout", "--frames", "50", "--strategy", "greedy", "--seed", "42", "--out", "g"], dir.path()));
    let e = ok_json(&enkg(&["rollout", "--frames", "50", "--strategy", "enkg", "--seed", "42", "--out", "e"], dir.path()));
    assert!(e["freeze_rate"].as_f64().unwrap() < g["freeze_rate"].as_f64().unwrap());
    let on_disk: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("e/summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, e);
}

#[test]
fn single_frame_rollout_emits_one_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(&enkg(&["rollout", "--frames", "1", "--out", "one"], dir.path()));
    let heatmaps = fs::read_dir(dir.path().join("one/heatmaps")).unwrap().count();
    assert_eq!(heatmaps, 1);
    let csv = fs::read_to_string(dir.path().join("one/collapse.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn rollouts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["rollout", "--frames", "8", "--height", "6", "--width", "5", "--seed", "3", "--out", out];
    ok_json(&enkg(&args("a"), dir.path()));
    ok_json(&enkg(&args("b"), dir.path()));
    ok_json(&enkg(&["rollout", "--config", "a/manifest.json", "--out", "c"], dir.path()));
    for name in ["rollout.lgtr", "collapse.csv", "summary.json", "manifest.json", "heatmaps/frame_0007.ppm"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        assert_eq!(a, fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
        assert_eq!(a, fs::read(dir.path().join("c").join(name)).unwrap(), "{name} from manifest");
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"seed": 5, "sampler": {"strategy": "top_k", "k": 2}}"#).unwrap();
    let from_file = ok_json(&enkg(&["sample", "--config", "cfg.json", "--uniform", "8"], dir.path()));
    assert_eq!(from_file["cutoff"], 2);
    let overridden = ok_json(&enkg(&["sample", "--config", "cfg.json", "--uniform", "8", "--k", "5"], dir.path()));
    assert_eq!(overridden["cutoff"], 5);
    let preset = ok_json(&enkg(&["sample", "--config", "cfg.json", "--uniform", "64", "--preset", "drivingworld"], dir.path()));
    assert_eq!(preset["cutoff"], 30);
}

#[test]
fn sweep_parallel_matches_serial() {
    let dir = tempfile::tempdir().unwrap();
    let spec = r#"{"base": "enkg", "grid": [{"k_guard": 1}, {"k_guard": 3}], "seeds": [1, 2, 3],
                   "frames": 10, "scenario": {"scene": {"height": 6, "width": 6}}}"#;
    fs::write(dir.path().join("k.json"), spec).unwrap();
    let serial = enkg(&["sweep", "k.json", "--jobs", "1"], dir.path());
    let parallel = enkg(&["sweep", "k.json", "--jobs", "4"], dir.path());
    assert!(serial.status.success());
    assert_eq!(serial.stdout, parallel.stdout);
    let csv = String::from_utf8(serial.stdout).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    assert_eq!(csv.lines().filter(|l| l.split(',').nth(1) == Some("mean")).count(), 2);
}

#[test]
fn bundled_k_guard_sweep_flags_lone_guard() {
    let spec = Path::new(env!("CARGO_MANIFEST_DIR")).join("sweeps/k_guard.json");
    let dir = tempfile::tempdir().unwrap();
    let out = enkg(&["sweep", spec.to_str().unwrap(), "--jobs", "4"], dir.path());
    assert!(out.status.success());
    let csv = String::from_utf8(out.stdout).unwrap();
    let means: Vec<f64> = csv
        .lines()
        .filter(|l| l.split(',').nth(1) == Some("mean"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(means.len(), 5);
    assert!(means[1..].iter().all(|&m| means[0] > m), "{means:?}");
}

#[test]
fn solid_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    write_trace(&dir.path().join("flat.lgtr"), &[0.0; 4 * 8], 8, 1, 4);
    let mut peaked = vec![-1e4f32; 4 * 8];
    for site in 0..4 {
        peaked[site * 8 + site] = 0.0;
    }
    write_trace(&dir.path().join("peaked.lgtr"), &peaked, 8, 1, 4);

    let header = b"P6\n2 2\n255\n";
    assert!(enkg(&["heatmap", "flat.lgtr", "0", "red.ppm"], dir.path()).status.success());
    let red = fs::read(dir.path().join("red.ppm")).unwrap();
    assert_eq!(&red[..header.len()], header);
    assert!(red[header.len()..].chunks(3).all(|px| px == [255, 0, 0]));

    assert!(enkg(&["heatmap", "peaked.lgtr", "0", "blue.ppm"], dir.path()).status.success());
    let blue = fs::read(dir.path().join("blue.ppm")).unwrap();
    assert!(blue[header.len()..].chunks(3).all(|px| px == [0, 0, 255]));

    assert_eq!(enkg(&["heatmap", "flat.lgtr", "1", "x.ppm"], dir.path()).status.code(), Some(2));
}

#[test]
fn heatmap_matches_rollout_render() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(&enkg(&["rollout", "--frames", "4", "--seed", "9", "--out", "r"], dir.path()));
    assert!(enkg(&["heatmap", "r/rollout.lgtr", "2", "f2.ppm"], dir.path()).status.success());
    assert_eq!(
        fs::read(dir.path().join("f2.ppm")).unwrap(),
        fs::read(dir.path().join("r/heatmaps/frame_0002.ppm")).unwrap()
    );
}

#[test]
fn replay_writes_tokens_and_report() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(&enkg(&["rollout", "--frames", "5", "--height", "2", "--width", "3", "--out", "r"], dir.path()));
    let a = ok_json(&enkg(&["replay", "r/rollout.lgtr", "--strategy", "greedy", "--seed", "1", "--out", "p"], dir.path()));
    let b = ok_json(&enkg(&["replay", "r/rollout.lgtr", "--strategy", "greedy", "--seed", "2", "--out", "q"], dir.path()));
    assert_eq!(a["freeze_rate"], b["freeze_rate"]);
    let tokens = fs::read_to_string(dir.path().join("p/tokens.csv")).unwrap();
    assert_eq!(tokens, fs::read_to_string(dir.path().join("q/tokens.csv")).unwrap());
    assert_eq!(tokens.lines().count(), 1 + 5 * 6);
    assert!(dir.path().join("p/collapse.csv").exists());
}
