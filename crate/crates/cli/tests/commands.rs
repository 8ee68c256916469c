use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn tggm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tggm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(path: &Path, value: &Value) {
    fs::write(path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn synth_easy(dir: &Path) -> std::path::PathBuf {
    let spec = dir.join("bench.json");
    write(&spec, &json!({"benchmark": "easy"}));
    let out_dir = dir.join("scene");
    let out = tggm(&["synth", "--config", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    out_dir
}

/// Benchmark config with a shorter budget so the suite stays quick.
fn quick_config(scene: &Path) -> std::path::PathBuf {
    let mut cfg = read_json(&scene.join("config.json"));
    cfg["epochs_per_iteration"] = json!(40);
    cfg["max_iterations"] = json!(3);
    let path = scene.join("quick.json");
    write(&path, &cfg);
    path
}

#[test]
fn synth_writes_benchmark_files_deterministically() {
    let dir = TempDir::new().unwrap();
    let scene = synth_easy(dir.path());
    let truth = read_json(&scene.join("truth.json"));
    assert_eq!(truth["boxes"].as_array().unwrap().len(), 12);
    assert_eq!(truth["image"], "scene.png");
    assert!(scene.join("config.json").exists());

    let png = fs::read(scene.join("scene.png")).unwrap();
    let again = dir.path().join("again");
    let spec = dir.path().join("bench.json");
    let out = tggm(&["synth", "--config", spec.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed: 7"));
    assert_eq!(png, fs::read(again.join("scene.png")).unwrap());
    assert_eq!(
        fs::read(scene.join("truth.json")).unwrap(),
        fs::read(again.join("truth.json")).unwrap()
    );
}

#[test]
fn synth_accepts_a_full_scene_spec_and_seed_override() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    write(
        &spec,
        &json!({
            "width": 64, "height": 64,
            "background": {"kind": "flat", "level": 0.3},
            "roi": [[0, 0], [64, 0], [64, 64], [0, 64]],
            "targets": {"count": 2, "size_min": 8, "size_max": 8, "intensity_min": 0.8,
                        "intensity_max": 0.9, "min_separation": 4, "align": 1},
            "distractors": {"count": 0, "shape": "blob", "intensity_min": 0.5, "intensity_max": 0.6},
            "noise_sigma": 0.0,
            "seed": 3
        }),
    );
    let out_dir = dir.path().join("s");
    let out = tggm(&[
        "synth", "--config", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "11",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("seed: 11"));
    let truth = read_json(&out_dir.join("truth.json"));
    assert_eq!(truth["boxes"].as_array().unwrap().len(), 2);
    assert_eq!(truth["seed_window"]["size"], 8);
    assert!(!out_dir.join("config.json").exists());
}

#[test]
fn malformed_inputs_exit_with_code_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let out_dir = dir.path().join("o");
    let o = out_dir.to_str().unwrap();

    assert_eq!(code(&tggm(&["synth", "--config", bad.to_str().unwrap(), "--out", o])), 2);
    write(&bad, &json!({"benchmark": "impossible"}));
    assert_eq!(code(&tggm(&["synth", "--config", bad.to_str().unwrap(), "--out", o])), 2);
    assert_eq!(code(&tggm(&["synth", "--config", "/nonexistent.json", "--out", o])), 2);

    // Unknown config keys and out-of-range values are schema errors.
    let scene = synth_easy(dir.path());
    let truth = scene.join("truth.json");
    let cfg = dir.path().join("cfg.json");
    for value in [json!({"epochs": 3}), json!({"target_threshold": 1.5}), json!({"learning_rate": "fast"})] {
        write(&cfg, &value);
        let out = tggm(&[
            "detect", "--config", cfg.to_str().unwrap(), "--annotations", truth.to_str().unwrap(), "--out", o,
        ]);
        assert_eq!(code(&out), 2, "{value}: {}", String::from_utf8_lossy(&out.stderr));
    }

    // A detections file with the wrong header.
    let csv = dir.path().join("d.csv");
    fs::write(&csv, "a,b,c\n1,2,3\n").unwrap();
    let out = tggm(&[
        "eval", "--detections", csv.to_str().unwrap(), "--annotations", truth.to_str().unwrap(), "--out", o,
    ]);
    assert_eq!(code(&out), 2);

    // Missing required flags are usage errors, also code 2.
    assert_eq!(code(&tggm(&["detect"])), 2);
    assert_eq!(code(&tggm(&["eval", "--grid-sizes", "0"])), 2);
}

#[test]
fn empty_roi_exits_with_code_3() {
    let dir = TempDir::new().unwrap();
    let scene = synth_easy(dir.path());
    let mut truth = read_json(&scene.join("truth.json"));
    // No window center can fall inside this sliver.
    truth["roi"] = json!([[1.0, 1.0], [3.0, 1.0], [1.0, 3.0]]);
    let ann = scene.join("tiny.json");
    write(&ann, &truth);
    let out = tggm(&[
        "detect", "--annotations", ann.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ROI"));
}

#[test]
fn zero_iterations_gives_an_empty_csv() {
    let dir = TempDir::new().unwrap();
    let scene = synth_easy(dir.path());
    let cfg = dir.path().join("cfg.json");
    write(&cfg, &json!({"max_iterations": 0, "hidden_width": 8}));
    let out_dir = dir.path().join("det");
    let out = tggm(&[
        "detect",
        "--config", cfg.to_str().unwrap(),
        "--annotations", scene.join("truth.json").to_str().unwrap(),
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("detections.csv")).unwrap();
    assert_eq!(csv.trim(), "x,y,size,score,iteration_detected");
    let history = read_json(&out_dir.join("history.json"));
    assert_eq!(history["iterations"], 0);
    assert_eq!(history["history"].as_array().unwrap().len(), 0);
    assert!(out_dir.join("model.ckpt.json").exists());
}

#[test]
fn eval_of_the_truth_windows_is_perfect_and_of_nothing_has_zero_recall() {
    let dir = TempDir::new().unwrap();
    let scene = synth_easy(dir.path());
    let truth_path = scene.join("truth.json");
    let truth = read_json(&truth_path);

    let mut csv = String::from("x,y,size,score,iteration_detected\n");
    for b in truth["boxes"].as_array().unwrap() {
        csv += &format!("{},{},16,1.000000,1\n", b["x"].as_f64().unwrap(), b["y"].as_f64().unwrap());
    }
    let perfect = dir.path().join("perfect.csv");
    fs::write(&perfect, csv).unwrap();
    let out_dir = dir.path().join("eval");
    let out = tggm(&[
        "eval",
        "--detections", perfect.to_str().unwrap(),
        "--annotations", truth_path.to_str().unwrap(),
        "--grid-sizes", "16",
        "--out", out_dir.to_str().unwrap(),
        "--overlays",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&out_dir.join("report_g16.json"))["f1"], 1.0);
    assert!(out_dir.join("overlay_g16.png").exists());

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "x,y,size,score,iteration_detected\n").unwrap();
    let out = tggm(&[
        "eval",
        "--detections", empty.to_str().unwrap(),
        "--annotations", truth_path.to_str().unwrap(),
        "--grid-sizes", "8,16,32",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    for g in [8, 16, 32] {
        assert_eq!(read_json(&out_dir.join(format!("report_g{g}.json")))["recall"], 0.0);
    }
}

/// Cell is positive if some box covers half of itself or half the clipped cell.
fn brute_force_mask(boxes: &[(f64, f64, f64, f64)], w: usize, h: usize, g: usize) -> Vec<bool> {
    let mut cells = Vec::new();
    for r in 0..h.div_ceil(g) {
        for c in 0..w.div_ceil(g) {
            let (cx0, cy0) = (c * g, r * g);
            let (cx1, cy1) = ((cx0 + g).min(w), (cy0 + g).min(h));
            let cell_area = ((cx1 - cx0) * (cy1 - cy0)) as f64;
            let hit = boxes.iter().any(|&(x, y, bw, bh)| {
                let mut overlap = 0.0;
                for py in cy0..cy1 {
                    for px in cx0..cx1 {
                        let (fx, fy) = (px as f64, py as f64);
                        if fx >= x && fx < x + bw && fy >= y && fy < y + bh {
                            overlap += 1.0;
                        }
                    }
                }
                overlap >= 0.5 * bw * bh || overlap >= 0.5 * cell_area
            });
            cells.push(hit);
        }
    }
    cells
}

#[test]
fn detect_then_eval_matches_an_independent_recomputation() {
    let dir = TempDir::new().unwrap();
    let scene = synth_easy(dir.path());
    let cfg = quick_config(&scene);
    let truth_path = scene.join("truth.json");
    let mut csvs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let out = tggm(&[
            "detect",
            "--config", cfg.to_str().unwrap(),
            "--annotations", truth_path.to_str().unwrap(),
            "--out", out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(fs::read(out_dir.join("detections.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "same seed, same detections");

    let csv_path = dir.path().join("a").join("detections.csv");
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let detected: Vec<(f64, f64, f64, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            let size: f64 = r[2].parse().unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap(), size, size)
        })
        .collect();
    assert!(!detected.is_empty());

    let truth = read_json(&truth_path);
    let boxes: Vec<(f64, f64, f64, f64)> = truth["boxes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| {
            let f = |k: &str| b[k].as_f64().unwrap();
            (f("x"), f("y"), f("width"), f("height"))
        })
        .collect();

    let out_dir = dir.path().join("eval");
    let out = tggm(&[
        "eval",
        "--detections", csv_path.to_str().unwrap(),
        "--annotations", truth_path.to_str().unwrap(),
        "--grid-sizes", "8,16,32",
        "--out", out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    for g in [8usize, 16, 32] {
        let gt = brute_force_mask(&boxes, 256, 256, g);
        let pred = brute_force_mask(&detected, 256, 256, g);
        let tp = gt.iter().zip(&pred).filter(|(a, b)| **a && **b).count();
        let fp = gt.iter().zip(&pred).filter(|(a, b)| !**a && **b).count();
        let fn_ = gt.iter().zip(&pred).filter(|(a, b)| **a && !**b).count();
        let report = read_json(&out_dir.join(format!("report_g{g}.json")));
        assert_eq!(report["tp"], tp);
        assert_eq!(report["fp"], fp);
        assert_eq!(report["fn"], fn_);
        let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        assert!((report["f1"].as_f64().unwrap() - f1).abs() < 1e-12);
    }
}
