//! Runs a synthetic benchmark and prints grid metrics after every iteration.
//!
//! `cargo run --release -p tggm --example benchmark -- [easy|textured] ['{"epochs_per_iteration": 50}']`
//!
//! The optional JSON object overrides fields of the benchmark's training config.

use std::time::Instant;

use tggm::evaluation::{grid_ground_truth, grid_predictions, prf};
use tggm::synthdata::{make_benchmark, Difficulty};
use tggm::trainer::run;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let difficulty = match args.get(1).map(String::as_str) {
        None | Some("easy") => Difficulty::Easy,
        Some("textured") => Difficulty::Textured,
        Some(other) => return Err(format!("unknown benchmark {other:?}").into()),
    };
    let bench = make_benchmark(difficulty)?;
    let mut config = serde_json::to_value(&bench.config)?;
    if let Some(overrides) = args.get(2) {
        let patch: serde_json::Value = serde_json::from_str(overrides)?;
        for (k, v) in patch.as_object().ok_or("overrides must be a JSON object")? {
            config[k] = v.clone();
        }
    }
    let config = serde_json::from_value(config)?;

    let (w, h) = (bench.truth.image.width, bench.truth.image.height);
    let start = Instant::now();
    let out = run(&bench.truth.image, &bench.truth.roi, bench.seed_window, &config)?;
    println!(
        "{:?} benchmark: {:.1}s, stopped by {:?}",
        difficulty,
        start.elapsed().as_secs_f64(),
        out.result.stop_reason
    );
    for rec in &out.result.history {
        let found = out.result.detected_by(rec.iteration);
        let mut line = format!(
            "iteration {}: +{} ({} total), loss {:.1} -> {:.1}",
            rec.iteration, rec.newly_detected, rec.total_detected, rec.first_epoch_loss, rec.last_epoch_loss
        );
        for g in [8, 16, 32] {
            let gt = grid_ground_truth(&bench.truth.target_boxes, w, h, g)?;
            let r = prf(&gt, &grid_predictions(&found, w, h, g)?)?;
            line += &format!(" | grid {g}: P {:.3} R {:.3} F1 {:.3}", r.precision, r.recall, r.f1);
        }
        println!("{line}");
    }
    Ok(())
}
