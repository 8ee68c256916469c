//! `tggm` command-line tool: synthesize scenes, run detection, evaluate.
//!
//! Exit codes: 0 success, 2 input or schema error, 3 empty ROI or other
//! domain failure, 1 internal error.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tggm::evaluation::{grid_ground_truth, grid_predictions, prf};
use tggm::io::{
    load_checkpoint, load_png, read_detections_csv, read_json, render_overlay, save_checkpoint, save_png,
    write_detections_csv, write_json, Annotations,
};
use tggm::synthdata::{generate_scene, make_benchmark, Difficulty, SceneSpec};
use tggm::trainer::{run, IterationRecord, StopReason, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "tggm", version, about = "Target-guided window clustering over overhead imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic scene and its ground truth.
    Synth(SynthArgs),
    /// Detect target windows inside an ROI from one seed window.
    Detect(DetectArgs),
    /// Grid-level precision/recall/F1 of a detections CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scene spec JSON, or `{"benchmark": "easy" | "textured"}`.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scene seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    /// Training config JSON; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ROI annotation (or synthetic truth) JSON.
    #[arg(long)]
    annotations: PathBuf,
    /// Overrides the image named in the annotations.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    /// Truth JSON with `boxes`.
    #[arg(long)]
    annotations: PathBuf,
    /// Overrides the image named in the annotations.
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "20,40,60,80")]
    grid_sizes: Vec<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a colored grid overlay PNG per grid size.
    #[arg(long)]
    overlays: bool,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum SynthInput {
    Benchmark { benchmark: Difficulty },
    Scene(Box<SceneSpec>),
}

/// Per-run summary written next to the detections.
#[derive(Debug, Serialize)]
struct History<'a> {
    seed: u64,
    stop_reason: StopReason,
    iterations: usize,
    detected: usize,
    augmented_seed_patches: usize,
    skipped_augmentations: usize,
    history: &'a [IterationRecord],
}

struct Failure {
    code: u8,
    message: String,
}

impl From<tggm::Error> for Failure {
    fn from(e: tggm::Error) -> Self {
        let code = match e {
            tggm::Error::EmptyRoi | tggm::Error::Capacity(_) => 3,
            tggm::Error::Contract(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn with_path(path: &Path) -> impl FnOnce(tggm::Error) -> Failure + '_ {
    move |e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    }
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| input_error(format!("cannot create {}: {e}", dir.display())))
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let input: SynthInput = read_json(&args.config).map_err(with_path(&args.config))?;
    let (mut spec, config, seed_window) = match input {
        SynthInput::Benchmark { benchmark } => {
            let b = make_benchmark(benchmark)?;
            (b.spec, Some(b.config), Some(b.seed_window))
        }
        SynthInput::Scene(spec) => (*spec, None, None),
    };
    let custom_seed = args.seed.is_some_and(|s| s != spec.seed);
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let truth = generate_scene(&spec)?;
    let seed_window = match seed_window {
        Some(w) if !custom_seed => w,
        _ => {
            let first = truth
                .target_boxes
                .first()
                .ok_or_else(|| input_error("scene has no targets to seed detection with"))?;
            let size = first.width.max(first.height).round() as usize;
            tggm::Window {
                x: first.x as usize,
                y: first.y as usize,
                size,
            }
        }
    };

    create_dir(&args.out)?;
    save_png(&args.out.join("scene.png"), &truth.image)?;
    let annotations = Annotations {
        image: "scene.png".into(),
        roi: truth.roi.clone(),
        seed_window,
        boxes: truth.target_boxes.clone(),
    };
    annotations.save(&args.out.join("truth.json"))?;
    if let Some(config) = config {
        write_json(&args.out.join("config.json"), &config)?;
    }
    println!("seed: {}", spec.seed);
    println!("targets: {}", truth.target_boxes.len());
    Ok(())
}

fn detect(args: &DetectArgs) -> Result<(), Failure> {
    let mut config: TrainConfig = match &args.config {
        Some(path) => read_json(path).map_err(with_path(path))?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    let annotations = Annotations::load(&args.annotations).map_err(with_path(&args.annotations))?;
    let image_path = args
        .image
        .clone()
        .unwrap_or_else(|| annotations.image_path(&args.annotations));
    let image = load_png(&image_path).map_err(with_path(&image_path))?;
    println!("seed: {}", config.seed);

    let out = run(&image, &annotations.roi, annotations.seed_window, &config)?;
    let result = &out.result;
    create_dir(&args.out)?;

    let detections = result.detections();
    let csv_path = args.out.join("detections.csv");
    let file = File::create(&csv_path).map_err(|e| input_error(format!("{}: {e}", csv_path.display())))?;
    write_detections_csv(BufWriter::new(file), &detections)?;
    write_json(
        &args.out.join("history.json"),
        &History {
            seed: result.seed,
            stop_reason: result.stop_reason,
            iterations: result.iterations(),
            detected: detections.len(),
            augmented_seed_patches: result.augmented_seed_patches,
            skipped_augmentations: result.skipped_augmentations,
            history: &result.history,
        },
    )?;
    let ckpt = args.out.join("model.ckpt.json");
    save_checkpoint(&ckpt, &out.model)?;
    // A checkpoint that cannot be read back is an internal failure.
    load_checkpoint(&ckpt)?;

    println!(
        "iterations: {} ({:?}), detected windows: {}",
        result.iterations(),
        result.stop_reason,
        detections.len()
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<(), Failure> {
    if args.grid_sizes.is_empty() || args.grid_sizes.contains(&0) {
        return Err(input_error("grid sizes must be positive"));
    }
    let annotations = Annotations::load(&args.annotations).map_err(with_path(&args.annotations))?;
    let image_path = args
        .image
        .clone()
        .unwrap_or_else(|| annotations.image_path(&args.annotations));
    let image = load_png(&image_path).map_err(with_path(&image_path))?;
    let file = File::open(&args.detections)
        .map_err(|e| input_error(format!("{}: {e}", args.detections.display())))?;
    let detections = read_detections_csv(file).map_err(with_path(&args.detections))?;
    let windows: Vec<_> = detections.iter().map(|d| d.window).collect();
    let (w, h) = (image.width, image.height);

    create_dir(&args.out)?;
    for &g in &args.grid_sizes {
        let gt = grid_ground_truth(&annotations.boxes, w, h, g)?;
        let pred = grid_predictions(&windows, w, h, g)?;
        let report = prf(&gt, &pred)?;
        write_json(&args.out.join(format!("report_g{g}.json")), &report)?;
        if args.overlays {
            save_png(&args.out.join(format!("overlay_g{g}.png")), &render_overlay(&image, &report))?;
        }
        println!(
            "grid {g}: precision {:.4} recall {:.4} f1 {:.4} (tp {}, fp {}, fn {})",
            report.precision, report.recall, report.f1, report.tp, report.fp, report.fn_
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect(a),
        Command::Eval(a) => eval(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
