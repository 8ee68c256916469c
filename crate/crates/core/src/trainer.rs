//! Epoch loop and the outer iterative detection loop.
//!
//! Each detection iteration trains for a fixed epoch budget, classifies every
//! ROI window, and moves windows whose target probability reaches `τ` from the
//! unlabeled pool into the labeled target set. Detections are never revoked,
//! so the loop terminates once an iteration finds nothing new or the
//! iteration cap is hit.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{stack_rows, BatchNoise, ModelDims, TggmModel};
use crate::numerics::{AdamState, StackGrads};
use crate::windowing::{
    augment_target, default_translations, extract_patch, slide_windows, Raster, RoiPolygon,
    Window, DEFAULT_ROTATIONS,
};

const MODEL_STREAM: u64 = 0;
const TRAIN_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSpec {
    pub rotations: Vec<u32>,
    /// `None` uses `{-size/4, 0, +size/4}²`.
    pub translations: Option<Vec<(i64, i64)>>,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            rotations: DEFAULT_ROTATIONS.to_vec(),
            translations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_per_iteration: usize,
    pub max_iterations: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub target_threshold: f64,
    pub latent_dim: usize,
    pub hidden_width: usize,
    /// `None` means half the window size.
    pub stride: Option<usize>,
    pub augmentation: AugmentationSpec,
    /// Multiplier on the labeled ELBO term.
    pub labeled_weight: f64,
    /// Lower bound on each entry of the relaxed `p(y)`.
    pub prior_floor: f64,
    /// Leading epochs of the run during which `f_cls` is held fixed.
    pub classifier_warmup_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_per_iteration: 200,
            max_iterations: 7,
            minibatch_size: 32,
            learning_rate: 1e-3,
            target_threshold: 0.5,
            latent_dim: 10,
            hidden_width: 256,
            stride: None,
            augmentation: AugmentationSpec::default(),
            labeled_weight: 1.0,
            prior_floor: 0.05,
            classifier_warmup_epochs: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_per_iteration == 0
            || self.minibatch_size == 0
            || self.latent_dim == 0
            || self.hidden_width == 0
        {
            return Err(invalid("epochs, minibatch size, latent dim and hidden width must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        if !(self.target_threshold > 0.0 && self.target_threshold < 1.0) {
            return Err(invalid("target threshold must lie in (0, 1)"));
        }
        if self.stride == Some(0) {
            return Err(invalid("stride must be at least 1"));
        }
        if self.labeled_weight.is_nan() || self.labeled_weight <= 0.0 {
            return Err(invalid("labeled weight must be positive"));
        }
        if !(self.prior_floor > 0.0 && self.prior_floor < 0.5) {
            return Err(invalid("prior floor must lie in (0, 0.5)"));
        }
        Ok(())
    }

    pub fn stride_for(&self, window_size: usize) -> usize {
        self.stride.unwrap_or((window_size / 2).max(1))
    }
}

/// Per-window cluster assignment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub probability: f64,
    pub is_target: bool,
}

/// `is_target = q(y=1|x) ≥ τ` for each row of `patches`.
pub fn assign_clusters(model: &TggmModel, patches: ArrayView2<f64>, tau: f64) -> Result<Vec<Assignment>> {
    let q = model.classify_batch(patches)?;
    Ok(q.column(1)
        .iter()
        .map(|&p| Assignment {
            probability: p,
            is_target: p >= tau,
        })
        .collect())
}

/// Labeled/unlabeled bookkeeping for the detection loop. Window identity is
/// the index into `windows`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState {
    pub windows: Vec<Window>,
    patches: Array2<f64>,
    seed_targets: Array2<f64>,
    /// Lattice window coinciding with the annotated seed window, if any.
    seed_id: Option<usize>,
    /// Iteration (1-based) at which each window was first assigned target.
    pub detected_at: Vec<Option<usize>>,
    /// Most recent `q(y=1|x)` per window.
    pub scores: Vec<f64>,
    pub iteration: usize,
    pub prior_y: [f64; 2],
    pub rng_seed: u64,
}

impl IterationState {
    /// `patches` rows align with `windows`; `seed_targets` are the augmented seeds.
    pub fn new(
        windows: Vec<Window>,
        patches: Array2<f64>,
        seed_targets: Array2<f64>,
        seed_window: Option<Window>,
        rng_seed: u64,
    ) -> Result<Self> {
        if windows.len() != patches.nrows() {
            return Err(invalid("one patch row per window is required"));
        }
        if seed_targets.nrows() == 0 {
            return Err(invalid("at least one labeled target patch is required"));
        }
        if patches.nrows() > 0 && patches.ncols() != seed_targets.ncols() {
            return Err(invalid("labeled and unlabeled patches differ in size"));
        }
        let seed_id = seed_window.and_then(|s| windows.iter().position(|w| *w == s));
        let n = windows.len();
        Ok(Self {
            windows,
            patches,
            seed_targets,
            seed_id,
            detected_at: vec![None; n],
            scores: vec![0.0; n],
            iteration: 0,
            prior_y: [0.5, 0.5],
            rng_seed,
        })
    }

    pub fn patch_dim(&self) -> usize {
        self.seed_targets.ncols()
    }

    pub fn patches(&self) -> ArrayView2<'_, f64> {
        self.patches.view()
    }

    pub fn detected_ids(&self) -> Vec<usize> {
        (0..self.windows.len())
            .filter(|&i| self.detected_at[i].is_some())
            .collect()
    }

    fn is_labeled(&self, id: usize) -> bool {
        self.detected_at[id].is_some() || self.seed_id == Some(id)
    }

    pub fn unlabeled_ids(&self) -> Vec<usize> {
        (0..self.windows.len()).filter(|&i| !self.is_labeled(i)).collect()
    }

    /// Augmented seed patches followed by detected window patches.
    pub fn labeled_targets(&self) -> Array2<f64> {
        let extra: Vec<usize> = self
            .detected_ids()
            .into_iter()
            .filter(|&i| Some(i) != self.seed_id)
            .collect();
        let mut out = Array2::zeros((self.seed_targets.nrows() + extra.len(), self.patch_dim()));
        out.slice_mut(ndarray::s![..self.seed_targets.nrows(), ..])
            .assign(&self.seed_targets);
        for (k, &i) in extra.iter().enumerate() {
            out.row_mut(self.seed_targets.nrows() + k).assign(&self.patches.row(i));
        }
        out
    }

    pub fn unlabeled(&self) -> Array2<f64> {
        self.patches.select(Axis(0), &self.unlabeled_ids())
    }
}

/// `p(y)` for the next iteration: uniform before any detection round, then
/// the detected fraction, clamped to `[floor, 1 - floor]`.
pub fn relax_prior(state: &IterationState, floor: f64) -> [f64; 2] {
    if state.iteration == 0 || state.windows.is_empty() {
        return [0.5, 0.5];
    }
    let frac = state.detected_ids().len() as f64 / state.windows.len() as f64;
    let p1 = frac.clamp(floor, 1.0 - floor);
    [1.0 - p1, p1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub newly_detected: usize,
    pub total_detected: usize,
    pub labeled_size: usize,
    pub unlabeled_size: usize,
    pub prior_y: [f64; 2],
    pub next_prior_y: [f64; 2],
    pub first_epoch_loss: f64,
    pub last_epoch_loss: f64,
    pub epoch_losses: Vec<f64>,
}

/// Owns the model, optimizer and training RNG across iterations.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: TggmModel,
    pub config: TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
    epochs_done: usize,
}

impl Trainer {
    pub fn new(model: TggmModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(model.num_params(), config.learning_rate);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(TRAIN_STREAM);
        Ok(Self {
            model,
            config,
            adam,
            rng,
            epochs_done: 0,
        })
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    /// One pass over the shuffled unlabeled pool. Every step pairs an
    /// unlabeled minibatch with an equally sized labeled minibatch drawn with
    /// replacement. Returns the mean step loss.
    pub fn train_epoch(&mut self, state: &IterationState) -> Result<f64> {
        let mut ids = state.unlabeled_ids();
        if ids.is_empty() {
            return Err(invalid("no unlabeled windows left to train on"));
        }
        let labeled = state.labeled_targets();
        ids.shuffle(&mut self.rng);
        let latent = self.model.latent_dim;
        let freeze_cls = self.epochs_done < self.config.classifier_warmup_epochs;
        self.epochs_done += 1;
        let mut total = 0.0;
        let mut steps = 0usize;
        for chunk in ids.chunks(self.config.minibatch_size) {
            let xu = state.patches.select(Axis(0), chunk);
            let picks: Vec<usize> = (0..chunk.len())
                .map(|_| self.rng.random_range(0..labeled.nrows()))
                .collect();
            let xt = labeled.select(Axis(0), &picks);
            let noise = BatchNoise::sample(&mut self.rng, chunk.len(), picks.len(), latent);
            let (loss, mut grads) =
                self.model
                    .loss_and_grad(xu.view(), xt.view(), &noise, self.config.labeled_weight)?;
            if freeze_cls {
                grads.f_cls = StackGrads::zeros_like(&self.model.f_cls);
            }
            if !loss.is_finite() {
                return Err(Error::Contract(format!("training loss diverged ({loss})")));
            }
            let mut params = self.model.flat_params();
            self.adam.step(&mut params, &grads.flat())?;
            self.model.set_flat_params(&params)?;
            total += loss;
            steps += 1;
        }
        Ok(total / steps as f64)
    }

    /// Trains for the epoch budget, reassigns every window and accumulates
    /// newly detected targets.
    pub fn detection_iteration(&mut self, state: &mut IterationState) -> Result<IterationRecord> {
        let prior_y = state.prior_y;
        self.model.set_prior_y(prior_y)?;
        let labeled_size = state.labeled_targets().nrows();
        let unlabeled_size = state.unlabeled_ids().len();

        let mut epoch_losses = Vec::with_capacity(self.config.epochs_per_iteration);
        for _ in 0..self.config.epochs_per_iteration {
            epoch_losses.push(self.train_epoch(state)?);
        }

        let assignments = assign_clusters(&self.model, state.patches(), self.config.target_threshold)?;
        let iteration = state.iteration + 1;
        let mut newly = 0;
        for (i, a) in assignments.iter().enumerate() {
            state.scores[i] = a.probability;
            if a.is_target && state.detected_at[i].is_none() {
                state.detected_at[i] = Some(iteration);
                newly += 1;
            }
        }
        state.iteration = iteration;
        state.prior_y = relax_prior(state, self.config.prior_floor);

        Ok(IterationRecord {
            iteration,
            newly_detected: newly,
            total_detected: state.detected_ids().len(),
            labeled_size,
            unlabeled_size,
            prior_y,
            next_prior_y: state.prior_y,
            first_epoch_loss: epoch_losses.first().copied().unwrap_or(f64::NAN),
            last_epoch_loss: epoch_losses.last().copied().unwrap_or(f64::NAN),
            epoch_losses,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoNewDetections,
    IterationCap,
    UnlabeledExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredWindow {
    pub window: Window,
    pub score: f64,
    pub iteration_detected: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    /// Every ROI window with its final score.
    pub windows: Vec<ScoredWindow>,
    pub history: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub seed: u64,
    pub augmented_seed_patches: usize,
    pub skipped_augmentations: usize,
}

impl DetectionResult {
    /// Windows assigned target at any iteration, in window order.
    pub fn detections(&self) -> Vec<ScoredWindow> {
        self.windows
            .iter()
            .filter(|w| w.iteration_detected.is_some())
            .copied()
            .collect()
    }

    /// Windows detected at or before `iteration`.
    pub fn detected_by(&self, iteration: usize) -> Vec<Window> {
        self.windows
            .iter()
            .filter(|w| w.iteration_detected.is_some_and(|i| i <= iteration))
            .map(|w| w.window)
            .collect()
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Detector output plus the trained model.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: DetectionResult,
    pub model: TggmModel,
}

/// Builds the window pool and seed set, initializes the model from
/// `config.seed` and runs detection iterations to termination.
pub fn run(image: &Raster, roi: &RoiPolygon, seed_window: Window, config: &TrainConfig) -> Result<RunOutput> {
    config.validate()?;
    let size = seed_window.size;
    if !seed_window.fits(image.width, image.height) {
        return Err(invalid(format!("seed window {seed_window:?} leaves the image")));
    }
    let windows = slide_windows(image.width, image.height, roi, size, config.stride_for(size))?;
    if windows.is_empty() {
        return Err(Error::EmptyRoi);
    }
    let (cx, cy) = seed_window.center();
    if !roi.contains(cx, cy) {
        log::warn!("seed window {seed_window:?} lies outside the ROI; using it anyway");
    }

    let translations = config
        .augmentation
        .translations
        .clone()
        .unwrap_or_else(|| default_translations(size));
    let aug = augment_target(image, seed_window, &config.augmentation.rotations, &translations)?;
    if aug.patches.is_empty() {
        return Err(invalid("augmentation produced no labeled target patches"));
    }
    let patch_dim = aug.patches[0].len();
    let seed_targets = stack_rows(aug.patches.iter().map(|p| p.pixels.as_slice()), patch_dim);
    let patches = windows
        .iter()
        .map(|&w| extract_patch(image, w).map(|p| p.pixels))
        .collect::<Result<Vec<_>>>()?;
    let patches = stack_rows(patches.iter().map(Vec::as_slice), patch_dim);
    let mut state = IterationState::new(windows, patches, seed_targets, Some(seed_window), config.seed)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    init_rng.set_stream(MODEL_STREAM);
    let dims = ModelDims {
        patch_dim,
        latent_dim: config.latent_dim,
        hidden_width: config.hidden_width,
    };
    let model = TggmModel::new(dims, config.seed, &mut init_rng)?;
    let mut trainer = Trainer::new(model, config.clone())?;

    let mut history = Vec::new();
    let stop_reason = loop {
        if state.iteration >= config.max_iterations {
            break StopReason::IterationCap;
        }
        if state.unlabeled_ids().is_empty() {
            break StopReason::UnlabeledExhausted;
        }
        let record = trainer.detection_iteration(&mut state)?;
        log::info!(
            "iteration {}: {} new, {} total, loss {:.4} -> {:.4}",
            record.iteration,
            record.newly_detected,
            record.total_detected,
            record.first_epoch_loss,
            record.last_epoch_loss
        );
        let done = record.newly_detected == 0;
        history.push(record);
        if done {
            break StopReason::NoNewDetections;
        }
    };

    let windows = state
        .windows
        .iter()
        .enumerate()
        .map(|(i, &w)| ScoredWindow {
            window: w,
            score: state.scores[i],
            iteration_detected: state.detected_at[i],
        })
        .collect();
    Ok(RunOutput {
        result: DetectionResult {
            windows,
            history,
            stop_reason,
            seed: config.seed,
            augmented_seed_patches: aug.patches.len(),
            skipped_augmentations: aug.skipped,
        },
        model: trainer.model,
    })
}
