//! Target-guided generative model (TGGM) for estimating where a group of
//! small target objects sits inside a region of interest of an overhead image.
//!
//! The pipeline slides fixed-size windows over an ROI polygon, trains a
//! two-component mixture-of-Gaussians VAE whose target component is anchored
//! by a handful of augmented copies of one annotated window, and iteratively
//! moves windows the classifier assigns to the target cluster into the
//! labeled set. Results are scored on non-overlapping grid cells.
//!
//! Module map:
//!
//! - [`numerics`]: two-layer MLPs with analytic backprop, Adam, diagonal
//!   Gaussian helpers and a finite-difference gradient checker.
//! - [`model`]: the four networks, mixture posterior, generative process and
//!   the labeled / unlabeled ELBOs with exact gradients.
//! - [`windowing`]: rasters, ROI polygons, sliding windows, patch extraction
//!   and target-window augmentation.
//! - [`trainer`]: the epoch loop and the outer iterative detection loop.
//! - [`evaluation`]: grid-level precision/recall/F1, IoU, NMS and AP.
//! - [`synthdata`]: seeded synthetic overhead scenes with exact ground truth.
//! - [`io`]: file formats (annotations, configs, checkpoints, CSV, PNG).

pub mod error;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod numerics;
pub mod synthdata;
pub mod trainer;
pub mod windowing;

pub use error::{Error, Result};
pub use evaluation::{BBox, GridMask, GridReport};
pub use model::{ElboBreakdown, TggmModel};
pub use numerics::{GaussianParams, LayerStack};
pub use trainer::{DetectionResult, IterationState, TrainConfig};
pub use windowing::{Patch, Raster, RoiPolygon, Window};
