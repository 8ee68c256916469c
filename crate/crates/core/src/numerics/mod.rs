//! Small dense-network math in `f64`.

mod adam;
mod gaussian;
mod gradcheck;
mod mlp;

pub use adam::AdamState;
pub use gaussian::{
    clamp_log_var, gaussian_log_likelihood, kl_diag_gaussians, reparameterize, softmax,
    GaussianParams, LOG_VAR_MAX, LOG_VAR_MIN,
};
pub use gradcheck::{grad_check, relative_error};
pub use mlp::{Activation, Dense, DenseGrad, ForwardCache, LayerStack, StackGrads};
