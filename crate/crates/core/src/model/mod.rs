//! The TGGM probabilistic model.
//!
//! Four two-layer networks:
//!
//! - `f_inf(x, onehot(y)) -> [μ̃_z, log σ̃²_z]`, the per-category posterior `q(z|x, y)`
//! - `f_cls(x) -> logits`, giving `q(y|x) = softmax(logits)`
//! - `f_prior(onehot(y)) -> [μ_z, log σ²_z]`, the conditional prior `p(z|y)`
//! - `f_gen(z) -> [logit μ_x, log σ²_x]`, the per-pixel decoder `p(x|z)`
//!
//! plus the categorical prior `p(y)`. Category `1` is the target component.

mod elbo;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{clamp_log_var, reparameterize, softmax, GaussianParams, LayerStack};

pub use elbo::{stack_rows, BatchNoise, ElboBreakdown, Evaluation, ModelGrads};

pub const NUM_CATEGORIES: usize = 2;

/// Decoder log-variance floor, `ln(1e-3)`.
pub const DECODER_LOG_VAR_MIN: f64 = -6.907_755_278_982_137;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    NonTarget = 0,
    Target = 1,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::NonTarget, Category::Target];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn one_hot(self) -> [f64; 2] {
        let mut v = [0.0; 2];
        v[self.index()] = 1.0;
        v
    }
}

impl TryFrom<usize> for Category {
    type Error = Error;

    fn try_from(value: usize) -> Result<Self> {
        match value {
            0 => Ok(Category::NonTarget),
            1 => Ok(Category::Target),
            other => Err(invalid(format!("category {other} is outside {{0, 1}}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub patch_dim: usize,
    pub latent_dim: usize,
    pub hidden_width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TggmModel {
    pub f_inf: LayerStack,
    pub f_cls: LayerStack,
    pub f_prior: LayerStack,
    pub f_gen: LayerStack,
    pub prior_y: [f64; 2],
    pub patch_dim: usize,
    pub latent_dim: usize,
    pub seed: u64,
}

/// `f_cls` sees patches shifted by this value so its inputs straddle zero.
pub const CLASSIFIER_INPUT_CENTER: f64 = 0.5;

pub(crate) fn classifier_input(x: ArrayView2<f64>) -> Array2<f64> {
    x.mapv(|v| v - CLASSIFIER_INPUT_CENTER)
}

pub(crate) fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub(crate) fn decoder_log_var(raw: f64) -> f64 {
    raw.clamp(DECODER_LOG_VAR_MIN, crate::numerics::LOG_VAR_MAX)
}

impl TggmModel {
    /// Glorot-initialized networks and a uniform `p(y)`. The classifier's
    /// output layer starts at zero so every patch begins at `q(y|x) = p(y)`.
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, seed: u64, rng: &mut R) -> Result<Self> {
        let ModelDims {
            patch_dim,
            latent_dim,
            hidden_width,
        } = dims;
        if patch_dim == 0 || latent_dim == 0 || hidden_width == 0 {
            return Err(invalid("model dimensions must be positive"));
        }
        let k = NUM_CATEGORIES;
        let f_inf = LayerStack::init(patch_dim + k, hidden_width, 2 * latent_dim, rng);
        let mut f_cls = LayerStack::init(patch_dim, hidden_width, k, rng);
        f_cls.layer_mut(1).weights.fill(0.0);
        Ok(Self {
            f_inf,
            f_cls,
            f_prior: LayerStack::init(k, hidden_width, 2 * latent_dim, rng),
            f_gen: LayerStack::init(latent_dim, hidden_width, 2 * patch_dim, rng),
            prior_y: [0.5, 0.5],
            patch_dim,
            latent_dim,
            seed,
        })
    }

    /// All-zero networks; handy as a fixture base.
    pub fn zeros(dims: ModelDims) -> Self {
        let ModelDims {
            patch_dim,
            latent_dim,
            hidden_width,
        } = dims;
        let k = NUM_CATEGORIES;
        Self {
            f_inf: LayerStack::zeros(patch_dim + k, hidden_width, 2 * latent_dim),
            f_cls: LayerStack::zeros(patch_dim, hidden_width, k),
            f_prior: LayerStack::zeros(k, hidden_width, 2 * latent_dim),
            f_gen: LayerStack::zeros(latent_dim, hidden_width, 2 * patch_dim),
            prior_y: [0.5, 0.5],
            patch_dim,
            latent_dim,
            seed: 0,
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            patch_dim: self.patch_dim,
            latent_dim: self.latent_dim,
            hidden_width: self.f_cls.layers()[0].output_dim(),
        }
    }

    /// Checks the invariants a deserialized model must satisfy.
    pub fn validate(&self) -> Result<()> {
        let (p, l, k) = (self.patch_dim, self.latent_dim, NUM_CATEGORIES);
        let expect = [
            ("f_inf", &self.f_inf, p + k, 2 * l),
            ("f_cls", &self.f_cls, p, k),
            ("f_prior", &self.f_prior, k, 2 * l),
            ("f_gen", &self.f_gen, l, 2 * p),
        ];
        for (name, net, i, o) in expect {
            if net.input_dim() != i || net.output_dim() != o {
                return Err(invalid(format!(
                    "{name} is {}->{}, expected {i}->{o}",
                    net.input_dim(),
                    net.output_dim()
                )));
            }
        }
        let s: f64 = self.prior_y.iter().sum();
        if self.prior_y.iter().any(|&v| v.is_nan() || v <= 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("prior_y {:?} is not a distribution", self.prior_y)));
        }
        Ok(())
    }

    pub fn set_prior_y(&mut self, prior: [f64; 2]) -> Result<()> {
        let s = prior[0] + prior[1];
        if prior.iter().any(|&v| v.is_nan() || v <= 0.0) || (s - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("prior_y {prior:?} is not a distribution")));
        }
        self.prior_y = prior;
        Ok(())
    }

    fn check_patch(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.patch_dim {
            return Err(invalid(format!(
                "patch has {} values, model expects {}",
                x.len(),
                self.patch_dim
            )));
        }
        Ok(())
    }

    fn split_gaussian(&self, out: &[f64]) -> GaussianParams {
        let l = self.latent_dim;
        GaussianParams {
            mean: out[..l].to_vec(),
            log_var: out[l..].iter().map(|&v| clamp_log_var(v)).collect(),
        }
    }

    /// `q(z | x, y)` from `f_inf` applied to `x ‖ onehot(y)`.
    pub fn infer_posterior(&self, x: &[f64], y: Category) -> Result<GaussianParams> {
        self.check_patch(x)?;
        let mut input = x.to_vec();
        input.extend(y.one_hot());
        let (out, _) = self.f_inf.forward(&input)?;
        Ok(self.split_gaussian(&out))
    }

    /// `q(y | x)` as `[P(non-target), P(target)]`.
    pub fn classify(&self, x: &[f64]) -> Result<[f64; 2]> {
        self.check_patch(x)?;
        let centered: Vec<f64> = x.iter().map(|v| v - CLASSIFIER_INPUT_CENTER).collect();
        let (logits, _) = self.f_cls.forward(&centered)?;
        let p = softmax(&logits);
        Ok([p[0], p[1]])
    }

    /// Row-wise `q(y | x)` for a `(batch, patch_dim)` matrix.
    pub fn classify_batch(&self, patches: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut logits = self.f_cls.predict(classifier_input(patches).view())?;
        for mut row in logits.rows_mut() {
            let p = softmax(row.as_slice().expect("standard layout"));
            row.iter_mut().zip(p).for_each(|(r, v)| *r = v);
        }
        Ok(logits)
    }

    /// `p(z | y)` from `f_prior(onehot(y))`.
    pub fn prior_component(&self, y: Category) -> Result<GaussianParams> {
        let (out, _) = self.f_prior.forward(&y.one_hot())?;
        Ok(self.split_gaussian(&out))
    }

    /// Per-pixel `p(x | z)`; means are squashed into `[0, 1]` by a logistic map.
    pub fn decode(&self, z: &[f64]) -> Result<GaussianParams> {
        if z.len() != self.latent_dim {
            return Err(invalid(format!(
                "latent vector has {} entries, model expects {}",
                z.len(),
                self.latent_dim
            )));
        }
        let (out, _) = self.f_gen.forward(z)?;
        let p = self.patch_dim;
        Ok(GaussianParams {
            mean: out[..p].iter().map(|&v| logistic(v)).collect(),
            log_var: out[p..].iter().map(|&v| decoder_log_var(v)).collect(),
        })
    }

    /// `q(z | x) = Σ_y q(y|x) q(z|x, y)` as `(weight, component)` pairs indexed by category.
    pub fn mixture_posterior(&self, x: &[f64]) -> Result<[(f64, GaussianParams); 2]> {
        let w = self.classify(x)?;
        Ok([
            (w[0], self.infer_posterior(x, Category::NonTarget)?),
            (w[1], self.infer_posterior(x, Category::Target)?),
        ])
    }

    /// Ancestral sample: `z ~ p(z|y)`, then `x ~ p(x|z)`, clipped to `[0, 1]`.
    pub fn generate(&self, y: Category, noise_z: &[f64], noise_x: &[f64]) -> Result<Vec<f64>> {
        let z = reparameterize(&self.prior_component(y)?, noise_z)?;
        let px = self.decode(&z)?;
        Ok(reparameterize(&px, noise_x)?
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect())
    }

    /// Draws standard-normal noise and generates one patch.
    pub fn sample<R: Rng + ?Sized>(&self, y: Category, rng: &mut R) -> Result<Vec<f64>> {
        let nz: Vec<f64> = (0..self.latent_dim).map(|_| rng.sample(StandardNormal)).collect();
        let nx: Vec<f64> = (0..self.patch_dim).map(|_| rng.sample(StandardNormal)).collect();
        self.generate(y, &nz, &nx)
    }

    pub fn num_params(&self) -> usize {
        [&self.f_inf, &self.f_cls, &self.f_prior, &self.f_gen]
            .iter()
            .map(|n| n.num_params())
            .sum()
    }

    /// Parameters in `f_inf, f_cls, f_prior, f_gen` order.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for net in [&self.f_inf, &self.f_cls, &self.f_prior, &self.f_gen] {
            net.write_flat(&mut out);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let rest = self.f_inf.read_flat(flat)?;
        let rest = self.f_cls.read_flat(rest)?;
        let rest = self.f_prior.read_flat(rest)?;
        self.f_gen.read_flat(rest)?;
        Ok(())
    }
}
