//! Labeled / unlabeled evidence lower bounds and their exact gradients.
//!
//! For an unlabeled patch the expectation over `y` is enumerated over both
//! categories, with one reparameterized latent sample per category:
//!
//! ```text
//! ELBO_u = Σ_y q(y|x) log p(x|z_y) − Σ_y q(y|x) KL[q(z|x,y) ‖ p(z|y)] − KL[q(y|x) ‖ p(y)]
//! ELBO_t = log p(x|z_1) − KL[q(z|x,y=1) ‖ p(z|y=1)]
//! loss   = −(mean_u ELBO_u + λ · mean_t ELBO_t)
//! ```
//!
//! Labeled patches only ever run the target branch, so `f_cls` and the
//! non-target input slot of `f_prior` receive no gradient from them.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{classifier_input, decoder_log_var, logistic, Category, TggmModel, DECODER_LOG_VAR_MIN, NUM_CATEGORIES};
use crate::error::{invalid, Result};
use crate::numerics::{ForwardCache, StackGrads, LOG_VAR_MAX, LOG_VAR_MIN};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Per-patch ELBO terms. `total = reconstruction − kl_z − kl_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub reconstruction: f64,
    pub kl_z: f64,
    pub kl_y: f64,
    pub total: f64,
}

/// Standard-normal noise for one loss evaluation: one latent draw per
/// unlabeled patch per category, one per labeled patch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNoise {
    pub unlabeled: [Array2<f64>; 2],
    pub labeled: Array2<f64>,
}

impl BatchNoise {
    pub fn zeros(n_unlabeled: usize, n_labeled: usize, latent_dim: usize) -> Self {
        Self {
            unlabeled: [
                Array2::zeros((n_unlabeled, latent_dim)),
                Array2::zeros((n_unlabeled, latent_dim)),
            ],
            labeled: Array2::zeros((n_labeled, latent_dim)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        n_unlabeled: usize,
        n_labeled: usize,
        latent_dim: usize,
    ) -> Self {
        let mut draw = |rows| Array2::from_shape_simple_fn((rows, latent_dim), || rng.sample(StandardNormal));
        let u0 = draw(n_unlabeled);
        let u1 = draw(n_unlabeled);
        let t = draw(n_labeled);
        Self {
            unlabeled: [u0, u1],
            labeled: t,
        }
    }
}

/// Gradients for every network, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub f_inf: StackGrads,
    pub f_cls: StackGrads,
    pub f_prior: StackGrads,
    pub f_gen: StackGrads,
}

impl ModelGrads {
    pub fn zeros_like(m: &TggmModel) -> Self {
        Self {
            f_inf: StackGrads::zeros_like(&m.f_inf),
            f_cls: StackGrads::zeros_like(&m.f_cls),
            f_prior: StackGrads::zeros_like(&m.f_prior),
            f_gen: StackGrads::zeros_like(&m.f_gen),
        }
    }

    /// Same ordering as [`TggmModel::flat_params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in [&self.f_inf, &self.f_cls, &self.f_prior, &self.f_gen] {
            g.write_flat(&mut out);
        }
        out
    }
}

/// Result of one pass over an unlabeled and a labeled batch.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub unlabeled: Vec<ElboBreakdown>,
    pub labeled: Vec<ElboBreakdown>,
    pub loss: f64,
    pub grads: Option<ModelGrads>,
}

struct Prior {
    cache: ForwardCache,
    mean: Array2<f64>,
    log_var: Array2<f64>,
    raw_log_var: Array2<f64>,
}

struct Branch {
    inf_cache: ForwardCache,
    q_mean: Array2<f64>,
    q_log_var: Array2<f64>,
    q_raw_log_var: Array2<f64>,
    gen_cache: ForwardCache,
    x_mean: Array2<f64>,
    x_log_var: Array2<f64>,
    x_raw_log_var: Array2<f64>,
    recon: Array1<f64>,
    kl_z: Array1<f64>,
}

fn in_range(v: f64, lo: f64, hi: f64) -> f64 {
    if (lo..=hi).contains(&v) {
        1.0
    } else {
        0.0
    }
}

impl TggmModel {
    fn prior_forward(&self) -> Result<Prior> {
        let l = self.latent_dim;
        let eye = Array2::<f64>::eye(NUM_CATEGORIES);
        let (out, cache) = self.f_prior.forward_batch(eye.view())?;
        let raw_log_var = out.slice(s![.., l..]).to_owned();
        Ok(Prior {
            cache,
            mean: out.slice(s![.., ..l]).to_owned(),
            log_var: raw_log_var.mapv(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)),
            raw_log_var,
        })
    }

    fn branch_forward(
        &self,
        x: ArrayView2<f64>,
        y: Category,
        prior: &Prior,
        noise: ArrayView2<f64>,
    ) -> Result<Branch> {
        let (b, p, l) = (x.nrows(), self.patch_dim, self.latent_dim);
        let mut input = Array2::zeros((b, p + NUM_CATEGORIES));
        input.slice_mut(s![.., ..p]).assign(&x);
        input.column_mut(p + y.index()).fill(1.0);
        let (q, inf_cache) = self.f_inf.forward_batch(input.view())?;
        let q_mean = q.slice(s![.., ..l]).to_owned();
        let q_raw_log_var = q.slice(s![.., l..]).to_owned();
        let q_log_var = q_raw_log_var.mapv(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX));
        let z = &q_mean + &(q_log_var.mapv(|v| (0.5 * v).exp()) * noise);

        let (g, gen_cache) = self.f_gen.forward_batch(z.view())?;
        let x_mean = g.slice(s![.., ..p]).mapv(logistic);
        let x_raw_log_var = g.slice(s![.., p..]).to_owned();
        let x_log_var = x_raw_log_var.mapv(decoder_log_var);

        let mut recon = Array1::zeros(b);
        for r in 0..b {
            let mut acc = 0.0;
            for i in 0..p {
                let d = x[[r, i]] - x_mean[[r, i]];
                let lv = x_log_var[[r, i]];
                acc += -HALF_LN_2PI - 0.5 * lv - 0.5 * d * d * (-lv).exp();
            }
            recon[r] = acc;
        }

        let pm = prior.mean.row(y.index());
        let plv = prior.log_var.row(y.index());
        let mut kl_z = Array1::zeros(b);
        for r in 0..b {
            let mut acc = 0.0;
            for j in 0..l {
                let d = q_mean[[r, j]] - pm[j];
                let qlv = q_log_var[[r, j]];
                acc += 0.5 * (plv[j] - qlv + (qlv.exp() + d * d) * (-plv[j]).exp() - 1.0);
            }
            kl_z[r] = acc;
        }

        Ok(Branch {
            inf_cache,
            q_mean,
            q_log_var,
            q_raw_log_var,

            gen_cache,
            x_mean,
            x_log_var,
            x_raw_log_var,
            recon,
            kl_z,
        })
    }

    /// Accumulates gradients of `Σ_r d_recon[r]·recon[r] + d_kl[r]·kl_z[r]`.
    #[allow(clippy::too_many_arguments)]
    fn branch_backward(
        &self,
        x: ArrayView2<f64>,
        y: Category,
        br: &Branch,
        noise: ArrayView2<f64>,
        prior: &Prior,
        d_recon: ArrayView1<f64>,
        d_kl: ArrayView1<f64>,
        grads: &mut ModelGrads,
        d_prior: &mut Array2<f64>,
    ) -> Result<()> {
        let (b, p, l) = (x.nrows(), self.patch_dim, self.latent_dim);

        // Decoder head: mean through the logistic, log-variance through the clamp.
        let mut d_gen_out = Array2::zeros((b, 2 * p));
        for r in 0..b {
            let c = d_recon[r];
            if c == 0.0 {
                continue;
            }
            for i in 0..p {
                let m = br.x_mean[[r, i]];
                let lv = br.x_log_var[[r, i]];
                let prec = (-lv).exp();
                let d = x[[r, i]] - m;
                d_gen_out[[r, i]] = c * d * prec * m * (1.0 - m);
                d_gen_out[[r, p + i]] = c
                    * (-0.5 + 0.5 * d * d * prec)
                    * in_range(br.x_raw_log_var[[r, i]], DECODER_LOG_VAR_MIN, LOG_VAR_MAX);
            }
        }
        let (g_gen, d_z) = self.f_gen.backward(&br.gen_cache, d_gen_out.view())?;
        grads.f_gen.add_assign(&g_gen);

        let k = y.index();
        let pm = prior.mean.row(k);
        let plv = prior.log_var.row(k);
        let mut d_inf_out = Array2::zeros((b, 2 * l));
        for r in 0..b {
            let ck = d_kl[r];
            for j in 0..l {
                let qm = br.q_mean[[r, j]];
                let qlv = br.q_log_var[[r, j]];
                let sigma = (0.5 * qlv).exp();
                let p_prec = (-plv[j]).exp();
                let diff = qm - pm[j];

                // z = μ + σ ε
                let dz = d_z[[r, j]];
                let mut d_mean = dz;
                let mut d_lv = dz * 0.5 * sigma * noise[[r, j]];

                d_mean += ck * diff * p_prec;
                d_lv += ck * 0.5 * (qlv.exp() * p_prec - 1.0);
                d_prior[[k, j]] -= ck * diff * p_prec;
                d_prior[[k, l + j]] += ck * 0.5 * (1.0 - (qlv.exp() + diff * diff) * p_prec);

                d_inf_out[[r, j]] = d_mean;
                d_inf_out[[r, l + j]] =
                    d_lv * in_range(br.q_raw_log_var[[r, j]], LOG_VAR_MIN, LOG_VAR_MAX);
            }
        }
        let (g_inf, _) = self.f_inf.backward(&br.inf_cache, d_inf_out.view())?;
        grads.f_inf.add_assign(&g_inf);
        Ok(())
    }

    /// Evaluates per-patch ELBOs and the total loss over an unlabeled batch
    /// `xu` and a labeled target batch `xt`, optionally with gradients.
    pub fn evaluate(
        &self,
        xu: ArrayView2<f64>,
        xt: ArrayView2<f64>,
        noise: &BatchNoise,
        labeled_weight: f64,
        want_grads: bool,
    ) -> Result<Evaluation> {
        let (p, l) = (self.patch_dim, self.latent_dim);
        let (bu, bt) = (xu.nrows(), xt.nrows());
        if bu + bt == 0 {
            return Err(invalid("both batches are empty"));
        }
        if (bu > 0 && xu.ncols() != p) || (bt > 0 && xt.ncols() != p) {
            return Err(invalid(format!("patches must have {p} values")));
        }
        for (name, arr, rows) in [
            ("unlabeled[0]", &noise.unlabeled[0], bu),
            ("unlabeled[1]", &noise.unlabeled[1], bu),
            ("labeled", &noise.labeled, bt),
        ] {
            if arr.dim() != (rows, l) {
                return Err(invalid(format!(
                    "{name} noise has shape {:?}, expected ({rows}, {l})",
                    arr.dim()
                )));
            }
        }

        let prior = self.prior_forward()?;
        let mut grads = want_grads.then(|| ModelGrads::zeros_like(self));
        let mut d_prior = Array2::zeros((NUM_CATEGORIES, 2 * l));
        let mut loss = 0.0;
        let mut unlabeled = Vec::with_capacity(bu);
        let mut labeled = Vec::with_capacity(bt);

        if bu > 0 {
            let (logits, cls_cache) = self.f_cls.forward_batch(classifier_input(xu).view())?;
            let mut log_pi = Array2::zeros((bu, NUM_CATEGORIES));
            for r in 0..bu {
                let a = logits.row(r);
                let max = a.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                let lse = max + a.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                for c in 0..NUM_CATEGORIES {
                    log_pi[[r, c]] = a[c] - lse;
                }
            }
            let pi = log_pi.mapv(f64::exp);
            let log_prior = self.prior_y.map(f64::ln);

            let branches = [
                self.branch_forward(xu, Category::NonTarget, &prior, noise.unlabeled[0].view())?,
                self.branch_forward(xu, Category::Target, &prior, noise.unlabeled[1].view())?,
            ];

            let mut kl_y = Array1::zeros(bu);
            for r in 0..bu {
                let mut acc = 0.0;
                for c in 0..NUM_CATEGORIES {
                    if pi[[r, c]] > 0.0 {
                        acc += pi[[r, c]] * (log_pi[[r, c]] - log_prior[c]);
                    }
                }
                kl_y[r] = acc;
                let recon: f64 = (0..NUM_CATEGORIES).map(|c| pi[[r, c]] * branches[c].recon[r]).sum();
                let kl_z: f64 = (0..NUM_CATEGORIES).map(|c| pi[[r, c]] * branches[c].kl_z[r]).sum();
                let total = recon - kl_z - acc;
                unlabeled.push(ElboBreakdown {
                    reconstruction: recon,
                    kl_z,
                    kl_y: acc,
                    total,
                });
            }
            let mean_u = unlabeled.iter().map(|e| e.total).sum::<f64>() / bu as f64;
            loss -= mean_u;

            if let Some(g) = grads.as_mut() {
                let scale = -1.0 / bu as f64;
                // Classifier: d/dπ_c of the ELBO, pushed through the softmax.
                let mut d_logits = Array2::zeros((bu, NUM_CATEGORIES));
                for r in 0..bu {
                    let elbo_c: Vec<f64> = (0..NUM_CATEGORIES)
                        .map(|c| {
                            let t = if pi[[r, c]] > 0.0 {
                                log_pi[[r, c]] - log_prior[c]
                            } else {
                                0.0
                            };
                            branches[c].recon[r] - branches[c].kl_z[r] - t
                        })
                        .collect();
                    let mean: f64 = (0..NUM_CATEGORIES).map(|c| pi[[r, c]] * elbo_c[c]).sum();
                    for c in 0..NUM_CATEGORIES {
                        d_logits[[r, c]] = scale * pi[[r, c]] * (elbo_c[c] - mean);
                    }
                }
                let (g_cls, _) = self.f_cls.backward(&cls_cache, d_logits.view())?;
                g.f_cls.add_assign(&g_cls);

                for (c, br) in branches.iter().enumerate() {
                    let w = pi.column(c);
                    let d_recon = w.mapv(|v| scale * v);
                    let d_kl = w.mapv(|v| -scale * v);
                    self.branch_backward(
                        xu,
                        Category::ALL[c],
                        br,
                        noise.unlabeled[c].view(),
                        &prior,
                        d_recon.view(),
                        d_kl.view(),
                        g,
                        &mut d_prior,
                    )?;
                }
            }
        }

        if bt > 0 {
            let br = self.branch_forward(xt, Category::Target, &prior, noise.labeled.view())?;
            for r in 0..bt {
                labeled.push(ElboBreakdown {
                    reconstruction: br.recon[r],
                    kl_z: br.kl_z[r],
                    kl_y: 0.0,
                    total: br.recon[r] - br.kl_z[r],
                });
            }
            let mean_t = labeled.iter().map(|e| e.total).sum::<f64>() / bt as f64;
            loss -= labeled_weight * mean_t;

            if let Some(g) = grads.as_mut() {
                let scale = -labeled_weight / bt as f64;
                let d_recon = Array1::from_elem(bt, scale);
                let d_kl = Array1::from_elem(bt, -scale);
                self.branch_backward(
                    xt,
                    Category::Target,
                    &br,
                    noise.labeled.view(),
                    &prior,
                    d_recon.view(),
                    d_kl.view(),
                    g,
                    &mut d_prior,
                )?;
            }
        }

        if let Some(g) = grads.as_mut() {
            // Log-variance clamp on the prior heads.
            for k in 0..NUM_CATEGORIES {
                for j in 0..l {
                    d_prior[[k, l + j]] *= in_range(prior.raw_log_var[[k, j]], LOG_VAR_MIN, LOG_VAR_MAX);
                }
            }
            let (g_prior, _) = self.f_prior.backward(&prior.cache, d_prior.view())?;
            g.f_prior.add_assign(&g_prior);
        }

        Ok(Evaluation {
            unlabeled,
            labeled,
            loss,
            grads,
        })
    }

    fn single_row<'a>(&self, x: &'a [f64]) -> Result<ArrayView2<'a, f64>> {
        if x.len() != self.patch_dim {
            return Err(invalid(format!(
                "patch has {} values, model expects {}",
                x.len(),
                self.patch_dim
            )));
        }
        ArrayView2::from_shape((1, x.len()), x).map_err(|e| invalid(e.to_string()))
    }

    fn row_noise(&self, v: &[f64]) -> Result<Array2<f64>> {
        if v.len() != self.latent_dim {
            return Err(invalid(format!(
                "noise has {} entries, latent_dim is {}",
                v.len(),
                self.latent_dim
            )));
        }
        Ok(Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("one row"))
    }

    /// ELBO of one unlabeled patch. `noise[c]` is the latent noise for category `c`.
    pub fn elbo_unlabeled(&self, x: &[f64], noise: [&[f64]; 2]) -> Result<ElboBreakdown> {
        let xu = self.single_row(x)?;
        let n = BatchNoise {
            unlabeled: [self.row_noise(noise[0])?, self.row_noise(noise[1])?],
            labeled: Array2::zeros((0, self.latent_dim)),
        };
        let empty = Array2::zeros((0, self.patch_dim));
        Ok(self.evaluate(xu, empty.view(), &n, 1.0, false)?.unlabeled[0])
    }

    /// ELBO of one labeled target patch.
    pub fn elbo_labeled(&self, x: &[f64], noise: &[f64]) -> Result<ElboBreakdown> {
        let xt = self.single_row(x)?;
        let n = BatchNoise {
            unlabeled: [
                Array2::zeros((0, self.latent_dim)),
                Array2::zeros((0, self.latent_dim)),
            ],
            labeled: self.row_noise(noise)?,
        };
        let empty = Array2::zeros((0, self.patch_dim));
        Ok(self.evaluate(empty.view(), xt, &n, 1.0, false)?.labeled[0])
    }

    /// `−(mean_u ELBO_u + mean_t ELBO_t)`.
    pub fn total_loss(&self, xu: ArrayView2<f64>, xt: ArrayView2<f64>, noise: &BatchNoise) -> Result<f64> {
        Ok(self.evaluate(xu, xt, noise, 1.0, false)?.loss)
    }

    /// Loss and gradient with respect to every parameter, labeled term scaled by `labeled_weight`.
    pub fn loss_and_grad(
        &self,
        xu: ArrayView2<f64>,
        xt: ArrayView2<f64>,
        noise: &BatchNoise,
        labeled_weight: f64,
    ) -> Result<(f64, ModelGrads)> {
        let e = self.evaluate(xu, xt, noise, labeled_weight, true)?;
        Ok((e.loss, e.grads.expect("requested")))
    }
}

/// Stacks equally sized rows into a `(rows, width)` matrix.
pub fn stack_rows<'a, I>(rows: I, width: usize) -> Array2<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        assert_eq!(r.len(), width, "row width mismatch");
        data.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, width), data).expect("consistent widths")
}

