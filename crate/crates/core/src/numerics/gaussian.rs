//! Diagonal Gaussians and categorical helpers.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn clamp_log_var(v: f64) -> f64 {
    v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)
}

/// Diagonal Gaussian parameterized by mean and natural-log variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianParams {
    /// Builds the distribution, clamping every log-variance into `[-10, 10]`.
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != log_var.len() {
            return Err(invalid(format!(
                "mean/log_var lengths {} and {} must match and be non-zero",
                mean.len(),
                log_var.len()
            )));
        }
        Ok(Self {
            mean,
            log_var: log_var.into_iter().map(clamp_log_var).collect(),
        })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std_dev(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_var.iter().map(|lv| (0.5 * lv).exp())
    }
}

/// Closed-form `KL(q ‖ p)` for diagonal Gaussians, summed over dimensions.
pub fn kl_diag_gaussians(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(invalid(format!(
            "KL between {}- and {}-dimensional Gaussians",
            q.dim(),
            p.dim()
        )));
    }
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let diff = q.mean[i] - p.mean[i];
        // exp(lv_q - lv_p) keeps the variance ratio exactly 1 when q = p.
        let ratio = (q.log_var[i] - p.log_var[i]).exp();
        kl += 0.5 * (p.log_var[i] - q.log_var[i] + ratio + diff * diff * (-p.log_var[i]).exp() - 1.0);
    }
    // Rounding can leave tiny negatives when q ≈ p.
    Ok(kl.max(0.0))
}

/// `mean + exp(log_var / 2) ⊙ noise`.
pub fn reparameterize(g: &GaussianParams, noise: &[f64]) -> Result<Vec<f64>> {
    if noise.len() != g.dim() {
        return Err(invalid(format!(
            "noise has {} entries, distribution has {}",
            noise.len(),
            g.dim()
        )));
    }
    Ok(g
        .mean
        .iter()
        .zip(g.std_dev())
        .zip(noise)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

pub fn gaussian_log_likelihood(x: &[f64], g: &GaussianParams) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(invalid(format!(
            "point has {} entries, distribution has {}",
            x.len(),
            g.dim()
        )));
    }
    Ok(x.iter()
        .zip(&g.mean)
        .zip(&g.log_var)
        .map(|((xi, m), lv)| {
            let d = xi - m;
            -HALF_LN_2PI - 0.5 * lv - 0.5 * d * d * (-lv).exp()
        })
        .sum())
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g1(mean: f64, log_var: f64) -> GaussianParams {
        GaussianParams::new(vec![mean], vec![log_var]).unwrap()
    }

    #[test]
    fn kl_of_identical_is_zero() {
        let q = GaussianParams::new(vec![0.3, -1.0], vec![0.2, -0.7]).unwrap();
        assert_eq!(kl_diag_gaussians(&q, &q.clone()).unwrap(), 0.0);
    }

    #[test]
    fn kl_known_values() {
        assert!((kl_diag_gaussians(&g1(1.0, 0.0), &g1(0.0, 0.0)).unwrap() - 0.5).abs() < 1e-15);
        // var e: 0.5 * (0 - 1 + e - 1)
        let expected = 0.5 * (std::f64::consts::E - 2.0);
        let kl = kl_diag_gaussians(&g1(0.0, 1.0), &g1(0.0, 0.0)).unwrap();
        assert!((kl - expected).abs() < 1e-15);
        assert!((kl - 0.3591).abs() < 1e-4);
    }

    #[test]
    fn kl_dimension_mismatch() {
        let a = GaussianParams::standard(2);
        let b = GaussianParams::standard(3);
        assert!(kl_diag_gaussians(&a, &b).is_err());
    }

    #[test]
    fn log_var_is_clamped() {
        let g = GaussianParams::new(vec![0.0, 0.0], vec![-50.0, 50.0]).unwrap();
        assert_eq!(g.log_var, vec![LOG_VAR_MIN, LOG_VAR_MAX]);
    }

    #[test]
    fn reparameterize_edges() {
        let g = GaussianParams::new(vec![0.5, -2.0], vec![1.3, -0.4]).unwrap();
        assert_eq!(reparameterize(&g, &[0.0, 0.0]).unwrap(), g.mean);
        let std = GaussianParams::standard(3);
        assert_eq!(reparameterize(&std, &[0.1, -0.2, 3.0]).unwrap(), vec![0.1, -0.2, 3.0]);
        assert!(reparameterize(&std, &[0.0]).is_err());
    }

    #[test]
    fn log_likelihood_at_mode_and_unit_deviation() {
        let g = g1(0.4, 0.0);
        let at_mode = gaussian_log_likelihood(&[0.4], &g).unwrap();
        assert!((at_mode + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        assert!((at_mode + 0.9189).abs() < 1e-4);
        let off = gaussian_log_likelihood(&[1.4], &g).unwrap();
        assert!((off - (at_mode - 0.5)).abs() < 1e-15);
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn log_likelihood_matches_density_product() {
        // Independent evaluation: product of normal pdfs, then log.
        let g = GaussianParams::new(vec![0.2, 0.9, -0.3], vec![-0.5, 0.8, 0.1]).unwrap();
        let x = [0.45, 0.1, -1.2];
        let mut density = 1.0;
        for i in 0..3 {
            let var = g.log_var[i].exp();
            let d = x[i] - g.mean[i];
            density *= (-d * d / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        }
        let ll = gaussian_log_likelihood(&x, &g).unwrap();
        assert!((ll - density.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let p = softmax(&[3f64.ln(), 0.0]);
        assert!((p[0] - 0.75).abs() < 1e-15 && (p[1] - 0.25).abs() < 1e-15);
        let a = softmax(&[0.3, -1.1]);
        let b = softmax(&[1000.3, 998.9]);
        assert!((a[0] - b[0]).abs() < 1e-12);
    }
}
