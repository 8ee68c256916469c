//! Reference implementations used as oracles. None of these call into the
//! library's math; they only read public parameters and data.

#![allow(dead_code, clippy::needless_range_loop)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tggm::evaluation::Scored;
use tggm::model::{ModelDims, TggmModel};
use tggm::numerics::{Activation, LayerStack};
use tggm::{BBox, GaussianParams, Window};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A model with every parameter perturbed and a random `p(y)`.
pub fn random_model(rng: &mut ChaCha8Rng, patch_dim: usize, latent_dim: usize, hidden: usize) -> TggmModel {
    let dims = ModelDims {
        patch_dim,
        latent_dim,
        hidden_width: hidden,
    };
    let mut m = TggmModel::new(dims, 0, rng).unwrap();
    let flat: Vec<f64> = m
        .flat_params()
        .iter()
        .map(|v| v + rng.random_range(-0.3..0.3))
        .collect();
    m.set_flat_params(&flat).unwrap();
    let p1 = rng.random_range(0.1..0.9);
    m.set_prior_y([1.0 - p1, p1]).unwrap();
    m
}

pub fn uniform_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.0..1.0))
}

pub fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

// ---------------------------------------------------------------- networks

/// Scalar-by-scalar two-layer forward pass.
pub fn mlp(net: &LayerStack, input: &[f64]) -> Vec<f64> {
    let mut h = input.to_vec();
    for layer in net.layers() {
        let (rows, cols) = layer.weights.dim();
        assert_eq!(cols, h.len());
        let mut next = vec![0.0; rows];
        for (o, slot) in next.iter_mut().enumerate() {
            let mut acc = layer.bias[o];
            for i in 0..cols {
                acc += layer.weights[[o, i]] * h[i];
            }
            *slot = match layer.activation {
                Activation::Relu => {
                    if acc > 0.0 {
                        acc
                    } else {
                        0.0
                    }
                }
                Activation::Identity => acc,
            };
        }
        h = next;
    }
    h
}

fn clamp(v: f64, lo: f64, hi: f64) -> f64 {
    if v < lo {
        lo
    } else if v > hi {
        hi
    } else {
        v
    }
}

/// Mean and clamped log-variance halves of a network output.
pub fn split(out: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    (out[..d].to_vec(), out[d..].iter().map(|&v| clamp(v, -10.0, 10.0)).collect())
}

pub fn posterior(m: &TggmModel, x: &[f64], y: usize) -> (Vec<f64>, Vec<f64>) {
    let mut input = x.to_vec();
    input.push(if y == 0 { 1.0 } else { 0.0 });
    input.push(if y == 1 { 1.0 } else { 0.0 });
    split(&mlp(&m.f_inf, &input), m.latent_dim)
}

pub fn prior(m: &TggmModel, y: usize) -> (Vec<f64>, Vec<f64>) {
    let onehot = if y == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
    split(&mlp(&m.f_prior, &onehot), m.latent_dim)
}

pub fn decoder(m: &TggmModel, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let out = mlp(&m.f_gen, z);
    let p = m.patch_dim;
    let mean = out[..p].iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
    let log_var = out[p..].iter().map(|&v| clamp(v, (1e-3f64).ln(), 10.0)).collect();
    (mean, log_var)
}

pub fn classifier(m: &TggmModel, x: &[f64]) -> [f64; 2] {
    let centered: Vec<f64> = x.iter().map(|v| v - 0.5).collect();
    let a = mlp(&m.f_cls, &centered);
    let e0 = 1.0 / (1.0 + (a[1] - a[0]).exp());
    [e0, 1.0 - e0]
}

// ---------------------------------------------------------------- densities

pub fn log_normal(x: &[f64], mean: &[f64], log_var: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let var = log_var[i].exp();
        let d = x[i] - mean[i];
        acc += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - d * d / (2.0 * var);
    }
    acc
}

/// Term-by-term `KL(N(m1, v1) ‖ N(m2, v2))`.
pub fn kl_gauss(m1: &[f64], lv1: &[f64], m2: &[f64], lv2: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..m1.len() {
        let (v1, v2) = (lv1[i].exp(), lv2[i].exp());
        acc += 0.5 * ((v2 / v1).ln() + (v1 + (m1[i] - m2[i]).powi(2)) / v2 - 1.0);
    }
    acc
}

/// `(estimate, standard error)` of `E_q[log q − log p]` from `n` draws.
pub fn kl_monte_carlo(q: &GaussianParams, p: &GaussianParams, n: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let d = q.mean.len();
    let mut z = vec![0.0; d];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        for i in 0..d {
            let e: f64 = rng.sample(StandardNormal);
            z[i] = q.mean[i] + (0.5 * q.log_var[i]).exp() * e;
        }
        let v = log_normal(&z, &q.mean, &q.log_var) - log_normal(&z, &p.mean, &p.log_var);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}

// ---------------------------------------------------------------- ELBO

/// One branch: `log p(x | z_y) − KL[q(z|x,y) ‖ p(z|y)]` with `z_y = μ + σ ε`.
pub fn branch_terms(m: &TggmModel, x: &[f64], y: usize, eps: &[f64]) -> (f64, f64) {
    let (qm, qlv) = posterior(m, x, y);
    let z: Vec<f64> = (0..qm.len()).map(|j| qm[j] + (qlv[j] / 2.0).exp() * eps[j]).collect();
    let (xm, xlv) = decoder(m, &z);
    let recon = log_normal(x, &xm, &xlv);
    let (pm, plv) = prior(m, y);
    (recon, kl_gauss(&qm, &qlv, &pm, &plv))
}

/// Unlabeled bound: both categories enumerated, weighted by `q(y|x)`, minus `KL[q(y|x) ‖ p(y)]`.
pub fn elbo_u(m: &TggmModel, x: &[f64], eps: [&[f64]; 2]) -> f64 {
    let q = classifier(m, x);
    let mut total = 0.0;
    for y in 0..2 {
        let (recon, kl) = branch_terms(m, x, y, eps[y]);
        total += q[y] * (recon - kl);
        total -= q[y] * (q[y].ln() - m.prior_y[y].ln());
    }
    total
}

/// Labeled target bound: only the `y = 1` branch.
pub fn elbo_t(m: &TggmModel, x: &[f64], eps: &[f64]) -> f64 {
    let (recon, kl) = branch_terms(m, x, 1, eps);
    recon - kl
}

// ---------------------------------------------------------------- geometry

/// Non-zero winding number about `(px, py)`.
pub fn winding_inside(poly: &[[f64; 2]], px: f64, py: f64) -> bool {
    let n = poly.len();
    let mut wn = 0i32;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        let side = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0);
        if y0 <= py {
            if y1 > py && side > 0.0 {
                wn += 1;
            }
        } else if y1 <= py && side < 0.0 {
            wn -= 1;
        }
    }
    wn != 0
}

/// Star-shaped polygon with `n` vertices: one jittered angle per sector of
/// `2π/n`, random radii. Angular gaps stay below π for `n ≥ 4`, so the
/// polygon is simple.
pub fn star_polygon(rng: &mut ChaCha8Rng, n: usize, cx: f64, cy: f64, r_min: f64, r_max: f64) -> Vec<[f64; 2]> {
    let sector = std::f64::consts::TAU / n as f64;
    (0..n)
        .map(|k| {
            let a = (k as f64 + rng.random_range(0.05..0.95)) * sector;
            let r = rng.random_range(r_min..r_max);
            [cx + r * a.cos(), cy + r * a.sin()]
        })
        .collect()
}

// ---------------------------------------------------------------- evaluation

/// Grid mask by unit-pixel counting. Boxes must have integer coordinates.
pub fn pixel_grid_mask(boxes: &[BBox], width: usize, height: usize, g: usize) -> Vec<bool> {
    let rows = height.div_ceil(g);
    let cols = width.div_ceil(g);
    let mut out = vec![false; rows * cols];
    for b in boxes {
        let (bx0, by0) = (b.x as i64, b.y as i64);
        let (bx1, by1) = (bx0 + b.width as i64, by0 + b.height as i64);
        let box_px = (bx1 - bx0) * (by1 - by0);
        for r in 0..rows {
            for c in 0..cols {
                let mut overlap = 0i64;
                let mut cell_px = 0i64;
                for py in (r * g)..((r + 1) * g).min(height) {
                    for px in (c * g)..((c + 1) * g).min(width) {
                        cell_px += 1;
                        let (px, py) = (px as i64, py as i64);
                        if px >= bx0 && px < bx1 && py >= by0 && py < by1 {
                            overlap += 1;
                        }
                    }
                }
                if overlap > 0 && (2 * overlap >= box_px || 2 * overlap >= cell_px) {
                    out[r * cols + c] = true;
                }
            }
        }
    }
    out
}

pub fn iou_ref(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x + a.width).min(b.x + b.width) - a.x.max(b.x);
    let h = (a.y + a.height).min(b.y + b.height) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.width * a.height + b.width * b.height - inter)
}

fn outranks(a: &Scored, b: &Scored) -> bool {
    (a.score, -a.bbox.x, -a.bbox.y) > (b.score, -b.bbox.x, -b.bbox.y)
}

/// The unique subset `S` such that a candidate is in `S` exactly when no
/// higher-ranked member of `S` overlaps it above `t`, found by trying every subset.
pub fn nms_brute_force(c: &[Scored], t: f64) -> Vec<usize> {
    let n = c.len();
    assert!(n <= 12);
    let mut found = Vec::new();
    for bits in 0u32..(1 << n) {
        let member = |i: usize| bits & (1 << i) != 0;
        let consistent = (0..n).all(|i| {
            let suppressed = (0..n).any(|j| j != i && member(j) && outranks(&c[j], &c[i]) && iou_ref(&c[j].bbox, &c[i].bbox) > t);
            member(i) == !suppressed
        });
        if consistent {
            found.push(bits);
        }
    }
    assert_eq!(found.len(), 1, "greedy fixed point must be unique");
    (0..n).filter(|i| found[0] & (1 << i) != 0).collect()
}

/// Lattice windows whose centers pass [`winding_inside`], row-major.
pub fn lattice_oracle(width: usize, height: usize, poly: &[[f64; 2]], size: usize, stride: usize) -> Vec<Window> {
    let mut out = Vec::new();
    let mut y = 0;
    while y + size <= height {
        let mut x = 0;
        while x + size <= width {
            let (cx, cy) = (x as f64 + size as f64 / 2.0, y as f64 + size as f64 / 2.0);
            if winding_inside(poly, cx, cy) {
                out.push(Window { x, y, size });
            }
            x += stride;
        }
        y += stride;
    }
    out
}

pub struct ApFixture {
    pub name: &'static str,
    pub detections: Vec<Scored>,
    pub gt: Vec<BBox>,
    pub expected: f64,
}

/// Ranked detections with their PR points walked by hand.
pub fn ap_fixtures() -> Vec<ApFixture> {
    let g: Vec<BBox> = (0..4).map(|i| BBox::new(20.0 * i as f64, 0.0, 10.0, 10.0)).collect();
    let miss = |k: f64| BBox::new(100.0 + 20.0 * k, 100.0, 10.0, 10.0);
    let s = |bbox: BBox, score: f64| Scored { bbox, score };
    // IoU with g[0] is 50 / 150.
    let shifted = BBox::new(5.0, 0.0, 10.0, 10.0);
    vec![
        ApFixture {
            // (1/2, 1), (1, 1)
            name: "all found",
            detections: vec![s(g[0], 0.9), s(g[1], 0.8)],
            gt: g[..2].to_vec(),
            expected: 1.0,
        },
        ApFixture {
            // (0, 0), (1/3, 1/2), (2/3, 2/3), (1, 3/4)
            name: "false positive on top",
            detections: vec![s(miss(0.0), 0.95), s(g[0], 0.9), s(g[1], 0.8), s(g[2], 0.7)],
            gt: g[..3].to_vec(),
            expected: 0.75,
        },
        ApFixture {
            // (1/2, 1), (1/2, 1/2), (1, 2/3) -> 1/2 + 1/2 · 2/3
            name: "false positive in the middle",
            detections: vec![s(g[0], 0.9), s(miss(0.0), 0.8), s(g[1], 0.7)],
            gt: g[..2].to_vec(),
            expected: 5.0 / 6.0,
        },
        ApFixture {
            // (1/4, 1), (1/2, 1), (1/2, 2/3), (1/2, 1/2), (3/4, 3/5) -> 1/4 + 1/4 + 1/4 · 3/5
            name: "one target never found",
            detections: vec![s(g[0], 0.9), s(g[1], 0.8), s(miss(0.0), 0.7), s(miss(1.0), 0.6), s(g[2], 0.5)],
            gt: g.clone(),
            expected: 0.65,
        },
        ApFixture {
            // Low-IoU hit and duplicate are false positives: (0, 0), (1/2, 1/2), (1/2, 1/3) -> 1/4
            name: "low overlap and duplicate",
            detections: vec![s(shifted, 0.9), s(g[1], 0.5), s(g[1], 0.4)],
            gt: g[..2].to_vec(),
            expected: 0.25,
        },
    ]
}
