//! Trends on one seed-only detection iteration over the easy benchmark.

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tggm::model::Category;
use tggm::synthdata::{make_benchmark, Difficulty};
use tggm::trainer::run;
use tggm::windowing::{extract_patch, slide_windows};
use tggm::{BBox, TrainConfig};

fn mean_of(rows: &[Vec<f64>]) -> Array1<f64> {
    let mut acc = Array1::zeros(rows[0].len());
    for r in rows {
        acc += &Array1::from(r.clone());
    }
    acc / rows.len() as f64
}

fn l2(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    (a - b).mapv(|v| v * v).sum().sqrt()
}

#[test]
fn one_iteration_learns_the_target_cluster() {
    let bench = make_benchmark(Difficulty::Easy).unwrap();
    let config = TrainConfig {
        max_iterations: 1,
        ..bench.config.clone()
    };
    let out = run(&bench.truth.image, &bench.truth.roi, bench.seed_window, &config).unwrap();
    let rec = &out.result.history[0];
    assert_eq!(rec.epoch_losses.len(), config.epochs_per_iteration);
    assert!(rec.last_epoch_loss < rec.first_epoch_loss, "{} !< {}", rec.last_epoch_loss, rec.first_epoch_loss);
    assert!(rec.newly_detected > 0);

    // Split ROI windows by whether they hold a whole target.
    let img = &bench.truth.image;
    let windows = slide_windows(img.width, img.height, &bench.truth.roi, 16, 8).unwrap();
    let (mut targets, mut background) = (Vec::new(), Vec::new());
    for w in windows {
        let covered = bench.truth.target_boxes.iter().any(|b| *b == BBox::from(w));
        let touches = bench.truth.target_boxes.iter().any(|b| b.intersection_area(&BBox::from(w)) > 0.0);
        let pixels = extract_patch(img, w).unwrap().pixels;
        if covered {
            targets.push(pixels);
        } else if !touches {
            background.push(pixels);
        }
    }
    assert_eq!(targets.len(), 12);

    let q1 = |rows: &[Vec<f64>]| rows.iter().map(|x| out.model.classify(x).unwrap()[1]).sum::<f64>() / rows.len() as f64;
    let (q_target, q_background) = (q1(&targets), q1(&background));
    assert!(q_target > q_background, "{q_target} vs {q_background}");

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let generated: Vec<Vec<f64>> = (0..500).map(|_| out.model.sample(Category::Target, &mut rng).unwrap()).collect();
    let g = mean_of(&generated);
    let (t, b) = (mean_of(&targets), mean_of(&background));
    assert!(l2(&g, &t) < l2(&g, &b), "{} vs {}", l2(&g, &t), l2(&g, &b));
}
