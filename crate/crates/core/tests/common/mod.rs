#![allow(dead_code)]

use gzsl_core::classifier::SoftmaxClassifier;
use gzsl_core::config::PipelineConfig;
use gzsl_core::data::{generate_synthetic, Dataset};
use gzsl_core::embedding::{prototype_loss, prototype_loss_grad, EmbeddingNet};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FIXTURE_SEED: u64 = 7;
pub const FD_STEP: f64 = 1e-4;
pub const FD_POINTS: u64 = 10;

/// 10 seen + 5 unseen classes, 32-dim features, 100 instances per class.
///
/// The 4-dim semantics under-determine the 5-dim subspace holding the class
/// means, so unseen class embeddings are imperfect and the unrestricted
/// search drifts toward seen classes.
pub fn fixture() -> Dataset {
    generate_synthetic(10, 5, 32, 4, 100, 0.5, FIXTURE_SEED).unwrap()
}

pub fn fixture_config() -> PipelineConfig {
    PipelineConfig::default()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

/// `||analytic - numeric|| / max(||analytic||, ||numeric||)` over every
/// coordinate of `params`, with central differences.
pub fn relative_error(
    params: &mut [f64],
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> f64,
) -> f64 {
    let mut numeric = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + FD_STEP;
        let up = loss(params);
        params[i] = orig - FD_STEP;
        let down = loss(params);
        params[i] = orig;
        numeric[i] = (up - down) / (2.0 * FD_STEP);
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(&numeric)).max(1e-12)
}

/// Worst relative error of the classifier cross-entropy gradient
/// (weights and bias together) over the seeded points.
pub fn classifier_gradient_error(temperature: f64) -> f64 {
    let (p, d, n) = (4, 5, 12);
    (0..FD_POINTS)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let w = random_matrix(&mut rng, p, d);
            let b: Array1<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xs = random_matrix(&mut rng, n, d) * 2.0;
            let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..p)).collect();
            let clf = SoftmaxClassifier::new(w.clone(), b.clone()).unwrap();
            let (_, gw, gb) = clf.cross_entropy_grad(xs.view(), &targets, temperature);
            let mut params: Vec<f64> = w.iter().chain(b.iter()).copied().collect();
            let analytic: Vec<f64> = gw.iter().chain(gb.iter()).copied().collect();
            relative_error(&mut params, &analytic, |v| {
                let w = Array2::from_shape_vec((p, d), v[..p * d].to_vec()).unwrap();
                let b = Array1::from(v[p * d..].to_vec());
                SoftmaxClassifier::new(w, b).unwrap().cross_entropy(
                    xs.view(),
                    &targets,
                    temperature,
                )
            })
        })
        .fold(0.0, f64::max)
}

pub fn prototype_gradient_error() -> f64 {
    let (p, d, n) = (3, 4, 15);
    (0..FD_POINTS)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let points = random_matrix(&mut rng, p, d);
            let xs = random_matrix(&mut rng, n, d);
            let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..p)).collect();
            let (_, grad) = prototype_loss_grad(&points, xs.view(), &targets);
            let mut params = points.iter().copied().collect::<Vec<_>>();
            relative_error(&mut params, grad.as_slice().unwrap(), |v| {
                let pts = Array2::from_shape_vec((p, d), v.to_vec()).unwrap();
                prototype_loss(&pts, xs.view(), &targets)
            })
        })
        .fold(0.0, f64::max)
}

/// Worst relative error over the first-layer and second-layer gradients,
/// each checked separately.
pub fn embedding_gradient_error() -> f64 {
    let (a, h, d, n) = (3, 6, 4, 5);
    (0..FD_POINTS)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let w1 = random_matrix(&mut rng, h, a);
            let w2 = random_matrix(&mut rng, d, h);
            let ys = random_matrix(&mut rng, n, a);
            let targets = random_matrix(&mut rng, n, d);
            let lambda = 0.05;
            let net = EmbeddingNet::new(w1.clone(), w2.clone(), lambda).unwrap();
            let (_, g1, g2) = net.loss_grad(ys.view(), targets.view());

            let mut p1 = w1.iter().copied().collect::<Vec<_>>();
            let e1 = relative_error(&mut p1, g1.as_slice().unwrap(), |v| {
                let w1 = Array2::from_shape_vec((h, a), v.to_vec()).unwrap();
                EmbeddingNet::new(w1, w2.clone(), lambda)
                    .unwrap()
                    .loss(ys.view(), targets.view())
            });
            let mut p2 = w2.iter().copied().collect::<Vec<_>>();
            let e2 = relative_error(&mut p2, g2.as_slice().unwrap(), |v| {
                let w2 = Array2::from_shape_vec((d, h), v.to_vec()).unwrap();
                EmbeddingNet::new(w1.clone(), w2, lambda)
                    .unwrap()
                    .loss(ys.view(), targets.view())
            });
            e1.max(e2)
        })
        .fold(0.0, f64::max)
}

/// Fixed-seed draws from a two-parameter Weibull by inversion.
pub fn weibull_samples(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            scale * (-(1.0 - u).ln()).powf(1.0 / shape)
        })
        .collect()
}

/// Mann-Whitney statistic by enumerating every positive/negative pair, ties
/// counting one half. Returned as `(twice the pair score, pair count)`.
pub fn pairwise_auc(scores: &[f64], positive: &[bool]) -> (u64, u64) {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        if !positive[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if positive[j] {
                continue;
            }
            pairs += 1;
            twice += match si.partial_cmp(&sj).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    (twice, pairs)
}
