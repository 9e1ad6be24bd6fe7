//! Linear seen-class softmax classifier trained with temperature-scaled
//! cross-entropy.
//!
//! Class indices in this module are positions in
//! [`Dataset::seen_classes`](crate::data::Dataset::seen_classes), not raw
//! dataset class ids.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::error::{GzslError, Result};
use crate::math::{gather_rows, log_sum_exp, snap_f32, softmax};

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxClassifier {
    weights: Array2<f64>,
    bias: Array1<f64>,
}

impl SoftmaxClassifier {
    /// `weights` is `p × d`, `bias` has length `p`.
    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(GzslError::InvalidArgument(format!(
                "weights have {} rows but bias has {} entries",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(GzslError::InvalidArgument("empty classifier".into()));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(GzslError::Numerical(
                "non-finite classifier parameter".into(),
            ));
        }
        Ok(Self { weights, bias })
    }

    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    pub fn logits<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(GzslError::InvalidArgument(format!(
                "input has dimension {}, classifier expects {}",
                x.len(),
                self.dim()
            )));
        }
        let mut xs = Vec::with_capacity(x.len());
        for &v in x {
            let v: f64 = v.into();
            if !v.is_finite() {
                return Err(GzslError::InvalidArgument(
                    "non-finite input feature".into(),
                ));
            }
            xs.push(v);
        }
        Ok(self
            .weights
            .rows()
            .into_iter()
            .zip(self.bias.iter())
            .map(|(w, b)| w.iter().zip(&xs).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect())
    }

    /// Class probabilities. With `temperature` set, logits are divided by it
    /// before the softmax; `None` is the plain softmax.
    pub fn softmax_probs<T: Copy + Into<f64>>(
        &self,
        x: &[T],
        temperature: Option<f64>,
    ) -> Result<Vec<f64>> {
        let t = temperature.unwrap_or(1.0);
        if !(t > 0.0 && t.is_finite()) {
            return Err(GzslError::InvalidArgument(format!(
                "temperature must be positive, got {t}"
            )));
        }
        Ok(softmax(&self.logits(x)?, t))
    }

    /// Maximum untempered softmax probability.
    pub fn confidence_score<T: Copy + Into<f64>>(&self, x: &[T]) -> Result<f64> {
        Ok(self
            .softmax_probs(x, None)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// The `k` most probable class indices; ties go to the lower index.
    pub fn top_classes<T: Copy + Into<f64>>(&self, x: &[T], k: usize) -> Result<Vec<usize>> {
        if k == 0 || k > self.num_classes() {
            return Err(GzslError::InvalidArgument(format!(
                "k={k} outside 1..={}",
                self.num_classes()
            )));
        }
        let probs = self.softmax_probs(x, None)?;
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        order.truncate(k);
        Ok(order)
    }

    /// Mean cross-entropy of `softmax(logits / temperature)` over the rows of `xs`.
    pub fn cross_entropy(
        &self,
        xs: ArrayView2<'_, f64>,
        targets: &[usize],
        temperature: f64,
    ) -> f64 {
        let z = (xs.dot(&self.weights.t()) + &self.bias) / temperature;
        let total: f64 = z
            .rows()
            .into_iter()
            .zip(targets)
            .map(|(row, &t)| log_sum_exp(row) - row[t])
            .sum();
        total / targets.len() as f64
    }

    /// Loss and its gradient with respect to `(weights, bias)`.
    pub fn cross_entropy_grad(
        &self,
        xs: ArrayView2<'_, f64>,
        targets: &[usize],
        temperature: f64,
    ) -> (f64, Array2<f64>, Array1<f64>) {
        let n = targets.len() as f64;
        let mut z = (xs.dot(&self.weights.t()) + &self.bias) / temperature;
        let mut loss = 0.0;
        for (mut row, &t) in z.rows_mut().into_iter().zip(targets) {
            let lse = log_sum_exp(row.view());
            loss += lse - row[t];
            row.mapv_inplace(|v| (v - lse).exp());
            row[t] -= 1.0;
        }
        // d(loss)/d(logit) = (softmax - onehot) / (temperature * n)
        z /= temperature * n;
        let grad_w = z.t().dot(&xs);
        let grad_b = z.sum_axis(Axis(0));
        (loss / n, grad_w, grad_b)
    }

    pub(crate) fn snap_f32(&mut self) {
        snap_f32(&mut self.weights);
        self.bias.mapv_inplace(|v| v as f32 as f64);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierTrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 100,
            batch_size: 64,
            temperature: 2.0,
            seed: 0,
        }
    }
}

impl ClassifierTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(GzslError::config(
                "clf_lr > 0",
                format!("got {}", self.learning_rate),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(GzslError::config(
                "0 <= clf_momentum < 1",
                format!("got {}", self.momentum),
            ));
        }
        if self.batch_size == 0 {
            return Err(GzslError::config("clf_batch >= 1", "got 0"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(GzslError::config(
                "tau > 0",
                format!("got {}", self.temperature),
            ));
        }
        Ok(())
    }
}

const INIT_SD: f64 = 0.01;

/// Trains on the train split with mini-batch momentum SGD on the
/// temperature-scaled cross-entropy.
///
/// Returns the classifier and the full-train-set loss after each epoch.
pub fn train_classifier(
    ds: &Dataset,
    cfg: &ClassifierTrainConfig,
) -> Result<(SoftmaxClassifier, Vec<f64>)> {
    cfg.validate()?;
    let seen = ds.seen_classes();
    let p = seen.len();
    let d = ds.dim();
    let train = &ds.split().train_idx;
    let xs = gather_rows(ds, train);
    let targets: Vec<usize> = train
        .iter()
        .map(|&i| {
            ds.seen_position(ds.label(i as usize))
                .expect("train label is seen")
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, INIT_SD).expect("valid normal");
    let weights = Array2::from_shape_simple_fn((p, d), || init.sample(&mut rng));
    let mut clf = SoftmaxClassifier::new(weights, Array1::zeros(p))?;

    let mut vel_w = Array2::<f64>::zeros((p, d));
    let mut vel_b = Array1::<f64>::zeros(p);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let bx = xs.select(Axis(0), batch);
            let bt: Vec<usize> = batch.iter().map(|&i| targets[i]).collect();
            let (_, gw, gb) = clf.cross_entropy_grad(bx.view(), &bt, cfg.temperature);
            vel_w = &vel_w * cfg.momentum - &(gw * cfg.learning_rate);
            vel_b = &vel_b * cfg.momentum - &(gb * cfg.learning_rate);
            clf.weights += &vel_w;
            clf.bias += &vel_b;
        }
        let loss = clf.cross_entropy(xs.view(), &targets, cfg.temperature);
        if !loss.is_finite() {
            return Err(GzslError::Numerical(format!(
                "classifier training diverged at epoch {epoch} (loss {loss})"
            )));
        }
        history.push(loss);
    }
    Ok((clf, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitSpec;
    use ndarray::array;

    fn two_logit(l0: f64, l1: f64) -> SoftmaxClassifier {
        // x = [1] so the logits equal the weights
        SoftmaxClassifier::new(array![[l0], [l1]], array![0.0, 0.0]).unwrap()
    }

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let clf = SoftmaxClassifier::new(Array2::zeros((4, 3)), Array1::zeros(4)).unwrap();
        let p = clf.softmax_probs(&[1.0, -2.0, 0.5], None).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!((clf.confidence_score(&[1.0, 2.0, 3.0]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn analytic_two_class() {
        let clf = two_logit(0.0, 3f64.ln());
        let p = clf.softmax_probs(&[1.0], Some(1.0)).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12 && (p[1] - 0.75).abs() < 1e-12);
        assert!((clf.confidence_score(&[1.0]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(p, clf.softmax_probs(&[1.0], None).unwrap());
    }

    #[test]
    fn large_temperature_flattens() {
        let clf =
            SoftmaxClassifier::new(array![[3.0], [-7.0], [11.0]], array![0.0, 1.0, 2.0]).unwrap();
        let p = clf.softmax_probs(&[1.0], Some(1e6)).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-4));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_finite_input_and_bad_temperature() {
        let clf = two_logit(0.0, 1.0);
        assert!(clf.softmax_probs(&[f64::NAN], None).is_err());
        assert!(clf.softmax_probs(&[1.0], Some(0.0)).is_err());
        assert!(clf.confidence_score(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn top_classes_order_and_ties() {
        let clf = SoftmaxClassifier::new(array![[1.0], [5.0], [3.0]], Array1::zeros(3)).unwrap();
        assert_eq!(clf.top_classes(&[1.0], 2).unwrap(), vec![1, 2]);
        let mut all = clf.top_classes(&[1.0], 3).unwrap();
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
        assert!(clf.top_classes(&[1.0], 0).is_err());
        assert!(clf.top_classes(&[1.0], 4).is_err());

        let tied = SoftmaxClassifier::new(array![[2.0], [2.0], [1.0]], Array1::zeros(3)).unwrap();
        assert_eq!(tied.top_classes(&[1.0], 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn confidence_is_max_prob_on_random_inputs() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = Array2::from_shape_simple_fn((5, 4), || rng.random_range(-2.0..2.0));
        let clf = SoftmaxClassifier::new(w, array![0.1, -0.2, 0.3, 0.0, 1.0]).unwrap();
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-3.0..3.0)).collect();
            let probs = clf.softmax_probs(&x, Some(1.0)).unwrap();
            let max = probs.iter().copied().fold(0.0, f64::max);
            assert_eq!(clf.confidence_score(&x).unwrap(), max);
        }
    }

    // two seen clusters around (±2, ±1, 0, 0) and one unseen class at the origin
    fn separable() -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let centres = [[2.0, 1.0, 0.0, 0.0], [-2.0, -1.0, 0.0, 0.0], [0.0; 4]];
        let (mut features, mut labels) = (Vec::new(), Vec::new());
        for (c, centre) in centres.iter().enumerate() {
            for _ in 0..100 {
                features.extend(centre.iter().map(|&m| (m + noise.sample(&mut rng)) as f32));
                labels.push(c as u32);
            }
        }
        let split = SplitSpec {
            train_idx: (0..70).chain(100..170).collect(),
            test_seen_idx: (70..100).chain(170..200).collect(),
            test_unseen_idx: (200..300).collect(),
        };
        let semantics = vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5];
        Dataset::new(4, 2, 3, features, labels, semantics, split).unwrap()
    }

    #[test]
    fn separable_data_is_learned() {
        let ds = separable();
        let cfg = ClassifierTrainConfig {
            epochs: 30,
            ..Default::default()
        };
        let (clf, losses) = train_classifier(&ds, &cfg).unwrap();
        assert!(losses.last().unwrap() <= &losses[0]);
        let correct = ds
            .split()
            .train_idx
            .iter()
            .filter(|&&i| {
                let i = i as usize;
                let top = clf.top_classes(ds.feature(i), 1).unwrap()[0];
                ds.seen_classes()[top] == ds.label(i)
            })
            .count();
        let acc = correct as f64 / ds.split().train_idx.len() as f64;
        assert!(acc >= 0.99, "train accuracy {acc}");
    }

    #[test]
    fn zero_epochs_returns_initialisation() {
        let ds = separable();
        let cfg = ClassifierTrainConfig {
            epochs: 0,
            seed: 11,
            ..Default::default()
        };
        let (a, losses) = train_classifier(&ds, &cfg).unwrap();
        assert!(losses.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let init = Normal::new(0.0, INIT_SD).unwrap();
        let expected = Array2::from_shape_simple_fn((2, 4), || init.sample(&mut rng));
        assert_eq!(a.weights(), &expected);
        assert!(a.bias().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let ds = separable();
        let cfg = ClassifierTrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let (a, _) = train_classifier(&ds, &cfg).unwrap();
        let (b, _) = train_classifier(&ds, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_reports_epoch() {
        let ds = separable();
        let cfg = ClassifierTrainConfig {
            learning_rate: f64::MAX,
            momentum: 0.0,
            epochs: 10,
            ..Default::default()
        };
        match train_classifier(&ds, &cfg) {
            Err(GzslError::Numerical(msg)) => assert!(msg.contains("epoch"), "{msg}"),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("expected divergence"),
        }
    }
}
