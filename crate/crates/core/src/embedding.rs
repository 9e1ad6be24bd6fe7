//! Visual prototypes, the semantic-to-visual MLP `ψ(y) = W2 · relu(W1 · y)`
//! and nearest-embedding prediction with calibrated stacking.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{class_centroid, Dataset};
use crate::error::{GzslError, Result};
use crate::math::{gather_rows, log_sum_exp, snap_f32, squared_distance};
use crate::optim::Adam;
use crate::segmentation::DomainLabel;

/// One learned visual prototype per seen class, rows ordered like `class_ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSet {
    class_ids: Vec<u32>,
    points: Array2<f64>,
}

impl PrototypeSet {
    pub fn new(class_ids: Vec<u32>, points: Array2<f64>) -> Result<Self> {
        if class_ids.len() != points.nrows() {
            return Err(GzslError::InvalidArgument(format!(
                "{} class ids for {} prototypes",
                class_ids.len(),
                points.nrows()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(GzslError::Numerical("non-finite prototype".into()));
        }
        Ok(Self { class_ids, points })
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    /// Index of the prototype with the largest inner product with `x`.
    pub fn most_similar<T: Copy + Into<f64>>(&self, x: &[T]) -> usize {
        let x: Array1<f64> = x.iter().map(|&v| v.into()).collect();
        let sims = self.points.dot(&x);
        let mut best = 0;
        for (j, &s) in sims.iter().enumerate() {
            if s > sims[best] {
                best = j;
            }
        }
        best
    }

    pub(crate) fn snap_f32(&mut self) {
        snap_f32(&mut self.points);
    }
}

/// Prototypes initialised at the train centroids of the seen classes.
pub fn init_prototypes(ds: &Dataset) -> Result<PrototypeSet> {
    let seen = ds.seen_classes();
    let mut points = Array2::zeros((seen.len(), ds.dim()));
    for (mut row, &c) in points.rows_mut().into_iter().zip(seen) {
        row.assign(&Array1::from(class_centroid(ds, c)?));
    }
    PrototypeSet::new(seen.to_vec(), points)
}

/// Train features and their prototype row indices.
fn train_targets(ds: &Dataset) -> (Array2<f64>, Vec<usize>) {
    let train = &ds.split().train_idx;
    let xs = gather_rows(ds, train);
    let targets = train
        .iter()
        .map(|&i| {
            ds.seen_position(ds.label(i as usize))
                .expect("train label is seen")
        })
        .collect();
    (xs, targets)
}

/// `-Σ_i log softmax_j(x_i · ẑ_j)[y_i]` summed over the rows of `xs`.
pub fn prototype_loss(points: &Array2<f64>, xs: ArrayView2<'_, f64>, targets: &[usize]) -> f64 {
    let sims = xs.dot(&points.t());
    sims.rows()
        .into_iter()
        .zip(targets)
        .map(|(row, &t)| log_sum_exp(row) - row[t])
        .sum()
}

/// Loss and gradient; row `j` of the gradient is `Σ_i (m̂_ij - I_ij) x_i`.
pub fn prototype_loss_grad(
    points: &Array2<f64>,
    xs: ArrayView2<'_, f64>,
    targets: &[usize],
) -> (f64, Array2<f64>) {
    let mut sims = xs.dot(&points.t());
    let mut loss = 0.0;
    for (mut row, &t) in sims.rows_mut().into_iter().zip(targets) {
        let lse = log_sum_exp(row.view());
        loss += lse - row[t];
        row.mapv_inplace(|s| (s - lse).exp());
        row[t] -= 1.0;
    }
    (loss, sims.t().dot(&xs))
}

/// Gradient descent on the prototype loss with features held fixed.
///
/// The step is `lr · ∇L / N_s`; a step that would raise the loss is halved
/// until it does not, so the returned per-epoch losses never increase.
/// Returns the trained set and the loss after each epoch.
pub fn train_prototypes(
    ds: &Dataset,
    protos: &PrototypeSet,
    epochs: usize,
    lr: f64,
) -> Result<(PrototypeSet, Vec<f64>)> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(GzslError::config("proto_lr > 0", format!("got {lr}")));
    }
    let (xs, targets) = train_targets(ds);
    let scale = lr / targets.len() as f64;
    let mut points = protos.points.clone();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (loss, grad) = prototype_loss_grad(&points, xs.view(), &targets);
        if !loss.is_finite() {
            return Err(GzslError::Numerical(format!(
                "prototype loss is non-finite at epoch {epoch}"
            )));
        }
        let mut step = scale;
        let mut accepted = None;
        for _ in 0..40 {
            let candidate = &points - &(&grad * step);
            let new_loss = prototype_loss(&candidate, xs.view(), &targets);
            if new_loss.is_finite() && new_loss <= loss {
                accepted = Some((candidate, new_loss));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((candidate, new_loss)) => {
                points = candidate;
                history.push(new_loss);
            }
            // no descent step found: already at a (numerical) minimum
            None => history.push(loss),
        }
    }
    Ok((
        PrototypeSet::new(protos.class_ids.clone(), points)?,
        history,
    ))
}

/// Two-layer semantic-to-visual map `ψ(y) = W2 · relu(W1 · y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet {
    /// hidden × semantic
    pub w1: Array2<f64>,
    /// visual × hidden
    pub w2: Array2<f64>,
    pub lambda: f64,
}

impl EmbeddingNet {
    pub fn new(w1: Array2<f64>, w2: Array2<f64>, lambda: f64) -> Result<Self> {
        if w1.nrows() != w2.ncols() {
            return Err(GzslError::InvalidArgument(format!(
                "hidden width mismatch: W1 is {:?}, W2 is {:?}",
                w1.dim(),
                w2.dim()
            )));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(GzslError::config("lambda_e >= 0", format!("got {lambda}")));
        }
        if w1.iter().chain(w2.iter()).any(|v| !v.is_finite()) {
            return Err(GzslError::Numerical("non-finite embedding weight".into()));
        }
        Ok(Self { w1, w2, lambda })
    }

    /// He-style random initialisation.
    pub fn random(
        sem_dim: usize,
        hidden: usize,
        dim: usize,
        lambda: f64,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n1 = Normal::new(0.0, (2.0 / sem_dim as f64).sqrt()).expect("valid normal");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("valid normal");
        let w1 = Array2::from_shape_simple_fn((hidden, sem_dim), || n1.sample(&mut rng));
        let w2 = Array2::from_shape_simple_fn((dim, hidden), || n2.sample(&mut rng));
        Self::new(w1, w2, lambda)
    }

    pub fn sem_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn embed<T: Copy + Into<f64>>(&self, y: &[T]) -> Vec<f64> {
        let y: Array1<f64> = y.iter().map(|&v| v.into()).collect();
        let hidden = self.w1.dot(&y).mapv(|h| h.max(0.0));
        self.w2.dot(&hidden).to_vec()
    }

    /// Embeds every row of `ys`.
    pub fn embed_rows(&self, ys: ArrayView2<'_, f64>) -> Array2<f64> {
        ys.dot(&self.w1.t()).mapv(|h| h.max(0.0)).dot(&self.w2.t())
    }

    pub fn weight_norm_sq(&self) -> f64 {
        self.w1.iter().chain(self.w2.iter()).map(|v| v * v).sum()
    }

    /// `Σ_i ||ψ(y_i) - t_i||² + λ (||W1||² + ||W2||²)`.
    pub fn loss(&self, ys: ArrayView2<'_, f64>, targets: ArrayView2<'_, f64>) -> f64 {
        let residual = self.embed_rows(ys) - targets;
        residual.iter().map(|r| r * r).sum::<f64>() + self.lambda * self.weight_norm_sq()
    }

    /// Loss and gradients with respect to `(W1, W2)`.
    pub fn loss_grad(
        &self,
        ys: ArrayView2<'_, f64>,
        targets: ArrayView2<'_, f64>,
    ) -> (f64, Array2<f64>, Array2<f64>) {
        let pre = ys.dot(&self.w1.t());
        let act = pre.mapv(|h| h.max(0.0));
        let residual = act.dot(&self.w2.t()) - targets;
        let loss =
            residual.iter().map(|r| r * r).sum::<f64>() + self.lambda * self.weight_norm_sq();
        let d_out = residual * 2.0;
        let g2 = d_out.t().dot(&act) + &self.w2 * (2.0 * self.lambda);
        let mut d_hidden = d_out.dot(&self.w2);
        ndarray::Zip::from(&mut d_hidden)
            .and(&pre)
            .for_each(|g, &h| {
                if h <= 0.0 {
                    *g = 0.0
                }
            });
        let g1 = d_hidden.t().dot(&ys) + &self.w1 * (2.0 * self.lambda);
        (loss, g1, g2)
    }

    pub(crate) fn snap_f32(&mut self) {
        snap_f32(&mut self.w1);
        snap_f32(&mut self.w2);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConfig {
    pub hidden: usize,
    pub lambda: f64,
    /// Adam step size.
    pub lr: f64,
    /// Epochs for a standalone `train_embedding` call.
    pub epochs: usize,
    /// Mini-batch size for the instance-level (simple) objective.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            hidden: 1600,
            lambda: 1e-4,
            lr: 1e-3,
            epochs: 200,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(GzslError::config("hidden >= 1", "got 0"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(GzslError::config(
                "lambda_e >= 0",
                format!("got {}", self.lambda),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GzslError::config("emb_lr > 0", format!("got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(GzslError::config("emb_batch >= 1", "got 0"));
        }
        Ok(())
    }
}

fn rows_of(values: &[f32], width: usize) -> Array2<f64> {
    Array2::from_shape_fn((values.len() / width, width), |(i, j)| {
        values[i * width + j] as f64
    })
}

/// Semantic vectors of the seen classes, rows ordered like `class_ids`.
pub fn seen_semantics(ds: &Dataset, class_ids: &[u32]) -> Array2<f64> {
    let flat: Vec<f32> = class_ids
        .iter()
        .flat_map(|&c| ds.semantic(c).iter().copied())
        .collect();
    rows_of(&flat, ds.sem_dim())
}

/// Full-batch Adam on the prototype-regression loss, continuing from `net`.
fn fit_embedding(
    mut net: EmbeddingNet,
    ys: ArrayView2<'_, f64>,
    targets: ArrayView2<'_, f64>,
    epochs: usize,
    lr: f64,
) -> Result<(EmbeddingNet, Vec<f64>)> {
    let mut adam = Adam::new(lr, &[net.w1.dim(), net.w2.dim()]);
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (_, g1, g2) = net.loss_grad(ys, targets);
        adam.update(&mut [&mut net.w1, &mut net.w2], &[g1, g2]);
        let loss = net.loss(ys, targets);
        if !loss.is_finite() {
            return Err(GzslError::Numerical(format!(
                "embedding training diverged at epoch {epoch}"
            )));
        }
        history.push(loss);
    }
    Ok((net, history))
}

/// Trains `ψ` so that each seen semantic vector maps onto its prototype.
///
/// `semantics` rows must align with `protos`. Starts from a fresh random
/// network seeded by `cfg.seed`; returns the net and per-epoch losses.
pub fn train_embedding(
    semantics: ArrayView2<'_, f64>,
    protos: &PrototypeSet,
    cfg: &EmbeddingConfig,
) -> Result<(EmbeddingNet, Vec<f64>)> {
    cfg.validate()?;
    if semantics.nrows() != protos.len() {
        return Err(GzslError::InvalidArgument(format!(
            "{} semantic rows for {} prototypes",
            semantics.nrows(),
            protos.len()
        )));
    }
    let net = EmbeddingNet::random(
        semantics.ncols(),
        cfg.hidden,
        protos.points.ncols(),
        cfg.lambda,
        cfg.seed,
    )?;
    fit_embedding(net, semantics, protos.points.view(), cfg.epochs, cfg.lr)
}

/// Instance-level objective: `Σ_i ||ψ(y_{label(i)}) - x_i||²` over the train
/// split, optimised with mini-batch Adam.
pub fn train_embedding_simple(
    ds: &Dataset,
    cfg: &EmbeddingConfig,
) -> Result<(EmbeddingNet, Vec<f64>)> {
    cfg.validate()?;
    let train = &ds.split().train_idx;
    let xs = gather_rows(ds, train);
    let labels: Vec<u32> = train.iter().map(|&i| ds.label(i as usize)).collect();
    let ys = seen_semantics(ds, &labels);
    let mut net = EmbeddingNet::random(ds.sem_dim(), cfg.hidden, ds.dim(), cfg.lambda, cfg.seed)?;
    let mut adam = Adam::new(cfg.lr, &[net.w1.dim(), net.w2.dim()]);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let by = ys.select(Axis(0), batch);
            let bx = xs.select(Axis(0), batch);
            let (_, g1, g2) = net.loss_grad(by.view(), bx.view());
            adam.update(&mut [&mut net.w1, &mut net.w2], &[g1, g2]);
        }
        let loss = net.loss(ys.view(), xs.view());
        if !loss.is_finite() {
            return Err(GzslError::Numerical(format!(
                "embedding training diverged at epoch {epoch}"
            )));
        }
        history.push(loss);
    }
    Ok((net, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingConfig {
    pub rounds: usize,
    pub proto_epochs: usize,
    pub emb_epochs: usize,
    pub proto_lr: f64,
    pub embedding: EmbeddingConfig,
}

impl Default for AlternatingConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            proto_epochs: 5,
            emb_epochs: 20,
            proto_lr: 1e-3,
            embedding: EmbeddingConfig::default(),
        }
    }
}

/// Alternates blocks of prototype epochs and embedding epochs. The network
/// persists across rounds; zero rounds returns the centroid prototypes and
/// the untrained network.
pub fn train_alternating(
    ds: &Dataset,
    cfg: &AlternatingConfig,
) -> Result<(PrototypeSet, EmbeddingNet)> {
    cfg.embedding.validate()?;
    let mut protos = init_prototypes(ds)?;
    let semantics = seen_semantics(ds, protos.class_ids());
    let e = &cfg.embedding;
    let mut net = EmbeddingNet::random(ds.sem_dim(), e.hidden, ds.dim(), e.lambda, e.seed)?;
    for _ in 0..cfg.rounds {
        protos = train_prototypes(ds, &protos, cfg.proto_epochs, cfg.proto_lr)?.0;
        net = fit_embedding(
            net,
            semantics.view(),
            protos.points.view(),
            cfg.emb_epochs,
            e.lr,
        )?
        .0;
    }
    Ok((protos, net))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationConfig {
    pub gamma: f64,
}

impl CalibrationConfig {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(GzslError::config("gamma >= 1", format!("got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn neutral() -> Self {
        Self { gamma: 1.0 }
    }
}

/// Result of a nearest-embedding search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class_id: u32,
    /// Uncalibrated squared distance to the chosen class embedding.
    pub distance_sq: f64,
    pub is_seen: bool,
}

/// `ψ(y_l)` for every class in `L_s ∪ L_u`, ascending class id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddings {
    class_ids: Vec<u32>,
    is_seen: Vec<bool>,
    points: Vec<Vec<f64>>,
}

impl ClassEmbeddings {
    pub fn new(net: &EmbeddingNet, ds: &Dataset) -> Self {
        let mut ids: Vec<(u32, bool)> = ds
            .seen_classes()
            .iter()
            .map(|&c| (c, true))
            .chain(ds.unseen_classes().iter().map(|&c| (c, false)))
            .collect();
        ids.sort_unstable();
        Self {
            class_ids: ids.iter().map(|p| p.0).collect(),
            is_seen: ids.iter().map(|p| p.1).collect(),
            points: ids
                .iter()
                .map(|&(c, _)| net.embed(ds.semantic(c)))
                .collect(),
        }
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn embedding_of(&self, class_id: u32) -> Option<&[f64]> {
        self.class_ids
            .binary_search(&class_id)
            .ok()
            .map(|i| self.points[i].as_slice())
    }

    /// Squared-distance argmin over the candidate set the domain allows.
    ///
    /// Seen searches seen classes, Unseen searches unseen classes and
    /// Uncertain searches both with seen distances multiplied by `gamma`.
    /// Ties go to the lowest class id.
    pub fn predict<T: Copy + Into<f64>>(
        &self,
        x: &[T],
        domain: DomainLabel,
        calib: CalibrationConfig,
    ) -> Result<Prediction> {
        let mut best: Option<(f64, usize)> = None;
        for (i, point) in self.points.iter().enumerate() {
            let seen = self.is_seen[i];
            let factor = match (domain, seen) {
                (DomainLabel::Seen, false) | (DomainLabel::Unseen, true) => continue,
                (DomainLabel::Uncertain, true) => calib.gamma,
                _ => 1.0,
            };
            let score = squared_distance(x, point) * factor;
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, i));
            }
        }
        let (_, i) = best.ok_or_else(|| {
            GzslError::InvalidArgument(format!("no candidate classes for the {domain} domain"))
        })?;
        Ok(Prediction {
            class_id: self.class_ids[i],
            distance_sq: squared_distance(x, &self.points[i]),
            is_seen: self.is_seen[i],
        })
    }

    /// Unrestricted, uncalibrated argmin over every class.
    pub fn nearest<T: Copy + Into<f64>>(&self, x: &[T]) -> Prediction {
        self.predict(x, DomainLabel::Uncertain, CalibrationConfig::neutral())
            .expect("class set is non-empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SplitSpec};
    use ndarray::array;

    #[test]
    fn prototypes_start_at_centroids() {
        let ds = generate_synthetic(4, 2, 5, 3, 20, 0.5, 1).unwrap();
        let protos = init_prototypes(&ds).unwrap();
        assert_eq!(protos.len(), 4);
        for (row, &c) in protos.points().rows().into_iter().zip(protos.class_ids()) {
            assert_eq!(row.to_vec(), class_centroid(&ds, c).unwrap());
        }
    }

    #[test]
    fn zero_epochs_keep_prototypes() {
        let ds = generate_synthetic(3, 1, 4, 3, 20, 0.5, 1).unwrap();
        let protos = init_prototypes(&ds).unwrap();
        let (trained, hist) = train_prototypes(&ds, &protos, 0, 0.1).unwrap();
        assert_eq!(trained, protos);
        assert!(hist.is_empty());
    }

    #[test]
    fn prototype_loss_never_increases() {
        let ds = generate_synthetic(5, 2, 6, 3, 30, 1.5, 2).unwrap();
        let protos = init_prototypes(&ds).unwrap();
        let (xs, t) = train_targets(&ds);
        let initial = prototype_loss(protos.points(), xs.view(), &t);
        let (_, hist) = train_prototypes(&ds, &protos, 25, 0.5).unwrap();
        assert!(hist[0] <= initial);
        assert!(hist.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn embed_basics() {
        let zero = EmbeddingNet::new(Array2::zeros((4, 2)), Array2::zeros((3, 4)), 0.0).unwrap();
        assert_eq!(zero.embed(&[1.0, -2.0]), vec![0.0; 3]);

        let id = EmbeddingNet::new(Array2::eye(3), Array2::eye(3), 0.0).unwrap();
        assert_eq!(id.embed(&[1.0, 0.5, 2.0]), vec![1.0, 0.5, 2.0]);
        // negative pre-activations are zeroed
        assert_eq!(id.embed(&[-1.0, 0.5, -2.0]), vec![0.0, 0.5, 0.0]);
        assert!(EmbeddingNet::new(Array2::eye(3), Array2::eye(2), 0.0).is_err());
    }

    #[test]
    fn embedding_loss_decreases() {
        let ds = generate_synthetic(6, 2, 8, 6, 20, 0.3, 3).unwrap();
        let protos = init_prototypes(&ds).unwrap();
        let sem = seen_semantics(&ds, protos.class_ids());
        let cfg = EmbeddingConfig {
            hidden: 64,
            epochs: 50,
            ..Default::default()
        };
        let init = EmbeddingNet::random(6, 64, 8, cfg.lambda, cfg.seed).unwrap();
        let initial = init.loss(sem.view(), protos.points().view());
        let (net, hist) = train_embedding(sem.view(), &protos, &cfg).unwrap();
        assert!(hist.last().unwrap() <= &initial);
        assert_eq!(net.hidden(), 64);
        let (again, _) = train_embedding(sem.view(), &protos, &cfg).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn large_regulariser_shrinks_weights() {
        let ds = generate_synthetic(4, 1, 5, 4, 20, 0.3, 3).unwrap();
        let protos = init_prototypes(&ds).unwrap();
        let sem = seen_semantics(&ds, protos.class_ids());
        let mut norms = Vec::new();
        for epochs in 0..12 {
            let cfg = EmbeddingConfig {
                hidden: 32,
                lambda: 1e4,
                epochs,
                ..Default::default()
            };
            norms.push(
                train_embedding(sem.view(), &protos, &cfg)
                    .unwrap()
                    .0
                    .weight_norm_sq(),
            );
        }
        assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    }

    #[test]
    fn alternating_with_zero_rounds() {
        let ds = generate_synthetic(3, 1, 4, 3, 20, 0.5, 8).unwrap();
        let cfg = AlternatingConfig {
            rounds: 0,
            embedding: EmbeddingConfig {
                hidden: 16,
                ..Default::default()
            },
            ..Default::default()
        };
        let (protos, net) = train_alternating(&ds, &cfg).unwrap();
        assert_eq!(protos, init_prototypes(&ds).unwrap());
        assert_eq!(net, EmbeddingNet::random(3, 16, 4, 1e-4, 0).unwrap());
    }

    #[test]
    fn alternating_is_deterministic() {
        let ds = generate_synthetic(3, 1, 4, 3, 20, 0.5, 8).unwrap();
        let cfg = AlternatingConfig {
            rounds: 2,
            embedding: EmbeddingConfig {
                hidden: 16,
                ..Default::default()
            },
            ..Default::default()
        };
        assert_eq!(
            train_alternating(&ds, &cfg).unwrap(),
            train_alternating(&ds, &cfg).unwrap()
        );
    }

    #[test]
    fn simple_matches_prototype_objective_with_one_instance_per_class() {
        // two seen classes with one train instance each, one unseen class
        let ds = Dataset::new(
            2,
            2,
            3,
            vec![1.0, 2.0, -1.0, 0.5, 3.0, 3.0, 1.1, 2.1, 4.0, 4.0],
            vec![0, 1, 2, 0, 2],
            vec![1.0, 0.2, 0.1, 1.0, 0.7, 0.7],
            SplitSpec {
                train_idx: vec![0, 1],
                test_seen_idx: vec![3],
                test_unseen_idx: vec![2, 4],
            },
        )
        .unwrap();
        let cfg = EmbeddingConfig {
            hidden: 8,
            lambda: 1e-3,
            lr: 1e-2,
            epochs: 40,
            batch_size: 16,
            seed: 4,
        };
        let (simple, hs) = train_embedding_simple(&ds, &cfg).unwrap();
        let protos = init_prototypes(&ds).unwrap();
        let sem = seen_semantics(&ds, protos.class_ids());
        let (proto, hp) = train_embedding(sem.view(), &protos, &cfg).unwrap();
        for (a, b) in simple
            .w1
            .iter()
            .chain(simple.w2.iter())
            .zip(proto.w1.iter().chain(proto.w2.iter()))
        {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in hs.iter().zip(&hp) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn simple_embedding_loss_decreases() {
        let ds = generate_synthetic(4, 2, 6, 4, 30, 0.4, 6).unwrap();
        let cfg = EmbeddingConfig {
            hidden: 32,
            epochs: 20,
            lr: 5e-3,
            ..Default::default()
        };
        let (_, hist) = train_embedding_simple(&ds, &cfg).unwrap();
        assert!(hist.last().unwrap() < &hist[0]);
    }

    fn toy_embeddings() -> ClassEmbeddings {
        // seen 0 at distance² 1.0 from the origin, unseen 1 at 1.5
        ClassEmbeddings {
            class_ids: vec![0, 1, 2],
            is_seen: vec![true, false, true],
            points: vec![vec![1.0, 0.0], vec![0.0, 1.5f64.sqrt()], vec![5.0, 5.0]],
        }
    }

    #[test]
    fn calibrated_stacking_arithmetic() {
        let e = toy_embeddings();
        let x = [0.0, 0.0];
        let neutral = e
            .predict(&x, DomainLabel::Uncertain, CalibrationConfig::neutral())
            .unwrap();
        assert_eq!(neutral.class_id, 0);
        assert_eq!(neutral, e.nearest(&x));
        let cs = e
            .predict(
                &x,
                DomainLabel::Uncertain,
                CalibrationConfig::new(2.0).unwrap(),
            )
            .unwrap();
        assert_eq!(cs.class_id, 1);
        assert!(!cs.is_seen);
    }

    #[test]
    fn domain_restricts_candidates() {
        let e = toy_embeddings();
        let near_unseen = [0.0, 1.2];
        let p = e
            .predict(
                &near_unseen,
                DomainLabel::Seen,
                CalibrationConfig::neutral(),
            )
            .unwrap();
        assert!(p.is_seen);
        let near_seen = [5.0, 5.0];
        let p = e
            .predict(
                &near_seen,
                DomainLabel::Unseen,
                CalibrationConfig::neutral(),
            )
            .unwrap();
        assert_eq!(p.class_id, 1);
    }

    #[test]
    fn ties_go_to_lowest_id() {
        let e = ClassEmbeddings {
            class_ids: vec![3, 7],
            is_seen: vec![false, false],
            points: vec![vec![1.0], vec![-1.0]],
        };
        let p = e
            .predict(&[0.0], DomainLabel::Unseen, CalibrationConfig::neutral())
            .unwrap();
        assert_eq!(p.class_id, 3);
        assert!(e
            .predict(&[0.0], DomainLabel::Seen, CalibrationConfig::neutral())
            .is_err());
    }

    #[test]
    fn gamma_below_one_rejected() {
        assert!(CalibrationConfig::new(0.99).is_err());
        assert!(CalibrationConfig::new(1.0).is_ok());
    }

    #[test]
    fn most_similar_uses_inner_product() {
        let p = PrototypeSet::new(vec![0, 1], array![[1.0, 0.0], [3.0, 3.0]]).unwrap();
        // closer to (1,0) in Euclidean terms but larger inner product with (3,3)
        assert_eq!(p.most_similar(&[1.0, 0.2]), 1);
    }
}
