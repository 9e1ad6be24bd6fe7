//! Dataset model, the GZB v1 binary format and the synthetic generator.
//!
//! GZB v1 layout (little-endian throughout):
//!
//! ```text
//! "GZSB" u32 version=1 u32 N u32 d u32 C u32 a
//! N*d f32 features (row-major)
//! N   u32 labels
//! C*a f32 semantics (row-major)
//! u32 n_train       n_train u32 indices
//! u32 n_test_seen   n_test_seen u32 indices
//! u32 n_test_unseen n_test_unseen u32 indices
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::binio::{ByteReader, ByteWriter};
use crate::error::{GzslError, Result};

pub const GZB_MAGIC: &[u8; 4] = b"GZSB";
pub const GZB_VERSION: u32 = 1;

/// Index lists into the feature matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train_idx: Vec<u32>,
    pub test_seen_idx: Vec<u32>,
    pub test_unseen_idx: Vec<u32>,
}

/// Visual features, labels, per-class semantic vectors and the zero-shot split.
///
/// A `Dataset` can only be constructed through [`Dataset::new`] (or the
/// loader), both of which validate every invariant, so downstream code never
/// re-checks them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    sem_dim: usize,
    num_classes: usize,
    features: Vec<f32>,
    labels: Vec<u32>,
    semantics: Vec<f32>,
    split: SplitSpec,
    seen: Vec<u32>,
    unseen: Vec<u32>,
}

impl Dataset {
    pub fn new(
        dim: usize,
        sem_dim: usize,
        num_classes: usize,
        features: Vec<f32>,
        labels: Vec<u32>,
        semantics: Vec<f32>,
        split: SplitSpec,
    ) -> Result<Self> {
        if dim == 0 || sem_dim == 0 {
            return Err(GzslError::validation(
                "dims",
                format!("feature dim {dim} and semantic dim {sem_dim} must be >= 1"),
            ));
        }
        if num_classes < 2 {
            return Err(GzslError::validation(
                "num_classes",
                format!("need at least 2 classes, got {num_classes}"),
            ));
        }
        let n = labels.len();
        if n == 0 {
            return Err(GzslError::validation(
                "num_instances",
                "dataset has no instances",
            ));
        }
        if features.len() != n * dim {
            return Err(GzslError::validation(
                "dims",
                format!(
                    "feature buffer has {} values, expected {}",
                    features.len(),
                    n * dim
                ),
            ));
        }
        if semantics.len() != num_classes * sem_dim {
            return Err(GzslError::validation(
                "dims",
                format!(
                    "semantic buffer has {} values, expected {}",
                    semantics.len(),
                    num_classes * sem_dim
                ),
            ));
        }
        if let Some(i) = labels.iter().position(|&l| l as usize >= num_classes) {
            return Err(GzslError::validation(
                "label_range",
                format!("label {} at instance {i} is >= C={num_classes}", labels[i]),
            ));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(GzslError::validation(
                "finite_features",
                format!(
                    "non-finite feature at instance {}, column {}",
                    i / dim,
                    i % dim
                ),
            ));
        }
        if let Some(i) = semantics.iter().position(|v| !v.is_finite()) {
            return Err(GzslError::validation(
                "finite_semantics",
                format!("non-finite semantic value for class {}", i / sem_dim),
            ));
        }

        let lists = [
            ("train", &split.train_idx),
            ("test_seen", &split.test_seen_idx),
            ("test_unseen", &split.test_unseen_idx),
        ];
        let mut owner = vec![u8::MAX; n];
        for (k, (name, idx)) in lists.iter().enumerate() {
            if idx.is_empty() {
                return Err(GzslError::validation(
                    "split_nonempty",
                    format!("{name} index list is empty"),
                ));
            }
            for &i in idx.iter() {
                let i = i as usize;
                if i >= n {
                    return Err(GzslError::validation(
                        "split_range",
                        format!("{name} index {i} out of range for N={n}"),
                    ));
                }
                if owner[i] != u8::MAX {
                    return Err(GzslError::validation(
                        "split_disjoint",
                        format!("instance {i} appears in more than one split list (or twice)"),
                    ));
                }
                owner[i] = k as u8;
            }
        }

        let seen: BTreeSet<u32> = split
            .train_idx
            .iter()
            .map(|&i| labels[i as usize])
            .collect();
        let unseen: BTreeSet<u32> = split
            .test_unseen_idx
            .iter()
            .map(|&i| labels[i as usize])
            .collect();
        if let Some(c) = seen.intersection(&unseen).next() {
            return Err(GzslError::validation(
                "seen_unseen_disjoint",
                format!("class {c} occurs in both the train and test_unseen splits"),
            ));
        }
        if let Some(&i) = split
            .test_seen_idx
            .iter()
            .find(|&&i| !seen.contains(&labels[i as usize]))
        {
            return Err(GzslError::validation(
                "test_seen_in_seen",
                format!(
                    "test_seen instance {i} has label {} which is not a seen class",
                    labels[i as usize]
                ),
            ));
        }

        Ok(Self {
            dim,
            sem_dim,
            num_classes,
            features,
            labels,
            semantics,
            split,
            seen: seen.into_iter().collect(),
            unseen: unseen.into_iter().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sem_dim(&self) -> usize {
        self.sem_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn semantic(&self, class_id: u32) -> &[f32] {
        let c = class_id as usize;
        &self.semantics[c * self.sem_dim..(c + 1) * self.sem_dim]
    }

    pub fn semantics(&self) -> &[f32] {
        &self.semantics
    }

    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    /// Sorted ids of the classes that occur in the train split.
    pub fn seen_classes(&self) -> &[u32] {
        &self.seen
    }

    /// Sorted ids of the classes that occur in the test_unseen split.
    pub fn unseen_classes(&self) -> &[u32] {
        &self.unseen
    }

    /// Position of `class_id` in [`Dataset::seen_classes`].
    pub fn seen_position(&self, class_id: u32) -> Option<usize> {
        self.seen.binary_search(&class_id).ok()
    }

    /// Train indices of one class, in split order.
    pub fn train_indices_of(&self, class_id: u32) -> impl Iterator<Item = usize> + '_ {
        self.split
            .train_idx
            .iter()
            .map(|&i| i as usize)
            .filter(move |&i| self.labels[i] == class_id)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = ByteWriter::new();
        w.magic(GZB_MAGIC);
        w.u32(GZB_VERSION);
        w.len_u32(self.len())?;
        w.len_u32(self.dim)?;
        w.len_u32(self.num_classes)?;
        w.len_u32(self.sem_dim)?;
        w.f32_slice(&self.features);
        w.u32_slice(&self.labels);
        w.f32_slice(&self.semantics);
        for idx in [
            &self.split.train_idx,
            &self.split.test_seen_idx,
            &self.split.test_unseen_idx,
        ] {
            w.len_u32(idx.len())?;
            w.u32_slice(idx);
        }
        Ok(w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(GZB_MAGIC)?;
        r.expect_version(GZB_VERSION)?;
        let n = r.u32("N")? as usize;
        let dim = r.u32("d")? as usize;
        let c = r.u32("C")? as usize;
        let a = r.u32("a")? as usize;
        let size = |x: usize, y: usize| {
            x.checked_mul(y)
                .ok_or_else(|| GzslError::Format("header dimensions overflow".into()))
        };
        let features = r.f32_vec(size(n, dim)?, "features")?;
        let labels = r.u32_vec(n, "labels")?;
        let semantics = r.f32_vec(size(c, a)?, "semantics")?;
        let mut lists = Vec::with_capacity(3);
        for what in ["train indices", "test_seen indices", "test_unseen indices"] {
            let len = r.u32(what)? as usize;
            lists.push(r.u32_vec(len, what)?);
        }
        r.finish()?;
        let test_unseen_idx = lists.pop().unwrap();
        let test_seen_idx = lists.pop().unwrap();
        let train_idx = lists.pop().unwrap();
        Dataset::new(
            dim,
            a,
            c,
            features,
            labels,
            semantics,
            SplitSpec {
                train_idx,
                test_seen_idx,
                test_unseen_idx,
            },
        )
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    Dataset::from_bytes(&bytes)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ds.to_bytes()?)?;
    Ok(())
}

/// Arithmetic mean of the train features of `class_id`.
pub fn class_centroid(ds: &Dataset, class_id: u32) -> Result<Vec<f64>> {
    if ds.seen_position(class_id).is_none() {
        return Err(GzslError::InvalidArgument(format!(
            "class {class_id} is not a seen class"
        )));
    }
    let mut sum = vec![0.0f64; ds.dim()];
    let mut count = 0usize;
    for i in ds.train_indices_of(class_id) {
        for (s, &v) in sum.iter_mut().zip(ds.feature(i)) {
            *s += v as f64;
        }
        count += 1;
    }
    if count == 0 {
        return Err(GzslError::InvalidArgument(format!(
            "class {class_id} has no train instances"
        )));
    }
    sum.iter_mut().for_each(|s| *s /= count as f64);
    Ok(sum)
}

/// Fraction of each seen class's instances that go to the train split.
const TRAIN_FRACTION: f64 = 0.7;
/// Standard deviation of the noise added to the projected semantic vectors.
const SEMANTIC_NOISE: f64 = 0.05;

/// Parameters of the synthetic Gaussian-cluster generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_seen: usize,
    pub n_unseen: usize,
    pub dim: usize,
    pub sem_dim: usize,
    pub per_class: usize,
    pub spread: f64,
    pub seed: u64,
}

/// A generated dataset together with the class means it was drawn around.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub dataset: Dataset,
    pub class_means: Vec<Vec<f64>>,
}

impl SyntheticConfig {
    /// Classes `0..n_seen` are seen and `n_seen..n_seen+n_unseen` unseen.
    ///
    /// Class means are drawn from a random subspace of rank
    /// `clamp(n_seen / 2, 1, dim)` with unit variance per coordinate, so the
    /// seen classes span the space the unseen means live in. Each class's
    /// semantic vector is a fixed random linear projection of its mean plus
    /// Gaussian noise.
    pub fn generate(&self) -> Result<Synthetic> {
        if self.n_seen == 0 || self.n_unseen == 0 || self.dim == 0 || self.sem_dim == 0 {
            return Err(GzslError::InvalidArgument(
                "class counts and dimensions must be >= 1".into(),
            ));
        }
        if self.per_class < 2 {
            return Err(GzslError::InvalidArgument(
                "per_class must be >= 2 so every seen class has train and test instances".into(),
            ));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(GzslError::InvalidArgument(format!(
                "spread must be positive, got {}",
                self.spread
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let n_classes = self.n_seen + self.n_unseen;
        let rank = (self.n_seen / 2).clamp(1, self.dim);

        let basis: Vec<f64> = (0..self.dim * rank)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let latent_sd = (1.0 / rank as f64).sqrt();
        let class_means: Vec<Vec<f64>> = (0..n_classes)
            .map(|_| {
                let z: Vec<f64> = (0..rank)
                    .map(|_| latent_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                    .collect();
                (0..self.dim)
                    .map(|j| (0..rank).map(|r| basis[j * rank + r] * z[r]).sum())
                    .collect()
            })
            .collect();

        let proj_sd = (1.0 / self.dim as f64).sqrt();
        let projection: Vec<f64> = (0..self.sem_dim * self.dim)
            .map(|_| proj_sd * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let noise = Normal::new(0.0, SEMANTIC_NOISE).expect("valid normal");
        let mut semantics = Vec::with_capacity(n_classes * self.sem_dim);
        for mean in &class_means {
            for s in 0..self.sem_dim {
                let row = &projection[s * self.dim..(s + 1) * self.dim];
                let v: f64 = row.iter().zip(mean).map(|(p, m)| p * m).sum();
                semantics.push((v + noise.sample(&mut rng)) as f32);
            }
        }

        let cluster = Normal::new(0.0, self.spread)
            .map_err(|e| GzslError::InvalidArgument(format!("bad spread {}: {e}", self.spread)))?;
        let n = n_classes * self.per_class;
        let mut features = Vec::with_capacity(n * self.dim);
        let mut labels = Vec::with_capacity(n);
        for (c, mean) in class_means.iter().enumerate() {
            for _ in 0..self.per_class {
                features.extend(mean.iter().map(|m| (m + cluster.sample(&mut rng)) as f32));
                labels.push(c as u32);
            }
        }

        let n_train = ((self.per_class as f64 * TRAIN_FRACTION).round() as usize)
            .clamp(1, self.per_class - 1);
        let mut train_idx = Vec::new();
        let mut test_seen_idx = Vec::new();
        let mut test_unseen_idx = Vec::new();
        for c in 0..n_classes {
            let mut members: Vec<u32> =
                ((c * self.per_class) as u32..((c + 1) * self.per_class) as u32).collect();
            if c < self.n_seen {
                members.shuffle(&mut rng);
                let (tr, te) = members.split_at(n_train);
                train_idx.extend_from_slice(tr);
                test_seen_idx.extend_from_slice(te);
            } else {
                test_unseen_idx.extend(members);
            }
        }
        train_idx.sort_unstable();
        test_seen_idx.sort_unstable();

        let dataset = Dataset::new(
            self.dim,
            self.sem_dim,
            n_classes,
            features,
            labels,
            semantics,
            SplitSpec {
                train_idx,
                test_seen_idx,
                test_unseen_idx,
            },
        )?;
        Ok(Synthetic {
            dataset,
            class_means,
        })
    }
}

pub fn generate_synthetic(
    n_seen: usize,
    n_unseen: usize,
    dim: usize,
    sem_dim: usize,
    per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    SyntheticConfig {
        n_seen,
        n_unseen,
        dim,
        sem_dim,
        per_class,
        spread,
        seed,
    }
    .generate()
    .map(|s| s.dataset)
}
