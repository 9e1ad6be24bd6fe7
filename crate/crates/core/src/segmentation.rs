//! Three-way routing of test instances into seen, unseen and uncertain
//! domains from the classifier confidence and the per-class EVT models.

use std::fmt;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::classifier::SoftmaxClassifier;
use crate::data::Dataset;
use crate::error::{GzslError, Result};
use crate::evt::{EvtModelSet, EvtThresholds};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainThresholds {
    pub beta_in: f64,
    pub beta_out: f64,
    pub evt: EvtThresholds,
    pub top_k: usize,
}

impl Default for DomainThresholds {
    fn default() -> Self {
        Self {
            beta_in: 0.9,
            beta_out: 0.5,
            evt: EvtThresholds {
                alpha_out: 0.9,
                alpha_in: 0.5,
            },
            top_k: 3,
        }
    }
}

impl DomainThresholds {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.beta_in) || !open(self.beta_out) {
            return Err(GzslError::config(
                "0 < beta < 1",
                format!("beta_in={}, beta_out={}", self.beta_in, self.beta_out),
            ));
        }
        if self.beta_out > self.beta_in {
            return Err(GzslError::config(
                "beta_out <= beta_in",
                format!("beta_out={} > beta_in={}", self.beta_out, self.beta_in),
            ));
        }
        self.evt.validate()?;
        if self.top_k == 0 {
            return Err(GzslError::config("top_k >= 1", "got 0"));
        }
        Ok(())
    }

    /// Thresholds under which neither specific arm can fire.
    pub fn all_uncertain() -> Self {
        Self {
            beta_in: 1.0 - f64::EPSILON,
            beta_out: f64::MIN_POSITIVE,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DomainLabel {
    Seen,
    Unseen,
    Uncertain,
}

impl DomainLabel {
    pub const ALL: [DomainLabel; 3] = [
        DomainLabel::Seen,
        DomainLabel::Unseen,
        DomainLabel::Uncertain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainLabel::Seen => "seen",
            DomainLabel::Unseen => "unseen",
            DomainLabel::Uncertain => "uncertain",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for DomainLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which test split an instance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Seen,
    Unseen,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Seen => "seen",
            Origin::Unseen => "unseen",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentOutcome {
    pub domain: DomainLabel,
    /// Top-1 softmax confidence `h_c1`.
    pub confidence: f64,
    /// Weibull CDF of the top-ranked class at its centroid distance.
    pub top_cdf: f64,
    /// Whether the seen arm held (reported separately for diagnostics).
    pub seen_arm: bool,
    pub unseen_arm: bool,
}

/// Routes one instance.
///
/// With `c_1..c_p` the classes ranked by softmax probability and `d_i` the
/// distance from `x` to the centroid of `c_i`:
///
/// * Seen when `h_c1 > beta_in` and `c_1`'s model puts `d_1` inside the class.
/// * Unseen when `h_c1 < beta_out` and every one of the top `top_k` classes
///   puts `x` outside itself.
/// * Uncertain otherwise.
///
/// `seen_ids[i]` is the dataset class id of classifier output `i`.
pub fn segment<T: Copy + Into<f64>>(
    x: &[T],
    clf: &SoftmaxClassifier,
    seen_ids: &[u32],
    models: &EvtModelSet,
    th: &DomainThresholds,
) -> Result<SegmentOutcome> {
    if seen_ids.len() != clf.num_classes() {
        return Err(GzslError::InvalidArgument(format!(
            "{} seen ids for a {}-class classifier",
            seen_ids.len(),
            clf.num_classes()
        )));
    }
    if th.top_k > clf.num_classes() {
        return Err(GzslError::config(
            "top_k <= p",
            format!(
                "top_k={} but only {} seen classes",
                th.top_k,
                clf.num_classes()
            ),
        ));
    }
    let ranked = clf.top_classes(x, th.top_k)?;
    let confidence = clf.confidence_score(x)?;
    let model_of = |rank: usize| {
        let id = seen_ids[ranked[rank]];
        models
            .get(id)
            .ok_or_else(|| GzslError::InvalidArgument(format!("no EVT model for class {id}")))
    };

    let top = model_of(0)?;
    let top_cdf = top.cdf(models.distance(top, x));
    let seen_arm = confidence > th.beta_in && top_cdf < th.evt.alpha_in;

    let mut unseen_arm = confidence < th.beta_out;
    for rank in 0..th.top_k {
        let m = model_of(rank)?;
        let p = if rank == 0 {
            top_cdf
        } else {
            m.cdf(models.distance(m, x))
        };
        unseen_arm &= p > th.evt.alpha_out;
    }

    let domain = if seen_arm {
        DomainLabel::Seen
    } else if unseen_arm {
        DomainLabel::Unseen
    } else {
        DomainLabel::Uncertain
    };
    Ok(SegmentOutcome {
        domain,
        confidence,
        top_cdf,
        seen_arm,
        unseen_arm,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub index: usize,
    pub origin: Origin,
    pub outcome: SegmentOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// test_seen instances first, then test_unseen, in split order.
    pub records: Vec<SegmentRecord>,
    /// `counts[origin][domain]` with origin 0 = seen, 1 = unseen and the
    /// domain in `DomainLabel::ALL` order.
    pub counts: [[usize; 3]; 2],
}

impl Segmentation {
    pub fn count(&self, origin: Origin, domain: DomainLabel) -> usize {
        self.counts[origin as usize][domain.index()]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn segment_all(
    ds: &Dataset,
    clf: &SoftmaxClassifier,
    models: &EvtModelSet,
    th: &DomainThresholds,
) -> Result<Segmentation> {
    th.validate()?;
    let split = ds.split();
    let tasks: Vec<(usize, Origin)> = split
        .test_seen_idx
        .iter()
        .map(|&i| (i as usize, Origin::Seen))
        .chain(
            split
                .test_unseen_idx
                .iter()
                .map(|&i| (i as usize, Origin::Unseen)),
        )
        .collect();
    let seen_ids = ds.seen_classes();
    let run = |&(index, origin): &(usize, Origin)| {
        segment(ds.feature(index), clf, seen_ids, models, th).map(|outcome| SegmentRecord {
            index,
            origin,
            outcome,
        })
    };
    #[cfg(feature = "parallel")]
    let records: Result<Vec<_>> = tasks.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let records: Result<Vec<_>> = tasks.iter().map(run).collect();
    let records = records?;

    let mut counts = [[0usize; 3]; 2];
    for r in &records {
        counts[r.origin as usize][r.outcome.domain.index()] += 1;
    }
    Ok(Segmentation { records, counts })
}
