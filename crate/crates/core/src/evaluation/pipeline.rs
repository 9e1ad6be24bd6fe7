use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::checkpoint;
use crate::classifier::{train_classifier, SoftmaxClassifier};
use crate::config::{EmbeddingKind, Mode, PipelineConfig};
use crate::data::Dataset;
use crate::embedding::{
    train_alternating, train_embedding_simple, CalibrationConfig, ClassEmbeddings, EmbeddingConfig,
    EmbeddingNet, Prediction, PrototypeSet,
};
use crate::error::{GzslError, Result};
use crate::evaluation::histogram::{histograms_csv, Histogram};
use crate::evaluation::metrics::{harmonic_mean, per_class_top1};
use crate::evaluation::roc::{roc_curve, RocCurve};
use crate::evt::{fit_all_classes, EvtModelSet};
use crate::segmentation::{segment_all, DomainLabel, Origin, SegmentOutcome};

pub const CLASSIFIER_FILE: &str = "classifier.gzcl";
pub const EVT_FILE: &str = "evt.gzev";
pub const PROTOTYPE_FILE: &str = "prototypes.gzpr";
pub const EMBEDDING_FILE: &str = "embedding.gzem";

/// Everything the ablation modes share: they differ only in routing and γ.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedStages {
    pub classifier: SoftmaxClassifier,
    pub evt: EvtModelSet,
    /// Absent for the simple embedding objective.
    pub prototypes: Option<PrototypeSet>,
    pub embedding: EmbeddingNet,
    pub classifier_losses: Vec<f64>,
}

impl TrainedStages {
    /// Trains classifier, EVT models and embedding. Parameters are rounded to
    /// checkpoint precision so that a reloaded run matches this one exactly.
    pub fn train(ds: &Dataset, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let (mut classifier, classifier_losses) = train_classifier(ds, &cfg.classifier)?;
        let mut evt = fit_all_classes(ds, cfg.tail_size, cfg.evt_normalize)?;
        let (mut prototypes, mut embedding) = match cfg.embedding_kind {
            EmbeddingKind::Prototype => {
                let (p, n) = train_alternating(ds, &cfg.alternating)?;
                (Some(p), n)
            }
            EmbeddingKind::Simple => {
                let simple = EmbeddingConfig {
                    epochs: cfg.simple_epochs,
                    ..cfg.alternating.embedding.clone()
                };
                (None, train_embedding_simple(ds, &simple)?.0)
            }
        };
        classifier.snap_f32();
        for m in evt.models_mut() {
            m.centroid.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        if let Some(p) = prototypes.as_mut() {
            p.snap_f32();
        }
        embedding.snap_f32();
        Ok(Self {
            classifier,
            evt,
            prototypes,
            embedding,
            classifier_losses,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join(CLASSIFIER_FILE),
            checkpoint::classifier_to_bytes(&self.classifier)?,
        )?;
        fs::write(dir.join(EVT_FILE), checkpoint::evt_to_bytes(&self.evt)?)?;
        if let Some(p) = &self.prototypes {
            fs::write(
                dir.join(PROTOTYPE_FILE),
                checkpoint::prototypes_to_bytes(p)?,
            )?;
        }
        fs::write(
            dir.join(EMBEDDING_FILE),
            checkpoint::embedding_to_bytes(&self.embedding)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let prototypes = match fs::read(dir.join(PROTOTYPE_FILE)) {
            Ok(bytes) => Some(checkpoint::prototypes_from_bytes(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        Ok(Self {
            classifier: checkpoint::classifier_from_bytes(&fs::read(dir.join(CLASSIFIER_FILE))?)?,
            evt: checkpoint::evt_from_bytes(&fs::read(dir.join(EVT_FILE))?)?,
            prototypes,
            embedding: checkpoint::embedding_from_bytes(&fs::read(dir.join(EMBEDDING_FILE))?)?,
            classifier_losses: Vec::new(),
        })
    }

    /// Whether every checkpoint file the stages need exists in `dir`.
    pub fn exists_in(dir: &Path) -> bool {
        [CLASSIFIER_FILE, EVT_FILE, EMBEDDING_FILE]
            .iter()
            .all(|f| dir.join(f).is_file())
    }

    fn check_compatible(&self, ds: &Dataset) -> Result<()> {
        let p = ds.seen_classes().len();
        if self.classifier.num_classes() != p || self.classifier.dim() != ds.dim() {
            return Err(GzslError::validation(
                "checkpoint_dims",
                format!(
                    "classifier is {}x{}, dataset has {p} seen classes of dim {}",
                    self.classifier.num_classes(),
                    self.classifier.dim(),
                    ds.dim()
                ),
            ));
        }
        if self.embedding.sem_dim() != ds.sem_dim() || self.embedding.dim() != ds.dim() {
            return Err(GzslError::validation(
                "checkpoint_dims",
                "embedding dimensions do not match the dataset",
            ));
        }
        Ok(())
    }
}

/// Per-test-instance trace of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceResult {
    pub index: usize,
    pub origin: Origin,
    pub true_label: u32,
    /// Domain used for prediction (always Uncertain in non-segmenting modes).
    pub domain: DomainLabel,
    pub segment: SegmentOutcome,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GzslReport {
    pub mode: Mode,
    /// Per-class top-1 of test_seen instances over the full label space.
    pub acc_tr: f64,
    /// Per-class top-1 of test_unseen instances over the full label space.
    pub acc_ts: f64,
    pub h: f64,
    pub per_class: Vec<(u32, f64)>,
    /// Classes without test instances, left out of the means.
    pub excluded_classes: Vec<u32>,
    /// `domain_counts[origin][domain]`, origin 0 = seen, 1 = unseen.
    pub domain_counts: [[usize; 3]; 2],
    /// Unseen-origin instances predicted as a seen class.
    pub u2s: usize,
    /// Seen-origin instances predicted as an unseen class.
    pub s2u: usize,
}

impl GzslReport {
    /// Machine-readable `key = value` lines with fixed formatting.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode = {}", self.mode);
        let _ = writeln!(out, "acc_ts = {:.6}", self.acc_ts);
        let _ = writeln!(out, "acc_tr = {:.6}", self.acc_tr);
        let _ = writeln!(out, "h = {:.6}", self.h);
        for (o, origin) in ["seen", "unseen"].iter().enumerate() {
            for (d, domain) in DomainLabel::ALL.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "domain.{origin}.{domain} = {}",
                    self.domain_counts[o][d]
                );
            }
        }
        let _ = writeln!(out, "u2s = {}", self.u2s);
        let _ = writeln!(out, "s2u = {}", self.s2u);
        let _ = writeln!(out, "excluded_classes = {}", self.excluded_classes.len());
        for (c, acc) in &self.per_class {
            let _ = writeln!(out, "class.{c} = {acc:.6}");
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode: {}", self.mode);
        let _ = writeln!(
            out,
            "  ts {:5.1}   tr {:5.1}   H {:5.1}",
            100.0 * self.acc_ts,
            100.0 * self.acc_tr,
            100.0 * self.h
        );
        let _ = writeln!(out, "  domains      seen  unseen  uncertain");
        for (o, origin) in ["seen", "unseen"].iter().enumerate() {
            let c = self.domain_counts[o];
            let _ = writeln!(out, "  {origin:<10} {:>6}  {:>6}  {:>9}", c[0], c[1], c[2]);
        }
        let _ = writeln!(out, "  U2S {}   S2U {}", self.u2s, self.s2u);
        if !self.excluded_classes.is_empty() {
            let _ = writeln!(
                out,
                "  warning: {} class(es) without test instances excluded",
                self.excluded_classes.len()
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunArtifacts {
    pub report: GzslReport,
    pub instances: Vec<InstanceResult>,
}

/// Evaluates one ablation mode over pre-trained stages.
pub fn evaluate_mode(
    ds: &Dataset,
    stages: &TrainedStages,
    cfg: &PipelineConfig,
    mode: Mode,
) -> Result<RunArtifacts> {
    stages.check_compatible(ds)?;
    let segmentation = segment_all(ds, &stages.classifier, &stages.evt, &cfg.thresholds)?;
    let embeddings = ClassEmbeddings::new(&stages.embedding, ds);
    let calib = if mode.calibrates() {
        CalibrationConfig::new(cfg.calibration.gamma)?
    } else {
        CalibrationConfig::neutral()
    };

    let run = |rec: &crate::segmentation::SegmentRecord| -> Result<InstanceResult> {
        let domain = if mode.segments() {
            rec.outcome.domain
        } else {
            DomainLabel::Uncertain
        };
        let prediction = embeddings.predict(ds.feature(rec.index), domain, calib)?;
        Ok(InstanceResult {
            index: rec.index,
            origin: rec.origin,
            true_label: ds.label(rec.index),
            domain,
            segment: rec.outcome,
            prediction,
        })
    };
    #[cfg(feature = "parallel")]
    let instances: Result<Vec<_>> = segmentation.records.par_iter().map(run).collect();
    #[cfg(not(feature = "parallel"))]
    let instances: Result<Vec<_>> = segmentation.records.iter().map(run).collect();
    let instances = instances?;

    let split_preds = |origin: Origin| -> (Vec<u32>, Vec<u32>) {
        instances
            .iter()
            .filter(|r| r.origin == origin)
            .map(|r| (r.prediction.class_id, r.true_label))
            .unzip()
    };
    let (seen_pred, seen_true) = split_preds(Origin::Seen);
    let (unseen_pred, unseen_true) = split_preds(Origin::Unseen);
    let tr = per_class_top1(&seen_pred, &seen_true, ds.seen_classes())?;
    let ts = per_class_top1(&unseen_pred, &unseen_true, ds.unseen_classes())?;

    let mut domain_counts = [[0usize; 3]; 2];
    let (mut u2s, mut s2u) = (0, 0);
    for r in &instances {
        domain_counts[r.origin as usize][r.domain as usize] += 1;
        match (r.origin, r.prediction.is_seen) {
            (Origin::Unseen, true) => u2s += 1,
            (Origin::Seen, false) => s2u += 1,
            _ => {}
        }
    }
    let mut per_class = tr.per_class.clone();
    per_class.extend(ts.per_class.iter().copied());
    let mut excluded_classes = tr.excluded.clone();
    excluded_classes.extend(ts.excluded.iter().copied());

    let report = GzslReport {
        mode,
        acc_tr: tr.mean,
        acc_ts: ts.mean,
        h: harmonic_mean(tr.mean, ts.mean),
        per_class,
        excluded_classes,
        domain_counts,
        u2s,
        s2u,
    };
    Ok(RunArtifacts { report, instances })
}

/// Trains every stage and evaluates `mode`.
pub fn run_pipeline(ds: &Dataset, cfg: &PipelineConfig, mode: Mode) -> Result<RunArtifacts> {
    let stages = TrainedStages::train(ds, cfg)?;
    evaluate_mode(ds, &stages, cfg, mode)
}

/// Trains once and evaluates all four modes.
pub fn run_ablation(ds: &Dataset, cfg: &PipelineConfig) -> Result<Vec<RunArtifacts>> {
    let stages = TrainedStages::train(ds, cfg)?;
    Mode::ALL
        .iter()
        .map(|&m| evaluate_mode(ds, &stages, cfg, m))
        .collect()
}

/// Rows = modes, columns = ts, tr, H in percent.
pub fn ablation_table(reports: &[&GzslReport]) -> String {
    let mut out = format!("{:<16}{:>7}{:>7}{:>7}\n", "Method", "ts", "tr", "H");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<16}{:>7.1}{:>7.1}{:>7.1}",
            r.mode.as_str(),
            100.0 * r.acc_ts,
            100.0 * r.acc_tr,
            100.0 * r.h
        );
    }
    out
}

/// ROC for unseen detection with score `1 - confidence` (unseen = positive).
pub fn unseen_detection_roc(artifacts: &RunArtifacts) -> Result<RocCurve> {
    let scores: Vec<f64> = artifacts
        .instances
        .iter()
        .map(|r| 1.0 - r.segment.confidence)
        .collect();
    let positive: Vec<bool> = artifacts
        .instances
        .iter()
        .map(|r| r.origin == Origin::Unseen)
        .collect();
    roc_curve(&scores, &positive)
}

pub fn roc_csv(roc: &RocCurve) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in &roc.points {
        let _ = writeln!(out, "{},{:.6},{:.6}", p.threshold, p.fpr, p.tpr);
    }
    out
}

/// Confidence scores over `[0, 1]` split by origin.
pub fn confidence_histograms(
    artifacts: &RunArtifacts,
    bins: usize,
) -> Result<(Histogram, Histogram)> {
    let by = |o: Origin| {
        Histogram::from_values(
            artifacts
                .instances
                .iter()
                .filter(|r| r.origin == o)
                .map(|r| r.segment.confidence),
            bins,
            0.0,
            1.0,
        )
    };
    Ok((by(Origin::Seen)?, by(Origin::Unseen)?))
}

/// Distance to the predicted class embedding split by origin and by the side
/// (seen/unseen class) of the prediction. Column order: seen→seen,
/// seen→unseen, unseen→seen (U2S), unseen→unseen.
pub fn distance_histograms(artifacts: &RunArtifacts, bins: usize) -> Result<[Histogram; 4]> {
    let dist = |r: &InstanceResult| r.prediction.distance_sq.sqrt();
    let max = artifacts.instances.iter().map(dist).fold(0.0, f64::max);
    let hi = if max > 0.0 { max } else { 1.0 };
    let cell = |o: Origin, seen_pred: bool| {
        Histogram::from_values(
            artifacts
                .instances
                .iter()
                .filter(|r| r.origin == o && r.prediction.is_seen == seen_pred)
                .map(dist),
            bins,
            0.0,
            hi,
        )
    };
    Ok([
        cell(Origin::Seen, true)?,
        cell(Origin::Seen, false)?,
        cell(Origin::Unseen, true)?,
        cell(Origin::Unseen, false)?,
    ])
}

pub fn confidence_histograms_csv(artifacts: &RunArtifacts, bins: usize) -> Result<String> {
    let (seen, unseen) = confidence_histograms(artifacts, bins)?;
    Ok(histograms_csv(&[("seen", &seen), ("unseen", &unseen)]))
}

pub fn distance_histograms_csv(artifacts: &RunArtifacts, bins: usize) -> Result<String> {
    let [ss, su, us, uu] = distance_histograms(artifacts, bins)?;
    Ok(histograms_csv(&[
        ("seen_to_seen", &ss),
        ("seen_to_unseen", &su),
        ("unseen_to_seen", &us),
        ("unseen_to_unseen", &uu),
    ]))
}

/// Per-instance segmentation CSV:
/// `instance_index,true_origin,assigned_domain,h_c1,P_c1`.
pub fn segmentation_csv(artifacts: &RunArtifacts) -> String {
    let mut out = String::from("instance_index,true_origin,assigned_domain,h_c1,P_c1\n");
    for r in &artifacts.instances {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6}",
            r.index,
            r.origin.as_str(),
            r.segment.domain,
            r.segment.confidence,
            r.segment.top_cdf
        );
    }
    out
}
