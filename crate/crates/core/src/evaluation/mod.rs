//! Metrics, ROC analysis, histograms and the end-to-end ablation pipeline.

pub mod histogram;
pub mod metrics;
pub mod pipeline;
pub mod roc;

pub use histogram::{histograms_csv, Histogram};
pub use metrics::{harmonic_mean, per_class_top1, PerClassAccuracy};
pub use pipeline::{
    ablation_table, confidence_histograms, confidence_histograms_csv, distance_histograms,
    distance_histograms_csv, evaluate_mode, roc_csv, run_ablation, run_pipeline, segmentation_csv,
    unseen_detection_roc, GzslReport, InstanceResult, RunArtifacts, TrainedStages,
};
pub use roc::{roc_curve, RocCurve, RocPoint};
