//! Generalized zero-shot learning by domain segmentation.
//!
//! A seen-class softmax classifier and per-class Weibull models of centroid
//! distances route every test instance into a seen, unseen or uncertain
//! domain. Instances are then labelled by their nearest class embedding
//! `ψ(y)` (a semantic-to-visual MLP) searched only within their domain, with
//! seen-class distances inflated by `γ` in the uncertain domain.
//!
//! ```no_run
//! use gzsl_core::config::{Mode, PipelineConfig};
//! use gzsl_core::data::generate_synthetic;
//! use gzsl_core::evaluation::run_pipeline;
//!
//! let ds = generate_synthetic(10, 5, 32, 16, 100, 0.3, 7)?;
//! let run = run_pipeline(&ds, &PipelineConfig::default(), Mode::BaselineDsCs)?;
//! println!("H = {:.3}", run.report.h);
//! # Ok::<(), gzsl_core::GzslError>(())
//! ```

mod binio;
pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod data;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod evt;
pub mod math;
mod optim;
pub mod segmentation;

pub use error::{GzslError, Result};
