//! Browser bindings. Queries return a JSON string; failures come back as
//! `{"error": "..."}` so the page needs no exception handling.

use gzsl_core::classifier::SoftmaxClassifier;
use gzsl_core::config::{Mode, PipelineConfig};
use gzsl_core::data::{generate_synthetic, Dataset};
use gzsl_core::evaluation::{evaluate_mode, roc_curve, Histogram, TrainedStages};
use gzsl_core::evt::{fit_weibull_tail, shape_residual, EvtThresholds};
use gzsl_core::segmentation::{DomainThresholds, Origin};
use gzsl_core::GzslError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(result: Result<Value, GzslError>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e.to_string() }).to_string(),
    }
}

fn weibull_tail(
    shape: f64,
    scale: f64,
    n: usize,
    tail: usize,
    seed: u64,
) -> Result<Value, GzslError> {
    if !(shape > 0.0 && scale > 0.0) {
        return Err(GzslError::InvalidArgument(
            "shape and scale must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<f64> = (0..n)
        .map(|_| scale * (-(1.0 - rng.random::<f64>()).ln()).powf(1.0 / shape))
        .collect();
    let fit = fit_weibull_tail(&samples, tail)?;
    samples.sort_by(f64::total_cmp);
    let tail_values = &samples[samples.len() - tail.min(samples.len())..];
    let shifted: Vec<f64> = tail_values.iter().map(|d| d - fit.location).collect();

    let hi = samples.last().copied().unwrap_or(1.0) * 1.1;
    let curve: Vec<Value> = (0..=100)
        .map(|i| {
            let d = hi * i as f64 / 100.0;
            json!([d, fit.cdf(d)])
        })
        .collect();
    let empirical: Vec<Value> = tail_values
        .iter()
        .enumerate()
        .map(|(i, &d)| json!([d, (i as f64 + 0.5) / tail_values.len() as f64]))
        .collect();
    let hist = Histogram::from_values(samples.iter().copied(), 30, 0.0, hi)?;
    Ok(json!({
        "location": fit.location,
        "scale": fit.scale,
        "shape": fit.shape,
        "residual": shape_residual(&shifted, fit.shape),
        "tail_start": tail_values.first(),
        "curve": curve,
        "empirical": empirical,
        "histogram": { "hi": hi, "counts": hist.counts },
    }))
}

/// Draws `n` values from Weibull(`shape`, `scale`), fits a tail model to the
/// `tail` largest and returns the fit, the fitted CDF and the data.
#[wasm_bindgen]
pub fn weibull_explorer(shape: f64, scale: f64, n: usize, tail: usize, seed: u64) -> String {
    respond(weibull_tail(shape, scale, n, tail, seed))
}

/// A synthetic dataset with every stage trained once, re-evaluated under
/// interactive thresholds.
#[wasm_bindgen]
pub struct Demo {
    ds: Dataset,
    stages: TrainedStages,
    cfg: PipelineConfig,
}

#[wasm_bindgen]
impl Demo {
    /// Builds and trains the demo dataset; throws the error message on failure.
    #[wasm_bindgen(constructor)]
    pub fn new(spread: f64, seed: u64) -> Result<Demo, String> {
        let ds = generate_synthetic(10, 5, 32, 4, 60, spread, seed).map_err(|e| e.to_string())?;
        let mut cfg = PipelineConfig::default();
        cfg.alternating.embedding.hidden = 256;
        let stages = TrainedStages::train(&ds, &cfg).map_err(|e| e.to_string())?;
        Ok(Demo { ds, stages, cfg })
    }

    /// Domain counts and accuracies for all four modes under the given
    /// thresholds and seen-class penalty.
    pub fn ablate(
        &self,
        beta_in: f64,
        beta_out: f64,
        alpha_out: f64,
        alpha_in: f64,
        top_k: usize,
        gamma: f64,
    ) -> String {
        respond(self.ablate_json(beta_in, beta_out, alpha_out, alpha_in, top_k, gamma))
    }

    /// Confidence histograms and unseen-detection ROC with the softmax taken
    /// at temperature `tau`.
    pub fn confidence(&self, tau: f64, bins: usize) -> String {
        respond(self.confidence_json(tau, bins))
    }
}

impl Demo {
    fn ablate_json(
        &self,
        beta_in: f64,
        beta_out: f64,
        alpha_out: f64,
        alpha_in: f64,
        top_k: usize,
        gamma: f64,
    ) -> Result<Value, GzslError> {
        let mut cfg = self.cfg.clone();
        cfg.thresholds = DomainThresholds {
            beta_in,
            beta_out,
            evt: EvtThresholds::new(alpha_out, alpha_in)?,
            top_k,
        };
        cfg.calibration.gamma = gamma;
        cfg.validate()?;
        let mut modes = Vec::new();
        let mut domains = Value::Null;
        for mode in Mode::ALL {
            let r = evaluate_mode(&self.ds, &self.stages, &cfg, mode)?.report;
            if mode == Mode::BaselineDsCs {
                domains = json!({ "seen": r.domain_counts[0], "unseen": r.domain_counts[1] });
            }
            modes.push(json!({
                "mode": mode.as_str(),
                "ts": r.acc_ts,
                "tr": r.acc_tr,
                "h": r.h,
                "u2s": r.u2s,
                "s2u": r.s2u,
            }));
        }
        Ok(json!({ "modes": modes, "domains": domains }))
    }

    fn confidence_json(&self, tau: f64, bins: usize) -> Result<Value, GzslError> {
        let clf: &SoftmaxClassifier = &self.stages.classifier;
        let split = self.ds.split();
        let mut scores = Vec::new();
        let mut positive = Vec::new();
        let tasks = split
            .test_seen_idx
            .iter()
            .map(|&i| (i, Origin::Seen))
            .chain(split.test_unseen_idx.iter().map(|&i| (i, Origin::Unseen)));
        for (i, origin) in tasks {
            let probs = clf.softmax_probs(self.ds.feature(i as usize), Some(tau))?;
            let h = probs.iter().copied().fold(0.0, f64::max);
            scores.push(h);
            positive.push(origin == Origin::Unseen);
        }
        let by = |unseen: bool| {
            Histogram::from_values(
                scores
                    .iter()
                    .zip(&positive)
                    .filter(|(_, &p)| p == unseen)
                    .map(|(&s, _)| s),
                bins,
                0.0,
                1.0,
            )
        };
        let (seen_hist, unseen_hist) = (by(false)?, by(true)?);
        let inverted: Vec<f64> = scores.iter().map(|s| 1.0 - s).collect();
        let roc = roc_curve(&inverted, &positive)?;
        let points: Vec<Value> = roc.points.iter().map(|p| json!([p.fpr, p.tpr])).collect();
        Ok(json!({
            "seen": seen_hist.counts,
            "unseen": unseen_hist.counts,
            "auc": roc.auc,
            "roc": points,
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn weibull_fit_is_reported() {
        let v = parse(&weibull_explorer(2.0, 1.0, 500, 500, 1));
        let shape = v["shape"].as_f64().unwrap();
        assert!((1.6..2.4).contains(&shape), "{shape}");
        assert!(v["residual"].as_f64().unwrap().abs() < 1e-8);
        assert_eq!(v["curve"].as_array().unwrap().len(), 101);
        assert_eq!(v["empirical"].as_array().unwrap().len(), 500);
    }

    #[test]
    fn bad_input_becomes_an_error_object() {
        let v = parse(&weibull_explorer(-1.0, 1.0, 100, 20, 1));
        assert!(v["error"].is_string());
        let v = parse(&weibull_explorer(2.0, 1.0, 10, 20, 1));
        assert!(v["error"].is_string());
    }

    #[test]
    fn demo_ablation_and_confidence() {
        let demo = Demo::new(0.5, 7).unwrap();
        let v = parse(&demo.ablate(0.9, 0.5, 0.9, 0.5, 3, 1.5));
        let modes = v["modes"].as_array().unwrap();
        assert_eq!(modes.len(), 4);
        assert_eq!(modes[3]["mode"], "baseline+DS+CS");
        let unseen: u64 = v["domains"]["unseen"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_u64().unwrap())
            .sum();
        assert_eq!(unseen, 5 * 60);

        let bad = parse(&demo.ablate(0.3, 0.5, 0.9, 0.5, 3, 1.5));
        assert!(bad["error"]
            .as_str()
            .unwrap()
            .contains("beta_out <= beta_in"));

        let c = parse(&demo.confidence(2.0, 10));
        let total: u64 = ["seen", "unseen"]
            .iter()
            .flat_map(|k| {
                c[*k]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|v| v.as_u64().unwrap())
            })
            .sum();
        assert_eq!(total as usize, demo.ds.split().test_seen_idx.len() + 300);
        assert!((0.0..=1.0).contains(&c["auc"].as_f64().unwrap()));
    }
}
