//! Pipeline configuration: a line-oriented `key = value` file plus overrides.
//!
//! Blank lines and lines starting with `#` are ignored. Every key is
//! optional; missing keys take the defaults listed in [`KEYS`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::classifier::ClassifierTrainConfig;
use crate::embedding::{AlternatingConfig, CalibrationConfig, EmbeddingConfig};
use crate::error::{GzslError, Result};
use crate::evt::DEFAULT_TAIL_SIZE;
use crate::segmentation::DomainThresholds;

/// Which routing/calibration combination a run evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Unrestricted nearest embedding, no calibration.
    Baseline,
    /// Calibrated stacking on every test instance.
    BaselineCs,
    /// Domain segmentation, no calibration on the uncertain domain.
    BaselineDs,
    /// Domain segmentation with calibrated stacking on the uncertain domain.
    BaselineDsCs,
}

impl Mode {
    pub const ALL: [Mode; 4] = [
        Mode::Baseline,
        Mode::BaselineCs,
        Mode::BaselineDs,
        Mode::BaselineDsCs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::BaselineCs => "baseline+CS",
            Mode::BaselineDs => "baseline+DS",
            Mode::BaselineDsCs => "baseline+DS+CS",
        }
    }

    pub fn segments(self) -> bool {
        matches!(self, Mode::BaselineDs | Mode::BaselineDsCs)
    }

    pub fn calibrates(self) -> bool {
        matches!(self, Mode::BaselineCs | Mode::BaselineDsCs)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = GzslError;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .to_ascii_lowercase()
            .chars()
            .filter(|c| !c.is_whitespace())
            .collect();
        match norm.as_str() {
            "baseline" => Ok(Mode::Baseline),
            "baseline+cs" | "cs" => Ok(Mode::BaselineCs),
            "baseline+ds" | "ds" => Ok(Mode::BaselineDs),
            "baseline+ds+cs" | "ds+cs" | "full" => Ok(Mode::BaselineDsCs),
            _ => Err(GzslError::config(
                "type:mode",
                format!("unknown mode {s:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    /// Alternating prototype learning + prototype regression.
    Prototype,
    /// Regression straight onto individual train features.
    Simple,
}

impl EmbeddingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::Prototype => "prototype",
            EmbeddingKind::Simple => "simple",
        }
    }
}

impl FromStr for EmbeddingKind {
    type Err = GzslError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "prototype" => Ok(EmbeddingKind::Prototype),
            "simple" => Ok(EmbeddingKind::Simple),
            _ => Err(GzslError::config(
                "type:embedding",
                format!("unknown embedding {s:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub mode: Mode,
    pub bins: usize,
    pub classifier: ClassifierTrainConfig,
    pub tail_size: usize,
    pub evt_normalize: bool,
    pub thresholds: DomainThresholds,
    pub embedding_kind: EmbeddingKind,
    pub alternating: AlternatingConfig,
    /// Epoch count for the simple (instance-level) embedding objective.
    pub simple_epochs: usize,
    pub calibration: CalibrationConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut cfg = Self {
            dataset: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            workers: 1,
            mode: Mode::BaselineDsCs,
            bins: 50,
            classifier: ClassifierTrainConfig::default(),
            tail_size: DEFAULT_TAIL_SIZE,
            evt_normalize: false,
            thresholds: DomainThresholds::default(),
            embedding_kind: EmbeddingKind::Prototype,
            alternating: AlternatingConfig {
                embedding: EmbeddingConfig {
                    lr: 1e-3,
                    ..EmbeddingConfig::default()
                },
                ..AlternatingConfig::default()
            },
            simple_epochs: 50,
            calibration: CalibrationConfig { gamma: 1.5 },
        };
        cfg.propagate_seed();
        cfg
    }
}

/// Every accepted key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("dataset", "path to the GZB dataset"),
    (
        "out_dir",
        "directory for checkpoints, reports and CSV outputs",
    ),
    ("seed", "master seed; stage seeds derive from it"),
    (
        "workers",
        "threads for per-instance stages (results do not depend on it)",
    ),
    (
        "mode",
        "baseline | baseline+CS | baseline+DS | baseline+DS+CS",
    ),
    ("bins", "histogram bin count"),
    ("clf_lr", "classifier learning rate"),
    ("clf_momentum", "classifier momentum coefficient"),
    ("clf_epochs", "classifier epochs"),
    ("clf_batch", "classifier mini-batch size"),
    ("tau", "training temperature"),
    ("tail_size", "EVT tail size"),
    (
        "evt_normalize",
        "L2-normalise features before EVT distances (true|false)",
    ),
    ("beta_in", "confidence above which an instance may be Seen"),
    (
        "beta_out",
        "confidence below which an instance may be Unseen",
    ),
    (
        "alpha_o",
        "Weibull CDF above which an instance is outside a class",
    ),
    (
        "alpha_in",
        "Weibull CDF below which an instance is inside a class",
    ),
    (
        "top_k",
        "number of ranked classes that must all reject an Unseen instance",
    ),
    ("embedding", "prototype | simple"),
    ("hidden", "embedding hidden width"),
    ("lambda_e", "embedding weight decay"),
    ("emb_lr", "embedding Adam step size"),
    ("emb_batch", "mini-batch size for the simple embedding"),
    ("rounds", "alternating rounds"),
    ("proto_epochs", "prototype epochs per round"),
    ("emb_epochs", "embedding epochs per round"),
    ("proto_lr", "prototype learning rate"),
    ("simple_epochs", "epochs for the simple embedding"),
    (
        "gamma",
        "calibrated-stacking factor on seen-class distances (>= 1)",
    ),
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| GzslError::config(format!("type:{key}"), format!("cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(GzslError::config(
            format!("type:{key}"),
            format!("cannot parse {value:?} as bool"),
        )),
    }
}

impl PipelineConfig {
    fn propagate_seed(&mut self) {
        self.classifier.seed = self.seed;
        self.alternating.embedding.seed = self.seed.wrapping_add(1);
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "dataset" => self.dataset = Some(PathBuf::from(v)),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => {
                self.seed = parse_value(key, v)?;
                self.propagate_seed();
            }
            "workers" => self.workers = parse_value(key, v)?,
            "mode" => self.mode = v.parse()?,
            "bins" => self.bins = parse_value(key, v)?,
            "clf_lr" => self.classifier.learning_rate = parse_value(key, v)?,
            "clf_momentum" => self.classifier.momentum = parse_value(key, v)?,
            "clf_epochs" => self.classifier.epochs = parse_value(key, v)?,
            "clf_batch" => self.classifier.batch_size = parse_value(key, v)?,
            "tau" => self.classifier.temperature = parse_value(key, v)?,
            "tail_size" => self.tail_size = parse_value(key, v)?,
            "evt_normalize" => self.evt_normalize = parse_bool(key, v)?,
            "beta_in" => self.thresholds.beta_in = parse_value(key, v)?,
            "beta_out" => self.thresholds.beta_out = parse_value(key, v)?,
            "alpha_o" => self.thresholds.evt.alpha_out = parse_value(key, v)?,
            "alpha_in" => self.thresholds.evt.alpha_in = parse_value(key, v)?,
            "top_k" => self.thresholds.top_k = parse_value(key, v)?,
            "embedding" => self.embedding_kind = v.parse()?,
            "hidden" => self.alternating.embedding.hidden = parse_value(key, v)?,
            "lambda_e" => self.alternating.embedding.lambda = parse_value(key, v)?,
            "emb_lr" => self.alternating.embedding.lr = parse_value(key, v)?,
            "emb_batch" => self.alternating.embedding.batch_size = parse_value(key, v)?,
            "rounds" => self.alternating.rounds = parse_value(key, v)?,
            "proto_epochs" => self.alternating.proto_epochs = parse_value(key, v)?,
            "emb_epochs" => self.alternating.emb_epochs = parse_value(key, v)?,
            "proto_lr" => self.alternating.proto_lr = parse_value(key, v)?,
            "simple_epochs" => self.simple_epochs = parse_value(key, v)?,
            "gamma" => self.calibration.gamma = parse_value(key, v)?,
            _ => {
                return Err(GzslError::config(
                    "unknown_key",
                    format!("unknown key {key:?}"),
                ))
            }
        }
        Ok(())
    }

    /// Checks every cross-field invariant.
    pub fn validate(&self) -> Result<()> {
        self.classifier.validate()?;
        self.thresholds.validate()?;
        self.alternating.embedding.validate()?;
        if !(self.alternating.proto_lr > 0.0 && self.alternating.proto_lr.is_finite()) {
            return Err(GzslError::config(
                "proto_lr > 0",
                format!("got {}", self.alternating.proto_lr),
            ));
        }
        CalibrationConfig::new(self.calibration.gamma)?;
        if self.tail_size < 2 {
            return Err(GzslError::config(
                "tail_size >= 2",
                format!("got {}", self.tail_size),
            ));
        }
        if self.workers == 0 {
            return Err(GzslError::config("workers >= 1", "got 0"));
        }
        if self.bins == 0 {
            return Err(GzslError::config("bins >= 1", "got 0"));
        }
        Ok(())
    }

    /// The seed key is applied first so that it never clobbers explicitly
    /// set stage seeds regardless of line order.
    fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs.iter().filter(|(k, _)| k == "seed") {
            self.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "seed") {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Effective configuration as `key = value` text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let t = &self.thresholds;
        let e = &self.alternating.embedding;
        let c = &self.classifier;
        let mut lines = Vec::new();
        if let Some(d) = &self.dataset {
            lines.push(format!("dataset = {}", d.display()));
        }
        lines.extend([
            format!("out_dir = {}", self.out_dir.display()),
            format!("seed = {}", self.seed),
            format!("workers = {}", self.workers),
            format!("mode = {}", self.mode),
            format!("bins = {}", self.bins),
            format!("clf_lr = {:?}", c.learning_rate),
            format!("clf_momentum = {:?}", c.momentum),
            format!("clf_epochs = {}", c.epochs),
            format!("clf_batch = {}", c.batch_size),
            format!("tau = {:?}", c.temperature),
            format!("tail_size = {}", self.tail_size),
            format!("evt_normalize = {}", self.evt_normalize),
            format!("beta_in = {:?}", t.beta_in),
            format!("beta_out = {:?}", t.beta_out),
            format!("alpha_o = {:?}", t.evt.alpha_out),
            format!("alpha_in = {:?}", t.evt.alpha_in),
            format!("top_k = {}", t.top_k),
            format!("embedding = {}", self.embedding_kind.as_str()),
            format!("hidden = {}", e.hidden),
            format!("lambda_e = {:?}", e.lambda),
            format!("emb_lr = {:?}", e.lr),
            format!("emb_batch = {}", e.batch_size),
            format!("rounds = {}", self.alternating.rounds),
            format!("proto_epochs = {}", self.alternating.proto_epochs),
            format!("emb_epochs = {}", self.alternating.emb_epochs),
            format!("proto_lr = {:?}", self.alternating.proto_lr),
            format!("simple_epochs = {}", self.simple_epochs),
            format!("gamma = {:?}", self.calibration.gamma),
        ]);
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

/// Splits `key = value` lines, skipping blanks and `#` comments.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            GzslError::config("syntax", format!("line {}: expected `key = value`", n + 1))
        })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

/// Parses a config file body and applies `overrides` on top of it.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    cfg.apply(&parse_pairs(text)?)?;
    cfg.apply(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn empty_file_is_defaults() {
        let cfg = parse_config("", &[]).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.thresholds.top_k, 3);
        assert_eq!(cfg.tail_size, 20);
        assert_eq!(cfg.calibration.gamma, 1.5);
        assert_eq!(cfg.classifier.temperature, 2.0);
    }

    #[test]
    fn beta_order_is_enforced() {
        let err = parse_config("beta_in = 0.3\nbeta_out = 0.5\n", &[]).unwrap_err();
        assert_eq!(err.rule(), Some("beta_out <= beta_in"));
        let err = parse_config("alpha_o = 0.3\nalpha_in = 0.5\n", &[]).unwrap_err();
        assert_eq!(err.rule(), Some("alpha_in <= alpha_o"));
        assert_eq!(
            parse_config("gamma = 0.5", &[]).unwrap_err().rule(),
            Some("gamma >= 1")
        );
        assert_eq!(
            parse_config("tau = 0", &[]).unwrap_err().rule(),
            Some("tau > 0")
        );
    }

    #[test]
    fn overrides_beat_file() {
        let cfg = parse_config("gamma = 2.0\n# comment\n\nseed = 4", &[ov("gamma", "3")]).unwrap();
        assert_eq!(cfg.calibration.gamma, 3.0);
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.classifier.seed, 4);
        assert_eq!(cfg.alternating.embedding.seed, 5);
    }

    #[test]
    fn unknown_key_and_type_mismatch() {
        assert_eq!(
            parse_config("colour = red", &[]).unwrap_err().rule(),
            Some("unknown_key")
        );
        assert_eq!(
            parse_config("top_k = three", &[]).unwrap_err().rule(),
            Some("type:top_k")
        );
        assert_eq!(
            parse_config("just text", &[]).unwrap_err().rule(),
            Some("syntax")
        );
        assert_eq!(
            parse_config("evt_normalize = maybe", &[])
                .unwrap_err()
                .rule(),
            Some("type:evt_normalize")
        );
    }

    #[test]
    fn text_roundtrip() {
        let cfg = parse_config(
            "dataset = data/x.gzb\nmode = baseline+CS\nembedding = simple\nbeta_in = 0.8\ngamma = 1.25\nseed = 9",
            &[],
        )
        .unwrap();
        assert_eq!(parse_config(&cfg.to_text(), &[]).unwrap(), cfg);
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = PipelineConfig {
            dataset: Some("d.gzb".into()),
            ..Default::default()
        };
        let written: Vec<String> = parse_pairs(&cfg.to_text())
            .unwrap()
            .into_iter()
            .map(|p| p.0)
            .collect();
        let documented: Vec<&str> = KEYS.iter().map(|k| k.0).collect();
        assert_eq!(written, documented);
    }

    #[test]
    fn mode_names() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("nope".parse::<Mode>().is_err());
    }
}
