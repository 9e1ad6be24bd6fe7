use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gzsl_core::config::{parse_config, parse_pairs, Mode, PipelineConfig};
use gzsl_core::data::{load_dataset, save_dataset, Dataset, SyntheticConfig};
use gzsl_core::evaluation::{
    ablation_table, confidence_histograms_csv, distance_histograms_csv, evaluate_mode, roc_csv,
    segmentation_csv, unseen_detection_roc, RunArtifacts, TrainedStages,
};
use gzsl_core::GzslError;

const EFFECTIVE_CONFIG: &str = "config.effective.txt";
const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Parser)]
#[command(
    name = "gzsl",
    version,
    about = "Generalized zero-shot learning by domain segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic GZB dataset
    Synth(SynthArgs),
    /// Train every stage and write checkpoints
    Train(Common),
    /// Write the per-instance domain assignment
    Segment(Common),
    /// Evaluate one mode
    Evaluate(Common),
    /// Evaluate all four modes on shared stages
    Ablate(Common),
    /// Unseen-detection ROC from classifier confidence
    Roc(Common),
    /// Confidence and distance histograms
    Histograms(Common),
}

#[derive(Args)]
struct Common {
    /// `key = value` config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// GZB dataset file
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// baseline, baseline+CS, baseline+DS or baseline+DS+CS
    #[arg(long)]
    mode: Option<String>,
    /// Threads for per-instance work
    #[arg(long)]
    workers: Option<usize>,
    /// Load stages from this checkpoint directory instead of training
    #[arg(long)]
    checkpoints: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output GZB file
    #[arg(long, default_value = "synthetic.gzb")]
    output: PathBuf,
    #[arg(long, default_value_t = 10)]
    n_seen: usize,
    #[arg(long, default_value_t = 5)]
    n_unseen: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    sem_dim: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

enum Failure {
    Usage(String),
    Core(GzslError),
}

impl From<GzslError> for Failure {
    fn from(e: GzslError) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(e.into())
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Core(GzslError::Numerical(_)) => 3,
            Failure::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Core(e) => write!(f, "{e}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Synth(a) => synth(&a),
        Command::Train(c) => with_context(&c, |ctx| {
            let mut losses = String::from("epoch,loss\n");
            for (i, l) in ctx.stages.classifier_losses.iter().enumerate() {
                losses.push_str(&format!("{},{l}\n", i + 1));
            }
            fs::write(ctx.out.join("classifier_losses.csv"), losses)?;
            println!(
                "checkpoints written to {}",
                ctx.out.join(CHECKPOINT_DIR).display()
            );
            Ok(())
        }),
        Command::Segment(c) => with_context(&c, |ctx| {
            let run = ctx.evaluate(ctx.cfg.mode)?;
            fs::write(ctx.out.join("segmentation.csv"), segmentation_csv(&run))?;
            let counts = run.report.domain_counts;
            println!(
                "seen origin    -> seen {} / unseen {} / uncertain {}",
                counts[0][0], counts[0][1], counts[0][2]
            );
            println!(
                "unseen origin  -> seen {} / unseen {} / uncertain {}",
                counts[1][0], counts[1][1], counts[1][2]
            );
            Ok(())
        }),
        Command::Evaluate(c) => with_context(&c, |ctx| {
            let run = ctx.evaluate(ctx.cfg.mode)?;
            fs::write(ctx.out.join("report.txt"), run.report.to_key_values())?;
            fs::write(ctx.out.join("report_table.txt"), run.report.to_table())?;
            print!("{}", run.report.to_table());
            Ok(())
        }),
        Command::Ablate(c) => with_context(&c, |ctx| {
            let runs = Mode::ALL
                .iter()
                .map(|&m| ctx.evaluate(m))
                .collect::<Result<Vec<_>, _>>()?;
            let mut kv = String::new();
            for run in &runs {
                kv.push_str(&run.report.to_key_values());
                kv.push('\n');
            }
            let table = ablation_table(&runs.iter().map(|r| &r.report).collect::<Vec<_>>());
            fs::write(ctx.out.join("ablation.txt"), &kv)?;
            fs::write(ctx.out.join("ablation_table.txt"), &table)?;
            print!("{table}");
            Ok(())
        }),
        Command::Roc(c) => with_context(&c, |ctx| {
            let run = ctx.evaluate(ctx.cfg.mode)?;
            let roc = unseen_detection_roc(&run)?;
            fs::write(ctx.out.join("roc.csv"), roc_csv(&roc))?;
            fs::write(
                ctx.out.join("roc_auc.txt"),
                format!("auc = {:.6}\n", roc.auc),
            )?;
            println!("AUC {:.4}", roc.auc);
            Ok(())
        }),
        Command::Histograms(c) => with_context(&c, |ctx| {
            let run = ctx.evaluate(ctx.cfg.mode)?;
            let bins = ctx.cfg.bins;
            fs::write(
                ctx.out.join("confidence_histograms.csv"),
                confidence_histograms_csv(&run, bins)?,
            )?;
            fs::write(
                ctx.out.join("distance_histograms.csv"),
                distance_histograms_csv(&run, bins)?,
            )?;
            println!("histograms written to {}", ctx.out.display());
            Ok(())
        }),
    }
}

fn synth(a: &SynthArgs) -> Result<(), Failure> {
    let synthetic = SyntheticConfig {
        n_seen: a.n_seen,
        n_unseen: a.n_unseen,
        dim: a.dim,
        sem_dim: a.sem_dim,
        per_class: a.per_class,
        spread: a.spread,
        seed: a.seed,
    }
    .generate()?;
    if let Some(parent) = a.output.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    save_dataset(&synthetic.dataset, &a.output)?;
    println!(
        "wrote {} ({} instances, {} classes)",
        a.output.display(),
        synthetic.dataset.len(),
        synthetic.dataset.num_classes()
    );
    Ok(())
}

struct Context {
    cfg: PipelineConfig,
    ds: Dataset,
    out: PathBuf,
    stages: TrainedStages,
}

impl Context {
    fn evaluate(&self, mode: Mode) -> Result<RunArtifacts, GzslError> {
        evaluate_mode(&self.ds, &self.stages, &self.cfg, mode)
    }
}

fn resolve_config(c: &Common) -> Result<PipelineConfig, Failure> {
    let text = match &c.config {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut overrides = Vec::new();
    for s in &c.set {
        let pairs = parse_pairs(s)?;
        if pairs.len() != 1 {
            return Err(Failure::Usage(format!(
                "--set expects KEY=VALUE, got {s:?}"
            )));
        }
        overrides.extend(pairs);
    }
    let flag = |k: &str, v: Option<String>| v.map(|v| (k.to_string(), v));
    overrides.extend(
        [
            flag(
                "dataset",
                c.dataset.as_ref().map(|p| p.display().to_string()),
            ),
            flag("out_dir", c.out.as_ref().map(|p| p.display().to_string())),
            flag("seed", c.seed.map(|v| v.to_string())),
            flag("mode", c.mode.clone()),
            flag("workers", c.workers.map(|v| v.to_string())),
        ]
        .into_iter()
        .flatten(),
    );
    Ok(parse_config(&text, &overrides)?)
}

/// Resolves config and dataset, writes the effective config, prepares the
/// stages (training unless `--checkpoints` is given) and runs `body` on a
/// pool with the configured worker count.
fn with_context(
    c: &Common,
    body: impl FnOnce(&Context) -> Result<(), Failure> + Send,
) -> Result<(), Failure> {
    let cfg = resolve_config(c)?;
    let path = cfg
        .dataset
        .clone()
        .ok_or_else(|| Failure::Usage("no dataset given (--dataset or `dataset` key)".into()))?;
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join(EFFECTIVE_CONFIG), cfg.to_text())?;
    let ds = load_dataset(&path)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Failure::Usage(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let checkpoints = c.checkpoints.clone();
    pool.install(move || {
        let stages = match &checkpoints {
            Some(dir) => TrainedStages::load(dir)?,
            None => TrainedStages::train(&ds, &cfg)?,
        };
        if checkpoints.is_none() {
            stages.save(&out.join(CHECKPOINT_DIR))?;
        }
        let ctx = Context {
            cfg,
            ds,
            out,
            stages,
        };
        body(&ctx)
    })
}
