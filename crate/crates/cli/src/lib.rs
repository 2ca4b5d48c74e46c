//! `combolab` command-line driver.

pub mod config;
pub mod error;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use combolab::data::{synth_generate, write_dataset, Dataset, Provenance};
use combolab::discretize::DiscretizationSpec;
use combolab::gradsuite::{run_suite, SuiteConfig, SuiteReport};
use combolab::losses::LossKind;
use combolab::model::{read_checkpoint, write_checkpoint};
use combolab::train::{
    compare_losses, cross_validate, evaluate, train_model, CompareReport, CvReport, EpochRecord, Metrics,
};

pub use config::{RunConfig, CONFIG_ECHO};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "combolab", version, about = "Train and compare score-regression losses on SE backbones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic dataset (`.csv` or binary by extension).
    Synth(SynthArgs),
    /// Train on the configured dataset; writes history, report and checkpoint.
    Train(RunArgs),
    /// Score a checkpoint on the configured dataset.
    Eval(EvalArgs),
    /// k-fold cross-validation.
    Cv(CvArgs),
    /// One model per loss on a shared 60/40 split.
    Compare(CompareArgs),
    /// Analytic versus finite-difference gradients for every component.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    /// Sample shape, e.g. `8` or `3,16,16`.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub shape: Vec<usize>,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sd: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub k: u64,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long, value_delimiter = ',', default_value = "l1,mse,smooth_l1,huber,combo")]
    pub losses: Vec<LossKind>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = combolab::gradsuite::DEFAULT_POINTS)]
    pub points: usize,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const HISTORY_FILE: &str = "history.jsonl";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const EVAL_REPORT: &str = "eval_report.json";
pub const CV_REPORT: &str = "cv_report.json";
pub const COMPARE_REPORT: &str = "compare_report.json";
pub const COMPARE_TABLE: &str = "compare_table.txt";

pub fn banner(provenance: Provenance) -> String {
    let source = match provenance {
        Provenance::Synthetic => "synthetic",
        Provenance::Csv => "CSV",
        Provenance::Binary => "binary-tensor",
    };
    format!(
        "DESK-SCALE RESULT on {source} data with seeded random initialisation and no pretraining. \
         These are not published face-dataset benchmark figures and are not comparable to them."
    )
}

#[derive(Serialize)]
struct TrainReport<'a> {
    banner: String,
    samples: usize,
    loss: LossKind,
    epochs: usize,
    parameters: usize,
    final_epoch: Option<&'a EpochRecord>,
    train_metrics: Metrics,
    checkpoint: &'static str,
}

#[derive(Serialize)]
struct EvalReport {
    banner: String,
    samples: usize,
    metrics: Metrics,
}

#[derive(Serialize)]
struct CvFile<'a> {
    banner: String,
    samples: usize,
    #[serde(flatten)]
    report: &'a CvReport,
}

#[derive(Serialize)]
struct CompareFile<'a> {
    banner: String,
    samples: usize,
    #[serde(flatten)]
    report: &'a CompareReport,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Cv(a) => cmd_cv(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Loads the config and prepares the output directory with its echo.
fn prepare(args: &RunArgs) -> Result<(RunConfig, PathBuf, Dataset), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.out_dir {
        cfg.output_dir = dir.clone();
    }
    cfg.train.validate()?;
    cfg.discretization().validate()?;
    let dataset = cfg.load_dataset()?;
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join(CONFIG_ECHO), cfg.to_toml())?;
    Ok((cfg, out, dataset))
}

fn fmt_pc(pc: Option<f64>) -> String {
    pc.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

pub fn cmd_synth(a: &SynthArgs) -> Result<(), CliError> {
    let data = synth_generate(a.n as usize, &a.shape, a.noise_sd, a.seed)?;
    write_dataset(&a.out, &data)?;
    let (lo, hi) = data
        .scores()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let disc = DiscretizationSpec::ceil_half(5).fit(&[])?;
    let mut hist = [0usize; 5];
    for &s in data.scores() {
        hist[disc.class_of(s)?] += 1;
    }
    println!("wrote {} samples of shape {:?} to {}", data.len(), data.sample_shape(), a.out.display());
    println!("score range [{lo:.4}, {hi:.4}]");
    println!("ceil_half classes 1..5: {hist:?}");
    Ok(())
}

pub fn cmd_train(a: &RunArgs) -> Result<(), CliError> {
    let (cfg, out, data) = prepare(a)?;
    let backbone = cfg.backbone(data.sample_shape());
    let outcome = train_model(&data, &cfg.discretization(), &backbone, &cfg.train)?;

    let mut history = fs::File::create(out.join(HISTORY_FILE))?;
    for rec in &outcome.history {
        writeln!(history, "{}", serde_json::to_string(rec)?)?;
    }
    write_checkpoint(&out.join(CHECKPOINT_FILE), &outcome.model)?;
    let train_metrics = evaluate(&outcome.model, &data)?;
    write_json(
        &out.join(TRAIN_REPORT),
        &TrainReport {
            banner: banner(data.provenance()),
            samples: data.len(),
            loss: cfg.train.loss,
            epochs: cfg.train.epochs,
            parameters: outcome.model.params.count(),
            final_epoch: outcome.history.last(),
            train_metrics,
            checkpoint: CHECKPOINT_FILE,
        },
    )?;
    println!("{}", banner(data.provenance()));
    if let Some(last) = outcome.history.last() {
        println!("epoch {} loss {:.6}", last.epoch, last.loss);
    }
    println!(
        "train MAE {:.6} RMSE {:.6} PC {}",
        train_metrics.mae,
        train_metrics.rmse,
        fmt_pc(train_metrics.pc)
    );
    println!("outputs in {}", out.display());
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<(), CliError> {
    let (_, out, data) = prepare(&a.run)?;
    let model = read_checkpoint(&a.checkpoint)?;
    let metrics = evaluate(&model, &data)?;
    write_json(
        &out.join(EVAL_REPORT),
        &EvalReport {
            banner: banner(data.provenance()),
            samples: data.len(),
            metrics,
        },
    )?;
    println!("{}", banner(data.provenance()));
    println!("MAE {:.6} RMSE {:.6} PC {}", metrics.mae, metrics.rmse, fmt_pc(metrics.pc));
    Ok(())
}

pub fn cmd_cv(a: &CvArgs) -> Result<(), CliError> {
    let (cfg, out, data) = prepare(&a.run)?;
    let backbone = cfg.backbone(data.sample_shape());
    let report = cross_validate(&data, a.k as usize, &cfg.discretization(), &backbone, &cfg.train)?;
    write_json(
        &out.join(CV_REPORT),
        &CvFile {
            banner: banner(data.provenance()),
            samples: data.len(),
            report: &report,
        },
    )?;
    println!("{}", banner(data.provenance()));
    println!("{:>4}  {:>8}  {:>8}  {:>9}", "fold", "MAE", "RMSE", "PC");
    for f in &report.per_fold {
        println!(
            "{:>4}  {:>8.4}  {:>8.4}  {:>9}",
            f.fold + 1,
            f.metrics.mae,
            f.metrics.rmse,
            fmt_pc(f.metrics.pc)
        );
    }
    println!(
        "{:>4}  {:>8.4}  {:>8.4}  {:>9}",
        "mean",
        report.mean.mae,
        report.mean.rmse,
        fmt_pc(report.mean.pc)
    );
    Ok(())
}

/// Loss / MAE / RMSE / PC table.
pub fn compare_table(report: &CompareReport) -> String {
    let width = report.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(13);
    let mut s = format!("{:<width$}  {:>8}  {:>8}  {:>9}\n", "Loss Function", "MAE", "RMSE", "PC");
    for r in &report.rows {
        s += &format!(
            "{:<width$}  {:>8.4}  {:>8.4}  {:>9}\n",
            r.label,
            r.test.mae,
            r.test.rmse,
            fmt_pc(r.test.pc)
        );
    }
    s
}

pub fn cmd_compare(a: &CompareArgs) -> Result<(), CliError> {
    let (cfg, out, data) = prepare(&a.run)?;
    let backbone = cfg.backbone(data.sample_shape());
    let report = compare_losses(&data, &a.losses, &cfg.discretization(), &backbone, &cfg.train)?;
    let table = format!("{}\n{}", banner(data.provenance()), compare_table(&report));
    fs::write(out.join(COMPARE_TABLE), &table)?;
    write_json(
        &out.join(COMPARE_REPORT),
        &CompareFile {
            banner: banner(data.provenance()),
            samples: data.len(),
            report: &report,
        },
    )?;
    print!("{table}");
    Ok(())
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let cfg = SuiteConfig {
        seed: a.seed,
        points: a.points,
        tolerance: a.tol,
        ..Default::default()
    };
    let report: SuiteReport = run_suite(&cfg)?;
    for c in &report.components {
        println!(
            "{:<34} {:>4} points  max rel error {:.3e}  {}",
            c.name,
            c.points,
            c.max_rel_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    match report.components.iter().find(|c| !c.passed) {
        None => {
            println!("all {} components within {:.1e}", report.components.len(), a.tol);
            Ok(())
        }
        Some(bad) => Err(CliError::GradcheckFailed {
            component: bad.name.clone(),
            error: bad.max_rel_error,
            tolerance: a.tol,
        }),
    }
}
