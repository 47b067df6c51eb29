use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsmstcn::config::{ExperimentConfig, Overrides};
use dsmstcn::dataset::{load_dataset, synthesize};
use dsmstcn::error::{Error, Result, EXIT_INVALID};
use dsmstcn::formats::manifest::Manifest;
use dsmstcn::formats::{checkpoint, report};
use dsmstcn::runlog::RunLog;
use dsmstcn::runner::{self, EvaluationSummary, ProtocolSummary};
use dsmstcn_core::data::{Fold, FoldProtocol};
use dsmstcn_core::harness::{evaluate_fold, train_fold, Dataset};
use dsmstcn_core::metrics::MetricsReport;
use dsmstcn_core::model::ModelMode;
use dsmstcn_core::selfcheck::{run_selfcheck, SelfcheckOptions};

/// Dual-scale multi-stage TCN for exercise and repetition labeling of IMU
/// recordings.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Echo run-log events to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        /// Replace an existing dataset in the output directory.
        #[arg(long)]
        force: bool,
    },
    /// Train one model and write its checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exp: Experiment,
        /// Train on this fold's training set instead of every recording.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Evaluate a checkpoint on full recordings.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exp: Experiment,
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate this fold's test recordings instead of every recording.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Train and evaluate every fold of a protocol.
    Protocol {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exp: Experiment,
        /// Maximum folds running at once.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the built-in correctness checks.
    Selfcheck {
        /// Also write the results to `<out>/selfcheck.json`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true)]
        inject_gradient_fault: bool,
    },
    /// Sum the counts of several metrics reports.
    Aggregate {
        /// Directory receiving the summed report.tsv.
        #[arg(long)]
        out: PathBuf,
        /// report.tsv files to sum.
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Master seed for generation and training.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Experiment {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    /// dual_scale | ablation_no_micro | dual_scale_two_micro
    #[arg(long, value_parser = parse_mode)]
    mode: Option<ModelMode>,
    /// Weight of the first-stage cross-entropy.
    #[arg(long)]
    eta: Option<f64>,
    /// Fraction of micro segments that keep their labels during training.
    #[arg(long)]
    micro_budget: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// lab_losocv | home_generalization
    #[arg(long, value_parser = parse_protocol)]
    protocol: Option<FoldProtocol>,
}

fn parse_mode(s: &str) -> std::result::Result<ModelMode, String> {
    s.parse().map_err(|e: dsmstcn_core::Error| e.to_string())
}

fn parse_protocol(s: &str) -> std::result::Result<FoldProtocol, String> {
    match s {
        "lab_losocv" => Ok(FoldProtocol::LabLosocv),
        "home_generalization" => Ok(FoldProtocol::HomeGeneralization),
        other => Err(format!("unknown protocol {other:?} (lab_losocv | home_generalization)")),
    }
}

fn resolve(common: &Common, exp: Option<&Experiment>) -> Result<ExperimentConfig> {
    let o = Overrides {
        seed: common.seed,
        mode: exp.and_then(|e| e.mode),
        eta: exp.and_then(|e| e.eta),
        micro_budget: exp.and_then(|e| e.micro_budget),
        epochs: exp.and_then(|e| e.epochs),
        protocol: exp.and_then(|e| e.protocol),
    };
    ExperimentConfig::load(common.config.as_deref())?.resolve(&o)
}

/// Manifest for a run over an existing dataset, written before anything else.
fn run_manifest(command: &str, out: &Path, cfg: &ExperimentConfig, data: &Manifest, folds: &[Fold]) -> Result<Manifest> {
    let mut seeds = BTreeMap::from([("train".to_string(), cfg.train.seed), ("dataset".to_string(), data.seeds.get("synth").copied().unwrap_or(0))]);
    for f in folds {
        seeds.insert(format!("fold{:02}/{}", f.index, f.test_subject), cfg.train.fold_seed(&f.test_subject));
    }
    let mut m = Manifest::new(command, &(cfg, &data.config_hash), seeds)?;
    m.config = serde_json::json!({ "experiment": m.config[0].clone(), "dataset_config_hash": data.config_hash });
    m.write(out)?;
    Ok(m)
}

fn select_fold(ds: &Dataset, protocol: FoldProtocol, fold: Option<usize>) -> Result<Fold> {
    match fold {
        Some(k) => ds.folds(protocol)?.folds.into_iter().nth(k).ok_or_else(|| {
            Error::Config(format!("fold {k} does not exist for {} recordings", ds.recordings().len()))
        }),
        None => {
            let all: Vec<String> = ds.recordings().iter().map(|r| r.id().to_string()).collect();
            Ok(Fold { index: 0, test_subject: "all".into(), test_recordings: all.clone(), train_recordings: all })
        }
    }
}

fn finish(out: &Path, mut manifest: Manifest, paths: Vec<String>) -> Result<()> {
    manifest.record_files(out, paths)?;
    manifest.complete = true;
    manifest.write(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { common, force } => {
            let cfg = resolve(&common, None)?;
            let m = synthesize(&common.out, &cfg.synth, force)?;
            println!("{}", common.out.join("manifest.json").display());
            eprintln!("{} recordings from {} subjects", m.recordings.len(), cfg.synth.subject_ids().len());
        }
        Command::Train { common, exp, fold } => {
            let cfg = resolve(&common, Some(&exp))?;
            let (ds, data) = load_dataset(&exp.data)?;
            let mut f = select_fold(&ds, cfg.protocol, fold)?;
            let manifest = run_manifest("train", &common.out, &cfg, &data, std::slice::from_ref(&f))?;
            if fold.is_none() {
                f.test_recordings.clear();
            }
            let mut log = RunLog::open(&common.out.join("run.log"), cli.verbose)?;
            let (model, _) = train_fold(&f, &ds, &cfg.train, &mut log)?;
            log.finish()?;
            checkpoint::save(&common.out.join("checkpoint.bin"), &model)?;
            finish(&common.out, manifest, vec!["checkpoint.bin".into()])?;
            println!("{}", common.out.join("checkpoint.bin").display());
        }
        Command::Eval { common, exp, checkpoint: ckpt, fold } => {
            let cfg = resolve(&common, Some(&exp))?;
            let model = checkpoint::load(&ckpt, Some(&cfg.train.model))?;
            let (ds, data) = load_dataset(&exp.data)?;
            let f = select_fold(&ds, cfg.protocol, fold)?;
            let manifest = run_manifest("eval", &common.out, &cfg, &data, std::slice::from_ref(&f))?;
            let e = evaluate_fold(&model, &f, &ds)?;
            let mut paths = runner::write_evaluation(&common.out, &e)?;
            runner::write_json(&common.out.join("summary.json"), &EvaluationSummary::of(&e))?;
            paths.push("summary.json".into());
            finish(&common.out, manifest, paths)?;
            print_report(&e.report);
        }
        Command::Protocol { common, exp, jobs } => {
            let cfg = resolve(&common, Some(&exp))?;
            if jobs == 0 {
                return Err(Error::Config("--jobs must be at least 1".into()));
            }
            let (ds, data) = load_dataset(&exp.data)?;
            let plan = ds.folds(cfg.protocol)?;
            let manifest = run_manifest("protocol", &common.out, &cfg, &data, &plan.folds)?;
            let mut log = RunLog::open(&common.out.join("run.log"), cli.verbose)?;
            log.event("protocol_start", &[("folds", plan.folds.len().to_string()), ("jobs", jobs.to_string())]);
            let result = runner::run_protocol(&ds, cfg.protocol, &cfg.train, jobs, &common.out, cli.verbose);
            match &result {
                Ok(r) => log.event("protocol_done", &[("segmental_f1", r.aggregate.report.mean_segmental_f1().to_string())]),
                Err(e) => log.event("protocol_failed", &[("error", format!("{e:?}"))]),
            }
            log.finish()?;
            let result = result?;
            let paths = runner::write_protocol(&common.out, &result)?;
            finish(&common.out, manifest, paths)?;
            let s = ProtocolSummary::of(&result);
            for f in &s.folds {
                println!("fold {:02} {:<8} segmental F1 {:.4}", f.index, f.test_subject, f.evaluation.mean_segmental_f1);
            }
            print_report(&result.aggregate.report);
        }
        Command::Selfcheck { out, inject_gradient_fault } => {
            let results = run_selfcheck(SelfcheckOptions { corrupt_gradient: inject_gradient_fault });
            for r in &results {
                println!("{} {:<16} {}", if r.passed { "PASS" } else { "FAIL" }, r.family, r.detail);
            }
            if let Some(dir) = out {
                runner::write_json(&dir.join("selfcheck.json"), &results)?;
            }
            let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.family.to_string()).collect();
            if !failed.is_empty() {
                return Err(Error::SelfcheckFailed(failed));
            }
        }
        Command::Aggregate { out, reports } => {
            let parsed = reports.iter().map(|p| report::read_report(p)).collect::<Result<Vec<_>>>()?;
            let total = MetricsReport::aggregate(&parsed)?;
            report::write_report(&out.join("report.tsv"), &total)?;
            print_report(&total);
        }
    }
    Ok(())
}

fn print_report(r: &MetricsReport) {
    println!("{:<22} {:>9} {:>9}", "class", "sample F1", "IoU F1");
    for c in &r.classes {
        println!("{:<22} {:>9.4} {:>9.4}", c.name, c.samplewise.f1(), c.segmental.f1());
    }
    println!("{:<22} {:>9.4} {:>9.4}", "mean", r.mean_samplewise_f1(), r.mean_segmental_f1());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
