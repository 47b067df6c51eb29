//! Fold execution on worker threads and the artifacts each run leaves behind.
//!
//! Layout of a protocol output directory:
//!
//! ```text
//! manifest.json
//! run.log
//! report.tsv                 final-stage macro metrics, counts summed over folds
//! stages/stage<s>.tsv        the same for every stage
//! summary.json
//! folds/fold<k>/checkpoint.bin, report.tsv, stages/, run.log
//! ```

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use dsmstcn_core::data::{Fold, FoldProtocol, Scale};
use dsmstcn_core::harness::{aggregate_folds, run_fold, ConfuserTally, Dataset, Evaluation, FoldResult, ProtocolResult, TrainConfig};

use crate::error::{Error, Result};
use crate::formats::{checkpoint, report, write_file};
use crate::runlog::RunLog;

pub fn fold_dir(out: &Path, index: usize) -> std::path::PathBuf {
    out.join("folds").join(format!("fold{index:02}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageSummary {
    pub stage: usize,
    pub scale: Scale,
    pub segment_count: usize,
    pub mean_segmental_f1: f64,
    pub mean_samplewise_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationSummary {
    pub mean_segmental_f1: f64,
    pub mean_samplewise_f1: f64,
    pub confusers: ConfuserTally,
    pub stages: Vec<StageSummary>,
}

impl EvaluationSummary {
    pub fn of(e: &Evaluation) -> Self {
        EvaluationSummary {
            mean_segmental_f1: e.report.mean_segmental_f1(),
            mean_samplewise_f1: e.report.mean_samplewise_f1(),
            confusers: e.confusers,
            stages: e
                .stages
                .iter()
                .map(|s| StageSummary {
                    stage: s.stage,
                    scale: s.scale,
                    segment_count: s.segment_count,
                    mean_segmental_f1: s.report.mean_segmental_f1(),
                    mean_samplewise_f1: s.report.mean_samplewise_f1(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSummary {
    pub index: usize,
    pub test_subject: String,
    pub final_epoch_loss: Option<f64>,
    pub evaluation: EvaluationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolSummary {
    pub protocol: FoldProtocol,
    pub folds: Vec<FoldSummary>,
    pub aggregate: EvaluationSummary,
}

impl ProtocolSummary {
    pub fn of(r: &ProtocolResult) -> Self {
        ProtocolSummary {
            protocol: r.protocol,
            folds: r
                .folds
                .iter()
                .map(|f| FoldSummary {
                    index: f.fold.index,
                    test_subject: f.fold.test_subject.clone(),
                    final_epoch_loss: f.log.epoch_losses.last().copied(),
                    evaluation: EvaluationSummary::of(&f.evaluation),
                })
                .collect(),
            aggregate: EvaluationSummary::of(&r.aggregate),
        }
    }
}

/// Writes `report.tsv` and `stages/stage<s>.tsv` under `dir`; returns the
/// relative paths written.
pub fn write_evaluation(dir: &Path, e: &Evaluation) -> Result<Vec<String>> {
    let mut paths = vec!["report.tsv".to_string()];
    report::write_report(&dir.join("report.tsv"), &e.report)?;
    for s in &e.stages {
        let rel = format!("stages/stage{}.tsv", s.stage);
        report::write_report(&dir.join(&rel), &s.report)?;
        paths.push(rel);
    }
    Ok(paths)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn run_one(fold: &Fold, dataset: &Dataset, config: &TrainConfig, out: &Path, verbose: bool) -> Result<FoldResult> {
    let dir = fold_dir(out, fold.index);
    let log_path = dir.join("run.log");
    if log_path.exists() {
        std::fs::remove_file(&log_path).map_err(Error::io(&log_path))?;
    }
    let mut log = RunLog::open(&log_path, verbose)?;
    log.event("fold_start", &[("fold", fold.index.to_string()), ("test_subject", fold.test_subject.clone())]);
    let result = run_fold(fold, dataset, config, &mut log);
    match &result {
        Ok(r) => {
            checkpoint::save(&dir.join("checkpoint.bin"), &r.model)?;
            write_evaluation(&dir, &r.evaluation)?;
            log.event(
                "fold_done",
                &[
                    ("fold", fold.index.to_string()),
                    ("segmental_f1", r.evaluation.report.mean_segmental_f1().to_string()),
                    ("samplewise_f1", r.evaluation.report.mean_samplewise_f1().to_string()),
                ],
            );
        }
        Err(e) => log.event("fold_failed", &[("fold", fold.index.to_string()), ("error", format!("{e:?}"))]),
    }
    log.finish()?;
    Ok(result?)
}

/// Runs every fold with at most `jobs` worker threads and writes all
/// artifacts under `out`. Results do not depend on `jobs`. When a fold
/// fails, the remaining folds still run and keep their outputs; the error of
/// the lowest failing fold is returned.
pub fn run_protocol(
    dataset: &Dataset,
    protocol: FoldProtocol,
    config: &TrainConfig,
    jobs: usize,
    out: &Path,
    verbose: bool,
) -> Result<ProtocolResult> {
    config.validate()?;
    let plan = dataset.folds(protocol)?;
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<FoldResult>)>> = Mutex::new(Vec::new());
    let workers = jobs.clamp(1, plan.folds.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(fold) = plan.folds.get(k) else { break };
                let r = run_one(fold, dataset, config, out, verbose);
                results.lock().expect("no worker panics while holding the lock").push((k, r));
            });
        }
    });
    let mut results = results.into_inner().expect("workers joined");
    results.sort_by_key(|(k, _)| *k);
    let mut folds = Vec::with_capacity(results.len());
    for (_, r) in results {
        folds.push(r?);
    }
    Ok(aggregate_folds(protocol, folds)?)
}

/// Writes the aggregate artifacts of a finished protocol; returns the
/// relative paths written.
pub fn write_protocol(out: &Path, result: &ProtocolResult) -> Result<Vec<String>> {
    let mut paths = write_evaluation(out, &result.aggregate)?;
    write_json(&out.join("summary.json"), &ProtocolSummary::of(result))?;
    paths.push("summary.json".into());
    for f in &result.folds {
        let rel = format!("folds/fold{:02}", f.fold.index);
        paths.push(format!("{rel}/checkpoint.bin"));
        paths.push(format!("{rel}/report.tsv"));
        for s in &f.evaluation.stages {
            paths.push(format!("{rel}/stages/stage{}.tsv", s.stage));
        }
    }
    Ok(paths)
}
