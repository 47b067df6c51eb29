//! End-to-end acceptance suite. Runs every criterion in order, prints one
//! `PASS`/`FAIL` line each and exits non-zero if any criterion failed.
//!
//! The training criteria retrain full cross-validation protocols and take
//! about two and a half hours on a single core.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use dsmstcn::runner::{run_protocol, write_protocol};
use dsmstcn_core::data::{FoldProtocol, Scale};
use dsmstcn_core::harness::{evaluate_fold, train_fold, Dataset, ProtocolResult, TrainConfig};
use dsmstcn_core::model::{ModelConfig, ModelMode};
use dsmstcn_core::numerics::AdamConfig;
use dsmstcn_core::selfcheck::{
    gradient_check, loss_values_check, matcher_sweep, receptive_field_check, GradientCheckConfig, GRADIENT_TOLERANCE,
};
use dsmstcn_core::synthgen::{generate_dataset, ScenarioSpec};

const EXERCISES: std::ops::RangeInclusive<usize> = 1..=4;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: u64) -> bool {
    elapsed <= Duration::from_secs(limit_s)
}

fn dataset(spec: &ScenarioSpec) -> Dataset {
    let mut ds = Dataset::default();
    for g in generate_dataset(spec).expect("valid scenario") {
        ds.push(g.recording, g.confusers).expect("unique ids");
    }
    ds
}

/// Training recipe shared by every protocol criterion.
fn protocol_config(mode: ModelMode, micro_budget: f64) -> TrainConfig {
    TrainConfig {
        model: ModelConfig { mode, num_layers: 9, num_filters: 8 },
        adam: AdamConfig { lr: 2e-3, ..AdamConfig::default() },
        batch_size: 2,
        epochs: 40,
        anneal_to: Some(0.05),
        micro_budget,
        ..TrainConfig::default()
    }
}

fn protocol(ds: &Dataset, config: &TrainConfig) -> ProtocolResult {
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let out = tempfile::tempdir().expect("tempdir");
    run_protocol(ds, FoldProtocol::LabLosocv, config, jobs, out.path(), false).expect("protocol runs")
}

fn class_f1(r: &ProtocolResult, stage: Option<usize>, class_id: usize) -> f64 {
    let report = match stage {
        None => &r.aggregate.report,
        Some(s) => &r.aggregate.stages[s - 1].report,
    };
    report.class(class_id).expect("exercise class").segmental.f1()
}

/// Every subject is tested exactly once, on all of its recordings, and never
/// trained on in its own fold.
fn partition_holds(ds: &Dataset) -> Result<(), String> {
    let plan = ds.folds(FoldProtocol::LabLosocv).map_err(|e| e.to_string())?;
    let subjects: BTreeSet<&str> = ds.recordings().iter().map(|r| r.subject()).collect();
    let tested: BTreeSet<&str> = plan.folds.iter().map(|f| f.test_subject.as_str()).collect();
    if plan.folds.len() != subjects.len() || tested != subjects {
        return Err(format!("{} folds for {} subjects", plan.folds.len(), subjects.len()));
    }
    for f in &plan.folds {
        for r in ds.recordings() {
            let own = r.subject() == f.test_subject;
            let in_test = f.test_recordings.iter().any(|id| id == r.id());
            let in_train = f.train_recordings.iter().any(|id| id == r.id());
            if own != in_test || own == in_train {
                return Err(format!("fold {}: recording {} misplaced", f.index, r.id()));
            }
        }
    }
    Ok(())
}

fn gradient() -> Verdict {
    let start = Instant::now();
    let out = gradient_check(&GradientCheckConfig::default()).expect("gradient check runs");
    let elapsed = start.elapsed();
    verdict(
        out.passed() && within(elapsed, 60),
        format!(
            "max relative error {:.3e} (< {GRADIENT_TOLERANCE:e}) over {} entries, {} kink entries, {:.1?}",
            out.max_relative_error, out.checked, out.kink_entries, elapsed
        ),
    )
}

fn receptive_field() -> Verdict {
    let start = Instant::now();
    let out = receptive_field_check(9, 4, 3000, 5).expect("locality check runs");
    let elapsed = start.elapsed();
    verdict(
        out.passed() && 2 * out.half_window + 1 == 1023 && within(elapsed, 30),
        format!("reach {} within half window {}, {} violations, {:.1?}", out.max_reach, out.half_window, out.violations, elapsed),
    )
}

fn loss_values() -> Verdict {
    let out = loss_values_check().expect("loss check runs");
    verdict(
        out.passed(),
        format!(
            "truncated contribution {} (expected {}), uniform CE {} (expected {})",
            out.truncated_jump, out.expected_jump, out.uniform_ce, out.expected_uniform_ce
        ),
    )
}

fn metrics_oracle() -> Verdict {
    let start = Instant::now();
    let out = matcher_sweep(10_000, 200, 7).expect("sweep runs");
    let elapsed = start.elapsed();
    verdict(
        out.passed() && within(elapsed, 120),
        format!("{} mismatches over {} pairs, fixture failures {:?}, {:.1?}", out.mismatches, out.pairs, out.fixture_failures, elapsed),
    )
}

fn toy_spec() -> ScenarioSpec {
    ScenarioSpec { subjects: 2, recordings_per_subject: 2, ..ScenarioSpec::default() }
}

const OVERFIT_EPOCHS: usize = 120;

fn overfit() -> Verdict {
    let start = Instant::now();
    let ds = dataset(&toy_spec());
    let mut fold = ds.folds(FoldProtocol::LabLosocv).expect("folds").folds[0].clone();
    let all: Vec<String> = ds.recordings().iter().map(|r| r.id().to_string()).collect();
    fold.train_recordings = all.clone();
    fold.test_recordings.clear();
    let config = TrainConfig {
        model: ModelConfig { mode: ModelMode::DualScale, num_layers: 9, num_filters: 8 },
        adam: AdamConfig { lr: 2e-3, ..AdamConfig::default() },
        batch_size: 2,
        epochs: OVERFIT_EPOCHS,
        anneal_to: Some(0.05),
        ..TrainConfig::default()
    };
    let (model, _) = train_fold(&fold, &ds, &config, &mut ()).expect("training runs");
    fold.test_recordings = all;
    let eval = evaluate_fold(&model, &fold, &ds).expect("evaluation runs");
    let f1: Vec<f64> = EXERCISES.map(|c| eval.report.class(c).expect("class").samplewise.f1()).collect();
    let elapsed = start.elapsed();
    verdict(
        f1.iter().all(|&v| v >= 0.99) && within(elapsed, 600),
        format!("training sample-wise F1 per class {f1:.4?} after {OVERFIT_EPOCHS} epochs on {} recordings, {elapsed:.1?}", ds.recordings().len()),
    )
}

fn ablation(dual: &ProtocolResult, ablated: &ProtocolResult, elapsed: Duration) -> Verdict {
    let (d, a) = (dual.aggregate.report.mean_segmental_f1(), ablated.aggregate.report.mean_segmental_f1());
    let gaps: Vec<f64> = EXERCISES.map(|c| class_f1(dual, None, c) - class_f1(ablated, None, c)).collect();
    let positive = gaps.iter().filter(|&&g| g > 0.0).count();
    verdict(
        d >= a && positive >= 3 && within(elapsed, 2 * 3600),
        format!("dual {d:.4} vs ablation {a:.4}, per-class gaps {gaps:+.4?}, {elapsed:.1?}"),
    )
}

fn refinement(dual: &ProtocolResult) -> Verdict {
    let stages = &dual.aggregate.stages;
    let counts: Vec<usize> = (2..=4).map(|s| stages[s - 1].segment_count).collect();
    let ordered = counts[2] <= counts[1] && counts[1] <= counts[0];
    let mut worst = f64::INFINITY;
    for s in 2..4 {
        debug_assert!(stages[s - 1].scale == Scale::Macro && stages[s].scale == Scale::Macro);
        for c in EXERCISES {
            worst = worst.min(class_f1(dual, Some(s + 1), c) - class_f1(dual, Some(s), c));
        }
    }
    let f1: Vec<f64> = (2..=4).map(|s| stages[s - 1].report.mean_segmental_f1()).collect();
    verdict(
        ordered && worst >= -0.02,
        format!("segments stage2..4 {counts:?}, mean IoU-F1 {f1:.4?}, worst per-class step {worst:+.4}"),
    )
}

fn confusers(dual: &ProtocolResult) -> Verdict {
    let t = dual.aggregate.confusers;
    verdict(t.rate() >= 0.9, format!("{} of {} confusers decoded as others ({:.3})", t.rejected, t.total, t.rate()))
}

fn hygiene(datasets: &[&Dataset]) -> Verdict {
    for ds in datasets {
        if let Err(e) = partition_holds(ds) {
            return verdict(false, e);
        }
    }
    let ds = dataset(&ScenarioSpec { subjects: 3, background_s: [10.0, 12.0], confusers_per_background: 1, ..ScenarioSpec::default() });
    if let Err(e) = partition_holds(&ds) {
        return verdict(false, e);
    }
    let config = TrainConfig {
        model: ModelConfig { mode: ModelMode::DualScale, num_layers: 3, num_filters: 4 },
        epochs: 1,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let reports: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| {
            let out = tempfile::tempdir().expect("tempdir");
            let r = run_protocol(&ds, FoldProtocol::LabLosocv, &config, 2, out.path(), false).expect("protocol runs");
            write_protocol(out.path(), &r).expect("artifacts written");
            let read = |name: &str| std::fs::read(out.path().join(name)).expect("artifact exists");
            (read("report.tsv"), read("summary.json"))
        })
        .collect();
    verdict(
        reports[0] == reports[1],
        format!("partitions valid for {} datasets; repeated protocol reports identical", datasets.len() + 1),
    )
}

fn budget_trend(full: &ProtocolResult, mid: &ProtocolResult, low: &ProtocolResult) -> Verdict {
    let f1 = [full, mid, low].map(|r| r.aggregate.report.mean_samplewise_f1());
    verdict(f1[0] >= f1[1] - 0.01 && f1[1] >= f1[2] - 0.01, format!("macro sample-wise F1 at budget 1.0/0.4/0.1: {f1:.4?}"))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, v: Verdict| {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {n}: {}", v.detail);
        failed += usize::from(!v.passed);
    };
    report(1, gradient());
    report(2, receptive_field());
    report(3, loss_values());
    report(4, metrics_oracle());
    report(5, overfit());

    let lab = dataset(&ScenarioSpec::default());
    let start = Instant::now();
    let dual = protocol(&lab, &protocol_config(ModelMode::DualScale, 1.0));
    let ablated = protocol(&lab, &protocol_config(ModelMode::AblationNoMicro, 1.0));
    report(6, ablation(&dual, &ablated, start.elapsed()));
    report(7, refinement(&dual));
    report(8, confusers(&dual));
    report(9, hygiene(&[&lab, &dataset(&toy_spec())]));
    let mid = protocol(&lab, &protocol_config(ModelMode::DualScale, 0.4));
    let low = protocol(&lab, &protocol_config(ModelMode::DualScale, 0.1));
    report(10, budget_trend(&dual, &mid, &low));

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
