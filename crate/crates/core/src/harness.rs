//! Training loop, per-fold orchestration and full-sequence evaluation.
//!
//! One fold is one sequential job. Every random stream a fold uses is derived
//! from the master seed and the test subject, so folds can run in any order or
//! concurrently and still produce identical results.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{
    build_folds, slice_recording, Fold, FoldPlan, FoldProtocol, Normalizer, Recording, RecordingInfo, Scale, Slice,
};
use crate::error::{Error, Result};
use crate::loss::{total_loss_on_tape, LossConfig, LossTerm, Targets};
use crate::metrics::{evaluate_tracks, extract_segments, MetricsReport, Segment, IOU_THRESHOLD};
use crate::model::{dsmstcn_forward, forward_on_tape, predict_labels, ModelConfig, ModelParameters};
use crate::numerics::{adam_step_filtered, AdamConfig, AdamState, Gradients, Tape};
use crate::rng::{derive_seed, fnv1a, rng_for};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of training micro segments that keep their micro label.
    pub micro_budget: f64,
    /// Emit a step record every this many optimizer steps (0 = never).
    pub log_every: usize,
    /// 1-based stages whose parameters are updated; `None` trains all.
    pub trainable_stages: Option<Vec<usize>>,
    /// Cosine-anneal the learning rate per epoch down to this fraction of
    /// `adam.lr`; `None` keeps it constant.
    pub anneal_to: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            batch_size: 32,
            epochs: 50,
            seed: 0,
            micro_budget: 1.0,
            log_every: 1,
            trainable_stages: None,
            anneal_to: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.micro_budget) {
            return Err(Error::InvalidArgument(format!("micro_budget {} is outside [0, 1]", self.micro_budget)));
        }
        if !(self.adam.lr > 0.0 && (0.0..1.0).contains(&self.adam.beta1) && (0.0..1.0).contains(&self.adam.beta2)) {
            return Err(Error::InvalidArgument("adam needs lr > 0 and betas in [0, 1)".into()));
        }
        if let Some(f) = self.anneal_to {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidArgument(format!("anneal_to {f} is outside [0, 1]")));
            }
        }
        if let Some(stages) = &self.trainable_stages {
            let n = self.model.mode.stage_scales().len();
            if let Some(&bad) = stages.iter().find(|&&s| s == 0 || s > n) {
                return Err(Error::InvalidArgument(format!("trainable stage {bad} outside 1..={n}")));
            }
        }
        Ok(())
    }

    /// Learning rate used throughout `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        match self.anneal_to {
            Some(f) if self.epochs > 1 => {
                let progress = epoch as f64 / (self.epochs - 1) as f64;
                self.adam.lr * (f + (1.0 - f) * 0.5 * (1.0 + libm::cos(core::f64::consts::PI * progress)))
            }
            _ => self.adam.lr,
        }
    }

    /// Seed of all random streams of the fold holding out `test_subject`.
    pub fn fold_seed(&self, test_subject: &str) -> u64 {
        derive_seed(self.seed, &format!("fold/{test_subject}"))
    }
}

/// Recordings plus the hidden confuser positions of synthetic data.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    recordings: Vec<Recording>,
    confusers: BTreeMap<String, Vec<Segment>>,
}

impl Dataset {
    pub fn new(recordings: Vec<Recording>) -> Result<Self> {
        let mut ds = Dataset { recordings: Vec::new(), confusers: BTreeMap::new() };
        for r in recordings {
            ds.push(r, Vec::new())?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, recording: Recording, confusers: Vec<Segment>) -> Result<()> {
        if self.get(recording.id()).is_some() {
            return Err(Error::Duplicate { kind: "recording", id: recording.id().into() });
        }
        if let Some(c) = confusers.iter().find(|c| c.end > recording.len() || c.start >= c.end) {
            return Err(Error::InvalidArgument(format!(
                "confuser [{}, {}) does not fit recording {}",
                c.start,
                c.end,
                recording.id()
            )));
        }
        if !confusers.is_empty() {
            self.confusers.insert(recording.id().into(), confusers);
        }
        self.recordings.push(recording);
        Ok(())
    }

    pub fn recordings(&self) -> &[Recording] {
        &self.recordings
    }

    pub fn get(&self, id: &str) -> Option<&Recording> {
        self.recordings.iter().find(|r| r.id() == id)
    }

    fn require(&self, id: &str) -> Result<&Recording> {
        self.get(id).ok_or_else(|| Error::InvalidArgument(format!("fold references unknown recording {id:?}")))
    }

    pub fn confusers(&self, id: &str) -> &[Segment] {
        self.confusers.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn infos(&self) -> Vec<RecordingInfo> {
        self.recordings.iter().map(RecordingInfo::from).collect()
    }

    pub fn folds(&self, protocol: FoldProtocol) -> Result<FoldPlan> {
        build_folds(&self.infos(), protocol)
    }
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    /// FNV-1a over the ids and starts of the batch's slices, in batch order.
    pub batch_hash: u64,
    /// Batch-mean value of every loss term.
    pub terms: Vec<LossTerm>,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub fold: usize,
    pub test_subject: String,
    pub seed: u64,
    /// Every step when `log_every == 1`, otherwise the sampled subset.
    pub steps: Vec<StepRecord>,
    /// Hash of every batch, logged or not.
    pub batch_hashes: Vec<u64>,
    /// Mean total loss over the slices of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Receives progress while a fold trains. The default methods do nothing.
pub trait TrainObserver {
    fn on_step(&mut self, _fold: usize, _record: &StepRecord) {}
    fn on_epoch(&mut self, _fold: usize, _epoch: usize, _mean_loss: f64) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: ModelParameters,
    pub normalizer: Normalizer,
}

impl TrainedModel {
    /// Forward pass over a full recording after normalization.
    pub fn predict(&self, recording: &Recording) -> Result<crate::model::ModelOutput> {
        dsmstcn_forward(&self.normalizer.apply(recording.imu())?, &self.params)
    }
}

struct TrainSlice {
    recording: usize,
    slice: Slice,
}

/// Per-sample keep mask for micro supervision of each training recording.
fn micro_budget_masks(recs: &[&Recording], budget: f64, seed: u64) -> Vec<Vec<bool>> {
    let mut keep: Vec<Vec<bool>> = recs.iter().map(|r| vec![true; r.len()]).collect();
    if budget >= 1.0 {
        return keep;
    }
    let mut all: Vec<(usize, Segment)> = Vec::new();
    for (k, r) in recs.iter().enumerate() {
        all.extend(extract_segments(r.micro_track()).into_iter().map(|s| (k, s)));
    }
    all.shuffle(&mut rng_for(seed, "micro-budget"));
    let kept = libm::ceil(budget * all.len() as f64) as usize;
    for (k, s) in &all[kept.min(all.len())..] {
        keep[*k][s.start..s.end].fill(false);
    }
    keep
}

fn batch_hash(ids: &[&str], batch: &[usize], slices: &[TrainSlice]) -> u64 {
    let mut bytes = Vec::new();
    for &i in batch {
        bytes.extend_from_slice(ids[slices[i].recording].as_bytes());
        bytes.push(0);
        bytes.extend_from_slice(&(slices[i].slice.start as u64).to_le_bytes());
    }
    fnv1a(&bytes)
}

/// Trains a fresh model on the fold's training recordings.
pub fn train_fold(
    fold: &Fold,
    dataset: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<(TrainedModel, RunLog)> {
    config.validate()?;
    if fold.train_recordings.is_empty() {
        return Err(Error::InvalidArgument(format!("fold {} has an empty training set", fold.index)));
    }
    if let Some(t) = fold.train_recordings.iter().find(|t| fold.test_recordings.contains(t)) {
        return Err(Error::InvalidArgument(format!("recording {t} is both training and test data")));
    }
    let recs = fold.train_recordings.iter().map(|id| dataset.require(id)).collect::<Result<Vec<_>>>()?;
    let ids: Vec<&str> = recs.iter().map(|r| r.id()).collect();
    let seed = config.fold_seed(&fold.test_subject);

    let keep = micro_budget_masks(&recs, config.micro_budget, seed);
    let mut slices = Vec::new();
    for (k, r) in recs.iter().enumerate() {
        let mut set = slice_recording(r);
        set.restrict_micro(&keep[k])?;
        slices.extend(set.slices.into_iter().map(|slice| TrainSlice { recording: k, slice }));
    }
    let normalizer = Normalizer::fit(slices.iter().map(|s| (&s.slice.imu, s.slice.mask.as_slice())))?;
    for s in &mut slices {
        s.slice.imu = normalizer.apply_masked(&s.slice.imu, &s.slice.mask)?;
    }

    let mut params = ModelParameters::init(&config.model, seed)?;
    let mut adam = AdamState::new(params.store());
    let trainable = |name: &str| match &config.trainable_stages {
        None => true,
        Some(stages) => stages.iter().any(|s| name.starts_with(&format!("stage{s}/"))),
    };

    let mut log = RunLog {
        fold: fold.index,
        test_subject: fold.test_subject.clone(),
        seed,
        steps: Vec::new(),
        batch_hashes: Vec::new(),
        epoch_losses: Vec::new(),
    };
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..slices.len()).collect();
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut rng_for(seed, &format!("epoch/{epoch}")));
        let hyper = AdamConfig { lr: config.learning_rate(epoch), ..config.adam };
        let mut epoch_total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::zeros_like(params.store());
            let mut terms: Vec<LossTerm> = Vec::new();
            let mut total = 0.0;
            for &i in batch {
                let s = &slices[i].slice;
                let mut tape = Tape::new(params.store());
                let x = tape.input(s.imu.clone());
                let stages = forward_on_tape(&mut tape, &params, x)?;
                let targets = Targets { micro: &s.micro, macro_: &s.macro_, mask: &s.mask, micro_mask: &s.micro_mask };
                let (loss, breakdown) = total_loss_on_tape(&mut tape, &stages, &targets, &config.loss)?;
                grads.add_assign(&tape.backward(loss)?)?;
                total += breakdown.total;
                if terms.is_empty() {
                    terms = breakdown.terms;
                } else {
                    for (a, b) in terms.iter_mut().zip(&breakdown.terms) {
                        a.value += b.value;
                    }
                }
            }
            let n = batch.len() as f64;
            grads.scale(1.0 / n);
            adam_step_filtered(params.store_mut(), &grads, &mut adam, &hyper, trainable)?;
            for t in &mut terms {
                t.value /= n;
            }
            epoch_total += total;
            let record = StepRecord { epoch, step, batch_hash: batch_hash(&ids, batch, &slices), terms, total: total / n };
            log.batch_hashes.push(record.batch_hash);
            if config.log_every > 0 && step % config.log_every == 0 {
                observer.on_step(fold.index, &record);
                log.steps.push(record);
            }
            step += 1;
        }
        let mean = epoch_total / slices.len() as f64;
        observer.on_epoch(fold.index, epoch, mean);
        log.epoch_losses.push(mean);
    }
    Ok((TrainedModel { params, normalizer }, log))
}

/// Decoding quality of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    /// 1-based.
    pub stage: usize,
    pub scale: Scale,
    pub report: MetricsReport,
    /// Non-"others" segments in the decoded tracks.
    pub segment_count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfuserTally {
    pub total: usize,
    /// Confusers whose span decodes to "others" at the macro scale on more
    /// than half of its samples.
    pub rejected: usize,
}

impl ConfuserTally {
    pub fn add(&mut self, other: &ConfuserTally) {
        self.total += other.total;
        self.rejected += other.rejected;
    }

    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.rejected as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Final-stage macro decoding.
    pub report: MetricsReport,
    pub stages: Vec<StageReport>,
    pub confusers: ConfuserTally,
}

impl Evaluation {
    pub fn merge(&mut self, other: &Evaluation) -> Result<()> {
        self.report.merge(&other.report)?;
        if self.stages.len() != other.stages.len() {
            return Err(Error::InvalidArgument("evaluations have different stage counts".into()));
        }
        for (a, b) in self.stages.iter_mut().zip(&other.stages) {
            a.report.merge(&b.report)?;
            a.segment_count += b.segment_count;
        }
        self.confusers.add(&other.confusers);
        Ok(())
    }
}

/// Evaluates one full recording; no slicing.
pub fn evaluate_recording(model: &TrainedModel, recording: &Recording, confusers: &[Segment]) -> Result<Evaluation> {
    let output = model.predict(recording)?;
    let mut stages = Vec::new();
    let mut final_macro = None;
    for (s, st) in output.stages.iter().enumerate() {
        let pred = predict_labels(&st.probs);
        let report = evaluate_tracks(recording.track(st.scale), &pred, st.scale.catalog(), IOU_THRESHOLD)?;
        stages.push(StageReport { stage: s + 1, scale: st.scale, report, segment_count: extract_segments(&pred).len() });
        if st.scale == Scale::Macro {
            final_macro = Some(pred);
        }
    }
    let pred = final_macro.ok_or_else(|| Error::InvalidArgument("model has no macro stage".into()))?;
    let mut tally = ConfuserTally::default();
    for c in confusers {
        let others = pred[c.start..c.end].iter().filter(|&&k| k == 0).count();
        tally.total += 1;
        if 2 * others > c.len() {
            tally.rejected += 1;
        }
    }
    let report = stages.iter().rev().find(|s| s.scale == Scale::Macro).map(|s| s.report.clone()).expect("macro stage");
    Ok(Evaluation { report, stages, confusers: tally })
}

/// Scores the fold's test recordings, summing counts across recordings.
pub fn evaluate_fold(model: &TrainedModel, fold: &Fold, dataset: &Dataset) -> Result<Evaluation> {
    let mut acc: Option<Evaluation> = None;
    for id in &fold.test_recordings {
        let rec = dataset.require(id)?;
        let e = evaluate_recording(model, rec, dataset.confusers(id))?;
        match &mut acc {
            None => acc = Some(e),
            Some(a) => a.merge(&e)?,
        }
    }
    acc.ok_or_else(|| Error::InvalidArgument(format!("fold {} has no test recordings", fold.index)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub fold: Fold,
    pub model: TrainedModel,
    pub log: RunLog,
    pub evaluation: Evaluation,
}

/// Trains and evaluates one fold. Errors carry the fold index.
pub fn run_fold(fold: &Fold, dataset: &Dataset, config: &TrainConfig, observer: &mut dyn TrainObserver) -> Result<FoldResult> {
    let wrap = |e: Error| match e {
        e @ Error::Fold { .. } => e,
        e => Error::Fold { fold: fold.index, message: e.to_string() },
    };
    let (model, log) = train_fold(fold, dataset, config, observer).map_err(wrap)?;
    let evaluation = evaluate_fold(&model, fold, dataset).map_err(wrap)?;
    Ok(FoldResult { fold: fold.clone(), model, log, evaluation })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolResult {
    pub protocol: FoldProtocol,
    pub folds: Vec<FoldResult>,
    /// Counts summed over folds.
    pub aggregate: Evaluation,
}

/// Sums fold evaluations; the result does not depend on completion order
/// because folds are sorted by index first.
pub fn aggregate_folds(protocol: FoldProtocol, mut folds: Vec<FoldResult>) -> Result<ProtocolResult> {
    folds.sort_by_key(|f| f.fold.index);
    let mut it = folds.iter();
    let mut aggregate =
        it.next().map(|f| f.evaluation.clone()).ok_or_else(|| Error::InvalidArgument("no folds to aggregate".into()))?;
    for f in it {
        aggregate.merge(&f.evaluation)?;
    }
    Ok(ProtocolResult { protocol, folds, aggregate })
}

/// Runs every fold of the protocol sequentially.
pub fn run_protocol(
    dataset: &Dataset,
    protocol: FoldProtocol,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<ProtocolResult> {
    config.validate()?;
    let plan = dataset.folds(protocol)?;
    let folds = plan.folds.iter().map(|f| run_fold(f, dataset, config, observer)).collect::<Result<Vec<_>>>()?;
    aggregate_folds(protocol, folds)
}
