//! Built-in correctness checks: gradient vs finite differences, receptive
//! field locality, the segmental matcher against an exhaustive reference, and
//! loss hand values.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Scale;
use crate::error::Result;
use crate::loss::{cross_entropy, total_loss, truncated_mse, LossConfig, Targets};
use crate::metrics::{segmental_counts, Counts, IOU_THRESHOLD};
use crate::model::{classes_for, dsmstcn_forward, forward_on_tape, sstcn_forward, ModelConfig, ModelMode, ModelParameters};
use crate::numerics::{ChannelSequence, ProbabilitySequence, Tape};
use crate::rng::{rng_for, Rng};
use crate::IMU_CHANNELS;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-3;
/// Largest accepted relative error between analytic and numeric gradients.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so entries whose true gradient is
/// numerically zero are judged by absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckConfig {
    pub mode: ModelMode,
    pub num_layers: usize,
    pub num_filters: usize,
    pub len: usize,
    pub seed: u64,
    /// Perturb one analytic gradient entry before comparing (fault injection).
    pub corrupt: bool,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        GradientCheckConfig { mode: ModelMode::DualScale, num_layers: 2, num_filters: 4, len: 32, seed: 1, corrupt: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckOutcome {
    pub checked: usize,
    /// Entries whose `±FD_STEP` evaluations switch some ReLU on or off. The
    /// loss is not differentiable across that interval, so central
    /// differences are not a valid reference there.
    pub kink_entries: usize,
    /// Worst error over entries without a kink in the difference interval.
    pub max_relative_error: f64,
    /// Worst error over all entries, kinks included.
    pub max_relative_error_all: f64,
    /// Parameter name and flat index of the worst smooth entry.
    pub worst: (String, usize),
}

impl GradientCheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADIENT_TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

fn random_track(rng: &mut Rng, len: usize, classes: usize) -> Vec<usize> {
    let mut t = Vec::with_capacity(len);
    while t.len() < len {
        let c = rng.random_range(0..classes);
        let run = rng.random_range(1..=6);
        t.extend(core::iter::repeat_n(c, run.min(len - t.len())));
    }
    t
}

/// Random micro track whose macro counterpart satisfies nesting.
fn random_targets(rng: &mut Rng, len: usize) -> (Vec<usize>, Vec<usize>) {
    let micro = random_track(rng, len, classes_for(Scale::Micro));
    let macro_ = micro.iter().map(|&m| crate::data::ClassCatalog::macro_of_micro(m).unwrap_or(0)).collect();
    (micro, macro_)
}

/// Compares tape gradients of the full objective with central differences
/// over every parameter. The smoothing term is differentiated exactly here
/// (no detached previous sample) because only the true derivative can be
/// checked numerically.
pub fn gradient_check(cfg: &GradientCheckConfig) -> Result<GradientCheckOutcome> {
    let model = ModelConfig { mode: cfg.mode, num_layers: cfg.num_layers, num_filters: cfg.num_filters };
    let mut params = ModelParameters::init(&model, cfg.seed)?;
    let mut rng = rng_for(cfg.seed, "gradient-check");
    let data: Vec<f64> = (0..IMU_CHANNELS * cfg.len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let imu = ChannelSequence::new(IMU_CHANNELS, cfg.len, data)?;
    let (micro, macro_) = random_targets(&mut rng, cfg.len);
    let mask = vec![true; cfg.len];
    let targets = Targets { micro: &micro, macro_: &macro_, mask: &mask, micro_mask: &mask };
    let loss_cfg = LossConfig { detach_previous: false, ..LossConfig::default() };

    let mut grads = {
        let mut tape = Tape::new(params.store());
        let x = tape.input(imu.clone());
        let stages = forward_on_tape(&mut tape, &params, x)?;
        let (loss, _) = crate::loss::total_loss_on_tape(&mut tape, &stages, &targets, &loss_cfg)?;
        tape.backward(loss)?
    };
    if cfg.corrupt {
        let id = params.store().ids().next().expect("model has parameters");
        grads.by_id_mut(id)[0] = grads.by_id(id)[0] * 1.01 + 1e-3;
    }

    let eval = |params: &ModelParameters| -> Result<(f64, Vec<bool>)> {
        let loss = total_loss(&dsmstcn_forward(&imu, params)?, &targets, &loss_cfg)?.total;
        let mut tape = Tape::new(params.store());
        let x = tape.input(imu.clone());
        forward_on_tape(&mut tape, params, x)?;
        Ok((loss, tape.relu_pattern()))
    };
    let (_, pattern) = eval(&params)?;

    let ids: Vec<_> = params.store().ids().collect();
    let mut worst = (String::new(), 0usize);
    let mut max_err = 0.0f64;
    let mut max_all = 0.0f64;
    let mut checked = 0;
    let mut kink_entries = 0;
    for id in ids {
        let name = params.store().get(id).name.clone();
        for k in 0..params.store().data(id).len() {
            let orig = params.store().data(id)[k];
            params.store_mut().data_mut(id)[k] = orig + FD_STEP;
            let (up, up_pattern) = eval(&params)?;
            params.store_mut().data_mut(id)[k] = orig - FD_STEP;
            let (down, down_pattern) = eval(&params)?;
            params.store_mut().data_mut(id)[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let err = relative_error(grads.by_id(id)[k], numeric);
            max_all = max_all.max(err);
            checked += 1;
            if up_pattern != pattern || down_pattern != pattern {
                kink_entries += 1;
                continue;
            }
            if err > max_err || worst.0.is_empty() {
                max_err = err;
                worst = (name.clone(), k);
            }
        }
    }
    Ok(GradientCheckOutcome { checked, kink_entries, max_relative_error: max_err, max_relative_error_all: max_all, worst })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityOutcome {
    pub perturbed_at: usize,
    /// Half-width of the receptive field, `(2^(L+1) - 2) / 2`.
    pub half_window: usize,
    /// Largest `|t - perturbed_at|` whose output changed.
    pub max_reach: usize,
    /// Outputs outside the window that differ in any bit.
    pub violations: usize,
}

impl LocalityOutcome {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.max_reach <= self.half_window && self.max_reach > 0
    }
}

/// Perturbs one input sample and compares stage-1 outputs bit by bit.
pub fn receptive_field_check(num_layers: usize, num_filters: usize, len: usize, seed: u64) -> Result<LocalityOutcome> {
    let model = ModelConfig { mode: ModelMode::DualScale, num_layers, num_filters };
    let params = ModelParameters::init(&model, seed)?;
    let mut rng = rng_for(seed, "receptive-field");
    let data: Vec<f64> = (0..IMU_CHANNELS * len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = ChannelSequence::new(IMU_CHANNELS, len, data)?;
    let t0 = len / 2;
    let mut bumped = base.clone();
    for c in 0..IMU_CHANNELS {
        bumped.set(c, t0, base.get(c, t0) + 1.0);
    }
    let a = sstcn_forward(&base, &params, 0)?;
    let b = sstcn_forward(&bumped, &params, 0)?;
    let half_window = (crate::model::receptive_field(num_layers) - 1) / 2;
    let mut max_reach = 0;
    let mut violations = 0;
    for t in 0..len {
        let changed = (0..a.class_count()).any(|c| a.prob(c, t).to_bits() != b.prob(c, t).to_bits());
        if changed {
            let reach = t.abs_diff(t0);
            max_reach = max_reach.max(reach);
            if reach > half_window {
                violations += 1;
            }
        }
    }
    Ok(LocalityOutcome { perturbed_at: t0, half_window, max_reach, violations })
}

/// Reference segmental matcher built on explicit sample sets.
pub fn reference_segmental_counts(truth: &[usize], pred: &[usize], classes: usize, threshold: f64) -> Vec<Counts> {
    fn runs(track: &[usize]) -> Vec<(usize, BTreeSet<usize>)> {
        let mut out: Vec<(usize, BTreeSet<usize>)> = Vec::new();
        for (t, &c) in track.iter().enumerate() {
            let extend = t > 0 && track[t - 1] == c;
            if c == 0 {
                continue;
            }
            if extend {
                out.last_mut().expect("run started").1.insert(t);
            } else {
                out.push((c, BTreeSet::from([t])));
            }
        }
        out
    }
    let true_runs = runs(truth);
    let pred_runs = runs(pred);
    let mut counts = vec![Counts::default(); classes];
    let mut used = vec![false; true_runs.len()];
    for (pc, ps) in &pred_runs {
        let mut best_iou = -1.0;
        let mut best = None;
        for (j, (tc, ts)) in true_runs.iter().enumerate() {
            if tc != pc {
                continue;
            }
            let inter = ps.intersection(ts).count() as f64;
            let union = ps.union(ts).count() as f64;
            let iou = inter / union;
            if iou > best_iou {
                best_iou = iou;
                best = Some(j);
            }
        }
        match best {
            Some(j) if best_iou > 0.0 && best_iou >= threshold && !used[j] => {
                used[j] = true;
                counts[*pc].tp += 1;
            }
            _ => counts[*pc].fp += 1,
        }
    }
    for ((tc, _), u) in true_runs.iter().zip(&used) {
        if !u {
            counts[*tc].fn_ += 1;
        }
    }
    counts.into_iter().skip(1).collect()
}

/// One pictured matching situation: class-1 tracks and expected counts.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherFixture {
    pub name: &'static str,
    pub truth: Vec<usize>,
    pub pred: Vec<usize>,
    pub expected: Counts,
}

fn track(len: usize, runs: &[(usize, usize)]) -> Vec<usize> {
    let mut t = vec![0; len];
    for &(s, e) in runs {
        t[s..e].fill(1);
    }
    t
}

/// The eight canonical matching situations on a 40-sample track.
pub fn matcher_fixtures() -> Vec<MatcherFixture> {
    let c = |tp, fp, fn_| Counts { tp, fp, fn_ };
    let f = |name, truth: &[(usize, usize)], pred: &[(usize, usize)], expected| MatcherFixture {
        name,
        truth: track(40, truth),
        pred: track(40, pred),
        expected,
    };
    vec![
        f("exact match", &[(10, 20)], &[(10, 20)], c(1, 0, 0)),
        f("shifted overlap above threshold", &[(10, 20)], &[(12, 22)], c(1, 0, 0)),
        f("prediction without truth", &[], &[(10, 20)], c(0, 1, 0)),
        f("short prediction below threshold", &[(10, 30)], &[(12, 18)], c(0, 1, 1)),
        f("long prediction below threshold", &[(15, 20)], &[(5, 30)], c(0, 1, 1)),
        f("truth without prediction", &[(10, 20)], &[], c(0, 0, 1)),
        f("fragmented prediction", &[(5, 35)], &[(6, 12), (14, 20), (22, 28)], c(0, 3, 1)),
        f("merged prediction", &[(5, 12), (20, 27)], &[(2, 38)], c(0, 1, 2)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatcherSweepOutcome {
    pub pairs: usize,
    pub mismatches: usize,
    pub fixture_failures: Vec<String>,
}

impl MatcherSweepOutcome {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.fixture_failures.is_empty()
    }
}

/// Random truth/prediction pair: prediction is a noisy edit of the truth
/// half of the time, independent otherwise.
pub fn random_track_pair(rng: &mut Rng, max_len: usize, classes: usize) -> (Vec<usize>, Vec<usize>) {
    let len = rng.random_range(1..=max_len);
    let truth = random_track(rng, len, classes);
    let pred = if rng.random_bool(0.5) {
        let mut p = truth.clone();
        for _ in 0..rng.random_range(0..=len / 4 + 1) {
            let t = rng.random_range(0..len);
            let w = rng.random_range(1..=5).min(len - t);
            let c = rng.random_range(0..classes);
            p[t..t + w].fill(c);
        }
        p
    } else {
        random_track(rng, len, classes)
    };
    (truth, pred)
}

pub fn matcher_sweep(pairs: usize, max_len: usize, seed: u64) -> Result<MatcherSweepOutcome> {
    let classes = 5;
    let mut rng = rng_for(seed, "matcher-sweep");
    let mut mismatches = 0;
    for _ in 0..pairs {
        let (truth, pred) = random_track_pair(&mut rng, max_len, classes);
        if segmental_counts(&truth, &pred, classes, IOU_THRESHOLD)?
            != reference_segmental_counts(&truth, &pred, classes, IOU_THRESHOLD)
        {
            mismatches += 1;
        }
    }
    let mut fixture_failures = Vec::new();
    for fx in matcher_fixtures() {
        let got = segmental_counts(&fx.truth, &fx.pred, 2, IOU_THRESHOLD)?;
        if got[0] != fx.expected {
            fixture_failures.push(format!("{}: got {:?}, expected {:?}", fx.name, got[0], fx.expected));
        }
    }
    Ok(MatcherSweepOutcome { pairs, mismatches, fixture_failures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValuesOutcome {
    /// Smoothing loss of the two-class jump example, times `T * C`.
    pub truncated_jump: f64,
    pub expected_jump: f64,
    pub uniform_ce: f64,
    pub expected_uniform_ce: f64,
}

impl LossValuesOutcome {
    pub fn passed(&self) -> bool {
        libm::fabs(self.truncated_jump - self.expected_jump) <= 1e-12
            && libm::fabs(self.uniform_ce - self.expected_uniform_ce) <= 1e-12
    }
}

/// Two classes, two samples: class 1 jumps from `e^-5` to 1, so its log
/// difference 5 truncates to 4. Class 0 drops from `1 - e^-5` to the log
/// clamp and truncates to 4 as well, giving `4^2 + 4^2` before normalization.
pub fn loss_values_check() -> Result<LossValuesOutcome> {
    let low = libm::exp(-5.0);
    let probs = ProbabilitySequence::new(ChannelSequence::from_columns(&[vec![1.0 - low, low], vec![0.0, 1.0]])?)?;
    let v = truncated_mse(&probs, &[true, true], 4.0)?;
    let scale = (probs.len() * probs.class_count()) as f64;

    let c = 5;
    let uniform = ProbabilitySequence::new(ChannelSequence::filled(c, 7, 1.0 / c as f64))?;
    let truth = [0, 1, 2, 3, 4, 0, 1];
    let ce = cross_entropy(&uniform, &truth, &[true; 7])?;
    Ok(LossValuesOutcome {
        truncated_jump: v * scale,
        expected_jump: 32.0,
        uniform_ce: ce,
        expected_uniform_ce: libm::log(c as f64) / c as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub family: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Options for [`run_selfcheck`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SelfcheckOptions {
    pub corrupt_gradient: bool,
}

/// The four check families, in fixed order.
pub fn run_selfcheck(opts: SelfcheckOptions) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let gc = GradientCheckConfig { corrupt: opts.corrupt_gradient, ..GradientCheckConfig::default() };
    out.push(match gradient_check(&gc) {
        Ok(o) => CheckResult {
            family: "gradient",
            passed: o.passed(),
            detail: format!(
                "{} entries ({} straddle a ReLU kink), max relative error {:.3e} at {}[{}]",
                o.checked, o.kink_entries, o.max_relative_error, o.worst.0, o.worst.1
            ),
        },
        Err(e) => CheckResult { family: "gradient", passed: false, detail: format!("{e}") },
    });
    out.push(match receptive_field_check(9, 4, 3000, 5) {
        Ok(o) => CheckResult {
            family: "receptive_field",
            passed: o.passed(),
            detail: format!("reach {} of half-window {}, {} violations", o.max_reach, o.half_window, o.violations),
        },
        Err(e) => CheckResult { family: "receptive_field", passed: false, detail: format!("{e}") },
    });
    out.push(match matcher_sweep(10_000, 200, 17) {
        Ok(o) => CheckResult {
            family: "metrics_oracle",
            passed: o.passed(),
            detail: format!("{} random pairs, {} mismatches, {} fixture failures", o.pairs, o.mismatches, o.fixture_failures.len()),
        },
        Err(e) => CheckResult { family: "metrics_oracle", passed: false, detail: format!("{e}") },
    });
    out.push(match loss_values_check() {
        Ok(o) => CheckResult {
            family: "loss_values",
            passed: o.passed(),
            detail: format!(
                "jump {:.12} (expected {:.12}), uniform CE {:.12} (expected {:.12})",
                o.truncated_jump, o.expected_jump, o.uniform_ce, o.expected_uniform_ce
            ),
        },
        Err(e) => CheckResult { family: "loss_values", passed: false, detail: format!("{e}") },
    });
    out
}
