//! Composite training objective: cross entropy on every stage at its own
//! scale, plus truncated MSE smoothing on the refinement stages.
//!
//! The first stage (and any micro stage) is weighted by `eta` and carries no
//! smoothing term; every later macro stage contributes
//! `CE + lambda * TMSE`. All terms normalize by (unmasked samples x classes).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Scale;
use crate::error::{Error, Result};
use crate::model::ModelOutput;
use crate::numerics::{NodeId, ProbabilitySequence, Tape};

/// Probabilities are clamped here before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the micro-scale (first stage) cross entropy.
    pub eta: f64,
    /// Weight of the smoothing term.
    pub lambda: f64,
    /// Truncation threshold of the adjacent log-probability difference.
    pub tau: f64,
    /// Treat the `t-1` term of the smoothing loss as a constant when
    /// differentiating.
    pub detach_previous: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { eta: 1.0, lambda: 0.15, tau: 4.0, detach_previous: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.lambda >= 0.0 && self.tau > 0.0) || !self.eta.is_finite() || !self.lambda.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "loss weights need eta >= 0, lambda >= 0, tau > 0 (got {}, {}, {})",
                self.eta, self.lambda, self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    CeMicro,
    CeMacro,
    Tmse,
}

impl TermKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TermKind::CeMicro => "ce_micro",
            TermKind::CeMacro => "ce_macro",
            TermKind::Tmse => "tmse",
        }
    }
}

/// One weighted term of the objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    /// 1-based stage index.
    pub stage: usize,
    pub kind: TermKind,
    pub weight: f64,
    pub value: f64,
}

impl LossTerm {
    pub fn name(&self) -> String {
        format!("stage{}/{}", self.stage, self.kind.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub terms: Vec<LossTerm>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn get(&self, stage: usize, kind: TermKind) -> Option<f64> {
        self.terms.iter().find(|t| t.stage == stage && t.kind == kind).map(|t| t.value)
    }
}

/// Ground truth and masks for one sequence.
#[derive(Debug, Clone, Copy)]
pub struct Targets<'a> {
    pub micro: &'a [usize],
    pub macro_: &'a [usize],
    /// Samples counted by every term.
    pub mask: &'a [bool],
    /// Samples counted by micro cross entropy; a subset of `mask`.
    pub micro_mask: &'a [bool],
}

impl<'a> Targets<'a> {
    fn truth(&self, scale: Scale) -> (&'a [usize], &'a [bool]) {
        match scale {
            Scale::Micro => (self.micro, self.micro_mask),
            Scale::Macro => (self.macro_, self.mask),
        }
    }
}

/// Which terms each stage contributes, as `(stage index, kind, weight)`.
pub fn term_plan(scales: &[Scale], config: &LossConfig) -> Vec<(usize, TermKind, f64)> {
    let mut plan = Vec::new();
    for (s, &scale) in scales.iter().enumerate() {
        let ce = if scale == Scale::Micro { TermKind::CeMicro } else { TermKind::CeMacro };
        if s == 0 || scale == Scale::Micro {
            plan.push((s, ce, config.eta));
        } else {
            plan.push((s, ce, 1.0));
            plan.push((s, TermKind::Tmse, config.lambda));
        }
    }
    plan
}

/// Mean of `-log p_true` over unmasked samples, divided by the class count.
pub fn cross_entropy(probs: &ProbabilitySequence, truth: &[usize], mask: &[bool]) -> Result<f64> {
    kernels::ce_value(probs.as_sequence(), truth, mask)
}

/// Truncated MSE of adjacent log-probability differences.
pub fn truncated_mse(probs: &ProbabilitySequence, mask: &[bool], tau: f64) -> Result<f64> {
    kernels::tmse_value(probs.as_sequence(), mask, tau)
}

/// Objective value and per-term breakdown for a forward pass.
pub fn total_loss(output: &ModelOutput, targets: &Targets<'_>, config: &LossConfig) -> Result<LossBreakdown> {
    config.validate()?;
    let scales: Vec<Scale> = output.stages.iter().map(|s| s.scale).collect();
    let mut terms = Vec::new();
    let mut total = 0.0;
    for (s, kind, weight) in term_plan(&scales, config) {
        let probs = &output.stages[s].probs;
        check_len(probs.len(), targets)?;
        let value = match kind {
            TermKind::Tmse => truncated_mse(probs, targets.mask, config.tau)?,
            _ => {
                let (truth, mask) = targets.truth(output.stages[s].scale);
                cross_entropy(probs, truth, mask)?
            }
        };
        total += weight * value;
        terms.push(LossTerm { stage: s + 1, kind, weight, value });
    }
    Ok(LossBreakdown { terms, total })
}

/// Records the objective on a tape over the stage outputs of
/// [`crate::model::forward_on_tape`]. Returns the scalar loss node.
pub fn total_loss_on_tape(
    tape: &mut Tape<'_>,
    stages: &[(Scale, NodeId)],
    targets: &Targets<'_>,
    config: &LossConfig,
) -> Result<(NodeId, LossBreakdown)> {
    config.validate()?;
    let scales: Vec<Scale> = stages.iter().map(|s| s.0).collect();
    let mut nodes = Vec::new();
    let mut terms = Vec::new();
    for (s, kind, weight) in term_plan(&scales, config) {
        let (scale, probs) = stages[s];
        check_len(tape.value(probs).len(), targets)?;
        let node = match kind {
            TermKind::Tmse => tape.truncated_mse(probs, targets.mask, config.tau, config.detach_previous)?,
            _ => {
                let (truth, mask) = targets.truth(scale);
                tape.cross_entropy(probs, truth, mask)?
            }
        };
        terms.push(LossTerm { stage: s + 1, kind, weight, value: tape.scalar(node) });
        nodes.push((node, weight));
    }
    let loss = tape.weighted_sum(&nodes)?;
    Ok((loss, LossBreakdown { terms, total: tape.scalar(loss) }))
}

fn check_len(len: usize, targets: &Targets<'_>) -> Result<()> {
    for (what, n) in [
        ("micro truth length", targets.micro.len()),
        ("macro truth length", targets.macro_.len()),
        ("mask length", targets.mask.len()),
        ("micro mask length", targets.micro_mask.len()),
    ] {
        if n != len {
            return Err(Error::shape("total_loss", what, len, n));
        }
    }
    Ok(())
}

/// Value and gradient kernels shared by the plain and tape paths.
pub(crate) mod kernels {
    use super::LOG_CLAMP;
    use crate::error::{Error, Result};
    use crate::numerics::ChannelSequence;

    #[inline]
    fn clamped_ln(p: f64) -> f64 {
        libm::log(p.max(LOG_CLAMP))
    }

    fn check(probs: &ChannelSequence, mask: &[bool], what: &'static str) -> Result<()> {
        if mask.len() != probs.len() {
            return Err(Error::shape(what, "mask length", probs.len(), mask.len()));
        }
        Ok(())
    }

    fn normalizer(probs: &ChannelSequence, mask: &[bool]) -> Option<f64> {
        let n = mask.iter().filter(|&&m| m).count();
        (n > 0).then(|| (n * probs.channels()) as f64)
    }

    pub(crate) fn ce_value(probs: &ChannelSequence, truth: &[usize], mask: &[bool]) -> Result<f64> {
        check(probs, mask, "cross_entropy")?;
        if truth.len() != probs.len() {
            return Err(Error::shape("cross_entropy", "truth length", probs.len(), truth.len()));
        }
        if let Some(&bad) = truth.iter().find(|&&c| c >= probs.channels()) {
            return Err(Error::UnknownClass { scale: "target", id: bad });
        }
        let Some(norm) = normalizer(probs, mask) else { return Ok(0.0) };
        let mut acc = 0.0;
        for (t, (&y, &m)) in truth.iter().zip(mask).enumerate() {
            if m {
                acc -= clamped_ln(probs.get(y, t));
            }
        }
        Ok(acc / norm)
    }

    pub(crate) fn ce_grad(probs: &ChannelSequence, truth: &[usize], mask: &[bool]) -> ChannelSequence {
        let mut g = ChannelSequence::zeros(probs.channels(), probs.len());
        let Some(norm) = normalizer(probs, mask) else { return g };
        for (t, (&y, &m)) in truth.iter().zip(mask).enumerate() {
            let p = probs.get(y, t);
            if m && p > LOG_CLAMP {
                g.set(y, t, -1.0 / (p * norm));
            }
        }
        g
    }

    pub(crate) fn tmse_value(probs: &ChannelSequence, mask: &[bool], tau: f64) -> Result<f64> {
        check(probs, mask, "truncated_mse")?;
        if probs.len() < 2 {
            return Ok(0.0);
        }
        let Some(norm) = normalizer(probs, mask) else { return Ok(0.0) };
        let mut acc = 0.0;
        for c in 0..probs.channels() {
            let row = probs.row(c);
            for t in 1..row.len() {
                if mask[t] && mask[t - 1] {
                    let delta = (clamped_ln(row[t]) - clamped_ln(row[t - 1])).abs().min(tau);
                    acc += delta * delta;
                }
            }
        }
        Ok(acc / norm)
    }

    pub(crate) fn tmse_grad(probs: &ChannelSequence, mask: &[bool], tau: f64, detach_previous: bool) -> ChannelSequence {
        let mut g = ChannelSequence::zeros(probs.channels(), probs.len());
        if probs.len() < 2 {
            return g;
        }
        let Some(norm) = normalizer(probs, mask) else { return g };
        for c in 0..probs.channels() {
            let row = probs.row(c);
            let gr = g.row_mut(c);
            for t in 1..row.len() {
                if !(mask[t] && mask[t - 1]) {
                    continue;
                }
                let diff = clamped_ln(row[t]) - clamped_ln(row[t - 1]);
                if diff.abs() > tau {
                    continue;
                }
                let coef = 2.0 * diff / norm;
                if row[t] > LOG_CLAMP {
                    gr[t] += coef / row[t];
                }
                if !detach_previous && row[t - 1] > LOG_CLAMP {
                    gr[t - 1] -= coef / row[t - 1];
                }
            }
        }
        g
    }
}
