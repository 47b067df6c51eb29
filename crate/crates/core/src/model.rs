//! Single-stage TCN and the multi-stage dual-scale assembly.
//!
//! A stage is: 1x1 input projection to `D` filters, `L` residual blocks
//! (dilated 3-tap conv, ReLU, 1x1 conv, residual add) with dilations
//! `1, 2, 4, ..., 2^(L-1)`, then a 1x1 head and a softmax over classes.
//! Stages after the first consume the previous stage's probabilities.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{Scale, MACRO, MICRO};
use crate::error::{Error, Result};
use crate::numerics::{
    add, conv1x1, dilated_conv1d, relu, softmax_channels, ChannelSequence, KernelWeights, NodeId, ParamId,
    ParamStore, PointwiseWeights, ProbabilitySequence, Tape,
};
use crate::IMU_CHANNELS;

/// Stage layout of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// One micro stage followed by three macro stages.
    DualScale,
    /// Four macro stages trained without micro labels.
    AblationNoMicro,
    /// Two micro stages followed by three macro stages.
    DualScaleTwoMicro,
}

impl ModelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelMode::DualScale => "dual_scale",
            ModelMode::AblationNoMicro => "ablation_no_micro",
            ModelMode::DualScaleTwoMicro => "dual_scale_two_micro",
        }
    }

    pub fn stage_scales(self) -> &'static [Scale] {
        match self {
            ModelMode::DualScale => &[Scale::Micro, Scale::Macro, Scale::Macro, Scale::Macro],
            ModelMode::AblationNoMicro => &[Scale::Macro, Scale::Macro, Scale::Macro, Scale::Macro],
            ModelMode::DualScaleTwoMicro => &[Scale::Micro, Scale::Micro, Scale::Macro, Scale::Macro, Scale::Macro],
        }
    }
}

impl core::str::FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual_scale" => Ok(ModelMode::DualScale),
            "ablation_no_micro" => Ok(ModelMode::AblationNoMicro),
            "dual_scale_two_micro" => Ok(ModelMode::DualScaleTwoMicro),
            other => Err(Error::InvalidArgument(format!("unknown model mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageConfig {
    pub scale: Scale,
    pub num_layers: usize,
    pub num_filters: usize,
    pub in_channels: usize,
    pub out_classes: usize,
}

impl StageConfig {
    /// Dilation of residual block `layer` (0-based).
    pub fn dilation(layer: usize) -> usize {
        1 << layer
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.num_layers)
    }

    pub fn parameter_count(&self) -> usize {
        let d = self.num_filters;
        let proj = self.in_channels * d + d;
        let block = d * d * 3 + d + d * d + d;
        let head = d * self.out_classes + self.out_classes;
        proj + self.num_layers * block + head
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: ModelMode,
    pub num_layers: usize,
    pub num_filters: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { mode: ModelMode::DualScale, num_layers: 9, num_filters: 64 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.num_layers > 20 {
            return Err(Error::InvalidArgument(format!("num_layers must be in 1..=20, got {}", self.num_layers)));
        }
        if self.num_filters == 0 {
            return Err(Error::InvalidArgument("num_filters must be positive".into()));
        }
        Ok(())
    }

    pub fn stages(&self) -> Vec<StageConfig> {
        let mut in_channels = IMU_CHANNELS;
        self.mode
            .stage_scales()
            .iter()
            .map(|&scale| {
                let out_classes = scale.catalog().len();
                let st = StageConfig {
                    scale,
                    num_layers: self.num_layers,
                    num_filters: self.num_filters,
                    in_channels,
                    out_classes,
                };
                in_channels = out_classes;
                st
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.stages().iter().map(StageConfig::parameter_count).sum()
    }
}

/// Receptive field of `layers` doubling-dilation 3-tap layers: `2^(L+1) - 1`.
pub fn receptive_field(layers: usize) -> usize {
    (1usize << (layers + 1)) - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct BlockIds {
    dilated_w: ParamId,
    dilated_b: ParamId,
    pointwise_w: ParamId,
    pointwise_b: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct StageIds {
    in_w: ParamId,
    in_b: ParamId,
    blocks: Vec<BlockIds>,
    head_w: ParamId,
    head_b: ParamId,
}

/// Learnable weights of every stage, named `stage{s}/...` with `s` from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    config: ModelConfig,
    store: ParamStore,
    stages: Vec<StageIds>,
}

/// Name and shape of every parameter, in store order.
pub fn parameter_layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (s, st) in config.stages().iter().enumerate() {
        let p = format!("stage{}", s + 1);
        let d = st.num_filters;
        out.push((format!("{p}/in_proj/weight"), vec![d, st.in_channels]));
        out.push((format!("{p}/in_proj/bias"), vec![d]));
        for l in 0..st.num_layers {
            out.push((format!("{p}/block{l}/dilated/weight"), vec![d, d, 3]));
            out.push((format!("{p}/block{l}/dilated/bias"), vec![d]));
            out.push((format!("{p}/block{l}/pointwise/weight"), vec![d, d]));
            out.push((format!("{p}/block{l}/pointwise/bias"), vec![d]));
        }
        out.push((format!("{p}/head/weight"), vec![st.out_classes, d]));
        out.push((format!("{p}/head/bias"), vec![st.out_classes]));
    }
    out
}

fn fan_in(shape: &[usize], name: &str) -> usize {
    if name.ends_with("/bias") {
        return 0;
    }
    shape[1..].iter().product()
}

impl ModelParameters {
    /// Uniform initialization in `±1/sqrt(fan_in)`; biases use the fan-in of
    /// their layer's weight.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng::rng_for(seed, "model-init");
        let layout = parameter_layout(config);
        let mut store = ParamStore::new();
        let mut last_fan = 1;
        for (name, shape) in &layout {
            let f = fan_in(shape, name);
            if f > 0 {
                last_fan = f;
            }
            let bound = 1.0 / libm::sqrt(last_fan as f64);
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            store.insert(name, shape, data)?;
        }
        Self::from_store(*config, store)
    }

    /// All weights zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        for (name, shape) in parameter_layout(config) {
            let n = shape.iter().product();
            store.insert(&name, &shape, vec![0.0; n])?;
        }
        Self::from_store(*config, store)
    }

    /// Adopts a store whose names and shapes match the configuration exactly.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = parameter_layout(&config);
        if store.len() != layout.len() {
            return Err(Error::shape("ModelParameters", "parameter count", layout.len(), store.len()));
        }
        for (name, shape) in &layout {
            let p = store.by_name(name).ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if &p.shape != shape {
                return Err(Error::InvalidArgument(format!(
                    "parameter {name} has shape {:?}, configuration expects {shape:?}",
                    p.shape
                )));
            }
        }
        let id = |n: String| store.id(&n).expect("validated above");
        let stages = config
            .stages()
            .iter()
            .enumerate()
            .map(|(s, st)| {
                let p = format!("stage{}", s + 1);
                StageIds {
                    in_w: id(format!("{p}/in_proj/weight")),
                    in_b: id(format!("{p}/in_proj/bias")),
                    blocks: (0..st.num_layers)
                        .map(|l| BlockIds {
                            dilated_w: id(format!("{p}/block{l}/dilated/weight")),
                            dilated_b: id(format!("{p}/block{l}/dilated/bias")),
                            pointwise_w: id(format!("{p}/block{l}/pointwise/weight")),
                            pointwise_b: id(format!("{p}/block{l}/pointwise/bias")),
                        })
                        .collect(),
                    head_w: id(format!("{p}/head/weight")),
                    head_b: id(format!("{p}/head/bias")),
                }
            })
            .collect();
        Ok(ModelParameters { config, store, stages })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn into_store(self) -> ParamStore {
        self.store
    }

    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    fn pointwise(&self, w: ParamId, b: ParamId, in_channels: usize) -> Result<PointwiseWeights<'_>> {
        let bias = self.store.data(b);
        PointwiseWeights::new(bias.len(), in_channels, self.store.data(w), bias)
    }

    fn kernel(&self, w: ParamId, b: ParamId, in_channels: usize) -> Result<KernelWeights<'_>> {
        let bias = self.store.data(b);
        KernelWeights::new(bias.len(), in_channels, self.store.data(w), bias)
    }
}

/// `x + conv1x1(relu(dilated_conv1d(x, d)))`.
pub fn residual_block(
    x: &ChannelSequence,
    dilated: &KernelWeights<'_>,
    pointwise: &PointwiseWeights<'_>,
    dilation: usize,
) -> Result<ChannelSequence> {
    let h = relu(&dilated_conv1d(x, dilated, dilation)?);
    add(x, &conv1x1(&h, pointwise)?)
}

/// Forward pass of stage `stage` (0-based) on its input.
pub fn sstcn_forward(input: &ChannelSequence, params: &ModelParameters, stage: usize) -> Result<ProbabilitySequence> {
    let st = params
        .config
        .stages()
        .get(stage)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("stage {stage} does not exist")))?;
    if input.channels() != st.in_channels {
        return Err(Error::shape("sstcn_forward", "input channels", st.in_channels, input.channels()));
    }
    let ids = &params.stages[stage];
    let d = st.num_filters;
    let mut h = conv1x1(input, &params.pointwise(ids.in_w, ids.in_b, st.in_channels)?)?;
    for (l, b) in ids.blocks.iter().enumerate() {
        let k = params.kernel(b.dilated_w, b.dilated_b, d)?;
        let p = params.pointwise(b.pointwise_w, b.pointwise_b, d)?;
        h = residual_block(&h, &k, &p, StageConfig::dilation(l))?;
    }
    let logits = conv1x1(&h, &params.pointwise(ids.head_w, ids.head_b, d)?)?;
    softmax_channels(&logits)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageOutput {
    pub scale: Scale,
    pub probs: ProbabilitySequence,
}

/// Per-stage probabilities, in stage order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub stages: Vec<StageOutput>,
}

impl ModelOutput {
    pub fn micro(&self) -> impl Iterator<Item = &ProbabilitySequence> {
        self.stages.iter().filter(|s| s.scale == Scale::Micro).map(|s| &s.probs)
    }

    pub fn macro_stages(&self) -> impl Iterator<Item = &ProbabilitySequence> {
        self.stages.iter().filter(|s| s.scale == Scale::Macro).map(|s| &s.probs)
    }

    /// Output of the last stage, which is always macro scale.
    pub fn final_macro(&self) -> &ProbabilitySequence {
        &self.stages.last().expect("model has stages").probs
    }
}

/// Runs every stage on a six-channel IMU sequence.
pub fn dsmstcn_forward(imu: &ChannelSequence, params: &ModelParameters) -> Result<ModelOutput> {
    if imu.channels() != IMU_CHANNELS {
        return Err(Error::shape("dsmstcn_forward", "imu channels", IMU_CHANNELS, imu.channels()));
    }
    let scales = params.config.mode.stage_scales();
    let mut stages: Vec<StageOutput> = Vec::with_capacity(scales.len());
    for (s, &scale) in scales.iter().enumerate() {
        let input = match stages.last() {
            None => imu,
            Some(prev) => prev.probs.as_sequence(),
        };
        let probs = sstcn_forward(input, params, s)?;
        stages.push(StageOutput { scale, probs });
    }
    Ok(ModelOutput { stages })
}

/// Independent forward passes over a batch of sequences.
pub fn dsmstcn_forward_batch(batch: &[ChannelSequence], params: &ModelParameters) -> Result<Vec<ModelOutput>> {
    batch.iter().map(|x| dsmstcn_forward(x, params)).collect()
}

/// Records the forward pass on a tape. Returns each stage's probability node.
pub fn forward_on_tape(tape: &mut Tape<'_>, params: &ModelParameters, imu: NodeId) -> Result<Vec<(Scale, NodeId)>> {
    if !core::ptr::eq(tape.params(), &params.store) {
        return Err(Error::InvalidArgument("tape records a different parameter store".into()));
    }
    let ch = tape.value(imu).channels();
    if ch != IMU_CHANNELS {
        return Err(Error::shape("forward_on_tape", "imu channels", IMU_CHANNELS, ch));
    }
    let mut out = Vec::new();
    let mut x = imu;
    for (s, &scale) in params.config.mode.stage_scales().iter().enumerate() {
        let ids = &params.stages[s];
        let mut h = tape.conv1x1(x, ids.in_w, ids.in_b)?;
        for (l, b) in ids.blocks.iter().enumerate() {
            let c = tape.dilated_conv(h, b.dilated_w, b.dilated_b, StageConfig::dilation(l))?;
            let r = tape.relu(c);
            let p = tape.conv1x1(r, b.pointwise_w, b.pointwise_b)?;
            h = tape.add(h, p)?;
        }
        let logits = tape.conv1x1(h, ids.head_w, ids.head_b)?;
        x = tape.softmax(logits)?;
        out.push((scale, x));
    }
    Ok(out)
}

/// Per-sample argmax; ties go to the lowest class id.
pub fn predict_labels(probs: &ProbabilitySequence) -> Vec<usize> {
    let seq = probs.as_sequence();
    let mut best = vec![0usize; seq.len()];
    let mut best_p = seq.row(0).to_vec();
    for c in 1..seq.channels() {
        for (t, &p) in seq.row(c).iter().enumerate() {
            if p > best_p[t] {
                best_p[t] = p;
                best[t] = c;
            }
        }
    }
    best
}

/// Class-count sanity for the catalogs the stages emit.
pub fn classes_for(scale: Scale) -> usize {
    match scale {
        Scale::Micro => MICRO.len(),
        Scale::Macro => MACRO.len(),
    }
}
