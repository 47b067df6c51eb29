//! Reverse-mode differentiation over the fixed layer vocabulary.
//!
//! Each forward call computes its value immediately and appends a node that
//! remembers its inputs. `backward` walks the nodes in reverse and returns
//! gradients for every parameter in the store; parameters that no path to
//! the loss touches get zeros.

use alloc::vec;
use alloc::vec::Vec;

use super::ops::{self, KernelWeights, PointwiseWeights};
use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::ChannelSequence;
use crate::error::{Error, Result};
use crate::loss::kernels as loss_kernels;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Input,
    DilatedConv { input: NodeId, weight: ParamId, bias: ParamId, in_channels: usize, dilation: usize },
    Pointwise { input: NodeId, weight: ParamId, bias: ParamId, in_channels: usize },
    Relu { input: NodeId },
    Add { a: NodeId, b: NodeId },
    Softmax { input: NodeId },
    CrossEntropy { probs: NodeId, targets: Vec<usize>, mask: Vec<bool> },
    Tmse { probs: NodeId, mask: Vec<bool>, tau: f64, detach_previous: bool },
    WeightedSum { terms: Vec<(NodeId, f64)> },
    Sum { input: NodeId },
}

#[derive(Debug)]
struct Node {
    value: ChannelSequence,
    op: Op,
}

/// Records a forward pass over parameters held in a borrowed store.
#[derive(Debug)]
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::new() }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &ChannelSequence {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.get(0, 0)
    }

    /// On/off state of every recorded ReLU input, in recording order.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            if let Op::Relu { input } = n.op {
                out.extend(self.value(input).as_slice().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    fn push(&mut self, value: ChannelSequence, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: ChannelSequence) -> NodeId {
        self.push(value, Op::Input)
    }

    fn kernel(&self, weight: ParamId, bias: ParamId, in_channels: usize) -> Result<KernelWeights<'p>> {
        let w = self.params.data(weight);
        let b = self.params.data(bias);
        KernelWeights::new(b.len(), in_channels, w, b)
    }

    fn pointwise(&self, weight: ParamId, bias: ParamId, in_channels: usize) -> Result<PointwiseWeights<'p>> {
        let w = self.params.data(weight);
        let b = self.params.data(bias);
        PointwiseWeights::new(b.len(), in_channels, w, b)
    }

    pub fn dilated_conv(&mut self, input: NodeId, weight: ParamId, bias: ParamId, dilation: usize) -> Result<NodeId> {
        let in_channels = self.value(input).channels();
        let k = self.kernel(weight, bias, in_channels)?;
        let value = ops::dilated_conv1d(self.value(input), &k, dilation)?;
        Ok(self.push(value, Op::DilatedConv { input, weight, bias, in_channels, dilation }))
    }

    pub fn conv1x1(&mut self, input: NodeId, weight: ParamId, bias: ParamId) -> Result<NodeId> {
        let in_channels = self.value(input).channels();
        let w = self.pointwise(weight, bias, in_channels)?;
        let value = ops::conv1x1(self.value(input), &w)?;
        Ok(self.push(value, Op::Pointwise { input, weight, bias, in_channels }))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let value = ops::relu(self.value(input));
        self.push(value, Op::Relu { input })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = ops::add(self.value(a), self.value(b))?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn softmax(&mut self, input: NodeId) -> Result<NodeId> {
        let value = ops::softmax_channels(self.value(input))?.into_sequence();
        Ok(self.push(value, Op::Softmax { input }))
    }

    /// Masked cross entropy of a probability node against class ids.
    pub fn cross_entropy(&mut self, probs: NodeId, targets: &[usize], mask: &[bool]) -> Result<NodeId> {
        let v = loss_kernels::ce_value(self.value(probs), targets, mask)?;
        Ok(self.push(
            ChannelSequence::filled(1, 1, v),
            Op::CrossEntropy { probs, targets: targets.to_vec(), mask: mask.to_vec() },
        ))
    }

    /// Truncated MSE of adjacent log-probabilities.
    pub fn truncated_mse(&mut self, probs: NodeId, mask: &[bool], tau: f64, detach_previous: bool) -> Result<NodeId> {
        let v = loss_kernels::tmse_value(self.value(probs), mask, tau)?;
        Ok(self.push(
            ChannelSequence::filled(1, 1, v),
            Op::Tmse { probs, mask: mask.to_vec(), tau, detach_previous },
        ))
    }

    /// `sum_i w_i * x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut total = 0.0;
        for &(id, w) in terms {
            let v = self.value(id);
            if v.channels() != 1 || v.len() != 1 {
                return Err(Error::NonScalarLoss { channels: v.channels(), len: v.len() });
            }
            total += w * v.get(0, 0);
        }
        Ok(self.push(ChannelSequence::filled(1, 1, total), Op::WeightedSum { terms: terms.to_vec() }))
    }

    /// Sum of every entry of a node, as a scalar.
    pub fn sum(&mut self, input: NodeId) -> NodeId {
        let total = super::kernels::sum(self.value(input).as_slice());
        self.push(ChannelSequence::filled(1, 1, total), Op::Sum { input })
    }

    /// Gradients of the scalar node `loss` with respect to every parameter.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let lv = self.value(loss);
        if lv.channels() != 1 || lv.len() != 1 {
            return Err(Error::NonScalarLoss { channels: lv.channels(), len: lv.len() });
        }
        let mut grads = Gradients::zeros_like(self.params);
        let mut node_grads: Vec<Option<ChannelSequence>> = vec![None; loss.0 + 1];
        node_grads[loss.0] = Some(ChannelSequence::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = node_grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::DilatedConv { input, weight, bias, in_channels, dilation } => {
                    let k = self.kernel(*weight, *bias, *in_channels)?;
                    let r = ops::dilated_conv1d_backward(self.value(*input), &k, *dilation, &g);
                    super::kernels::axpy(grads.by_id_mut(*weight), 1.0, &r.taps);
                    super::kernels::axpy(grads.by_id_mut(*bias), 1.0, &r.bias);
                    accumulate(&mut node_grads, *input, r.input);
                }
                Op::Pointwise { input, weight, bias, in_channels } => {
                    let w = self.pointwise(*weight, *bias, *in_channels)?;
                    let r = ops::conv1x1_backward(self.value(*input), &w, &g);
                    super::kernels::axpy(grads.by_id_mut(*weight), 1.0, &r.taps);
                    super::kernels::axpy(grads.by_id_mut(*bias), 1.0, &r.bias);
                    accumulate(&mut node_grads, *input, r.input);
                }
                Op::Relu { input } => {
                    let gi = ops::relu_backward(self.value(*input), &g);
                    accumulate(&mut node_grads, *input, gi);
                }
                Op::Add { a, b } => {
                    accumulate(&mut node_grads, *a, g.clone());
                    accumulate(&mut node_grads, *b, g);
                }
                Op::Softmax { input } => {
                    let gi = ops::softmax_backward(&node.value, &g);
                    accumulate(&mut node_grads, *input, gi);
                }
                Op::CrossEntropy { probs, targets, mask } => {
                    let mut gp = loss_kernels::ce_grad(self.value(*probs), targets, mask);
                    scale(&mut gp, g.get(0, 0));
                    accumulate(&mut node_grads, *probs, gp);
                }
                Op::Tmse { probs, mask, tau, detach_previous } => {
                    let mut gp = loss_kernels::tmse_grad(self.value(*probs), mask, *tau, *detach_previous);
                    scale(&mut gp, g.get(0, 0));
                    accumulate(&mut node_grads, *probs, gp);
                }
                Op::Sum { input } => {
                    let v = self.value(*input);
                    let gi = ChannelSequence::filled(v.channels(), v.len(), g.get(0, 0));
                    accumulate(&mut node_grads, *input, gi);
                }
                Op::WeightedSum { terms } => {
                    let up = g.get(0, 0);
                    for &(id, w) in terms {
                        accumulate(&mut node_grads, id, ChannelSequence::filled(1, 1, up * w));
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn scale(seq: &mut ChannelSequence, factor: f64) {
    if factor != 1.0 {
        for v in seq.as_mut_slice() {
            *v *= factor;
        }
    }
}

fn accumulate(node_grads: &mut [Option<ChannelSequence>], id: NodeId, g: ChannelSequence) {
    match &mut node_grads[id.0] {
        Some(existing) => super::kernels::axpy(existing.as_mut_slice(), 1.0, g.as_slice()),
        slot @ None => *slot = Some(g),
    }
}
