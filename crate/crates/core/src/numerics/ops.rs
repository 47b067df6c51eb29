//! Forward layers and their reverse-mode counterparts.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{axpy, dot, sum};
use super::tensor::{ChannelSequence, ProbabilitySequence};
use crate::error::{Error, Result};

/// Borrowed 3-tap dilated kernel. `taps` is laid out `[out][in][3]` where tap
/// 0 reads `t - d`, tap 1 reads `t` and tap 2 reads `t + d`.
#[derive(Debug, Clone, Copy)]
pub struct KernelWeights<'a> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub taps: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> KernelWeights<'a> {
    pub fn new(out_channels: usize, in_channels: usize, taps: &'a [f64], bias: &'a [f64]) -> Result<Self> {
        if taps.len() != out_channels * in_channels * 3 {
            return Err(Error::shape("KernelWeights", "taps", out_channels * in_channels * 3, taps.len()));
        }
        if bias.len() != out_channels {
            return Err(Error::shape("KernelWeights", "bias", out_channels, bias.len()));
        }
        Ok(KernelWeights { out_channels, in_channels, taps, bias })
    }
}

/// Borrowed `out x in` matrix (row-major) plus bias.
#[derive(Debug, Clone, Copy)]
pub struct PointwiseWeights<'a> {
    pub out_channels: usize,
    pub in_channels: usize,
    pub matrix: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> PointwiseWeights<'a> {
    pub fn new(out_channels: usize, in_channels: usize, matrix: &'a [f64], bias: &'a [f64]) -> Result<Self> {
        if matrix.len() != out_channels * in_channels {
            return Err(Error::shape("PointwiseWeights", "matrix", out_channels * in_channels, matrix.len()));
        }
        if bias.len() != out_channels {
            return Err(Error::shape("PointwiseWeights", "bias", out_channels, bias.len()));
        }
        Ok(PointwiseWeights { out_channels, in_channels, matrix, bias })
    }
}

/// Samples per time tile. Every kernel walks the sequence tile by tile so the
/// rows touched by one tile stay in L1 across the channel loops.
const TILE: usize = 128;

fn tiles(t_len: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..t_len).step_by(TILE).map(move |t0| (t0, (t0 + TILE).min(t_len)))
}

/// Same-length dilated convolution with symmetric zero padding of width `dilation`.
pub fn dilated_conv1d(input: &ChannelSequence, weights: &KernelWeights<'_>, dilation: usize) -> Result<ChannelSequence> {
    if dilation == 0 {
        return Err(Error::InvalidArgument("dilation must be at least 1".into()));
    }
    if input.channels() != weights.in_channels {
        return Err(Error::shape("dilated_conv1d", "input channels", weights.in_channels, input.channels()));
    }
    let t_len = input.len();
    let d = dilation;
    let mut out = ChannelSequence::zeros(weights.out_channels, t_len);
    for (t0, t1) in tiles(t_len) {
        // out[t] reads x[t - d] for t >= d and x[t + d] for t + d < T.
        let left = t0.max(d)..t1;
        let right = t0..t1.min(t_len.saturating_sub(d));
        for o in 0..weights.out_channels {
            let row = out.row_mut(o);
            row[t0..t1].fill(weights.bias[o]);
            for i in 0..weights.in_channels {
                let x = input.row(i);
                let w = &weights.taps[(o * weights.in_channels + i) * 3..][..3];
                if !left.is_empty() {
                    axpy(&mut row[left.clone()], w[0], &x[left.start - d..left.end - d]);
                }
                if !right.is_empty() {
                    axpy(&mut row[right.clone()], w[2], &x[right.start + d..right.end + d]);
                }
                axpy(&mut row[t0..t1], w[1], &x[t0..t1]);
            }
        }
    }
    Ok(out)
}

pub(crate) struct ConvGrads {
    pub input: ChannelSequence,
    pub taps: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn dilated_conv1d_backward(
    input: &ChannelSequence,
    weights: &KernelWeights<'_>,
    dilation: usize,
    grad_out: &ChannelSequence,
) -> ConvGrads {
    let t_len = input.len();
    let d = dilation;
    let (oc, ic) = (weights.out_channels, weights.in_channels);
    let mut g_in = ChannelSequence::zeros(ic, t_len);
    let mut g_taps = vec![0.0; oc * ic * 3];
    let g_bias = (0..oc).map(|o| sum(grad_out.row(o))).collect();
    for (t0, t1) in tiles(t_len) {
        // Same index sets serve both directions: out[t] += w0 * x[t - d]
        // gives dw0 = sum g[t] x[t - d] and dx[s] += w2 * g[s - d] over s in
        // `left`; symmetrically for `right`.
        let left = t0.max(d)..t1;
        let right = t0..t1.min(t_len.saturating_sub(d));
        for o in 0..oc {
            let g = grad_out.row(o);
            for i in 0..ic {
                let x = input.row(i);
                let k = (o * ic + i) * 3;
                let w = &weights.taps[k..k + 3];
                let gi = g_in.row_mut(i);
                if !left.is_empty() {
                    g_taps[k] += dot(&g[left.clone()], &x[left.start - d..left.end - d]);
                    axpy(&mut gi[left.clone()], w[2], &g[left.start - d..left.end - d]);
                }
                if !right.is_empty() {
                    g_taps[k + 2] += dot(&g[right.clone()], &x[right.start + d..right.end + d]);
                    axpy(&mut gi[right.clone()], w[0], &g[right.start + d..right.end + d]);
                }
                g_taps[k + 1] += dot(&g[t0..t1], &x[t0..t1]);
                axpy(&mut gi[t0..t1], w[1], &g[t0..t1]);
            }
        }
    }
    ConvGrads { input: g_in, taps: g_taps, bias: g_bias }
}

/// Per-sample affine map across channels.
pub fn conv1x1(input: &ChannelSequence, weights: &PointwiseWeights<'_>) -> Result<ChannelSequence> {
    if input.channels() != weights.in_channels {
        return Err(Error::shape("conv1x1", "input channels", weights.in_channels, input.channels()));
    }
    let mut out = ChannelSequence::zeros(weights.out_channels, input.len());
    for (t0, t1) in tiles(input.len()) {
        for o in 0..weights.out_channels {
            let row = &mut out.row_mut(o)[t0..t1];
            row.fill(weights.bias[o]);
            for i in 0..weights.in_channels {
                axpy(row, weights.matrix[o * weights.in_channels + i], &input.row(i)[t0..t1]);
            }
        }
    }
    Ok(out)
}

pub(crate) fn conv1x1_backward(
    input: &ChannelSequence,
    weights: &PointwiseWeights<'_>,
    grad_out: &ChannelSequence,
) -> ConvGrads {
    let (oc, ic) = (weights.out_channels, weights.in_channels);
    let mut g_in = ChannelSequence::zeros(ic, input.len());
    let mut g_w = vec![0.0; oc * ic];
    let g_b = (0..oc).map(|o| sum(grad_out.row(o))).collect();
    for (t0, t1) in tiles(input.len()) {
        for o in 0..oc {
            let g = &grad_out.row(o)[t0..t1];
            for i in 0..ic {
                g_w[o * ic + i] += dot(g, &input.row(i)[t0..t1]);
                axpy(&mut g_in.row_mut(i)[t0..t1], weights.matrix[o * ic + i], g);
            }
        }
    }
    ConvGrads { input: g_in, taps: g_w, bias: g_b }
}

pub fn relu(input: &ChannelSequence) -> ChannelSequence {
    let mut out = input.clone();
    for v in out.as_mut_slice() {
        *v = v.max(0.0);
    }
    out
}

pub(crate) fn relu_backward(input: &ChannelSequence, grad_out: &ChannelSequence) -> ChannelSequence {
    let mut g = grad_out.clone();
    for (gv, &x) in g.as_mut_slice().iter_mut().zip(input.as_slice()) {
        if x <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

pub fn add(a: &ChannelSequence, b: &ChannelSequence) -> Result<ChannelSequence> {
    if a.channels() != b.channels() {
        return Err(Error::shape("add", "channels", a.channels(), b.channels()));
    }
    if a.len() != b.len() {
        return Err(Error::shape("add", "length", a.len(), b.len()));
    }
    let mut out = a.clone();
    axpy(out.as_mut_slice(), 1.0, b.as_slice());
    Ok(out)
}

/// Softmax over the channel axis of every sample, with max subtraction.
pub fn softmax_channels(input: &ChannelSequence) -> Result<ProbabilitySequence> {
    let c = input.channels();
    if c < 2 {
        return Err(Error::shape("softmax_channels", "channels (minimum)", 2, c));
    }
    let t_len = input.len();
    let mut max = input.row(0).to_vec();
    for ch in 1..c {
        for (m, &v) in max.iter_mut().zip(input.row(ch)) {
            if v > *m {
                *m = v;
            }
        }
    }
    let mut out = ChannelSequence::zeros(c, t_len);
    let mut total = vec![0.0; t_len];
    for ch in 0..c {
        let row = out.row_mut(ch);
        for ((o, &v), &m) in row.iter_mut().zip(input.row(ch)).zip(&max) {
            *o = libm::exp(v - m);
        }
        axpy(&mut total, 1.0, row);
    }
    for ch in 0..c {
        for (o, &s) in out.row_mut(ch).iter_mut().zip(&total) {
            *o /= s;
        }
    }
    Ok(ProbabilitySequence::from_softmax(out))
}

pub(crate) fn softmax_backward(probs: &ChannelSequence, grad_out: &ChannelSequence) -> ChannelSequence {
    let t_len = probs.len();
    let mut inner = vec![0.0; t_len];
    for ch in 0..probs.channels() {
        for ((s, &p), &g) in inner.iter_mut().zip(probs.row(ch)).zip(grad_out.row(ch)) {
            *s += p * g;
        }
    }
    let mut g_in = ChannelSequence::zeros(probs.channels(), t_len);
    for ch in 0..probs.channels() {
        let (p, g) = (probs.row(ch), grad_out.row(ch));
        for (t, o) in g_in.row_mut(ch).iter_mut().enumerate() {
            *o = p[t] * (g[t] - inner[t]);
        }
    }
    g_in
}
