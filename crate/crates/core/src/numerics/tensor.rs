use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Columns of a [`ProbabilitySequence`] sum to one within this tolerance.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

/// A `channels x len` block of samples stored channel-major (each channel is
/// one contiguous row). The shape is fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSequence {
    channels: usize,
    len: usize,
    data: Vec<f64>,
}

impl ChannelSequence {
    pub fn new(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidArgument("sequence needs at least one channel".into()));
        }
        if len == 0 {
            return Err(Error::InvalidArgument("sequence needs at least one sample".into()));
        }
        if data.len() != channels * len {
            return Err(Error::shape("ChannelSequence::new", "data length", channels * len, data.len()));
        }
        Ok(ChannelSequence { channels, len, data })
    }

    pub fn zeros(channels: usize, len: usize) -> Self {
        assert!(channels > 0 && len > 0, "empty sequence");
        ChannelSequence { channels, len, data: vec![0.0; channels * len] }
    }

    pub fn filled(channels: usize, len: usize, value: f64) -> Self {
        let mut s = Self::zeros(channels, len);
        s.data.fill(value);
        s
    }

    /// Builds a sequence from equally long channel rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let len = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * len);
        for r in rows {
            let r = r.as_ref();
            if r.len() != len {
                return Err(Error::shape("ChannelSequence::from_rows", "row length", len, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), len, data)
    }

    /// Builds a sequence from per-sample columns (`columns[t][c]`).
    pub fn from_columns<R: AsRef<[f64]>>(columns: &[R]) -> Result<Self> {
        let channels = columns.first().map(|c| c.as_ref().len()).unwrap_or(0);
        let len = columns.len();
        let mut data = vec![0.0; channels * len];
        for (t, col) in columns.iter().enumerate() {
            let col = col.as_ref();
            if col.len() != channels {
                return Err(Error::shape("ChannelSequence::from_columns", "column height", channels, col.len()));
            }
            for (c, &v) in col.iter().enumerate() {
                data[c * len + t] = v;
            }
        }
        Self::new(channels, len, data)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, channel: usize, t: usize) -> f64 {
        self.data[channel * self.len + t]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, t: usize, value: f64) {
        self.data[channel * self.len + t] = value;
    }

    #[inline]
    pub fn row(&self, channel: usize) -> &[f64] {
        &self.data[channel * self.len..(channel + 1) * self.len]
    }

    #[inline]
    pub fn row_mut(&mut self, channel: usize) -> &mut [f64] {
        &mut self.data[channel * self.len..(channel + 1) * self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.len)
    }

    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.channels).map(|c| self.get(c, t)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copies samples `[start, start + len)`; samples past the end are zero.
    pub fn window(&self, start: usize, len: usize) -> ChannelSequence {
        let mut out = ChannelSequence::zeros(self.channels, len);
        let avail = self.len.saturating_sub(start).min(len);
        for c in 0..self.channels {
            out.row_mut(c)[..avail].copy_from_slice(&self.row(c)[start..start + avail]);
        }
        out
    }

    pub fn same_shape(&self, other: &ChannelSequence) -> bool {
        self.channels == other.channels && self.len == other.len
    }
}

/// Per-sample class distributions: every column is nonnegative and sums to
/// one within [`PROBABILITY_TOLERANCE`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilitySequence(ChannelSequence);

impl ProbabilitySequence {
    /// Validates the column invariant.
    pub fn new(seq: ChannelSequence) -> Result<Self> {
        for t in 0..seq.len() {
            let mut s = 0.0;
            for c in 0..seq.channels() {
                let p = seq.get(c, t);
                if !(p >= 0.0) {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "negative or NaN probability at class {c}, sample {t}"
                    )));
                }
                s += p;
            }
            if (s - 1.0).abs() > PROBABILITY_TOLERANCE {
                return Err(Error::InvalidArgument(alloc::format!(
                    "probability column {t} sums to {s}"
                )));
            }
        }
        Ok(ProbabilitySequence(seq))
    }

    pub(crate) fn from_softmax(seq: ChannelSequence) -> Self {
        ProbabilitySequence(seq)
    }

    /// One-hot columns for a class track.
    pub fn one_hot(track: &[usize], classes: usize) -> Result<Self> {
        let mut seq = ChannelSequence::zeros(classes, track.len().max(1));
        if track.is_empty() {
            return Err(Error::InvalidArgument("empty track".into()));
        }
        for (t, &c) in track.iter().enumerate() {
            if c >= classes {
                return Err(Error::InvalidArgument(alloc::format!(
                    "class {c} out of range for {classes} classes"
                )));
            }
            seq.set(c, t, 1.0);
        }
        Ok(ProbabilitySequence(seq))
    }

    pub fn class_count(&self) -> usize {
        self.0.channels()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn prob(&self, class: usize, t: usize) -> f64 {
        self.0.get(class, t)
    }

    pub fn as_sequence(&self) -> &ChannelSequence {
        &self.0
    }

    pub fn into_sequence(self) -> ChannelSequence {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(ChannelSequence::new(2, 3, vec![0.0; 5]).is_err());
        assert!(ChannelSequence::new(0, 3, vec![]).is_err());
        assert!(ChannelSequence::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn rows_and_columns_agree() {
        let s = ChannelSequence::from_columns(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        assert_eq!(s.channels(), 2);
        assert_eq!(s.row(0), &[1.0, 3.0, 5.0]);
        assert_eq!(s.column(1), vec![3.0, 4.0]);
    }

    #[test]
    fn window_zero_pads_past_the_end() {
        let s = ChannelSequence::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let w = s.window(1, 4);
        assert_eq!(w.row(0), &[2.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn probability_columns_are_checked() {
        let ok = ChannelSequence::from_columns(&[[0.25, 0.75]]).unwrap();
        assert!(ProbabilitySequence::new(ok).is_ok());
        let bad = ChannelSequence::from_columns(&[[0.3, 0.75]]).unwrap();
        assert!(ProbabilitySequence::new(bad).is_err());
    }
}
