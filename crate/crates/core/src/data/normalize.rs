use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numerics::ChannelSequence;

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const STD_FLOOR: f64 = 1e-8;

impl Normalizer {
    pub fn identity(channels: usize) -> Self {
        Normalizer { mean: alloc::vec![0.0; channels], std: alloc::vec![1.0; channels] }
    }

    /// Statistics over the masked-in samples of every window.
    pub fn fit<'a>(windows: impl IntoIterator<Item = (&'a ChannelSequence, &'a [bool])>) -> Result<Self> {
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        let mut count = 0usize;
        for (seq, mask) in windows {
            if sum.is_empty() {
                sum = alloc::vec![0.0; seq.channels()];
                sq = alloc::vec![0.0; seq.channels()];
            }
            if seq.channels() != sum.len() {
                return Err(Error::shape("Normalizer::fit", "channels", sum.len(), seq.channels()));
            }
            for c in 0..seq.channels() {
                for (&v, &m) in seq.row(c).iter().zip(mask) {
                    if m {
                        sum[c] += v;
                        sq[c] += v * v;
                    }
                }
            }
            count += mask.iter().take(seq.len()).filter(|&&m| m).count();
        }
        if count == 0 {
            return Err(Error::InvalidArgument("no samples to fit normalization statistics".into()));
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| libm::sqrt((q / n - m * m).max(0.0)).max(STD_FLOOR))
            .collect();
        Ok(Normalizer { mean, std })
    }

    pub fn apply(&self, seq: &ChannelSequence) -> Result<ChannelSequence> {
        if seq.channels() != self.mean.len() {
            return Err(Error::shape("Normalizer::apply", "channels", self.mean.len(), seq.channels()));
        }
        let mut out = seq.clone();
        for c in 0..seq.channels() {
            let (m, s) = (self.mean[c], self.std[c]);
            for v in out.row_mut(c) {
                *v = (*v - m) / s;
            }
        }
        Ok(out)
    }

    /// Like [`apply`](Self::apply) but keeps masked-out samples at zero.
    pub fn apply_masked(&self, seq: &ChannelSequence, mask: &[bool]) -> Result<ChannelSequence> {
        let mut out = self.apply(seq)?;
        for c in 0..out.channels() {
            for (v, &m) in out.row_mut(c).iter_mut().zip(mask) {
                if !m {
                    *v = 0.0;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_ignores_masked_samples() {
        let s = ChannelSequence::from_rows(&[[1.0, 3.0, 100.0]]).unwrap();
        let mask = [true, true, false];
        let n = Normalizer::fit([(&s, &mask[..])]).unwrap();
        assert_eq!(n.mean, alloc::vec![2.0]);
        assert_eq!(n.std, alloc::vec![1.0]);
        let z = n.apply_masked(&s, &mask).unwrap();
        assert_eq!(z.row(0), &[-1.0, 1.0, 0.0]);
    }
}
