use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::recording::Recording;
use crate::error::{Error, Result};
use crate::numerics::ChannelSequence;

/// Training window length: 40 s at 100 Hz.
pub const SLICE_LEN: usize = 4000;
/// Distance between consecutive window starts (50 % overlap).
pub const SLICE_HOP: usize = 2000;

/// A fixed-length training window. Samples past the end of the recording are
/// zero-filled and masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub start: usize,
    pub imu: ChannelSequence,
    pub micro: Vec<usize>,
    pub macro_: Vec<usize>,
    /// `true` where the sample is real (counts toward every loss term).
    pub mask: Vec<bool>,
    /// `mask` further restricted to samples whose micro label is supervised.
    pub micro_mask: Vec<bool>,
}

impl Slice {
    pub fn valid_len(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSet {
    pub recording_id: String,
    pub recording_len: usize,
    pub slices: Vec<Slice>,
}

impl SliceSet {
    /// Restricts micro supervision to samples where `keep` is true.
    /// `keep` is indexed by recording sample.
    pub fn restrict_micro(&mut self, keep: &[bool]) -> Result<()> {
        if keep.len() != self.recording_len {
            return Err(Error::shape("SliceSet::restrict_micro", "mask length", self.recording_len, keep.len()));
        }
        for s in &mut self.slices {
            for (k, m) in s.micro_mask.iter_mut().enumerate() {
                let t = s.start + k;
                *m = *m && t < keep.len() && keep[t];
            }
        }
        Ok(())
    }
}

/// Window start positions for a recording of `len` samples. A window is
/// emitted only if it contains samples the previous window did not cover.
pub fn slice_starts(len: usize) -> Vec<usize> {
    let mut starts = vec![0];
    let mut s = SLICE_HOP;
    while s + (SLICE_LEN - SLICE_HOP) < len {
        starts.push(s);
        s += SLICE_HOP;
    }
    starts
}

pub fn slice_recording(rec: &Recording) -> SliceSet {
    let t_len = rec.len();
    let slices = slice_starts(t_len)
        .into_iter()
        .map(|start| {
            let avail = (t_len - start).min(SLICE_LEN);
            let mut micro = vec![0; SLICE_LEN];
            let mut macro_ = vec![0; SLICE_LEN];
            micro[..avail].copy_from_slice(&rec.micro_track()[start..start + avail]);
            macro_[..avail].copy_from_slice(&rec.macro_track()[start..start + avail]);
            let mut mask = vec![false; SLICE_LEN];
            mask[..avail].fill(true);
            Slice {
                start,
                imu: rec.imu().window(start, SLICE_LEN),
                micro,
                macro_,
                micro_mask: mask.clone(),
                mask,
            }
        })
        .collect();
    SliceSet { recording_id: rec.id().into(), recording_len: t_len, slices }
}

/// Rebuilds the label tracks from a slice set by majority vote over the
/// windows covering each sample.
pub fn reconstruct_tracks(set: &SliceSet, micro_classes: usize, macro_classes: usize) -> (Vec<usize>, Vec<usize>) {
    let n = set.recording_len;
    let mut micro_votes = vec![vec![0u32; micro_classes]; n];
    let mut macro_votes = vec![vec![0u32; macro_classes]; n];
    for s in &set.slices {
        for k in 0..SLICE_LEN {
            if s.mask[k] {
                micro_votes[s.start + k][s.micro[k]] += 1;
                macro_votes[s.start + k][s.macro_[k]] += 1;
            }
        }
    }
    let pick = |votes: &Vec<u32>| {
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best
    };
    (micro_votes.iter().map(pick).collect(), macro_votes.iter().map(pick).collect())
}
