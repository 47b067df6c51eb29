//! Sample-wise precision/recall/F1 and segmental IoU-F1.
//!
//! Segment matching: predicted segments are visited in temporal order; each
//! is compared with every true segment of its class and takes the one with
//! the highest IoU (earliest on ties). It is a true positive when that IoU
//! reaches the threshold, is nonzero, and the true segment is not matched
//! yet; otherwise a false positive. Unmatched true segments are false
//! negatives. "Others" (class 0) is never reported.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::ClassCatalog;
use crate::error::{Error, Result};

/// Default IoU threshold for segment matching.
pub const IOU_THRESHOLD: f64 = 0.5;

/// A maximal run `[start, end)` of one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    pub class_id: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// True/false positive and false negative counts with derived scores. Empty
/// denominators score 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    pub fn add(&mut self, other: &Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class_id: usize,
    pub name: String,
    /// Class occurs in the ground truth or the prediction.
    pub present: bool,
    pub samplewise: Counts,
    pub segmental: Counts,
}

/// Per-class metrics, excluding "others".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub threshold: f64,
    pub classes: Vec<ClassMetrics>,
}

impl MetricsReport {
    pub fn class(&self, class_id: usize) -> Option<&ClassMetrics> {
        self.classes.iter().find(|c| c.class_id == class_id)
    }

    /// Sums counts class by class (micro-averaging across reports).
    pub fn merge(&mut self, other: &MetricsReport) -> Result<()> {
        if self.classes.len() != other.classes.len() || self.threshold != other.threshold {
            return Err(Error::InvalidArgument("reports disagree on classes or threshold".into()));
        }
        for (a, b) in self.classes.iter_mut().zip(&other.classes) {
            if a.class_id != b.class_id {
                return Err(Error::InvalidArgument("reports disagree on class order".into()));
            }
            a.present |= b.present;
            a.samplewise.add(&b.samplewise);
            a.segmental.add(&b.segmental);
        }
        Ok(())
    }

    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Result<MetricsReport> {
        let mut it = reports.into_iter();
        let mut acc = it
            .next()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("no reports to aggregate".into()))?;
        for r in it {
            acc.merge(r)?;
        }
        Ok(acc)
    }

    pub fn mean_segmental_f1(&self) -> f64 {
        mean(self.classes.iter().map(|c| c.segmental.f1()))
    }

    pub fn mean_samplewise_f1(&self) -> f64 {
        mean(self.classes.iter().map(|c| c.samplewise.f1()))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn check_lengths(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::shape("metrics", "prediction length", truth.len(), pred.len()));
    }
    Ok(())
}

/// Sample-wise counts for every class id in `1..classes`.
pub fn samplewise_counts(truth: &[usize], pred: &[usize], classes: usize) -> Result<Vec<Counts>> {
    check_lengths(truth, pred)?;
    let mut counts = vec![Counts::default(); classes];
    for (&y, &p) in truth.iter().zip(pred) {
        if y >= classes || p >= classes {
            return Err(Error::UnknownClass { scale: "metrics", id: y.max(p) });
        }
        if y == p {
            counts[y].tp += 1;
        } else {
            counts[p].fp += 1;
            counts[y].fn_ += 1;
        }
    }
    Ok(counts.into_iter().skip(1).collect())
}

/// Maximal constant runs with class != 0, sorted and disjoint.
pub fn extract_segments(track: &[usize]) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut start = 0;
    for t in 1..=track.len() {
        if t == track.len() || track[t] != track[start] {
            if track[start] != 0 {
                out.push(Segment { class_id: track[start], start, end: t });
            }
            start = t;
        }
    }
    out
}

/// `|a ∩ b| / |a ∪ b|` over sample indices.
pub fn segment_iou(a: &Segment, b: &Segment) -> Result<f64> {
    if a.class_id != b.class_id {
        return Err(Error::InvalidArgument(alloc::format!(
            "IoU between different classes {} and {}",
            a.class_id, b.class_id
        )));
    }
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    let union = a.len() + b.len() - inter;
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Segment-level counts for every class id in `1..classes`.
pub fn segmental_counts(truth: &[usize], pred: &[usize], classes: usize, threshold: f64) -> Result<Vec<Counts>> {
    check_lengths(truth, pred)?;
    let true_segs = extract_segments(truth);
    let pred_segs = extract_segments(pred);
    let mut counts = vec![Counts::default(); classes];
    for s in true_segs.iter().chain(&pred_segs) {
        if s.class_id >= classes {
            return Err(Error::UnknownClass { scale: "metrics", id: s.class_id });
        }
    }
    let mut matched = vec![false; true_segs.len()];
    for p in &pred_segs {
        let mut best: Option<(usize, f64)> = None;
        for (j, t) in true_segs.iter().enumerate() {
            if t.class_id != p.class_id {
                continue;
            }
            let iou = segment_iou(p, t)?;
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((j, iou));
            }
        }
        match best {
            Some((j, iou)) if iou > 0.0 && iou >= threshold && !matched[j] => {
                matched[j] = true;
                counts[p.class_id].tp += 1;
            }
            _ => counts[p.class_id].fp += 1,
        }
    }
    for (t, m) in true_segs.iter().zip(&matched) {
        if !m {
            counts[t.class_id].fn_ += 1;
        }
    }
    Ok(counts.into_iter().skip(1).collect())
}

/// Sample-wise and segmental metrics for one truth/prediction pair.
pub fn evaluate_tracks(truth: &[usize], pred: &[usize], catalog: &ClassCatalog, threshold: f64) -> Result<MetricsReport> {
    let c = catalog.len();
    let sw = samplewise_counts(truth, pred, c)?;
    let sg = segmental_counts(truth, pred, c, threshold)?;
    let mut present = vec![false; c];
    for &k in truth.iter().chain(pred) {
        present[k] = true;
    }
    let classes = (1..c)
        .map(|k| ClassMetrics {
            class_id: k,
            name: catalog.names[k].into(),
            present: present[k],
            samplewise: sw[k - 1],
            segmental: sg[k - 1],
        })
        .collect();
    Ok(MetricsReport { threshold, classes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MACRO;

    #[test]
    fn perfect_prediction_scores_one() {
        let track = [0, 1, 1, 0, 2, 2, 2, 0, 4];
        let r = evaluate_tracks(&track, &track, &MACRO, 0.5).unwrap();
        for c in &r.classes {
            if c.present {
                assert_eq!(c.samplewise.f1(), 1.0);
                assert_eq!(c.segmental.f1(), 1.0);
            } else {
                assert_eq!(c.samplewise.f1(), 0.0);
            }
        }
        assert!(!r.class(3).unwrap().present);
    }

    #[test]
    fn hand_counted_two_thirds() {
        // class 1: TP at t=0,1; FP at t=2; FN at t=3.
        let truth = [1, 1, 0, 1, 0, 0];
        let pred = [1, 1, 1, 0, 0, 0];
        let c = samplewise_counts(&truth, &pred, 2).unwrap()[0];
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
        for v in [c.precision(), c.recall(), c.f1()] {
            assert!((v - 2.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn segments_are_maximal_runs() {
        assert!(extract_segments(&[0, 0, 0]).is_empty());
        assert_eq!(
            extract_segments(&[0, 1, 1, 0, 1]),
            vec![Segment { class_id: 1, start: 1, end: 3 }, Segment { class_id: 1, start: 4, end: 5 }]
        );
        assert_eq!(extract_segments(&[]), vec![]);
    }

    #[test]
    fn iou_values() {
        let a = Segment { class_id: 1, start: 0, end: 10 };
        let b = Segment { class_id: 1, start: 5, end: 15 };
        let c = Segment { class_id: 1, start: 20, end: 25 };
        assert_eq!(segment_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(segment_iou(&a, &c).unwrap(), 0.0);
        assert!((segment_iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(segment_iou(&a, &Segment { class_id: 2, ..a }).is_err());
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(samplewise_counts(&[0, 1], &[0], 2).is_err());
        assert!(segmental_counts(&[0, 1], &[0], 2, 0.5).is_err());
    }

    #[test]
    fn merge_adds_counts() {
        let a = evaluate_tracks(&[1, 1, 0], &[1, 0, 0], &MACRO, 0.5).unwrap();
        let b = evaluate_tracks(&[0, 2, 2], &[0, 2, 1], &MACRO, 0.5).unwrap();
        let m = MetricsReport::aggregate([&a, &b]).unwrap();
        let c1 = m.class(1).unwrap();
        assert_eq!(c1.samplewise.tp, a.class(1).unwrap().samplewise.tp + b.class(1).unwrap().samplewise.tp);
        assert_eq!(c1.samplewise.fp, 1);
    }
}
