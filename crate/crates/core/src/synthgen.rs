//! Deterministic synthetic IMU recordings with dual-scale ground truth.
//!
//! A recording alternates background (daily-living) blocks with exercise
//! blocks. Each exercise block is a series of half-sine repetitions separated
//! by unlabeled pauses; its macro segment spans the first to the last
//! repetition. Background blocks carry AR(1) noise and, optionally, isolated
//! single repetitions ("confusers") that are labeled "others" at both scales.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{AnnotationSegment, ClassCatalog, Recording, Scale, Scenario, MICRO};
use crate::error::{Error, Result};
use crate::metrics::Segment;
use crate::numerics::ChannelSequence;
use crate::rng::{rng_for, Rng};
use crate::{IMU_CHANNELS, SAMPLE_RATE_HZ};

/// Shape of one micro-class repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifSpec {
    pub micro_class: usize,
    /// Per-channel sign/weight of the pulse (ax, ay, az, gx, gy, gz).
    pub signature: [f64; IMU_CHANNELS],
    /// Duration range in seconds, within [0.5, 4].
    pub duration_s: [f64; 2],
    /// Extra white noise added on the signature channels during the pulse.
    pub noise_sigma: f64,
}

impl MotifSpec {
    fn validate(&self) -> Result<()> {
        let [lo, hi] = self.duration_s;
        if !(0.5..=4.0).contains(&lo) || !(0.5..=4.0).contains(&hi) || lo > hi {
            return Err(Error::InvalidArgument(format!(
                "motif {} duration range {:?} must lie within [0.5, 4] s",
                self.micro_class, self.duration_s
            )));
        }
        if !self.signature.iter().all(|v| v.is_finite()) || !(self.noise_sigma >= 0.0) {
            return Err(Error::InvalidArgument(format!("motif {} has non-finite amplitudes", self.micro_class)));
        }
        if self.micro_class == 0 || self.micro_class >= MICRO.len() {
            return Err(Error::UnknownClass { scale: "micro", id: self.micro_class });
        }
        Ok(())
    }

    pub fn signature_channels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..IMU_CHANNELS).filter(|&c| self.signature[c] != 0.0)
    }
}

pub fn default_motifs() -> Vec<MotifSpec> {
    let m = |micro_class, signature, duration_s| MotifSpec { micro_class, signature, duration_s, noise_sigma: 0.02 };
    vec![
        m(1, [0.0, 0.0, 1.0, 0.0, 1.0, 0.0], [0.8, 1.4]),
        m(2, [0.0, 0.0, -1.0, 1.0, 0.0, 0.0], [1.0, 1.8]),
        m(3, [1.0, 0.0, 0.0, 0.0, -1.0, 0.0], [1.5, 2.5]),
        m(4, [1.0, 0.0, 1.0, -1.0, 0.0, 0.0], [1.0, 1.6]),
        m(5, [-1.0, 0.0, -1.0, 1.0, 0.0, 0.0], [1.2, 1.8]),
    ]
}

/// Repetitions per macro segment. Chair rising counts sit-to-stand /
/// stand-to-sit pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepCounts {
    pub ankle_plantarflexors: usize,
    pub knee_bends: usize,
    pub abdominal_muscles: usize,
    pub chair_rising_pairs: usize,
}

impl Default for RepCounts {
    /// Micro-to-macro segment ratios of the reference cohort: 970/75,
    /// 748/75, 202/35 and 369/72 rounded.
    fn default() -> Self {
        RepCounts { ankle_plantarflexors: 13, knee_bends: 10, abdominal_muscles: 6, chair_rising_pairs: 5 }
    }
}

impl RepCounts {
    fn micro_sequence(&self, macro_class: usize) -> Vec<usize> {
        match macro_class {
            1 => vec![1; self.ankle_plantarflexors],
            2 => vec![2; self.knee_bends],
            3 => vec![3; self.abdominal_muscles],
            4 => (0..self.chair_rising_pairs).flat_map(|_| [4, 5]).collect(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub seed: u64,
    /// Lab subjects, named `lab01`, `lab02`, ...
    pub subjects: usize,
    /// Home subjects, named `home01`, ...
    pub home_subjects: usize,
    pub recordings_per_subject: usize,
    /// Macro classes performed, one block each per recording.
    pub blocks: Vec<usize>,
    /// Shuffle block order per recording.
    pub shuffle_blocks: bool,
    pub reps: RepCounts,
    pub pause_s: [f64; 2],
    pub background_s: [f64; 2],
    /// Longest allowed exercise block in seconds.
    pub max_block_s: f64,
    /// White sensor noise.
    pub noise_sigma: f64,
    /// Marginal standard deviation of the AR(1) daily-living process.
    pub adl_sigma: f64,
    pub adl_correlation: f64,
    /// Pulse power over background power on each signature channel, in dB.
    pub snr_db: f64,
    /// Isolated repetitions embedded per background block.
    pub confusers_per_background: usize,
    /// Daily-living movement bursts per minute of background: half-sine
    /// pulses with random channel weights, labeled "others".
    pub adl_bursts_per_minute: f64,
    /// Duration range of daily-living bursts in seconds.
    pub adl_burst_s: [f64; 2],
    /// Minimum spacing of a confuser from block edges and other confusers.
    pub confuser_margin_s: f64,
    /// Per-subject, per-class amplitude scale drawn from `1 ± amplitude_jitter`.
    pub amplitude_jitter: f64,
    /// Per-subject tempo scale drawn from `1 ± duration_jitter`.
    pub duration_jitter: f64,
    /// Per-subject pause scale drawn from `1 ± pause_jitter`.
    pub pause_jitter: f64,
    /// Background blocks of home recordings are this much longer.
    pub home_background_factor: f64,
    pub motifs: Vec<MotifSpec>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            seed: 0,
            subjects: 10,
            home_subjects: 0,
            recordings_per_subject: 1,
            blocks: vec![1, 2, 3, 4],
            shuffle_blocks: true,
            reps: RepCounts::default(),
            pause_s: [0.5, 1.2],
            background_s: [16.0, 24.0],
            max_block_s: 60.0,
            noise_sigma: 0.05,
            adl_sigma: 0.1,
            adl_correlation: 0.95,
            snr_db: 10.0,
            confusers_per_background: 2,
            adl_bursts_per_minute: 6.0,
            adl_burst_s: [0.5, 4.0],
            confuser_margin_s: 3.0,
            amplitude_jitter: 0.2,
            duration_jitter: 0.15,
            pause_jitter: 0.2,
            home_background_factor: 1.5,
            motifs: default_motifs(),
        }
    }
}

fn secs(s: f64) -> usize {
    libm::round(s * SAMPLE_RATE_HZ as f64) as usize
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] > 0.0 && r[0] <= r[1] && r[1].is_finite()) {
        return Err(Error::InvalidArgument(format!("{name} range {r:?} must be positive and ordered")));
    }
    Ok(())
}

impl ScenarioSpec {
    pub fn motif(&self, micro_class: usize) -> Result<&MotifSpec> {
        self.motifs
            .iter()
            .find(|m| m.micro_class == micro_class)
            .ok_or(Error::UnknownClass { scale: "micro", id: micro_class })
    }

    /// Background power per channel: white noise plus the AR(1) process.
    pub fn background_power(&self) -> f64 {
        self.noise_sigma * self.noise_sigma + self.adl_sigma * self.adl_sigma
    }

    /// Pulse peak amplitude before per-subject scaling. A half-sine of peak
    /// `A` has mean power `A^2 / 2`.
    pub fn base_amplitude(&self) -> f64 {
        libm::sqrt(2.0 * libm::pow(10.0, self.snr_db / 10.0) * self.background_power())
    }

    pub fn validate(&self) -> Result<()> {
        check_range("pause_s", self.pause_s)?;
        check_range("background_s", self.background_s)?;
        check_range("adl_burst_s", self.adl_burst_s)?;
        if !(self.adl_bursts_per_minute >= 0.0 && self.adl_bursts_per_minute.is_finite()) {
            return Err(Error::InvalidArgument("adl_bursts_per_minute must be finite and non-negative".into()));
        }
        for (name, v) in [
            ("amplitude_jitter", self.amplitude_jitter),
            ("duration_jitter", self.duration_jitter),
            ("pause_jitter", self.pause_jitter),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must be in [0, 1), got {v}")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.adl_sigma >= 0.0 && self.background_power() > 0.0) {
            return Err(Error::InvalidArgument("background noise must have positive power".into()));
        }
        if !(0.0..1.0).contains(&self.adl_correlation) {
            return Err(Error::InvalidArgument("adl_correlation must be in [0, 1)".into()));
        }
        if !self.snr_db.is_finite() || !(self.home_background_factor >= 1.0) || !(self.confuser_margin_s >= 0.0) {
            return Err(Error::InvalidArgument("snr_db, home_background_factor or confuser_margin_s out of range".into()));
        }
        if self.recordings_per_subject == 0 {
            return Err(Error::InvalidArgument("recordings_per_subject must be positive".into()));
        }
        for m in &self.motifs {
            m.validate()?;
        }
        for c in 1..MICRO.len() {
            self.motif(c)?;
        }
        let max_dur = |c: usize| -> Result<f64> { Ok(self.motif(c)?.duration_s[1] * (1.0 + self.duration_jitter)) };
        let max_pause = self.pause_s[1] * (1.0 + self.pause_jitter);
        for &b in &self.blocks {
            if b == 0 || b >= crate::data::MACRO.len() {
                return Err(Error::UnknownClass { scale: "macro", id: b });
            }
            let seq = self.reps.micro_sequence(b);
            if seq.is_empty() {
                return Err(Error::Infeasible(format!("block {b} has zero repetitions")));
            }
            let mut need = 0.0;
            for &c in &seq {
                need += max_dur(c)?;
            }
            need += max_pause * (seq.len() - 1) as f64;
            if need > self.max_block_s {
                return Err(Error::Infeasible(format!(
                    "block {b} needs up to {need:.1} s for {} repetitions and pauses but max_block_s is {}",
                    seq.len(),
                    self.max_block_s
                )));
            }
        }
        let longest = (1..MICRO.len()).map(max_dur).collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max);
        let k = self.confusers_per_background as f64;
        let need = k * longest + (k + 1.0) * self.confuser_margin_s;
        if self.confusers_per_background > 0 && need > self.background_s[0] {
            return Err(Error::Infeasible(format!(
                "{} confusers need {need:.1} s of background but blocks can be {} s",
                self.confusers_per_background, self.background_s[0]
            )));
        }
        Ok(())
    }

    /// Subject ids with their scenario, lab first.
    pub fn subject_ids(&self) -> Vec<(String, Scenario)> {
        let mut v: Vec<(String, Scenario)> =
            (1..=self.subjects).map(|k| (format!("lab{k:02}"), Scenario::Lab)).collect();
        v.extend((1..=self.home_subjects).map(|k| (format!("home{k:02}"), Scenario::Home)));
        v
    }

    pub fn recording_id(subject: &str, index: usize) -> String {
        format!("{subject}_r{index}")
    }
}

/// Per-subject variability drawn once from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectProfile {
    /// Amplitude scale per micro class (index 0 unused).
    pub amplitude_scale: [f64; 6],
    pub tempo_scale: f64,
    pub pause_scale: f64,
}

pub fn subject_profile(spec: &ScenarioSpec, subject: &str) -> SubjectProfile {
    let mut rng = rng_for(spec.seed, &format!("{subject}/profile"));
    let mut jitter = |j: f64| if j > 0.0 { 1.0 + rng.random_range(-j..=j) } else { 1.0 };
    let mut amplitude_scale = [1.0; 6];
    for a in amplitude_scale.iter_mut().skip(1) {
        *a = jitter(spec.amplitude_jitter);
    }
    let tempo_scale = jitter(spec.duration_jitter);
    let pause_scale = jitter(spec.pause_jitter);
    SubjectProfile { amplitude_scale, tempo_scale, pause_scale }
}

/// A generated recording with its hidden structure.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedRecording {
    pub recording: Recording,
    /// Isolated repetitions placed in background blocks (labeled "others").
    pub confusers: Vec<Segment>,
    /// Every repetition inside an exercise block.
    pub repetitions: Vec<Segment>,
    pub profile: SubjectProfile,
}

struct Pulse {
    start: usize,
    len: usize,
    signature: [f64; IMU_CHANNELS],
    amplitude: f64,
    noise_sigma: f64,
}

fn uniform(rng: &mut Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Generates recording `index` of `subject`.
pub fn generate_recording(spec: &ScenarioSpec, subject: &str, index: usize) -> Result<GeneratedRecording> {
    spec.validate()?;
    let scenario = spec
        .subject_ids()
        .into_iter()
        .find(|(s, _)| s == subject)
        .map(|(_, sc)| sc)
        .ok_or_else(|| Error::InvalidArgument(format!("subject {subject:?} is not part of the scenario")))?;
    if index >= spec.recordings_per_subject {
        return Err(Error::InvalidArgument(format!("recording index {index} out of range")));
    }
    let profile = subject_profile(spec, subject);
    let id = ScenarioSpec::recording_id(subject, index);
    let mut rng = rng_for(spec.seed, &format!("{id}/layout"));
    let bg_factor = if scenario == Scenario::Home { spec.home_background_factor } else { 1.0 };

    let mut order = spec.blocks.clone();
    if spec.shuffle_blocks {
        order.shuffle(&mut rng);
    }

    let duration = |rng: &mut Rng, c: usize| -> Result<usize> {
        let m = spec.motif(c)?;
        let s = (uniform(rng, m.duration_s) * profile.tempo_scale).clamp(0.5, 4.0);
        Ok(secs(s).max(1))
    };

    let base = spec.base_amplitude();
    let motif_pulse = |c: usize, start: usize, len: usize| -> Result<Pulse> {
        let m = spec.motif(c)?;
        Ok(Pulse { start, len, signature: m.signature, amplitude: base * profile.amplitude_scale[c], noise_sigma: m.noise_sigma })
    };
    let mut pulses: Vec<Pulse> = Vec::new();
    let mut backgrounds: Vec<(usize, usize)> = Vec::new();
    let mut confusers = Vec::new();
    let mut repetitions = Vec::new();
    let mut segments = Vec::new();
    let mut cursor = 0usize;

    let mut background = |rng: &mut Rng, cursor: &mut usize, pulses: &mut Vec<Pulse>| -> Result<()> {
        let len = secs(uniform(rng, spec.background_s) * bg_factor);
        backgrounds.push((*cursor, len));
        let k = spec.confusers_per_background;
        if k > 0 {
            let margin = secs(spec.confuser_margin_s);
            let mut items = Vec::with_capacity(k);
            for _ in 0..k {
                let c = rng.random_range(1..MICRO.len());
                items.push((c, duration(rng, c)?));
            }
            let used: usize = items.iter().map(|x| x.1).sum::<usize>() + (k + 1) * margin;
            let slack = len.saturating_sub(used);
            let mut cuts: Vec<usize> = (0..k).map(|_| rng.random_range(0..=slack)).collect();
            cuts.sort_unstable();
            let mut pos = *cursor;
            let mut prev_cut = 0;
            for ((c, n), cut) in items.into_iter().zip(cuts) {
                pos += margin + (cut - prev_cut);
                prev_cut = cut;
                pulses.push(motif_pulse(c, pos, n)?);
                confusers.push(Segment { class_id: c, start: pos, end: pos + n });
                pos += n;
            }
        }
        *cursor += len;
        Ok(())
    };

    background(&mut rng, &mut cursor, &mut pulses)?;
    for &block in &order {
        let seq = spec.reps.micro_sequence(block);
        let block_start = cursor;
        for (r, &c) in seq.iter().enumerate() {
            if r > 0 {
                let pause = uniform(&mut rng, spec.pause_s) * profile.pause_scale;
                cursor += secs(pause).max(1);
            }
            let n = duration(&mut rng, c)?;
            pulses.push(motif_pulse(c, cursor, n)?);
            segments.push(AnnotationSegment { scale: Scale::Micro, class_id: c, start: cursor, end: cursor + n });
            repetitions.push(Segment { class_id: c, start: cursor, end: cursor + n });
            cursor += n;
        }
        segments.push(AnnotationSegment { scale: Scale::Macro, class_id: block, start: block_start, end: cursor });
        background(&mut rng, &mut cursor, &mut pulses)?;
    }

    let t_len = cursor;
    let mut imu = ChannelSequence::zeros(IMU_CHANNELS, t_len);
    let mut noise_rng = rng_for(spec.seed, &format!("{id}/signal"));
    let innov = spec.adl_sigma * libm::sqrt(1.0 - spec.adl_correlation * spec.adl_correlation);
    for ch in 0..IMU_CHANNELS {
        let z0: f64 = StandardNormal.sample(&mut noise_rng);
        let mut ar = spec.adl_sigma * z0;
        let row = imu.row_mut(ch);
        for v in row.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut noise_rng);
            let w: f64 = StandardNormal.sample(&mut noise_rng);
            ar = spec.adl_correlation * ar + innov * e;
            *v = ar + spec.noise_sigma * w;
        }
    }
    let mut adl_rng = rng_for(spec.seed, &format!("{id}/adl"));
    let gap = secs(0.3);
    let mut occupied: Vec<(usize, usize)> = confusers.iter().map(|c| (c.start, c.end)).collect();
    for &(start, len) in &backgrounds {
        let expected = spec.adl_bursts_per_minute * len as f64 / (60.0 * SAMPLE_RATE_HZ as f64);
        let count = libm::floor(expected + adl_rng.random_range(0.0..1.0)) as usize;
        for _ in 0..count {
            let n = secs(uniform(&mut adl_rng, spec.adl_burst_s)).max(1);
            let mut signature = [0.0; IMU_CHANNELS];
            for w in &mut signature {
                *w = adl_rng.random_range(-1.0..1.0);
            }
            let amplitude = base * adl_rng.random_range(0.5..1.2);
            if n + 2 * gap >= len {
                continue;
            }
            // A few placement attempts; bursts never touch confusers or each other.
            for _ in 0..8 {
                let s0 = start + gap + adl_rng.random_range(0..len - n - 2 * gap);
                if occupied.iter().all(|&(a, b)| s0 + n + gap <= a || b + gap <= s0) {
                    occupied.push((s0, s0 + n));
                    pulses.push(Pulse { start: s0, len: n, signature, amplitude, noise_sigma: 0.0 });
                    break;
                }
            }
        }
    }

    for p in &pulses {
        for ch in 0..IMU_CHANNELS {
            let w = p.signature[ch];
            if w == 0.0 {
                continue;
            }
            let row = imu.row_mut(ch);
            for i in 0..p.len {
                let shape = libm::sin(core::f64::consts::PI * (i as f64 + 0.5) / p.len as f64);
                let extra = if p.noise_sigma > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    p.noise_sigma * z
                } else {
                    0.0
                };
                row[p.start + i] += p.amplitude * w * shape + extra;
            }
        }
    }

    let recording = Recording::from_segments(id, subject, scenario, imu, &segments)?;
    Ok(GeneratedRecording { recording, confusers, repetitions, profile })
}

/// Every recording of every subject, in subject order.
pub fn generate_dataset(spec: &ScenarioSpec) -> Result<Vec<GeneratedRecording>> {
    spec.validate()?;
    let subjects = spec.subject_ids();
    if subjects.len() < 2 {
        return Err(Error::InvalidArgument(format!("a dataset needs at least 2 subjects, got {}", subjects.len())));
    }
    let mut out = Vec::new();
    for (s, _) in &subjects {
        for k in 0..spec.recordings_per_subject {
            out.push(generate_recording(spec, s, k)?);
        }
    }
    Ok(out)
}

/// Macro class of a micro class (re-exported for generator consumers).
pub fn macro_of_micro(micro: usize) -> Result<usize> {
    ClassCatalog::macro_of_micro(micro)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::extract_segments;

    fn small_spec() -> ScenarioSpec {
        ScenarioSpec { subjects: 2, background_s: [18.0, 20.0], ..ScenarioSpec::default() }
    }

    #[test]
    fn chair_rising_block_has_ten_alternating_repetitions() {
        let spec = ScenarioSpec { blocks: vec![4], ..small_spec() };
        let g = generate_recording(&spec, "lab01", 0).unwrap();
        let macro_segs = extract_segments(g.recording.macro_track());
        assert_eq!(macro_segs.len(), 1);
        let m = macro_segs[0];
        let micro: Vec<_> = extract_segments(g.recording.micro_track())
            .into_iter()
            .filter(|s| s.start >= m.start && s.end <= m.end)
            .collect();
        assert_eq!(micro.len(), 10);
        for (k, s) in micro.iter().enumerate() {
            assert_eq!(s.class_id, if k % 2 == 0 { 4 } else { 5 });
        }
        assert_eq!(micro.first().unwrap().start, m.start);
        assert_eq!(micro.last().unwrap().end, m.end);
    }

    #[test]
    fn no_confusers_means_no_pulses_outside_blocks() {
        let spec = ScenarioSpec { confusers_per_background: 0, ..small_spec() };
        let g = generate_recording(&spec, "lab02", 0).unwrap();
        assert!(g.confusers.is_empty());
        let macro_track = g.recording.macro_track();
        assert!(g.repetitions.iter().all(|r| (r.start..r.end).all(|t| macro_track[t] != 0)));
    }

    #[test]
    fn confusers_are_labeled_others_at_both_scales() {
        let g = generate_recording(&small_spec(), "lab01", 0).unwrap();
        assert_eq!(g.confusers.len(), 2 * 5);
        for c in &g.confusers {
            for t in c.start..c.end {
                assert_eq!(g.recording.micro_track()[t], 0);
                assert_eq!(g.recording.macro_track()[t], 0);
            }
        }
    }

    #[test]
    fn infeasible_block_is_rejected() {
        let spec = ScenarioSpec { max_block_s: 10.0, ..small_spec() };
        assert!(matches!(generate_recording(&spec, "lab01", 0), Err(Error::Infeasible(_))));
        let spec = ScenarioSpec { confusers_per_background: 5, ..small_spec() };
        assert!(matches!(spec.validate(), Err(Error::Infeasible(_))));
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_recording(&small_spec(), "lab01", 0).unwrap();
        let b = generate_recording(&small_spec(), "lab01", 0).unwrap();
        assert_eq!(a, b);
        let c = generate_recording(&ScenarioSpec { seed: 1, ..small_spec() }, "lab01", 0).unwrap();
        assert_ne!(a.recording.macro_track(), c.recording.macro_track());
    }

    #[test]
    fn unknown_subject_is_rejected() {
        assert!(generate_recording(&small_spec(), "lab09", 0).is_err());
        assert!(generate_dataset(&ScenarioSpec { subjects: 1, ..small_spec() }).is_err());
    }
}
