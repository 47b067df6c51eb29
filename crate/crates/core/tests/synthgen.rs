use dsmstcn_core::data::{Scale, MICRO};
use dsmstcn_core::metrics::extract_segments;
use dsmstcn_core::synthgen::{generate_dataset, generate_recording, RepCounts, ScenarioSpec};

fn quiet_spec() -> ScenarioSpec {
    ScenarioSpec {
        subjects: 4,
        confusers_per_background: 0,
        adl_bursts_per_minute: 0.0,
        amplitude_jitter: 0.0,
        ..ScenarioSpec::default()
    }
}

/// Mean square of the samples where `keep` holds.
fn power(row: &[f64], keep: impl Fn(usize) -> bool) -> f64 {
    let (s, n) = row.iter().enumerate().filter(|(t, _)| keep(*t)).fold((0.0, 0usize), |(s, n), (_, v)| (s + v * v, n + 1));
    s / n as f64
}

#[test]
fn measured_snr_matches_configuration() {
    for snr_db in [0.0, 10.0, 20.0] {
        let spec = ScenarioSpec { snr_db, ..quiet_spec() };
        let g = generate_recording(&spec, "lab02", 0).unwrap();
        let rec = &g.recording;
        let (mut sig, mut bg) = (0.0, 0.0);
        for c in 1..MICRO.len() {
            let m = spec.motif(c).unwrap();
            for ch in m.signature_channels() {
                let w = m.signature[ch];
                let row = rec.imu().row(ch);
                let p_bg = power(row, |t| rec.macro_track()[t] == 0);
                let p_in = power(row, |t| rec.micro_track()[t] == c);
                // Pulse and background are independent; subtract the
                // background and the motif noise, undo the channel weight.
                sig += (p_in - p_bg - m.noise_sigma * m.noise_sigma) / (w * w);
                bg += p_bg;
            }
        }
        let measured = 10.0 * (sig / bg).log10();
        assert!((measured - snr_db).abs() < 0.75, "configured {snr_db} dB, measured {measured:.3} dB");
    }
}

#[test]
fn amplitude_jitter_is_measurable_per_subject() {
    let jitter = 0.3;
    // High SNR keeps the per-repetition estimate tight.
    let spec = ScenarioSpec { amplitude_jitter: jitter, snr_db: 30.0, ..quiet_spec() };
    let data = generate_dataset(&spec).unwrap();
    let base = spec.base_amplitude();
    let mut spread = 0.0f64;
    for g in &data {
        for c in 1..MICRO.len() {
            let m = spec.motif(c).unwrap();
            let ch = m.signature_channels().next().unwrap();
            let w = m.signature[ch];
            let row = g.recording.imu().row(ch);
            // Least-squares amplitude of a half-sine template per repetition.
            let mut est = Vec::new();
            for r in g.repetitions.iter().filter(|r| r.class_id == c) {
                let n = r.len() as f64;
                let (mut xy, mut yy) = (0.0, 0.0);
                for i in 0..r.len() {
                    let shape = (std::f64::consts::PI * (i as f64 + 0.5) / n).sin();
                    xy += row[r.start + i] * shape;
                    yy += shape * shape;
                }
                est.push(xy / yy / (w * base));
            }
            let measured = est.iter().sum::<f64>() / est.len() as f64;
            let configured = g.profile.amplitude_scale[c];
            assert!((1.0 - jitter..=1.0 + jitter).contains(&configured));
            assert!(
                (measured - configured).abs() < 0.02,
                "{} class {c}: measured {measured:.3}, configured {configured:.3}",
                g.recording.subject()
            );
            spread = spread.max((configured - 1.0).abs());
        }
    }
    assert!(spread > jitter / 3.0, "jitter barely exercised");
}

#[test]
fn every_recording_validates_and_counts_follow_the_spec() {
    let spec = ScenarioSpec { subjects: 3, home_subjects: 2, ..ScenarioSpec::default() };
    let data = generate_dataset(&spec).unwrap();
    assert_eq!(data.len(), 5);
    for g in &data {
        g.recording.validate().unwrap();
        let segs = g.recording.segments();
        let macro_count = segs.iter().filter(|s| s.scale == Scale::Macro && s.class_id != 0).count();
        assert_eq!(macro_count, 4);
        let RepCounts { ankle_plantarflexors, knee_bends, abdominal_muscles, chair_rising_pairs } = spec.reps;
        let micro = extract_segments(g.recording.micro_track());
        let count = |c: usize| micro.iter().filter(|s| s.class_id == c).count();
        assert_eq!(
            [count(1), count(2), count(3), count(4), count(5)],
            [ankle_plantarflexors, knee_bends, abdominal_muscles, chair_rising_pairs, chair_rising_pairs]
        );
        // Confusers sit in the background and carry no label.
        assert_eq!(g.confusers.len(), 5 * spec.confusers_per_background);
        for c in &g.confusers {
            assert!(g.recording.macro_track()[c.start..c.end].iter().all(|&k| k == 0));
        }
    }
}

#[test]
fn labels_are_a_function_of_the_seed() {
    let a = generate_dataset(&ScenarioSpec { subjects: 2, ..ScenarioSpec::default() }).unwrap();
    let b = generate_dataset(&ScenarioSpec { subjects: 2, ..ScenarioSpec::default() }).unwrap();
    let c = generate_dataset(&ScenarioSpec { subjects: 2, seed: 1, ..ScenarioSpec::default() }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0].recording.macro_track(), c[0].recording.macro_track());
}
