//! Dataset directories: `manifest.json`, `signals/<id>.csv` and
//! `annotations/<id>.jsonl`, one pair per recording.

use std::collections::BTreeMap;
use std::path::Path;

use dsmstcn_core::harness::Dataset;
use dsmstcn_core::metrics::Segment;
use dsmstcn_core::synthgen::{generate_recording, GeneratedRecording, ScenarioSpec};

use crate::error::{Error, Result};
use crate::formats::annotation::{load_recording, write_annotations};
use crate::formats::manifest::{ConfuserEntry, Manifest, RecordingEntry, FILE_NAME};
use crate::formats::signal::write_signal;

pub fn signal_path(id: &str) -> String {
    format!("signals/{id}.csv")
}

pub fn annotation_path(id: &str) -> String {
    format!("annotations/{id}.jsonl")
}

fn entry(g: &GeneratedRecording) -> RecordingEntry {
    let r = &g.recording;
    RecordingEntry {
        id: r.id().into(),
        subject: r.subject().into(),
        scenario: r.scenario(),
        samples: r.len(),
        signal: signal_path(r.id()),
        annotations: annotation_path(r.id()),
        confusers: g
            .confusers
            .iter()
            .map(|c| ConfuserEntry { micro_class: c.class_id, start_sample: c.start, end_sample_exclusive: c.end })
            .collect(),
    }
}

/// Generates every recording of `spec` under `out`.
///
/// The manifest (config hash and seeds) is written first; files follow, and
/// the manifest is rewritten with their hashes at the end. An existing
/// dataset in `out` is only replaced when `overwrite` is set.
pub fn synthesize(out: &Path, spec: &ScenarioSpec, overwrite: bool) -> Result<Manifest> {
    spec.validate()?;
    let subjects = spec.subject_ids();
    if subjects.len() < 2 {
        return Err(dsmstcn_core::Error::InvalidArgument(format!(
            "a dataset needs at least 2 subjects, got {}",
            subjects.len()
        ))
        .into());
    }
    if !overwrite && out.join(FILE_NAME).exists() {
        return Err(Error::Collision(out.join(FILE_NAME)));
    }
    let seeds = BTreeMap::from([("synth".to_string(), spec.seed)]);
    let mut manifest = Manifest::new("synth", spec, seeds)?;
    manifest.write(out)?;

    let mut paths = Vec::new();
    for (subject, _) in &subjects {
        for k in 0..spec.recordings_per_subject {
            let g = generate_recording(spec, subject, k)?;
            let e = entry(&g);
            if manifest.recordings.iter().any(|r| r.signal.eq_ignore_ascii_case(&e.signal)) {
                return Err(Error::Collision(out.join(&e.signal)));
            }
            write_signal(&out.join(&e.signal), g.recording.imu())?;
            write_annotations(&out.join(&e.annotations), &g.recording)?;
            paths.push(e.signal.clone());
            paths.push(e.annotations.clone());
            manifest.recordings.push(e);
        }
    }
    manifest.record_files(out, paths)?;
    manifest.complete = true;
    manifest.write(out)?;
    Ok(manifest)
}

/// Loads every recording listed in the dataset manifest, checking hashes.
pub fn load_dataset(dir: &Path) -> Result<(Dataset, Manifest)> {
    let manifest = Manifest::read(dir)?;
    if !manifest.complete {
        return Err(Error::Config(format!("{} describes an incomplete dataset", dir.join(FILE_NAME).display())));
    }
    manifest.verify(dir)?;
    let mut ds = Dataset::default();
    for e in &manifest.recordings {
        let rec = load_recording(&e.id, &e.subject, e.scenario, &dir.join(&e.signal), &dir.join(&e.annotations))?;
        if rec.len() != e.samples {
            return Err(Error::Config(format!("recording {} has {} samples, manifest says {}", e.id, rec.len(), e.samples)));
        }
        let confusers = e
            .confusers
            .iter()
            .map(|c| Segment { class_id: c.micro_class, start: c.start_sample, end: c.end_sample_exclusive })
            .collect();
        ds.push(rec, confusers)?;
    }
    Ok((ds, manifest))
}
