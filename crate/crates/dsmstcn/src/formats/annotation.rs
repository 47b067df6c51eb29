//! Annotation segments as newline-delimited JSON, sorted by start sample.
//!
//! ```text
//! {"scale":"macro","class_name":"chair rising","start_sample":100,"end_sample_exclusive":900,"subject":"lab01","scenario":"lab"}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use dsmstcn_core::data::{AnnotationSegment, Recording, Scale, Scenario};
use dsmstcn_core::numerics::ChannelSequence;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub scale: Scale,
    pub class_name: String,
    pub start_sample: usize,
    pub end_sample_exclusive: usize,
    pub subject: String,
    pub scenario: Scenario,
}

/// Records of a recording, ordered by start, macro before micro on ties.
pub fn records(rec: &Recording) -> Result<Vec<AnnotationRecord>> {
    let mut segs = rec.segments();
    segs.sort_by_key(|s| (s.start, s.scale == Scale::Micro, s.end));
    segs.iter()
        .map(|s| {
            Ok(AnnotationRecord {
                scale: s.scale,
                class_name: s.scale.catalog().name(s.class_id)?.to_string(),
                start_sample: s.start,
                end_sample_exclusive: s.end,
                subject: rec.subject().to_string(),
                scenario: rec.scenario(),
            })
        })
        .collect()
}

pub fn to_jsonl(rec: &Recording) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records(rec)? {
        serde_json::to_writer(&mut out, &r).map_err(|e| Error::Config(format!("annotation encoding: {e}")))?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn write_annotations(path: &Path, rec: &Recording) -> Result<()> {
    super::write_file(path, &to_jsonl(rec)?)
}

pub fn parse_annotations(path: &Path, text: &str) -> Result<Vec<AnnotationRecord>> {
    let mut out: Vec<AnnotationRecord> = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let r: AnnotationRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse { path: path.into(), line: k + 1, message: e.to_string() })?;
        if let Some(prev) = out.last() {
            if r.start_sample < prev.start_sample {
                return Err(Error::Parse {
                    path: path.into(),
                    line: k + 1,
                    message: format!("segments must be sorted by start ({} after {})", r.start_sample, prev.start_sample),
                });
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Builds a validated recording. Every record must name `subject` and
/// `scenario`; an empty annotation list yields all-"others" tracks.
pub fn assemble(
    id: &str,
    subject: &str,
    scenario: Scenario,
    imu: ChannelSequence,
    records: &[AnnotationRecord],
) -> Result<Recording> {
    let mut segs = Vec::with_capacity(records.len());
    for r in records {
        if r.subject != subject || r.scenario != scenario {
            return Err(dsmstcn_core::Error::Annotation(format!(
                "segment [{}, {}) belongs to {}/{}, recording {id} is {subject}/{}",
                r.start_sample,
                r.end_sample_exclusive,
                r.subject,
                r.scenario.as_str(),
                scenario.as_str()
            ))
            .into());
        }
        segs.push(AnnotationSegment {
            scale: r.scale,
            class_id: r.scale.catalog().id(&r.class_name)?,
            start: r.start_sample,
            end: r.end_sample_exclusive,
        });
    }
    Ok(Recording::from_segments(id, subject, scenario, imu, &segs)?)
}

/// Loads a signal file and its annotation file into a validated recording.
pub fn load_recording(id: &str, subject: &str, scenario: Scenario, signal: &Path, annotations: &Path) -> Result<Recording> {
    let imu = super::signal::read_signal(signal)?;
    let recs = parse_annotations(annotations, &super::read_text(annotations)?)?;
    assemble(id, subject, scenario, imu, &recs)
}
