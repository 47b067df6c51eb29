//! Metrics report as tab-separated text.
//!
//! ```text
//! # metrics-report v1 threshold=0.5
//! family	class_id	class	tp	fp	fn	precision	recall	f1	present
//! samplewise	1	ankle plantarflexors	950	12	30	0.987526	0.969388	0.978373	1
//! segmental	1	ankle plantarflexors	9	1	0	0.900000	1.000000	0.947368	1
//! ```
//! Counts are exact; the ratio columns are derived and ignored on read.

use std::path::Path;

use dsmstcn_core::metrics::{ClassMetrics, Counts, MetricsReport};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 10] = ["family", "class_id", "class", "tp", "fp", "fn", "precision", "recall", "f1", "present"];

pub fn to_tsv(report: &MetricsReport) -> String {
    let mut s = format!("# metrics-report v1 threshold={}\n{}\n", report.threshold, COLUMNS.join("\t"));
    for (family, pick) in [("samplewise", 0), ("segmental", 1)] {
        for c in &report.classes {
            let k = if pick == 0 { c.samplewise } else { c.segmental };
            s.push_str(&format!(
                "{family}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\n",
                c.class_id,
                c.name,
                k.tp,
                k.fp,
                k.fn_,
                k.precision(),
                k.recall(),
                k.f1(),
                u8::from(c.present)
            ));
        }
    }
    s
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    super::write_file(path, to_tsv(report).as_bytes())
}

pub fn parse_report(path: &Path, text: &str) -> Result<MetricsReport> {
    let err = |line: usize, message: String| Error::Parse { path: path.into(), line, message };
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| err(1, "empty report".into()))?;
    let threshold: f64 = head
        .strip_prefix("# metrics-report v1 threshold=")
        .and_then(|t| t.trim().parse().ok())
        .ok_or_else(|| err(1, format!("bad report header {head:?}")))?;
    if lines.next().map(|l| l.split('\t').ne(COLUMNS.iter().copied())).unwrap_or(true) {
        return Err(err(2, "bad column header".into()));
    }
    let mut classes: Vec<ClassMetrics> = Vec::new();
    for (k, line) in lines.enumerate() {
        let n = k + 3;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != COLUMNS.len() {
            return Err(err(n, format!("expected {} columns, got {}", COLUMNS.len(), f.len())));
        }
        let int = |i: usize| f[i].parse::<u64>().map_err(|_| err(n, format!("bad {} {:?}", COLUMNS[i], f[i])));
        let class_id = int(1)? as usize;
        let counts = Counts { tp: int(3)?, fp: int(4)?, fn_: int(5)? };
        let present = int(9)? != 0;
        let entry = match classes.iter_mut().find(|c| c.class_id == class_id) {
            Some(c) => c,
            None => {
                classes.push(ClassMetrics {
                    class_id,
                    name: f[2].to_string(),
                    present,
                    samplewise: Counts::default(),
                    segmental: Counts::default(),
                });
                classes.last_mut().expect("just pushed")
            }
        };
        entry.present |= present;
        match f[0] {
            "samplewise" => entry.samplewise = counts,
            "segmental" => entry.segmental = counts,
            other => return Err(err(n, format!("unknown family {other:?}"))),
        }
    }
    Ok(MetricsReport { threshold, classes })
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    parse_report(path, &super::read_text(path)?)
}
