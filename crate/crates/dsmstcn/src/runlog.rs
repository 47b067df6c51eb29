//! Plain-text, append-only run log. One event per line:
//!
//! ```text
//! step fold=0 epoch=0 step=0 batch=5c1e0f3a9b2d4e71 total=1.2645 stage1/ce_micro=0.31 ... wall_ms=153
//! epoch fold=0 epoch=0 mean_loss=1.2645 wall_ms=1148
//! ```
//! Everything except `wall_ms` is a deterministic function of the
//! configuration.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dsmstcn_core::harness::{StepRecord, TrainObserver};

use crate::error::{Error, Result};

pub struct RunLog {
    path: PathBuf,
    out: BufWriter<File>,
    started: Instant,
    verbose: bool,
    failed: Option<std::io::Error>,
}

impl RunLog {
    pub fn open(path: &Path, verbose: bool) -> Result<Self> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
        let f = OpenOptions::new().create(true).append(true).open(path).map_err(Error::io(path))?;
        Ok(RunLog { path: path.into(), out: BufWriter::new(f), started: Instant::now(), verbose, failed: None })
    }

    fn wall_ms(&self) -> u128 {
        self.started.elapsed().as_millis()
    }

    /// Appends `kind key=value ... wall_ms=N`. Write errors are kept and
    /// reported by [`RunLog::finish`].
    pub fn event(&mut self, kind: &str, fields: &[(&str, String)]) {
        let mut line = String::from(kind);
        for (k, v) in fields {
            line.push(' ');
            line.push_str(k);
            line.push('=');
            line.push_str(v);
        }
        line.push_str(&format!(" wall_ms={}", self.wall_ms()));
        if self.verbose {
            eprintln!("{line}");
        }
        line.push('\n');
        if self.failed.is_none() {
            if let Err(e) = self.out.write_all(line.as_bytes()) {
                self.failed = Some(e);
            }
        }
    }

    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.failed.take() {
            return Err(Error::Io { path: self.path.clone(), source: e });
        }
        self.out.flush().map_err(Error::io(&self.path))
    }
}

impl TrainObserver for RunLog {
    fn on_step(&mut self, fold: usize, r: &StepRecord) {
        let mut fields = vec![
            ("fold", fold.to_string()),
            ("epoch", r.epoch.to_string()),
            ("step", r.step.to_string()),
            ("batch", format!("{:016x}", r.batch_hash)),
            ("total", r.total.to_string()),
        ];
        let names: Vec<String> = r.terms.iter().map(|t| t.name()).collect();
        for (t, n) in r.terms.iter().zip(&names) {
            fields.push((n.as_str(), t.value.to_string()));
        }
        self.event("step", &fields);
    }

    fn on_epoch(&mut self, fold: usize, epoch: usize, mean_loss: f64) {
        self.event("epoch", &[("fold", fold.to_string()), ("epoch", epoch.to_string()), ("mean_loss", mean_loss.to_string())]);
    }
}
