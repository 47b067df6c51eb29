//! On-disk formats. All multi-byte binary values are little-endian; all text
//! is UTF-8 with `\n` line endings.

pub mod annotation;
pub mod checkpoint;
pub mod manifest;
pub mod report;
pub mod signal;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    }
    let f = File::create(path).map_err(Error::io(path))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes).map_err(Error::io(path))?;
    w.flush().map_err(Error::io(path))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(Error::io(path))
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(Error::io(path))
}
