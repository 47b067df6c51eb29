//! Six-channel IMU signal as CSV: header `sample,ax,ay,az,gx,gy,gz`, one row
//! per sample, sample indices consecutive from 0.

use std::path::Path;

use dsmstcn_core::numerics::ChannelSequence;
use dsmstcn_core::IMU_CHANNELS;

use crate::error::{Error, Result};

pub const HEADER: [&str; 7] = ["sample", "ax", "ay", "az", "gx", "gy", "gz"];

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn to_csv(imu: &ChannelSequence) -> Result<Vec<u8>> {
    if imu.channels() != IMU_CHANNELS {
        return Err(dsmstcn_core::Error::InvalidArgument(format!(
            "signal needs {IMU_CHANNELS} channels, got {}",
            imu.channels()
        ))
        .into());
    }
    let mut w = csv::Writer::from_writer(Vec::with_capacity(imu.len() * 64));
    let err = |e: csv::Error| Error::Config(format!("csv encoding: {e}"));
    w.write_record(HEADER).map_err(err)?;
    let mut row: Vec<String> = Vec::with_capacity(HEADER.len());
    for t in 0..imu.len() {
        row.clear();
        row.push(t.to_string());
        row.extend((0..IMU_CHANNELS).map(|c| imu.get(c, t).to_string()));
        w.write_record(&row).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Config(format!("csv encoding: {e}")))
}

pub fn write_signal(path: &Path, imu: &ChannelSequence) -> Result<()> {
    super::write_file(path, &to_csv(imu)?)
}

pub fn parse_signal(path: &Path, bytes: &[u8]) -> Result<ChannelSequence> {
    let parse_err = |line: usize, message: String| Error::Parse { path: path.into(), line, message };
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = r.headers().map_err(|e| parse_err(1, e.to_string()))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(parse_err(1, format!("expected header {:?}", HEADER.join(","))));
    }
    let mut rows: Vec<[f64; IMU_CHANNELS]> = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        if rec.len() != HEADER.len() {
            return Err(parse_err(line, format!("expected {} fields, got {}", HEADER.len(), rec.len())));
        }
        let sample: usize = rec[0].trim().parse().map_err(|_| parse_err(line, format!("bad sample index {:?}", &rec[0])))?;
        if sample != k {
            return Err(parse_err(line, format!("sample index {sample}, expected {k}")));
        }
        let mut v = [0.0f64; IMU_CHANNELS];
        for c in 0..IMU_CHANNELS {
            let field = rec[c + 1].trim();
            v[c] = field.parse().map_err(|_| parse_err(line, format!("bad value {field:?} in column {}", HEADER[c + 1])))?;
            if !v[c].is_finite() {
                return Err(parse_err(line, format!("non-finite value in column {}", HEADER[c + 1])));
            }
        }
        rows.push(v);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "signal has no samples".into()));
    }
    let mut imu = ChannelSequence::zeros(IMU_CHANNELS, rows.len());
    for (t, v) in rows.iter().enumerate() {
        for (c, &x) in v.iter().enumerate() {
            imu.set(c, t, x);
        }
    }
    Ok(imu)
}

pub fn read_signal(path: &Path) -> Result<ChannelSequence> {
    parse_signal(path, &super::read_file(path)?)
}
