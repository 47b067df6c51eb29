//! Binary model checkpoint.
//!
//! ```text
//! magic      8 bytes  "DSMSTCKP"
//! version    u32      1
//! mode       u32 length + UTF-8 (e.g. "dual_scale")
//! layers     u32
//! filters    u32
//! channels   u32, then channels x f64 mean, channels x f64 std
//! params     u32 count, then per parameter:
//!            u32 name length + UTF-8 name, u32 ndim, ndim x u64 dims,
//!            prod(dims) x f64 row-major payload
//! ```
//! Every integer and float is little-endian.

use std::path::Path;

use dsmstcn_core::data::Normalizer;
use dsmstcn_core::harness::TrainedModel;
use dsmstcn_core::model::{ModelConfig, ModelParameters};
use dsmstcn_core::numerics::ParamStore;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DSMSTCKP";
pub const VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("checkpoint field exceeds u32").to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(model: &TrainedModel) -> Vec<u8> {
    let cfg = model.params.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, cfg.mode.as_str());
    put_u32(&mut out, cfg.num_layers);
    put_u32(&mut out, cfg.num_filters);
    put_u32(&mut out, model.normalizer.mean.len());
    put_f64s(&mut out, &model.normalizer.mean);
    put_f64s(&mut out, &model.normalizer.std);
    let store = model.params.store();
    put_u32(&mut out, store.len());
    for p in store.iter() {
        put_str(&mut out, &p.name);
        put_u32(&mut out, p.shape.len());
        for &d in &p.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        put_f64s(&mut out, &p.data);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            format!("truncated at byte {} (wanted {n} more of {})", self.pos, self.bytes.len())
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> std::result::Result<usize, String> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| format!("dimension {v} does not fit in memory"))
    }

    fn f64s(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        let len = n.checked_mul(8).ok_or("payload size overflows")?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn string(&mut self) -> std::result::Result<String, String> {
        let n = self.u32()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| "name is not UTF-8".to_string())
    }
}

fn decode_inner(bytes: &[u8]) -> std::result::Result<(ModelConfig, Normalizer, ParamStore), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(format!("unsupported version {version}"));
    }
    let mode = r.string()?.parse().map_err(|e: dsmstcn_core::Error| e.to_string())?;
    let num_layers = r.u32()?;
    let num_filters = r.u32()?;
    let channels = r.u32()?;
    let mean = r.f64s(channels)?;
    let std = r.f64s(channels)?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = r.string()?;
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u64()).collect::<std::result::Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("shape overflows")?;
        let data = r.f64s(n)?;
        store.insert(&name, &shape, data).map_err(|e| e.to_string())?;
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    Ok((ModelConfig { mode, num_layers, num_filters }, Normalizer { mean, std }, store))
}

/// Decodes a checkpoint. With `expected`, the stored model configuration must
/// match exactly or the checkpoint is refused.
pub fn decode(path: &Path, bytes: &[u8], expected: Option<&ModelConfig>) -> Result<TrainedModel> {
    let err = |message: String| Error::Checkpoint { path: path.into(), message };
    let (config, normalizer, store) = decode_inner(bytes).map_err(err)?;
    if let Some(want) = expected {
        if *want != config {
            return Err(err(format!(
                "stores {} with {} layers x {} filters, configuration expects {} with {} layers x {} filters",
                config.mode.as_str(),
                config.num_layers,
                config.num_filters,
                want.mode.as_str(),
                want.num_layers,
                want.num_filters
            )));
        }
    }
    let params = ModelParameters::from_store(config, store).map_err(|e| err(e.to_string()))?;
    if normalizer.mean.len() != dsmstcn_core::IMU_CHANNELS || normalizer.std.iter().any(|&s| !(s > 0.0)) {
        return Err(err("normalization statistics are malformed".into()));
    }
    Ok(TrainedModel { params, normalizer })
}

pub fn save(path: &Path, model: &TrainedModel) -> Result<()> {
    super::write_file(path, &encode(model))
}

pub fn load(path: &Path, expected: Option<&ModelConfig>) -> Result<TrainedModel> {
    decode(path, &super::read_file(path)?, expected)
}
