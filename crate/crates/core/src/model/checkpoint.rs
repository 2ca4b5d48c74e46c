//! Binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      4 bytes  "CLCK"
//! version    u32
//! config_len u64, then config_len bytes of JSON (BackboneConfig echo)
//! seed       u64
//! init_len   u64, then init_len bytes of UTF-8 (init scheme id)
//! count      u64
//! count × { name_len u64, name bytes, rank u64, rank × u64 dims, Π dims × f64 }
//! ```

use std::fs;
use std::path::Path;

use super::{BackboneConfig, Model, NamedTensor, Parameters};
use crate::binio::{put_bytes, Reader};
use crate::error::Result;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint(path: &Path, model: &Model) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_bytes(&mut buf, &serde_json::to_vec(&model.config)?);
    buf.extend_from_slice(&model.params.seed.to_le_bytes());
    put_bytes(&mut buf, model.params.init.as_bytes());
    buf.extend_from_slice(&(model.params.entries.len() as u64).to_le_bytes());
    for e in &model.params.entries {
        put_bytes(&mut buf, e.name.as_bytes());
        buf.extend_from_slice(&(e.tensor.rank() as u64).to_le_bytes());
        for &d in e.tensor.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in e.tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path)?;
    let mut r = Reader::new(path, &bytes);
    if r.take(4)? != CHECKPOINT_MAGIC {
        return r.fail_at(0, "bad magic, not a checkpoint");
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return r.fail(format!("unsupported checkpoint version {version}"));
    }
    let config_json = r.string()?;
    let config: BackboneConfig = match serde_json::from_str(&config_json) {
        Ok(c) => c,
        Err(e) => return r.fail(format!("bad config echo: {e}")),
    };
    let seed = r.u64()?;
    let init = r.string()?;
    let count = r.u64()? as usize;

    let expected = config.layout();
    if count != expected.len() {
        return r.fail(format!(
            "{count} tensors stored, configuration needs {}",
            expected.len()
        ));
    }
    let mut entries = Vec::with_capacity(count);
    for (name, shape, _) in expected {
        let stored = r.string()?;
        if stored != name {
            return r.fail(format!("expected tensor `{name}`, found `{stored}`"));
        }
        let rank = r.u64()? as usize;
        let dims = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if dims != shape {
            return r.fail(format!("tensor `{name}` has shape {dims:?}, expected {shape:?}"));
        }
        let numel: usize = dims.iter().product();
        if numel * 8 > r.remaining() {
            return r.fail(format!("truncated data for tensor `{name}`"));
        }
        let data = (0..numel).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        entries.push(NamedTensor {
            name,
            tensor: Tensor::new(dims, data)?,
        });
    }
    if r.remaining() != 0 {
        return r.fail("trailing bytes after last tensor");
    }
    Ok(Model {
        config,
        params: Parameters { entries, init, seed },
    })
}
