//! Binary checkpoint format.
//!
//! ```text
//! magic    "DDEVALCK"
//! version  u32
//! header   vocab_len, embed_dim, max_len, init_seed, n_layers, (window, kernels)*   (u64 each)
//! groups   n_groups u32, then per group: name_len u32, name, count u64, count × f64
//! ```
//!
//! Integers and floats are little-endian; floats are stored by bit pattern.

use std::io::{Read, Write};
use std::path::Path;

use super::model::ClassifierModel;
use super::ConvSpec;
use crate::error::{data_err, Error, Result};

const MAGIC: &[u8; 8] = b"DDEVALCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(model: &ClassifierModel, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + model.num_params() * 8);
    write_checkpoint(model, &mut buf).map_err(|e| Error::io("encoding checkpoint", e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<ClassifierModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    read_checkpoint(&mut bytes.as_slice())
}

pub(crate) fn write_checkpoint<W: Write>(model: &ClassifierModel, w: &mut W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    let header = [
        model.vocab_len() as u64,
        model.embed_dim() as u64,
        model.max_len() as u64,
        model.init_seed(),
        model.convs().len() as u64,
    ];
    for h in header {
        w.write_all(&h.to_le_bytes())?;
    }
    for c in model.convs() {
        w.write_all(&(c.window as u64).to_le_bytes())?;
        w.write_all(&(c.kernels as u64).to_le_bytes())?;
    }
    let groups = model.param_groups();
    w.write_all(&(groups.len() as u32).to_le_bytes())?;
    for g in groups {
        w.write_all(&(g.name.len() as u32).to_le_bytes())?;
        w.write_all(g.name.as_bytes())?;
        w.write_all(&(g.range.len() as u64).to_le_bytes())?;
        for p in &model.params()[g.range] {
            w.write_all(&p.to_bits().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u64::from_le_bytes(b))
}

fn truncated(_: std::io::Error) -> Error {
    data_err!("checkpoint is truncated")
}

fn small(x: u64, what: &str) -> Result<usize> {
    if x > 1 << 32 {
        return Err(data_err!("checkpoint {what} {x} is implausibly large"));
    }
    Ok(x as usize)
}

pub(crate) fn read_checkpoint<R: Read>(r: &mut R) -> Result<ClassifierModel> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(data_err!("not a classifier checkpoint"));
    }
    let version = read_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(data_err!("unsupported checkpoint version {version}"));
    }
    let vocab_len = small(read_u64(r)?, "vocabulary size")?;
    let embed_dim = small(read_u64(r)?, "embedding size")?;
    let max_len = small(read_u64(r)?, "length limit")?;
    let init_seed = read_u64(r)?;
    let n_layers = small(read_u64(r)?, "layer count")?;
    let mut convs = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let window = small(read_u64(r)?, "window")?;
        let kernels = small(read_u64(r)?, "kernel count")?;
        convs.push(ConvSpec { window, kernels });
    }
    let mut model = ClassifierModel::zeros(vocab_len, embed_dim, &convs, max_len)?;
    model.set_init_seed(init_seed);
    let groups = model.param_groups();
    let n_groups = read_u32(r)? as usize;
    if n_groups != groups.len() {
        return Err(data_err!(
            "checkpoint has {n_groups} parameter groups, expected {}",
            groups.len()
        ));
    }
    for g in groups {
        let name_len = read_u32(r)? as usize;
        if name_len > 256 {
            return Err(data_err!("corrupt parameter group name"));
        }
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(truncated)?;
        if name != g.name.as_bytes() {
            return Err(data_err!(
                "expected parameter group {}, found {}",
                g.name,
                String::from_utf8_lossy(&name)
            ));
        }
        let count = read_u64(r)? as usize;
        if count != g.range.len() {
            return Err(data_err!(
                "group {} has {count} values, expected {}",
                g.name,
                g.range.len()
            ));
        }
        for p in &mut model.params_mut()[g.range] {
            *p = f64::from_bits(read_u64(r)?);
        }
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io("reading checkpoint", e))? != 0 {
        return Err(data_err!("trailing bytes after checkpoint"));
    }
    Ok(model)
}
