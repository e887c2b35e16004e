use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// On-disk container: magic, format version, then count-prefixed named
/// tensors. All integers and floats little-endian.
///
///   "AUXG" | u32 version | u32 count |
///   { u32 name_len | name utf-8 | u32 rank | u64 × rank extents | f32 × numel }*
pub const MAGIC: [u8; 4] = *b"AUXG";
pub const VERSION: u32 = 1;

/// Suffix for optimizer accumulator entries stored alongside a parameter.
pub const ACC_SUFFIX: &str = ".acc";

pub fn write_container(path: &Path, entries: &[(String, &Tensor<f32>)]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, tensor) in entries {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes())?;
        for &e in tensor.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &x in tensor.data() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub fn read_container(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(TensorError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(TensorError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf)
            .map_err(|e| TensorError::Checkpoint(format!("entry name not utf-8: {e}")))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0f32; numel];
        let mut buf = [0u8; 4];
        for x in data.iter_mut() {
            r.read_exact(&mut buf)?;
            *x = f32::from_le_bytes(buf);
        }
        entries.push((name, Tensor::from_vec(&shape, data)?));
    }
    // Trailing garbage means the file isn't what we wrote.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(TensorError::Checkpoint("trailing bytes after last entry".into()));
    }
    Ok(entries)
}

/// Save every parameter plus its optimizer accumulator (under
/// `<name>.acc`), followed by any extra named tensors (trainer state).
pub fn save_params(store: &ParamStore, path: &Path, extras: &[(String, Tensor<f32>)]) -> Result<()> {
    let mut entries: Vec<(String, &Tensor<f32>)> = Vec::with_capacity(store.len() * 2);
    for (_, p) in store.iter() {
        entries.push((p.name.clone(), &p.value));
        entries.push((format!("{}{ACC_SUFFIX}", p.name), &p.acc));
    }
    for (name, t) in extras {
        entries.push((name.clone(), t));
    }
    write_container(path, &entries)
}

/// Restore parameter values and accumulators by name. Every parameter in
/// the store must be present in the file with a matching shape; entries
/// that match nothing in the store (trainer state) are returned.
pub fn load_params(store: &mut ParamStore, path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let entries = read_container(path)?;
    let mut by_name: std::collections::BTreeMap<String, Tensor<f32>> = entries.into_iter().collect();
    for (_, p) in store.iter_mut() {
        let value = by_name.remove(&p.name).ok_or_else(|| {
            TensorError::Checkpoint(format!("checkpoint missing parameter {:?}", p.name))
        })?;
        if value.shape() != p.value.shape() {
            return Err(TensorError::Checkpoint(format!(
                "shape mismatch for {:?}: file {:?}, model {:?}",
                p.name,
                value.shape(),
                p.value.shape()
            )));
        }
        let acc_name = format!("{}{ACC_SUFFIX}", p.name);
        let acc = by_name.remove(&acc_name).ok_or_else(|| {
            TensorError::Checkpoint(format!("checkpoint missing accumulator {acc_name:?}"))
        })?;
        if acc.shape() != p.value.shape() {
            return Err(TensorError::Checkpoint(format!("shape mismatch for {acc_name:?}")));
        }
        p.value = value;
        p.acc = acc;
        p.grad = None;
    }
    Ok(by_name.into_iter().collect())
}
