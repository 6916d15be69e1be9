//! Versioned binary checkpoints: a fixed little-endian header (epoch,
//! architecture switches) followed by named f32 tensors, including the Adam
//! moments so training resumes exactly.

use super::layers::Param;
use super::nets::ArchConfig;
use super::tensor::Tensor;
use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

const MAGIC: &[u8; 4] = b"RCK1";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint does not match configuration: {0}")]
    Mismatch(String),
}

/// Everything needed to validate a checkpoint against a run configuration
/// before any tensor is copied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub epoch: u64,
    pub hidden_size: u32,
    pub trunk_width: u32,
    pub no_rnn: bool,
    pub symmetric_critic: bool,
    pub zero_hidden_init: bool,
}

impl CheckpointHeader {
    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            hidden_size: self.hidden_size as usize,
            trunk_width: self.trunk_width as usize,
            no_rnn: self.no_rnn,
            symmetric_critic: self.symmetric_critic,
        }
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64(w: &mut impl Write, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn write_checkpoint(
    w: &mut impl Write,
    header: &CheckpointHeader,
    tensors: &[(String, &Tensor<f32>)],
) -> Result<(), CheckpointError> {
    w.write_all(MAGIC)?;
    write_u32(w, FORMAT_VERSION)?;
    write_u64(w, header.epoch)?;
    write_u32(w, header.hidden_size)?;
    write_u32(w, header.trunk_width)?;
    let flags = header.no_rnn as u8
        | (header.symmetric_critic as u8) << 1
        | (header.zero_hidden_init as u8) << 2;
    w.write_all(&[flags])?;
    write_u32(w, tensors.len() as u32)?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        if bytes.len() > u16::MAX as usize {
            return Err(CheckpointError::Corrupt(format!("tensor name too long: {name}")));
        }
        w.write_all(&(bytes.len() as u16).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[t.shape.len() as u8])?;
        for &d in &t.shape {
            write_u32(w, d as u32)?;
        }
        for v in &t.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(
    r: &mut impl Read,
) -> Result<(CheckpointHeader, Vec<(String, Tensor<f32>)>), CheckpointError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let epoch = read_u64(r)?;
    let hidden_size = read_u32(r)?;
    let trunk_width = read_u32(r)?;
    let mut flags = [0u8; 1];
    r.read_exact(&mut flags)?;
    let header = CheckpointHeader {
        epoch,
        hidden_size,
        trunk_width,
        no_rnn: flags[0] & 1 != 0,
        symmetric_critic: flags[0] & 2 != 0,
        zero_hidden_init: flags[0] & 4 != 0,
    };
    let count = read_u32(r)?;
    let mut tensors = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let mut len_b = [0u8; 2];
        r.read_exact(&mut len_b)?;
        let mut name_b = vec![0u8; u16::from_le_bytes(len_b) as usize];
        r.read_exact(&mut name_b)?;
        let name = String::from_utf8(name_b)
            .map_err(|_| CheckpointError::Corrupt("tensor name is not utf-8".into()))?;
        let mut ndim = [0u8; 1];
        r.read_exact(&mut ndim)?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            shape.push(read_u32(r)? as usize);
        }
        let n: usize = shape.iter().product();
        if n > 1 << 30 {
            return Err(CheckpointError::Corrupt(format!(
                "tensor {name} claims {n} elements"
            )));
        }
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf).map_err(|_| {
            CheckpointError::Corrupt(format!("truncated data for tensor {name}"))
        })?;
        let data = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push((name, Tensor::from_vec(&shape, data)));
    }
    Ok((header, tensors))
}

pub fn save_checkpoint(
    path: &Path,
    header: &CheckpointHeader,
    tensors: &[(String, &Tensor<f32>)],
) -> Result<(), CheckpointError> {
    let mut w = io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut w, header, tensors)
}

pub fn load_checkpoint(
    path: &Path,
) -> Result<(CheckpointHeader, Vec<(String, Tensor<f32>)>), CheckpointError> {
    let mut r = io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut r)
}

/// Flatten a parameter set into named tensors, including Adam moments.
pub fn named_tensors<'a>(params: &'a [&'a Param<f32>]) -> Vec<(String, &'a Tensor<f32>)> {
    let mut out = Vec::with_capacity(params.len() * 3);
    for p in params {
        out.push((p.name.clone(), &p.value));
        out.push((format!("{}.adam_m", p.name), &p.m));
        out.push((format!("{}.adam_v", p.name), &p.v));
    }
    out
}

/// Copy loaded tensors back into a parameter set; every parameter must be
/// present with a matching shape.
pub fn load_into(
    params: &mut [&mut Param<f32>],
    tensors: &[(String, Tensor<f32>)],
) -> Result<(), CheckpointError> {
    let map: HashMap<&str, &Tensor<f32>> =
        tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
    for p in params.iter_mut() {
        for (suffix, slot) in [("", 0), (".adam_m", 1), (".adam_v", 2)] {
            let key = format!("{}{}", p.name, suffix);
            let src = map.get(key.as_str()).ok_or_else(|| {
                CheckpointError::Mismatch(format!("missing tensor {key}"))
            })?;
            let dst = match slot {
                0 => &mut p.value,
                1 => &mut p.m,
                _ => &mut p.v,
            };
            if src.shape != dst.shape {
                return Err(CheckpointError::Mismatch(format!(
                    "tensor {key} has shape {:?}, expected {:?}",
                    src.shape, dst.shape
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
    }
    Ok(())
}
