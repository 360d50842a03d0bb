//! Binary checkpoint format.
//!
//! All integers are little-endian.
//!
//! ```text
//! magic        8 bytes   "FOGRNCKP"
//! version      u32       1
//! -- network spec --
//! input_ch     u32
//! window_len   u32
//! n_blocks     u32
//! per block    u32 ×4    in_channels, out_channels, stride, kernel
//! head_feat    u32
//! n_outputs    u32
//! -- metadata --
//! fold         u32       u32::MAX when the model is not tied to a fold
//! seed         u64
//! digest       32 bytes  SHA-256 of the training configuration
//! -- tensors --
//! dtype        u8        1 = f32, 2 = f64
//! n_tensors    u32
//! per tensor   u16 name length, UTF-8 name, u8 rank, u32 × rank dims,
//!              element data
//! ```
//!
//! Tensors are the learnable parameters followed by the normalization
//! running statistics, in the network's naming order. No trailing bytes
//! are allowed.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use super::network::Network;
use super::spec::{NetworkSpec, ResidualBlockSpec};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub const MAGIC: &[u8; 8] = b"FOGRNCKP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub fold: Option<u32>,
    pub seed: u64,
    pub config_digest: [u8; 32],
}

impl CheckpointMeta {
    pub fn digest_hex(&self) -> String {
        self.config_digest
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub fn checkpoint_to_bytes<T: Scalar>(net: &Network<T>, meta: &CheckpointMeta) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    let spec = net.spec();
    put_u32(&mut out, spec.input_channels as u32);
    put_u32(&mut out, spec.window_length as u32);
    put_u32(&mut out, spec.blocks.len() as u32);
    for b in &spec.blocks {
        for v in [b.in_channels, b.out_channels, b.stride, b.kernel] {
            put_u32(&mut out, v as u32);
        }
    }
    put_u32(&mut out, spec.head_features as u32);
    put_u32(&mut out, spec.num_outputs as u32);

    put_u32(&mut out, meta.fold.unwrap_or(u32::MAX));
    out.extend_from_slice(&meta.seed.to_le_bytes());
    out.extend_from_slice(&meta.config_digest);

    out.push(T::DTYPE);
    let params = net.named_params();
    let buffers = net.named_buffers();
    put_u32(&mut out, (params.len() + buffers.len()) as u32);
    let tensors = params
        .iter()
        .map(|(n, p)| (n, p.shape().to_vec(), &p.value))
        .chain(buffers.iter().map(|(n, b)| (n, vec![b.len()], *b)));
    for (name, shape, values) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(shape.len() as u8);
        for d in &shape {
            put_u32(&mut out, *d as u32);
        }
        for &v in values {
            v.write_le(&mut out);
        }
    }
    out
}

pub fn checkpoint_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<(Network<T>, CheckpointMeta)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let input_channels = r.usize()?;
    let window_length = r.usize()?;
    let n_blocks = r.usize()?;
    if n_blocks > 1024 {
        return Err(Error::CorruptCheckpoint(format!(
            "implausible block count {n_blocks}"
        )));
    }
    let mut blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        blocks.push(ResidualBlockSpec {
            in_channels: r.usize()?,
            out_channels: r.usize()?,
            stride: r.usize()?,
            kernel: r.usize()?,
        });
    }
    let spec = NetworkSpec {
        input_channels,
        window_length,
        blocks,
        head_features: r.usize()?,
        num_outputs: r.usize()?,
    };
    let fold = match r.u32()? {
        u32::MAX => None,
        f => Some(f),
    };
    let seed = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let config_digest: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
    let meta = CheckpointMeta {
        fold,
        seed,
        config_digest,
    };

    let dtype = r.take(1)?[0];
    if dtype != T::DTYPE {
        return Err(Error::CorruptCheckpoint(format!(
            "element type tag {dtype} does not match the requested precision ({})",
            T::DTYPE
        )));
    }
    let mut net =
        Network::<T>::zeroed(&spec).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    let count = r.usize()?;
    let mut tensors: HashMap<String, (Vec<usize>, Vec<T>)> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes")) as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(T::BYTES).ok_or(Error::Truncated)?)?;
        let values = raw.chunks_exact(T::BYTES).map(T::read_le).collect();
        if tensors.insert(name.clone(), (shape, values)).is_some() {
            return Err(Error::CorruptCheckpoint(format!(
                "duplicate tensor `{name}`"
            )));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }

    for (name, param) in net.named_params_mut() {
        let (shape, values) = tensors
            .remove(&name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor `{name}`")))?;
        if shape != param.shape() {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor `{name}` has shape {shape:?}, network expects {:?}",
                param.shape()
            )));
        }
        param.value = values;
    }
    for (name, buf) in net.named_buffers_mut() {
        let (shape, values) = tensors
            .remove(&name)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("missing tensor `{name}`")))?;
        if shape != [buf.len()] {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor `{name}` has shape {shape:?}"
            )));
        }
        *buf = values;
    }
    if let Some(extra) = tensors.keys().min() {
        return Err(Error::CorruptCheckpoint(format!(
            "unexpected tensor `{extra}`"
        )));
    }
    Ok((net, meta))
}

/// Writes to a sibling temporary file and renames it into place, so an
/// interrupted save never leaves a partial checkpoint at `path`.
pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    net: &Network<T>,
    meta: &CheckpointMeta,
) -> Result<()> {
    write_atomic(path, &checkpoint_to_bytes(net, meta))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Network<T>, CheckpointMeta)> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    checkpoint_from_bytes(&bytes)
}

/// Like [`load_checkpoint`], but rejects a checkpoint whose architecture
/// differs from `expected`.
pub fn load_checkpoint_for<T: Scalar>(
    path: &Path,
    expected: &NetworkSpec,
) -> Result<(Network<T>, CheckpointMeta)> {
    let (net, meta) = load_checkpoint(path)?;
    if net.spec() != expected {
        return Err(Error::SpecMismatch(format!(
            "{} blocks, window {} in file vs {} blocks, window {} expected",
            net.spec().blocks.len(),
            net.spec().window_length,
            expected.blocks.len(),
            expected.window_length
        )));
    }
    Ok((net, meta))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(bytes).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
    }
    fs::rename(&tmp, path).map_err(io_err)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated)?;
        if end > self.bytes.len() {
            return Err(Error::Truncated);
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize> {
        self.u32().map(|v| v as usize)
    }
}
