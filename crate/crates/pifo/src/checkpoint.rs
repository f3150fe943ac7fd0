//! Checkpoint files: named f32 tensors in a flat little-endian container.
//!
//! Layout: magic `"PIFO"` (4 bytes), `u32` version (currently 1), `u32`
//! tensor count, then per tensor: `u16` name length, the UTF-8 name, `u8`
//! rank, rank × `u32` extents, and product-of-extents × `f32` values.
//! There is no padding anywhere. Values are stored in f32 and promoted back
//! to f64 on load, so save → load → save reproduces a file byte for byte.
//!
//! Policy checkpoints additionally carry two metadata tensors so a file is
//! self-describing: `meta/env_id` (the environment id string, one byte per
//! element) and `meta/mode` (0 = proprio, 1 = vision).

use std::path::Path;

use pifo_core::env::{spec_for, EnvId};
use pifo_core::nn::ParamSet;
use pifo_core::policy::{GaussianPolicy, Mode, DEFAULT_HIDDEN};
use pifo_core::tensor::Tensor;

use crate::error::{AppError, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"PIFO";
pub const VERSION: u32 = 1;

pub const META_ENV: &str = "meta/env_id";
pub const META_MODE: &str = "meta/mode";

/// Serializes a parameter set into checkpoint bytes.
pub fn checkpoint_bytes(params: &ParamSet) -> std::result::Result<Vec<u8>, FormatError> {
    let count = u32::try_from(params.len())
        .map_err(|_| FormatError::Malformed("too many tensors for a u32 count".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for e in params.iter() {
        let name = e.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| FormatError::Malformed(format!("tensor name too long: {:?}", e.name)))?;
        let rank = u8::try_from(e.value.rank())
            .map_err(|_| FormatError::Malformed(format!("tensor rank too high: {:?}", e.name)))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(rank);
        for &d in e.value.dims() {
            let d = u32::try_from(d).map_err(|_| {
                FormatError::Malformed(format!("extent too large in tensor {:?}", e.name))
            })?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in e.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses checkpoint bytes back into a parameter set (gradients zeroed).
pub fn parse_checkpoint(bytes: &[u8]) -> std::result::Result<ParamSet, FormatError> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(FormatError::BadMagic { expected: "PIFO" });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { found: version, supported: VERSION });
    }
    let count = r.u32()? as usize;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = core::str::from_utf8(r.take(name_len)?)
            .map_err(|_| FormatError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1)?[0] as usize;
        let mut dims = Vec::with_capacity(rank);
        let mut len: usize = 1;
        for _ in 0..rank {
            let d = r.u32()? as usize;
            len = len
                .checked_mul(d)
                .ok_or_else(|| FormatError::Malformed(format!("tensor {name:?} too large")))?;
            dims.push(d);
        }
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(r.f32()? as f64);
        }
        let value = Tensor::from_vec(&dims, data)
            .map_err(|e| FormatError::Malformed(format!("tensor {name:?}: {e}")))?;
        params
            .insert(&name, value)
            .map_err(|_| FormatError::Malformed(format!("duplicate tensor name {name:?}")))?;
    }
    if !r.done() {
        return Err(FormatError::Malformed(format!(
            "{} trailing byte(s) after the last tensor",
            r.remaining()
        )));
    }
    Ok(params)
}

pub fn save_params(params: &ParamSet, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(params).map_err(AppError::format(path))?;
    std::fs::write(path, bytes).map_err(AppError::io(path))
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    let bytes = std::fs::read(path).map_err(AppError::io(path))?;
    parse_checkpoint(&bytes).map_err(AppError::format(path))
}

/// A policy restored from disk together with its recorded environment.
#[derive(Debug, Clone)]
pub struct PolicyCheckpoint {
    pub policy: GaussianPolicy,
    pub env: EnvId,
}

/// Writes a policy checkpoint with `meta/env_id` and `meta/mode` appended.
pub fn save_policy(policy: &GaussianPolicy, env: EnvId, path: &Path) -> Result<()> {
    let mut set = policy.params.clone();
    let id: Vec<f64> = env.as_str().bytes().map(f64::from).collect();
    let id_len = id.len();
    set.insert(META_ENV, Tensor::from_vec(&[id_len], id)?)?;
    let mode = match policy.mode() {
        Mode::Proprio => 0.0,
        Mode::Vision => 1.0,
    };
    set.insert(META_MODE, Tensor::from_vec(&[1], vec![mode])?)?;
    save_params(&set, path)
}

/// Loads a policy checkpoint, validating metadata and every tensor shape.
pub fn load_policy(path: &Path) -> Result<PolicyCheckpoint> {
    let set = load_params(path)?;
    let malformed = |msg: String| AppError::Format {
        path: path.to_path_buf(),
        source: FormatError::Malformed(msg),
    };
    let env_entry = set
        .get(META_ENV)
        .ok_or_else(|| malformed(format!("missing {META_ENV} tensor")))?;
    let mut id = String::new();
    for &v in env_entry.value.data() {
        if v.fract() != 0.0 || !(0.0..128.0).contains(&v) {
            return Err(malformed(format!("{META_ENV} holds a non-ASCII code {v}")));
        }
        id.push(v as u8 as char);
    }
    let env = EnvId::parse(&id).map_err(|_| malformed(format!("unknown environment id {id:?}")))?;
    let mode_entry = set
        .get(META_MODE)
        .ok_or_else(|| malformed(format!("missing {META_MODE} tensor")))?;
    let mode = match mode_entry.value.data() {
        [v] if *v == 0.0 => Mode::Proprio,
        [v] if *v == 1.0 => Mode::Vision,
        other => return Err(malformed(format!("bad {META_MODE} value {other:?}"))),
    };
    let mut body = ParamSet::new();
    for e in set.iter().filter(|e| e.name != META_ENV && e.name != META_MODE) {
        body.insert(&e.name, e.value.clone())?;
    }
    let spec = spec_for(env);
    let policy =
        GaussianPolicy::from_params(mode, spec.proprio_dim, spec.action_dim, &DEFAULT_HIDDEN, body)
            .map_err(|e| malformed(e.to_string()))?;
    Ok(PolicyCheckpoint { policy, env })
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> ByteReader<'a> {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let have = self.bytes.len() - self.pos;
        if have < n {
            return Err(FormatError::Truncated { offset: self.pos, wanted: n - have });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> std::result::Result<u16, FormatError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> std::result::Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}
