//! Demonstration files: rendered frames and nothing else.
//!
//! Layout: magic `"DEMO"` (4 bytes), `u32` version (currently 1), `u16`
//! environment-id length plus the UTF-8 id, `u32` trajectory count, then per
//! trajectory a `u32` frame count `T` followed by `T` frames of 4096 bytes
//! each (row-major 64×64, every byte 0 or 255). The loader maps 255 → lit
//! and 0 → unlit and rejects anything else.
//!
//! A trajectory holds one frame per environment step, so `T` never exceeds
//! the environment's episode cap. The format deliberately has no field for
//! states, actions, or rewards: an imitator reading this file can only ever
//! see what the expert's behaviour looked like.

use std::path::Path;
use std::sync::Arc;

use pifo_core::disc::{build_stacks, FrameStack};
use pifo_core::env::render::{Frame, FRAME_PIXELS};
use pifo_core::env::EnvId;

use crate::error::{AppError, FormatError, Result};

pub const MAGIC: &[u8; 4] = b"DEMO";
pub const VERSION: u32 = 1;

/// A set of expert trajectories, each a sequence of binary frames.
#[derive(Debug, Clone)]
pub struct DemoSet {
    env: EnvId,
    trajectories: Vec<Vec<Arc<Frame>>>,
}

impl DemoSet {
    /// Wraps trajectories, requiring at least one and none empty.
    pub fn new(env: EnvId, trajectories: Vec<Vec<Arc<Frame>>>) -> Result<DemoSet> {
        if trajectories.is_empty() {
            return Err(AppError::Run("a demo set needs at least one trajectory".into()));
        }
        if trajectories.iter().any(|t| t.is_empty()) {
            return Err(AppError::Run("demo trajectories must hold at least one frame".into()));
        }
        Ok(DemoSet { env, trajectories })
    }

    pub fn env(&self) -> EnvId {
        self.env
    }

    pub fn trajectories(&self) -> &[Vec<Arc<Frame>>] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.trajectories.iter().map(|t| t.len()).sum()
    }

    /// Every four-frame stack from every trajectory, edges replicated,
    /// never crossing a trajectory boundary.
    pub fn all_stacks(&self) -> Vec<FrameStack> {
        let mut out = Vec::with_capacity(self.total_frames());
        for traj in &self.trajectories {
            out.extend(build_stacks(traj));
        }
        out
    }
}

/// Serializes a demo set into file bytes.
pub fn demo_bytes(set: &DemoSet) -> std::result::Result<Vec<u8>, FormatError> {
    let id = set.env.as_str().as_bytes();
    let traj_count = u32::try_from(set.trajectories.len())
        .map_err(|_| FormatError::Malformed("too many trajectories for a u32 count".into()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(id.len() as u16).to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&traj_count.to_le_bytes());
    for traj in &set.trajectories {
        let frames = u32::try_from(traj.len())
            .map_err(|_| FormatError::Malformed("trajectory too long for a u32 count".into()))?;
        out.extend_from_slice(&frames.to_le_bytes());
        for frame in traj {
            out.extend(frame.data().iter().map(|&b| if b != 0 { 255u8 } else { 0u8 }));
        }
    }
    Ok(out)
}

/// Parses demo file bytes, validating every pixel byte.
pub fn parse_demos(bytes: &[u8]) -> std::result::Result<DemoSet, FormatError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> std::result::Result<&[u8], FormatError> {
        let have = bytes.len() - *pos;
        if have < n {
            return Err(FormatError::Truncated { offset: *pos, wanted: n - have });
        }
        let out = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(out)
    };
    if take(&mut pos, 4)? != MAGIC {
        return Err(FormatError::BadMagic { expected: "DEMO" });
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion { found: version, supported: VERSION });
    }
    let id_len = u16::from_le_bytes(take(&mut pos, 2)?.try_into().unwrap()) as usize;
    let id = core::str::from_utf8(take(&mut pos, id_len)?)
        .map_err(|_| FormatError::Malformed("environment id is not UTF-8".into()))?;
    let env = EnvId::parse(id)
        .map_err(|_| FormatError::Malformed(format!("unknown environment id {id:?}")))?;
    let traj_count = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let mut trajectories = Vec::with_capacity(traj_count.min(1 << 16));
    for t in 0..traj_count {
        let frames = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        if frames == 0 {
            return Err(FormatError::Malformed(format!("trajectory {t} has no frames")));
        }
        let mut traj = Vec::with_capacity(frames);
        for f in 0..frames {
            let raw = take(&mut pos, FRAME_PIXELS)?;
            let mut data = Vec::with_capacity(FRAME_PIXELS);
            for &b in raw {
                match b {
                    0 => data.push(0u8),
                    255 => data.push(1u8),
                    other => {
                        return Err(FormatError::Malformed(format!(
                            "trajectory {t} frame {f} holds pixel byte {other} (want 0 or 255)"
                        )))
                    }
                }
            }
            traj.push(Arc::new(Frame::from_bytes01(data).map_err(|e| {
                FormatError::Malformed(format!("trajectory {t} frame {f}: {e}"))
            })?));
        }
        trajectories.push(traj);
    }
    if pos != bytes.len() {
        return Err(FormatError::Malformed(format!(
            "{} trailing byte(s) after the last trajectory",
            bytes.len() - pos
        )));
    }
    if trajectories.is_empty() {
        return Err(FormatError::Malformed("demo file holds no trajectories".into()));
    }
    Ok(DemoSet { env, trajectories })
}

pub fn save_demos(set: &DemoSet, path: &Path) -> Result<()> {
    let bytes = demo_bytes(set).map_err(AppError::format(path))?;
    std::fs::write(path, bytes).map_err(AppError::io(path))
}

pub fn load_demos(path: &Path) -> Result<DemoSet> {
    let bytes = std::fs::read(path).map_err(AppError::io(path))?;
    parse_demos(&bytes).map_err(AppError::format(path))
}
