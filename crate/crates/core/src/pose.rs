//! Pose sequences and the binary pose file format.
//!
//! Pose file layout (all integers and floats little-endian):
//!
//! | field        | type                      |
//! |--------------|---------------------------|
//! | magic        | 4 bytes `EGPS`            |
//! | version      | u16 (currently 1)         |
//! | joint count  | u32 `J`                   |
//! | fps          | f32                       |
//! | frame count  | u32 `T`                   |
//! | joints       | `J` × (i32 parent or -1, u16 name length, UTF-8 name) |
//! | positions    | `T` × `J` × 3 f32, frame-major, then joint, then xyz |

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::skeleton::SkeletonSpec;

const MAGIC: &[u8; 4] = b"EGPS";
const VERSION: u16 = 1;

/// `frames × joints × 3` world-space joint positions in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSequence {
    data: Vec<f64>,
    frames: usize,
    skeleton: Arc<SkeletonSpec>,
}

impl PoseSequence {
    pub fn new(data: Vec<f64>, skeleton: Arc<SkeletonSpec>) -> Result<Self> {
        let stride = skeleton.joint_count() * 3;
        if data.is_empty() || data.len() % stride != 0 {
            return Err(CoreError::Pose(format!(
                "{} values is not a positive multiple of J*3 = {stride}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(CoreError::Pose(format!("non-finite value at flat index {i}")));
        }
        let frames = data.len() / stride;
        Ok(Self {
            data,
            frames,
            skeleton,
        })
    }

    pub fn zeros(frames: usize, skeleton: Arc<SkeletonSpec>) -> Result<Self> {
        let n = frames * skeleton.joint_count() * 3;
        Self::new(vec![0.0; n], skeleton)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn joints(&self) -> usize {
        self.skeleton.joint_count()
    }

    pub fn frame_len(&self) -> usize {
        self.joints() * 3
    }

    pub fn skeleton(&self) -> &Arc<SkeletonSpec> {
        &self.skeleton
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let s = self.frame_len();
        &self.data[t * s..(t + 1) * s]
    }

    pub fn joint(&self, t: usize, j: usize) -> [f64; 3] {
        let f = self.frame(t);
        [f[j * 3], f[j * 3 + 1], f[j * 3 + 2]]
    }

    /// Copy of frames `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.frames {
            return Err(CoreError::Pose(format!(
                "frame range {range:?} outside 0..{}",
                self.frames
            )));
        }
        let s = self.frame_len();
        Self::new(
            self.data[range.start * s..range.end * s].to_vec(),
            self.skeleton.clone(),
        )
    }

    /// Concatenates sequences along time; all must share one skeleton.
    pub fn concat(parts: &[&PoseSequence]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| CoreError::Pose("nothing to concatenate".into()))?;
        let mut data = Vec::new();
        for p in parts {
            if p.skeleton.joint_names != first.skeleton.joint_names {
                return Err(CoreError::Pose("skeleton mismatch in concat".into()));
            }
            data.extend_from_slice(&p.data);
        }
        Self::new(data, first.skeleton.clone())
    }

    /// Mean absolute difference over every coordinate.
    pub fn mean_l1(&self, other: &PoseSequence) -> Result<f64> {
        if self.data.len() != other.data.len() {
            return Err(CoreError::Pose("shape mismatch in mean_l1".into()));
        }
        let total: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .sum();
        Ok(total / self.data.len() as f64)
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let sk = &self.skeleton;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(sk.joint_count() as u32).to_le_bytes())?;
        w.write_all(&(sk.fps as f32).to_le_bytes())?;
        w.write_all(&(self.frames as u32).to_le_bytes())?;
        for (name, parent) in sk.joint_names.iter().zip(&sk.parents) {
            let parent = parent.map_or(-1i32, |p| p as i32);
            w.write_all(&parent.to_le_bytes())?;
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(mut r: impl Read, origin: &Path) -> Result<Self> {
        let bad = |reason: &str| CoreError::format(origin, reason);
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)
            .map_err(|e| CoreError::io(origin, e))?;
        let mut cur = Cursor {
            bytes: &bytes,
            pos: 0,
        };
        if cur.take(4).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = cur.u16().ok_or_else(|| bad("truncated header"))?;
        if version != VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let joints = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let fps = cur.f32().ok_or_else(|| bad("truncated header"))? as f64;
        let frames = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let mut names = Vec::with_capacity(joints);
        let mut parents = Vec::with_capacity(joints);
        for _ in 0..joints {
            let parent = cur.i32().ok_or_else(|| bad("truncated joint table"))?;
            let len = cur.u16().ok_or_else(|| bad("truncated joint table"))? as usize;
            let name = cur.take(len).ok_or_else(|| bad("truncated joint name"))?;
            names.push(
                String::from_utf8(name.to_vec()).map_err(|_| bad("joint name is not UTF-8"))?,
            );
            parents.push(if parent < 0 { None } else { Some(parent as usize) });
        }
        let skeleton = SkeletonSpec::new(names, parents, fps)
            .map_err(|e| bad(&e.to_string()))?;
        let count = frames * joints * 3;
        let raw = cur.take(count * 4).ok_or_else(|| bad("truncated pose data"))?;
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes after pose data"));
        }
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Self::new(data, Arc::new(skeleton)).map_err(|e| bad(&e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        std::fs::write(path, buf).map_err(|e| CoreError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
        Self::read_from(std::io::BufReader::new(f), path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn i32(&mut self) -> Option<i32> {
        self.take(4).map(|b| i32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Option<f32> {
        self.take(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn skel() -> Arc<SkeletonSpec> {
        Arc::new(SkeletonSpec::upper_body_8())
    }

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(PoseSequence::new(vec![f64::NAN; 24], skel()).is_err());
        assert!(PoseSequence::new(vec![0.0; 25], skel()).is_err());
        assert!(PoseSequence::new(vec![], skel()).is_err());
    }

    #[test]
    fn header_layout_is_stable() {
        let p = PoseSequence::zeros(2, skel()).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"EGPS");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u32::from_le_bytes([buf[6], buf[7], buf[8], buf[9]]), 8);
        assert_eq!(f32::from_le_bytes([buf[10], buf[11], buf[12], buf[13]]), 15.0);
        assert_eq!(u32::from_le_bytes([buf[14], buf[15], buf[16], buf[17]]), 2);
        let names: usize = skel().joint_names.iter().map(|n| 6 + n.len()).sum();
        assert_eq!(buf.len(), 18 + names + 2 * 8 * 3 * 4);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = PoseSequence::zeros(3, skel()).unwrap();
        let mut buf = Vec::new();
        p.write_to(&mut buf).unwrap();
        buf.pop();
        assert!(PoseSequence::read_from(&buf[..], Path::new("x.pose")).is_err());
    }

    proptest! {
        #[test]
        fn file_round_trip_preserves_f32_values(
            frames in 1usize..6,
            seed in proptest::collection::vec(-3.0f32..3.0, 24),
        ) {
            let data: Vec<f64> = (0..frames)
                .flat_map(|t| seed.iter().map(move |v| (*v + t as f32) as f64))
                .collect();
            let p = PoseSequence::new(data, skel()).unwrap();
            let mut buf = Vec::new();
            p.write_to(&mut buf).unwrap();
            let q = PoseSequence::read_from(&buf[..], Path::new("mem")).unwrap();
            prop_assert_eq!(q.as_slice(), p.as_slice());
            prop_assert_eq!(q.skeleton().as_ref(), p.skeleton().as_ref());
        }
    }
}
