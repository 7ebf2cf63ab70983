//! Ordered frame sequences and triplet windows.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::frame::{DepthMap, Frame};
use super::tags::{AcquisitionTag, Density};

/// An ordered video: frames with their acquisition tags, plus the shared
/// per-position depth maps when available.
#[derive(Debug, Clone, Default)]
pub struct FrameSequence {
    frames: Vec<(Frame, AcquisitionTag)>,
    /// One depth map per robot position, shared across lighting/density.
    pub depths: BTreeMap<usize, DepthMap>,
}

impl FrameSequence {
    pub fn new() -> FrameSequence {
        FrameSequence::default()
    }

    pub fn push(&mut self, frame: Frame, tag: AcquisitionTag) -> Result<()> {
        if let Some((first, _)) = self.frames.first() {
            if !first.same_dims(&frame) {
                return Err(Error::shape(format!(
                    "sequence frames are {}x{} but position {} is {}x{}",
                    first.width(),
                    first.height(),
                    tag.position,
                    frame.width(),
                    frame.height()
                )));
            }
        }
        self.frames.push((frame, tag));
        Ok(())
    }

    pub fn from_frames(frames: Vec<(Frame, AcquisitionTag)>) -> Result<FrameSequence> {
        let mut seq = FrameSequence::new();
        for (f, t) in frames {
            seq.push(f, t)?;
        }
        Ok(seq)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[(Frame, AcquisitionTag)] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i].0
    }

    pub fn tag(&self, i: usize) -> &AcquisitionTag {
        &self.frames[i].1
    }

    /// The shared (lighting, density) of all frames, if uniform.
    pub fn video_key(&self) -> Option<(usize, Density)> {
        let first = self.frames.first()?.1.video_key();
        self.frames.iter().all(|(_, t)| t.video_key() == first).then_some(first)
    }

    /// Sliding (prev, center, next) windows with edge replication, one
    /// triplet per frame.
    pub fn triplets(&self) -> impl Iterator<Item = [&Frame; 3]> {
        let n = self.len();
        (0..n).map(move |i| {
            let prev = i.saturating_sub(1);
            let next = (i + 1).min(n - 1);
            [self.frame(prev), self.frame(i), self.frame(next)]
        })
    }
}

/// Index triples for the sliding triplet window over a length-`n` sequence.
pub fn triplet_indices(n: usize) -> Vec<[usize; 3]> {
    (0..n).map(|i| [i.saturating_sub(1), i, (i + 1).min(n.saturating_sub(1))]).collect()
}
