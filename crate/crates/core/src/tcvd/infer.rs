//! Whole-video inference.

use crate::dataset::FrameSequence;
use crate::error::{Error, Result};
use crate::tensor::Tape;

use super::forward::tensor_to_frame;
use super::model::TcvdModel;

/// Restore every frame of a sequence: build its triplet (edge replication at
/// the boundaries), forward, and emit the restored center. Output length
/// equals input length.
pub fn infer_video(model: &TcvdModel, seq: &FrameSequence) -> Result<FrameSequence> {
    let size = model.config().input_size;
    for (i, (frame, _)) in seq.frames().iter().enumerate() {
        if frame.width() != size || frame.height() != size {
            return Err(Error::shape(format!(
                "frame {i} is {}x{}, model expects {size}x{size} (resize first)",
                frame.width(),
                frame.height()
            )));
        }
    }
    let mut out = FrameSequence::new();
    out.depths = seq.depths.clone();
    for (i, triplet) in seq.triplets().enumerate() {
        let mut tape = Tape::new();
        let pass = model.forward(&mut tape, triplet, false)?;
        let restored = tensor_to_frame(&tape, pass.restored)?;
        out.push(restored, *seq.tag(i))?;
    }
    Ok(out)
}
