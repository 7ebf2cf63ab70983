//! Paired geometric augmentation: horizontal flips and 90-degree rotations
//! applied identically to a foggy frame and its ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::frame::Frame;

/// An element of the dihedral group D4 in the normal form
/// `rotate(quarter_turns) . flip_horizontal(flip)` (flip applied first).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dihedral {
    pub flip: bool,
    /// Counterclockwise quarter turns in {0,1,2,3}.
    pub quarter_turns: u8,
}

impl Dihedral {
    pub const IDENTITY: Dihedral = Dihedral { flip: false, quarter_turns: 0 };

    /// Flip with probability 1/2, rotation uniform over the four turns.
    pub fn sample(rng: &mut impl Rng) -> Dihedral {
        let quarter_turns = rng.gen_range(0..4u8);
        let flip = rng.gen_bool(0.5);
        Dihedral { flip, quarter_turns }
    }

    pub fn inverse(self) -> Dihedral {
        if self.flip {
            // Reflections are involutions.
            self
        } else {
            Dihedral { flip: false, quarter_turns: (4 - self.quarter_turns) % 4 }
        }
    }

    /// Apply to a square frame.
    pub fn apply(self, frame: &Frame) -> Result<Frame> {
        if frame.width() != frame.height() {
            return Err(Error::contract(format!(
                "rotation requires a square frame, got {}x{}",
                frame.width(),
                frame.height()
            )));
        }
        let mut out = if self.flip { flip_horizontal(frame) } else { frame.clone() };
        for _ in 0..self.quarter_turns {
            out = rotate_ccw(&out);
        }
        Ok(out)
    }
}

fn flip_horizontal(frame: &Frame) -> Frame {
    let w = frame.width();
    Frame::from_fn(w, frame.height(), |x, y| frame.pixel(w - 1 - x, y)).expect("flip keeps validity")
}

fn rotate_ccw(frame: &Frame) -> Frame {
    let w = frame.width();
    Frame::from_fn(w, w, |x, y| frame.pixel(w - 1 - y, x)).expect("rotation keeps validity")
}

/// Sample one transform from `seed` and apply it to both frames.
pub fn augment(foggy: &Frame, clear: &Frame, seed: u64) -> Result<(Frame, Frame)> {
    if !foggy.same_dims(clear) {
        return Err(Error::shape(format!(
            "augment pair dimensions differ: {}x{} vs {}x{}",
            foggy.width(),
            foggy.height(),
            clear.width(),
            clear.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = Dihedral::sample(&mut rng);
    Ok((t.apply(foggy)?, t.apply(clear)?))
}
