//! Frame sequences, acquisition tags, loading and recomposition.

mod augment;
mod frame;
mod io;
mod recompose;
mod resize;
mod sequence;
mod tags;

pub use augment::{augment, Dihedral};
pub use frame::{DepthMap, Frame, MIN_FRAME_DIM};
pub use io::{
    load_dataset, load_depth, load_frame, load_manifest, load_sequence, save_depth, save_frame,
    save_manifest, save_sequence, video_dir, Dataset, Manifest,
};
pub use recompose::{recompose, Gap, RecomposedVideos};
pub use resize::resize;
pub use sequence::{triplet_indices, FrameSequence};
pub use tags::{AcquisitionTag, Density, LIGHTING_CONDITIONS};
