//! Minimal deterministic tensor engine with reverse-mode autodiff.

mod adam;
mod attention;
mod check;
pub mod dump;
mod tape;

pub use adam::{AdamConfig, AdamState};
pub use attention::{multi_head_attention, AttentionOutput, AttentionWeights};
pub use check::{finite_difference_check, GradCheckConfig, GradCheckReport};
pub use tape::{Padding, Tape, Tensor, TensorId};
