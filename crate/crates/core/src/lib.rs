//! Desk-scale video defogging toolkit.
//!
//! The crate bundles everything needed to run a small, fully deterministic
//! defogging experiment end to end:
//!
//! - [`tensor`]: a minimal f64 N-D tensor engine with reverse-mode autodiff,
//!   an ADAM optimizer and a finite-difference gradient checker;
//! - [`dataset`]: frame/depth loading, stop-motion recomposition, triplet
//!   windows, resizing and paired augmentation;
//! - [`fog`]: depth-driven fog synthesis with panel-contrast calibration;
//! - [`dcp`]: a dark-channel-prior single-image defogger applied per frame;
//! - [`tcvd`]: the CNN+Transformer video defogger, its loss and training loop;
//! - [`metrics`]: reference SSIM/PSNR, a flicker diagnostic and benchmark
//!   report aggregation;
//! - [`scene`]: a built-in procedural scene so experiments need no external
//!   data.

pub mod dataset;
pub mod dcp;
pub mod error;
pub mod fog;
pub mod metrics;
pub mod scene;
pub mod tcvd;
pub mod tensor;

pub use error::{Error, Result};
