//! Architecture hyperparameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the CNN+Transformer defogger: four encoder stages with a
/// temporal transformer after each of the first three, a mirrored decoder
/// with skip connections, and the loss balance for `a*(1-SSIM) + b*L1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcvdConfig {
    /// Channel count of each encoder stage.
    pub encoder_filters: Vec<usize>,
    /// Number of temporal transformer stages (one per early encoder stage).
    pub tpformer_stages: usize,
    /// Attention heads per transformer stage.
    pub heads: usize,
    /// Square input side; frames are resized to this before the network.
    pub input_size: usize,
    /// Frames per temporal window.
    pub triplet_len: usize,
    pub loss_a: f64,
    pub loss_b: f64,
}

impl TcvdConfig {
    /// Small configuration used by tests and desk experiments.
    pub fn desk() -> TcvdConfig {
        TcvdConfig {
            encoder_filters: vec![8, 16, 32, 64],
            tpformer_stages: 3,
            heads: 2,
            input_size: 64,
            triplet_len: 3,
            loss_a: 1.0,
            loss_b: 1.0,
        }
    }

    /// Full-scale configuration (224px input, filters 32/64/128/256). Built
    /// but not trained by the test suite.
    pub fn full_scale() -> TcvdConfig {
        TcvdConfig {
            encoder_filters: vec![32, 64, 128, 256],
            tpformer_stages: 3,
            heads: 4,
            input_size: 224,
            triplet_len: 3,
            loss_a: 1.0,
            loss_b: 1.0,
        }
    }

    /// Even smaller variant for gradient checking.
    pub fn micro(input_size: usize) -> TcvdConfig {
        TcvdConfig { input_size, ..TcvdConfig::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_filters.is_empty() || self.encoder_filters.contains(&0) {
            return Err(Error::config("encoder filter list must be nonempty and positive"));
        }
        if self.encoder_filters.len() != self.tpformer_stages + 1 {
            return Err(Error::config(format!(
                "expected {} encoder stages for {} transformer stages, got {}",
                self.tpformer_stages + 1,
                self.tpformer_stages,
                self.encoder_filters.len()
            )));
        }
        if self.heads == 0 {
            return Err(Error::config("attention needs at least one head"));
        }
        for (s, &dim) in self.encoder_filters[..self.tpformer_stages].iter().enumerate() {
            if dim % self.heads != 0 {
                return Err(Error::config(format!(
                    "stage {} dim {dim} not divisible by {} heads",
                    s + 1,
                    self.heads
                )));
            }
        }
        if self.triplet_len != 3 {
            return Err(Error::config(format!(
                "temporal window is fixed at 3 frames, got {}",
                self.triplet_len
            )));
        }
        let stages = self.encoder_filters.len() as u32;
        let down = 1usize << stages;
        if self.input_size < 16 || !self.input_size.is_multiple_of(down) {
            return Err(Error::config(format!(
                "input size {} must be >= 16 and divisible by {down}",
                self.input_size
            )));
        }
        if self.loss_a < 0.0 || self.loss_b < 0.0 || self.loss_a + self.loss_b <= 0.0 {
            return Err(Error::config(format!(
                "loss weights must be nonnegative with a positive sum, got a={} b={}",
                self.loss_a, self.loss_b
            )));
        }
        Ok(())
    }

    /// (spatial side, channels) of each encoder stage output, stage 1 first.
    pub fn stage_shapes(&self) -> Vec<(usize, usize)> {
        self.encoder_filters
            .iter()
            .enumerate()
            .map(|(s, &c)| (self.input_size >> (s + 1), c))
            .collect()
    }
}
