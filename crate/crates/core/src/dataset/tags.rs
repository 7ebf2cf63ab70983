//! Acquisition tags: which robot position, lighting and fog density a frame
//! was captured under.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of lighting conditions (one heterogeneous plus five white-LED).
pub const LIGHTING_CONDITIONS: usize = 6;

/// Fog density class, named by the panel-contrast anchor it targets.
/// Lower contrast means denser fog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Density {
    /// Panel contrast 0.015.
    #[serde(rename = "0.015")]
    Dense,
    /// Panel contrast 0.05.
    #[serde(rename = "0.05")]
    Medium,
    /// Panel contrast 0.15.
    #[serde(rename = "0.15")]
    Light,
    #[serde(rename = "clear")]
    Clear,
}

impl Density {
    /// The three foggy classes, densest first.
    pub const FOGGY: [Density; 3] = [Density::Dense, Density::Medium, Density::Light];

    /// Panel-contrast anchor; `None` for clear.
    pub fn target_contrast(self) -> Option<f64> {
        match self {
            Density::Dense => Some(0.015),
            Density::Medium => Some(0.05),
            Density::Light => Some(0.15),
            Density::Clear => None,
        }
    }

    /// Directory-layout label.
    pub fn label(self) -> &'static str {
        match self {
            Density::Dense => "0.015",
            Density::Medium => "0.05",
            Density::Light => "0.15",
            Density::Clear => "clear",
        }
    }

    pub fn parse_label(s: &str) -> Result<Density> {
        match s {
            "0.015" => Ok(Density::Dense),
            "0.05" => Ok(Density::Medium),
            "0.15" => Ok(Density::Light),
            "clear" => Ok(Density::Clear),
            other => Err(Error::contract(format!(
                "unknown density label {other:?} (expected 0.015, 0.05, 0.15 or clear)"
            ))),
        }
    }
}

impl std::fmt::Display for Density {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Where in the acquisition grid a frame came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AcquisitionTag {
    /// Robot position index; also the frame order within a recomposed video.
    pub position: usize,
    /// Lighting condition index in `[0, LIGHTING_CONDITIONS)`.
    pub lighting: usize,
    pub density: Density,
}

impl AcquisitionTag {
    pub fn new(position: usize, lighting: usize, density: Density) -> Result<AcquisitionTag> {
        if lighting >= LIGHTING_CONDITIONS {
            return Err(Error::contract(format!(
                "lighting index {lighting} out of range [0, {LIGHTING_CONDITIONS})"
            )));
        }
        Ok(AcquisitionTag { position, lighting, density })
    }

    /// The (lighting, density) pair identifying a recomposed video.
    pub fn video_key(&self) -> (usize, Density) {
        (self.lighting, self.density)
    }
}
