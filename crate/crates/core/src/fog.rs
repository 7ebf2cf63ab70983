//! Depth-driven fog synthesis and panel-contrast density measurement.
//!
//! Fog follows the homogeneous scattering law `I = J*t + A*(1-t)` with
//! transmission `t = exp(-beta * depth)`. Density is measured the way the
//! source data was calibrated: Michelson contrast between the black and
//! white patches of a reference panel.

use crate::dataset::{Density, DepthMap, Frame};
use crate::error::{Error, Result};

/// Rec. 709 luminance weights shared by all contrast computations.
pub const LUMA_WEIGHTS: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Contrast anchors of the three fog density classes, densest first.
pub const CONTRAST_ANCHORS: [f64; 3] = [0.015, 0.05, 0.15];

/// Contrast above which a frame counts as clear.
pub const CLEAR_CONTRAST_THRESHOLD: f64 = 0.30;

/// Extinction coefficient plus airlight color.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FogParams {
    /// Extinction coefficient in 1/cm.
    pub beta: f64,
    /// Ambient light color, channels in [0,1].
    pub airlight: [f64; 3],
}

impl FogParams {
    pub fn new(beta: f64, airlight: [f64; 3]) -> Result<FogParams> {
        if beta < 0.0 || !beta.is_finite() {
            return Err(Error::contract(format!("extinction coefficient must be >= 0, got {beta}")));
        }
        if airlight.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::contract(format!("airlight {airlight:?} outside [0,1]")));
        }
        Ok(FogParams { beta, airlight })
    }

    /// Neutral (gray) airlight of the given luminance.
    pub fn gray(beta: f64, level: f64) -> Result<FogParams> {
        FogParams::new(beta, [level, level, level])
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Rect {
        Rect { x, y, width, height }
    }

    fn check_in(&self, frame: &Frame, name: &str) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::contract(format!("{name} panel region is empty")));
        }
        if self.x + self.width > frame.width() || self.y + self.height > frame.height() {
            return Err(Error::contract(format!(
                "{name} panel region {self:?} exceeds frame {}x{}",
                frame.width(),
                frame.height()
            )));
        }
        Ok(())
    }

    fn intersects(&self, other: &Rect) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }
}

/// The black & white reference panel used to monitor fog density.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanelRoi {
    pub black: Rect,
    pub white: Rect,
}

impl PanelRoi {
    pub fn new(black: Rect, white: Rect) -> Result<PanelRoi> {
        if black.intersects(&white) {
            return Err(Error::contract("panel regions overlap"));
        }
        Ok(PanelRoi { black, white })
    }
}

/// Per-pixel transmission `t = exp(-beta * depth)`; invalid-depth pixels are
/// treated as unfogged (t = 1).
pub fn transmission(depth: &DepthMap, beta: f64) -> Result<Vec<f64>> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(Error::contract(format!("extinction coefficient must be >= 0, got {beta}")));
    }
    Ok(depth
        .depths()
        .iter()
        .zip(depth.valid_mask())
        .map(|(&d, &v)| if v { (-beta * d).exp() } else { 1.0 })
        .collect())
}

/// Blend scene radiance toward the airlight: `I = J*t + A*(1-t)` per pixel
/// and channel, clamped to [0,1].
#[allow(clippy::needless_range_loop)]
pub fn apply_fog(clear: &Frame, depth: &DepthMap, params: &FogParams) -> Result<Frame> {
    if !depth.matches_frame(clear) {
        return Err(Error::shape(format!(
            "depth map {}x{} does not match frame {}x{}",
            depth.width(),
            depth.height(),
            clear.width(),
            clear.height()
        )));
    }
    let t = transmission(depth, params.beta)?;
    let mut pixels = Vec::with_capacity(clear.pixels().len());
    for (i, chunk) in clear.pixels().chunks_exact(3).enumerate() {
        let ti = t[i];
        for c in 0..3 {
            let v = chunk[c] * ti + params.airlight[c] * (1.0 - ti);
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Frame::new(clear.width(), clear.height(), pixels)
}

fn mean_luminance(frame: &Frame, rect: &Rect) -> f64 {
    let mut sum = 0.0;
    for y in rect.y..rect.y + rect.height {
        for x in rect.x..rect.x + rect.width {
            sum += frame.luminance(x, y);
        }
    }
    sum / (rect.width * rect.height) as f64
}

/// Michelson contrast `(L_w - L_b) / (L_w + L_b)` of the panel's mean
/// luminances; 0 when both regions are black.
pub fn panel_contrast(frame: &Frame, roi: &PanelRoi) -> Result<f64> {
    roi.black.check_in(frame, "black")?;
    roi.white.check_in(frame, "white")?;
    let lb = mean_luminance(frame, &roi.black);
    let lw = mean_luminance(frame, &roi.white);
    let sum = lw + lb;
    if sum == 0.0 {
        return Ok(0.0);
    }
    Ok((lw - lb) / sum)
}

/// Mean luminance over both panel patches; the airlight level that makes the
/// contrast scaling law exact.
pub fn panel_mean_luminance(frame: &Frame, roi: &PanelRoi) -> Result<f64> {
    roi.black.check_in(frame, "black")?;
    roi.white.check_in(frame, "white")?;
    Ok(0.5 * (mean_luminance(frame, &roi.black) + mean_luminance(frame, &roi.white)))
}

/// Nearest-anchor density classification with geometric-mean boundaries.
pub fn density_class(contrast: f64) -> Density {
    let dense_medium = (CONTRAST_ANCHORS[0] * CONTRAST_ANCHORS[1]).sqrt();
    let medium_light = (CONTRAST_ANCHORS[1] * CONTRAST_ANCHORS[2]).sqrt();
    if contrast > CLEAR_CONTRAST_THRESHOLD {
        Density::Clear
    } else if contrast > medium_light {
        Density::Light
    } else if contrast > dense_medium {
        Density::Medium
    } else {
        Density::Dense
    }
}

/// Extinction coefficient that moves the panel contrast from
/// `clear_contrast` to `target` at the given panel depth, assuming the
/// airlight is set to the panel's mean luminance:
/// `beta = ln(c0 / c*) / depth`.
pub fn beta_for_contrast(panel_depth_cm: f64, clear_contrast: f64, target: f64) -> Result<f64> {
    if panel_depth_cm <= 0.0 {
        return Err(Error::contract(format!("panel depth must be positive, got {panel_depth_cm}")));
    }
    if target <= 0.0 {
        return Err(Error::contract(format!("target contrast must be positive, got {target}")));
    }
    if target > clear_contrast {
        return Err(Error::Numerical(format!(
            "infeasible contrast target {target}: fog cannot raise the clear contrast {clear_contrast}"
        )));
    }
    Ok((clear_contrast / target).ln() / panel_depth_cm)
}
