//! Pixel containers: RGB frames in [0,1] and metric depth maps.

use crate::error::{Error, Result};

/// Smallest accepted frame side.
pub const MIN_FRAME_DIM: usize = 8;

/// An RGB image with channel values in `[0,1]`, stored row-major
/// interleaved (`H x W x 3`).
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Frame {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Frame> {
        if width < MIN_FRAME_DIM || height < MIN_FRAME_DIM {
            return Err(Error::contract(format!(
                "frame dimensions {width}x{height} below the {MIN_FRAME_DIM}px minimum"
            )));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::shape(format!(
                "frame {width}x{height} needs {} values, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::contract(format!("pixel value {bad} outside [0,1]")));
        }
        Ok(Frame { width, height, pixels })
    }

    /// Build from a per-pixel function returning RGB; values are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Result<Frame> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let rgb = f(x, y);
                for c in rgb {
                    pixels.push(c.clamp(0.0, 1.0));
                }
            }
        }
        Frame::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Frame> {
        Frame::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let off = (y * self.width + x) * 3;
        [self.pixels[off], self.pixels[off + 1], self.pixels[off + 2]]
    }

    /// Rec. 709 luminance of one pixel.
    pub fn luminance(&self, x: usize, y: usize) -> f64 {
        let [r, g, b] = self.pixel(x, y);
        0.2126 * r + 0.7152 * g + 0.0722 * b
    }

    pub fn same_dims(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Mean absolute per-channel difference.
    pub fn mean_abs_diff(&self, other: &Frame) -> Result<f64> {
        if !self.same_dims(other) {
            return Err(Error::shape(format!(
                "frames {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let sum: f64 = self.pixels.iter().zip(&other.pixels).map(|(a, b)| (a - b).abs()).sum();
        Ok(sum / self.pixels.len() as f64)
    }
}

/// Per-pixel metric depth in centimeters; `valid` marks sensor returns.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f64>, valid: Vec<bool>) -> Result<DepthMap> {
        if depth.len() != width * height || valid.len() != width * height {
            return Err(Error::shape(format!(
                "depth map {width}x{height} needs {} values, got {} depths / {} flags",
                width * height,
                depth.len(),
                valid.len()
            )));
        }
        for (d, v) in depth.iter().zip(&valid) {
            if *v && *d <= 0.0 {
                return Err(Error::contract(format!("valid depth must be positive, got {d}")));
            }
        }
        Ok(DepthMap { width, height, depth, valid })
    }

    /// Depth map from a function returning centimeters; `<= 0` marks invalid.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<DepthMap> {
        let mut depth = Vec::with_capacity(width * height);
        let mut valid = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let d = f(x, y);
                valid.push(d > 0.0);
                depth.push(if d > 0.0 { d } else { 0.0 });
            }
        }
        DepthMap::new(width, height, depth, valid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn at(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.depth[i])
    }

    pub fn matches_frame(&self, frame: &Frame) -> bool {
        self.width == frame.width() && self.height == frame.height()
    }
}
