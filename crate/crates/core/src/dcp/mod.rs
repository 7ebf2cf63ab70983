//! Dark-channel-prior defogging, applied independently per frame.
//!
//! Pipeline: dark channel -> airlight estimate -> transmission estimate ->
//! guided-filter refinement -> radiance recovery. Parameter defaults are the
//! canonical ones (omega 0.95, 15px patch, transmission floor 0.1, top 0.1%
//! airlight pixels), with a guided filter standing in for soft matting.

mod guided;

pub use guided::{box_mean, guided_filter};

use crate::dataset::{Frame, FrameSequence};
use crate::error::{Error, Result};

/// Floor applied to estimated airlight channels so the per-channel division
/// in recovery stays safe.
pub const AIRLIGHT_FLOOR: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct DcpParams {
    /// Dark-channel patch side; odd.
    pub patch: usize,
    /// Fraction of haze kept for aerial perspective.
    pub omega: f64,
    /// Transmission floor.
    pub t_floor: f64,
    /// Fraction of brightest dark-channel pixels considered for airlight.
    pub airlight_fraction: f64,
    pub guided_radius: usize,
    pub guided_eps: f64,
}

impl Default for DcpParams {
    fn default() -> Self {
        DcpParams {
            patch: 15,
            omega: 0.95,
            t_floor: 0.1,
            airlight_fraction: 0.001,
            guided_radius: 15,
            guided_eps: 1e-3,
        }
    }
}

/// Estimated ambient light; channels in `(0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Airlight(pub [f64; 3]);

/// Refined per-pixel transmission, clamped to `[t_floor, 1]`.
#[derive(Debug, Clone)]
pub struct TransmissionMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl TransmissionMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>, t_floor: f64) -> Result<TransmissionMap> {
        if values.len() != width * height {
            return Err(Error::shape(format!(
                "transmission map {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        let values = values.into_iter().map(|t| t.clamp(t_floor, 1.0)).collect();
        Ok(TransmissionMap { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-pixel min over channels, then min over an edge-clipped `patch x patch`
/// neighborhood (equivalent to edge replication for the min).
pub fn dark_channel(frame: &Frame, patch: usize) -> Result<Vec<f64>> {
    if patch.is_multiple_of(2) || patch == 0 {
        return Err(Error::contract(format!("dark channel patch must be odd, got {patch}")));
    }
    let (w, h) = (frame.width(), frame.height());
    let mut channel_min = vec![0.0f64; w * h];
    for (i, px) in frame.pixels().chunks_exact(3).enumerate() {
        channel_min[i] = px[0].min(px[1]).min(px[2]);
    }
    if patch == 1 {
        return Ok(channel_min);
    }
    let r = patch / 2;
    // Separable min filter: rows then columns.
    let mut row_min = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let x0 = x.saturating_sub(r);
            let x1 = (x + r + 1).min(w);
            let mut m = f64::INFINITY;
            for xx in x0..x1 {
                m = m.min(channel_min[y * w + xx]);
            }
            row_min[y * w + x] = m;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        let y0 = y.saturating_sub(r);
        let y1 = (y + r + 1).min(h);
        for x in 0..w {
            let mut m = f64::INFINITY;
            for yy in y0..y1 {
                m = m.min(row_min[yy * w + x]);
            }
            out[y * w + x] = m;
        }
    }
    Ok(out)
}

/// Among the brightest `top_fraction` of dark-channel pixels, pick the frame
/// pixel with the highest luminance; channels are floored at
/// [`AIRLIGHT_FLOOR`]. Ties break toward the lowest pixel index.
pub fn estimate_airlight(frame: &Frame, dark: &[f64], top_fraction: f64) -> Result<Airlight> {
    if !(0.0..=1.0).contains(&top_fraction) || top_fraction == 0.0 {
        return Err(Error::contract(format!(
            "airlight fraction must be in (0,1], got {top_fraction}"
        )));
    }
    let n = frame.width() * frame.height();
    if dark.len() != n {
        return Err(Error::shape(format!(
            "dark channel has {} values for a {n}-pixel frame",
            dark.len()
        )));
    }
    let take = ((top_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dark[b].partial_cmp(&dark[a]).unwrap().then(a.cmp(&b)));

    let mut best_idx = order[0];
    let mut best_luma = f64::NEG_INFINITY;
    for &i in &order[..take] {
        let (x, y) = (i % frame.width(), i / frame.width());
        let luma = frame.luminance(x, y);
        if luma > best_luma {
            best_luma = luma;
            best_idx = i;
        }
    }
    let (x, y) = (best_idx % frame.width(), best_idx / frame.width());
    let px = frame.pixel(x, y);
    Ok(Airlight([
        px[0].max(AIRLIGHT_FLOOR),
        px[1].max(AIRLIGHT_FLOOR),
        px[2].max(AIRLIGHT_FLOOR),
    ]))
}

/// `t = 1 - omega * dark_channel(I / A)`, clamped to `[t_floor, 1]`.
pub fn estimate_transmission(frame: &Frame, airlight: &Airlight, params: &DcpParams) -> Result<TransmissionMap> {
    if airlight.0.iter().any(|&c| c <= 0.0) {
        return Err(Error::contract(format!("airlight channels must be positive, got {:?}", airlight.0)));
    }
    // Normalized frame can exceed 1, so bypass Frame and run the dark
    // channel math on the raw buffer.
    let (w, h) = (frame.width(), frame.height());
    let mut channel_min = vec![0.0f64; w * h];
    for (i, px) in frame.pixels().chunks_exact(3).enumerate() {
        channel_min[i] =
            (px[0] / airlight.0[0]).min(px[1] / airlight.0[1]).min(px[2] / airlight.0[2]);
    }
    let dark = spatial_min(&channel_min, w, h, params.patch)?;
    let values: Vec<f64> = dark.iter().map(|d| 1.0 - params.omega * d).collect();
    TransmissionMap::new(w, h, values, params.t_floor)
}

fn spatial_min(values: &[f64], w: usize, h: usize, patch: usize) -> Result<Vec<f64>> {
    if patch.is_multiple_of(2) || patch == 0 {
        return Err(Error::contract(format!("dark channel patch must be odd, got {patch}")));
    }
    if patch == 1 {
        return Ok(values.to_vec());
    }
    let r = patch / 2;
    let mut row_min = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut m = f64::INFINITY;
            for xx in x.saturating_sub(r)..(x + r + 1).min(w) {
                m = m.min(values[y * w + xx]);
            }
            row_min[y * w + x] = m;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut m = f64::INFINITY;
            for yy in y.saturating_sub(r)..(y + r + 1).min(h) {
                m = m.min(row_min[yy * w + x]);
            }
            out[y * w + x] = m;
        }
    }
    Ok(out)
}

/// Edge-aware smoothing of the transmission map guided by the frame's
/// luminance; output re-clamped to `[t_floor, 1]`.
pub fn refine_transmission(
    t: &TransmissionMap,
    guide: &Frame,
    radius: usize,
    eps: f64,
) -> Result<TransmissionMap> {
    if guide.width() != t.width || guide.height() != t.height {
        return Err(Error::shape(format!(
            "guide {}x{} does not match transmission {}x{}",
            guide.width(),
            guide.height(),
            t.width,
            t.height
        )));
    }
    let mut luma = vec![0.0f64; t.values.len()];
    for y in 0..t.height {
        for x in 0..t.width {
            luma[y * t.width + x] = guide.luminance(x, y);
        }
    }
    let refined = guided_filter(&luma, &t.values, t.width, t.height, radius, eps);
    TransmissionMap::new(t.width, t.height, refined, 0.1)
}

/// Scene radiance recovery `J = (I - A) / max(t, t_floor) + A`, clamped to
/// [0,1].
#[allow(clippy::needless_range_loop)]
pub fn recover(frame: &Frame, t: &TransmissionMap, airlight: &Airlight, t_floor: f64) -> Result<Frame> {
    if frame.width() != t.width || frame.height() != t.height {
        return Err(Error::shape(format!(
            "frame {}x{} does not match transmission {}x{}",
            frame.width(),
            frame.height(),
            t.width,
            t.height
        )));
    }
    let mut pixels = Vec::with_capacity(frame.pixels().len());
    for (i, px) in frame.pixels().chunks_exact(3).enumerate() {
        let ti = t.values[i].max(t_floor);
        for c in 0..3 {
            let v = (px[c] - airlight.0[c]) / ti + airlight.0[c];
            pixels.push(v.clamp(0.0, 1.0));
        }
    }
    Frame::new(frame.width(), frame.height(), pixels)
}

/// Full single-frame pipeline.
pub fn defog_frame(frame: &Frame, params: &DcpParams) -> Result<Frame> {
    let dark = dark_channel(frame, params.patch)?;
    let airlight = estimate_airlight(frame, &dark, params.airlight_fraction)?;
    let t = estimate_transmission(frame, &airlight, params)?;
    let t = refine_transmission(&t, frame, params.guided_radius, params.guided_eps)?;
    recover(frame, &t, &airlight, params.t_floor)
}

/// Defog a whole sequence frame by frame; failures carry the frame index.
pub fn dcp_defog_video(seq: &FrameSequence, params: &DcpParams) -> Result<FrameSequence> {
    let mut out = FrameSequence::new();
    out.depths = seq.depths.clone();
    for (i, (frame, tag)) in seq.frames().iter().enumerate() {
        let restored = defog_frame(frame, params)
            .map_err(|e| Error::Numerical(format!("frame {i} (position {}): {e}", tag.position)))?;
        out.push(restored, *tag)?;
    }
    Ok(out)
}
