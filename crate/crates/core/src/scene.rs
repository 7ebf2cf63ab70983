//! Built-in procedural scene: a small car moving over a textured backdrop
//! with a linear depth ramp and a black & white contrast panel on the far
//! wall. Everything any experiment needs can be synthesized from it, so the
//! whole pipeline runs without external data.
//!
//! Clear frames are quantized to the 1/255 grid at generation time, making
//! the 8-bit PNG round trip lossless.

use std::collections::BTreeMap;

use crate::dataset::{AcquisitionTag, Density, DepthMap, Frame, FrameSequence};
use crate::error::{Error, Result};
use crate::fog::{apply_fog, beta_for_contrast, panel_contrast, panel_mean_luminance, FogParams, PanelRoi, Rect};

/// Depth of the contrast panel (far wall).
pub const PANEL_DEPTH_CM: f64 = 350.0;
/// Depth of the moving car.
pub const CAR_DEPTH_CM: f64 = 60.0;
/// Depth of the nearest background row.
pub const NEAR_DEPTH_CM: f64 = 40.0;
/// Depth of the farthest background row.
pub const FAR_DEPTH_CM: f64 = 300.0;

#[derive(Debug, Clone)]
pub struct SceneConfig {
    /// Square frame side; at least 32.
    pub size: usize,
    /// Number of robot positions (frames per recomposed video).
    pub frames: usize,
    /// Lighting conditions to render, 1..=6.
    pub lightings: usize,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig { size: 64, frames: 12, lightings: 1, seed: 0 }
    }
}

/// A rendered clear scene: one sequence per lighting plus shared depth maps.
#[derive(Debug)]
pub struct Scene {
    pub clear: Vec<FrameSequence>,
    pub depths: BTreeMap<usize, DepthMap>,
    pub panel: PanelRoi,
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn hash01(x: usize, y: usize, seed: u64) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E3779B97F4A7C15)
        ^ (y as u64).wrapping_mul(0xC2B2AE3D27D4EB4F)
        ^ seed.wrapping_mul(0x165667B19E3779F9);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58476D1CE4E5B9);
    h ^= h >> 32;
    (h & 0xFFFF_FFFF) as f64 / 4294967296.0
}

/// Colorful backdrop whose per-channel minima dip near zero inside any
/// dark-channel patch.
fn texture(x: usize, y: usize, seed: u64) -> [f64; 3] {
    let xf = x as f64;
    let yf = y as f64;
    let r = 0.5 + 0.44 * (xf / 2.0 + 0.8 * (yf / 7.3).sin()).sin();
    let g = 0.5 + 0.44 * (yf / 2.6 + 1.7 + 0.6 * (xf / 9.1).sin()).sin();
    let b = 0.5 + 0.44 * ((xf + yf) / 3.2 + 3.1).sin();
    let n = (hash01(x, y, seed) - 0.5) * 0.06;
    [r + n, g + n, b + n]
}

fn panel_rects(size: usize) -> PanelRoi {
    let patch = size / 8;
    PanelRoi {
        black: Rect::new(2, 2, patch, patch),
        white: Rect::new(4 + patch, 2, patch, patch),
    }
}

fn car_rect(cfg: &SceneConfig, position: usize) -> Rect {
    let w = cfg.size / 5;
    let h = cfg.size / 6;
    let y = (cfg.size * 11) / 20;
    let track = cfg.size - w - 4;
    let x = if cfg.frames <= 1 { 2 } else { 2 + position * track / (cfg.frames - 1) };
    Rect::new(x, y, w, h)
}

fn in_rect(r: &Rect, x: usize, y: usize) -> bool {
    x >= r.x && x < r.x + r.width && y >= r.y && y < r.y + r.height
}

/// Channelwise gain of each lighting condition; index 0 is the
/// heterogeneous (tinted) one, the rest are white at decreasing intensity.
fn lighting_gain(lighting: usize) -> [f64; 3] {
    if lighting == 0 {
        [1.0, 0.96, 0.90]
    } else {
        let g = 1.0 - 0.05 * (lighting - 1) as f64;
        [g, g, g]
    }
}

pub fn procedural_scene(cfg: &SceneConfig) -> Result<Scene> {
    if cfg.size < 32 {
        return Err(Error::config(format!("scene size must be >= 32, got {}", cfg.size)));
    }
    if cfg.frames == 0 {
        return Err(Error::config("scene needs at least one frame"));
    }
    if cfg.lightings == 0 || cfg.lightings > 6 {
        return Err(Error::config(format!("lightings must be 1..=6, got {}", cfg.lightings)));
    }
    let panel = panel_rects(cfg.size);
    let mut depths = BTreeMap::new();
    for p in 0..cfg.frames {
        let car = car_rect(cfg, p);
        let depth = DepthMap::from_fn(cfg.size, cfg.size, |x, y| {
            if in_rect(&panel.black, x, y) || in_rect(&panel.white, x, y) {
                PANEL_DEPTH_CM
            } else if in_rect(&car, x, y) {
                CAR_DEPTH_CM
            } else {
                let ramp = FAR_DEPTH_CM
                    - (FAR_DEPTH_CM - NEAR_DEPTH_CM) * y as f64 / (cfg.size - 1) as f64;
                ramp.round()
            }
        })?;
        depths.insert(p, depth);
    }

    let mut clear = Vec::with_capacity(cfg.lightings);
    for lighting in 0..cfg.lightings {
        let gain = lighting_gain(lighting);
        let mut seq = FrameSequence::new();
        for p in 0..cfg.frames {
            let car = car_rect(cfg, p);
            let frame = Frame::from_fn(cfg.size, cfg.size, |x, y| {
                let base = if in_rect(&panel.black, x, y) {
                    [0.10196078431372549; 3] // 26/255
                } else if in_rect(&panel.white, x, y) {
                    [0.9019607843137255; 3] // 230/255
                } else if in_rect(&car, x, y) {
                    let stripe = y >= car.y + car.height * 2 / 3;
                    if stripe {
                        [0.25, 0.08, 0.08]
                    } else {
                        [0.72, 0.15, 0.12]
                    }
                } else {
                    texture(x, y, cfg.seed)
                };
                [
                    quantize(base[0] * gain[0]),
                    quantize(base[1] * gain[1]),
                    quantize(base[2] * gain[2]),
                ]
            })?;
            seq.push(frame, AcquisitionTag::new(p, lighting, Density::Clear)?)?;
        }
        seq.depths = depths.clone();
        clear.push(seq);
    }
    Ok(Scene { clear, depths, panel })
}

/// One synthesized foggy video plus its calibration record.
#[derive(Debug, Clone)]
pub struct FoggedVideo {
    pub sequence: FrameSequence,
    pub lighting: usize,
    pub density: Density,
    pub beta: f64,
    pub airlight: [f64; 3],
    /// Panel contrast measured on the first synthesized frame.
    pub achieved_contrast: f64,
}

/// Uniform panel depth read off a depth map; errors if the panel region is
/// not flat or has invalid pixels.
pub fn panel_depth(depth: &DepthMap, panel: &PanelRoi) -> Result<f64> {
    let mut value = None;
    for rect in [&panel.black, &panel.white] {
        for y in rect.y..rect.y + rect.height {
            for x in rect.x..rect.x + rect.width {
                let d = depth
                    .at(x, y)
                    .ok_or_else(|| Error::contract(format!("panel depth invalid at ({x},{y})")))?;
                match value {
                    None => value = Some(d),
                    Some(v) if (v - d).abs() > 1e-9 => {
                        return Err(Error::contract(format!(
                            "panel depth not uniform: {v} vs {d} at ({x},{y})"
                        )))
                    }
                    Some(_) => {}
                }
            }
        }
    }
    value.ok_or_else(|| Error::contract("panel region is empty"))
}

/// Fog clear sequences so the panel contrast hits each target density's
/// anchor exactly (airlight is set to the panel's mean luminance, which
/// makes the contrast scaling law exact).
pub fn fog_at_anchors(
    clear: &[FrameSequence],
    depths: &BTreeMap<usize, DepthMap>,
    panel: &PanelRoi,
    targets: &[Density],
) -> Result<Vec<FoggedVideo>> {
    let mut out = Vec::new();
    for seq in clear {
        if seq.is_empty() {
            return Err(Error::contract("cannot fog an empty sequence"));
        }
        let Some((lighting, Density::Clear)) = seq.video_key() else {
            return Err(Error::contract("fog synthesis expects uniformly-tagged clear sequences"));
        };
        let first = seq.frame(0);
        let c0 = panel_contrast(first, panel)?;
        let mean = panel_mean_luminance(first, panel)?;
        let first_pos = seq.tag(0).position;
        let depth0 = depths
            .get(&first_pos)
            .ok_or_else(|| Error::contract(format!("no depth map for position {first_pos}")))?;
        let d_panel = panel_depth(depth0, panel)?;

        for &density in targets {
            let target = density.target_contrast().ok_or_else(|| {
                Error::contract(format!("density {density} has no contrast anchor to synthesize"))
            })?;
            let beta = beta_for_contrast(d_panel, c0, target)?;
            let params = FogParams::gray(beta, mean)?;
            let mut fogged = FrameSequence::new();
            for (frame, tag) in seq.frames() {
                let depth = depths.get(&tag.position).ok_or_else(|| {
                    Error::contract(format!("no depth map for position {}", tag.position))
                })?;
                let foggy = apply_fog(frame, depth, &params)?;
                fogged.push(foggy, AcquisitionTag::new(tag.position, lighting, density)?)?;
            }
            fogged.depths = depths.clone();
            let achieved = panel_contrast(fogged.frame(0), panel)?;
            out.push(FoggedVideo {
                sequence: fogged,
                lighting,
                density,
                beta,
                airlight: params.airlight,
                achieved_contrast: achieved,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fog::CLEAR_CONTRAST_THRESHOLD;

    #[test]
    fn scene_is_deterministic() {
        let cfg = SceneConfig::default();
        let a = procedural_scene(&cfg).unwrap();
        let b = procedural_scene(&cfg).unwrap();
        for (sa, sb) in a.clear.iter().zip(&b.clear) {
            for i in 0..sa.len() {
                assert_eq!(sa.frame(i), sb.frame(i));
            }
        }
        assert_eq!(a.depths, b.depths);
    }

    #[test]
    fn clear_panel_contrast_is_clear_class() {
        let scene = procedural_scene(&SceneConfig { lightings: 6, ..Default::default() }).unwrap();
        for seq in &scene.clear {
            let c0 = panel_contrast(seq.frame(0), &scene.panel).unwrap();
            assert!(c0 > CLEAR_CONTRAST_THRESHOLD, "c0 = {c0}");
        }
    }

    #[test]
    fn car_actually_moves() {
        let scene = procedural_scene(&SceneConfig::default()).unwrap();
        let seq = &scene.clear[0];
        assert_ne!(seq.frame(0), seq.frame(seq.len() - 1));
    }

    #[test]
    fn panel_depth_is_uniform_at_350() {
        let scene = procedural_scene(&SceneConfig::default()).unwrap();
        for depth in scene.depths.values() {
            assert_eq!(panel_depth(depth, &scene.panel).unwrap(), PANEL_DEPTH_CM);
        }
    }

    #[test]
    fn anchors_are_hit_exactly_in_memory() {
        let scene = procedural_scene(&SceneConfig { frames: 4, ..Default::default() }).unwrap();
        let fogged =
            fog_at_anchors(&scene.clear, &scene.depths, &scene.panel, &Density::FOGGY).unwrap();
        assert_eq!(fogged.len(), 3);
        for video in &fogged {
            let target = video.density.target_contrast().unwrap();
            assert!(
                (video.achieved_contrast - target).abs() < 1e-9,
                "{}: achieved {} vs {target}",
                video.density,
                video.achieved_contrast
            );
            // The panel is static, so every frame hits the target.
            for (frame, _) in video.sequence.frames() {
                let c = panel_contrast(frame, &scene.panel).unwrap();
                assert!((c - target).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn beta_grows_with_density() {
        let scene = procedural_scene(&SceneConfig { frames: 2, ..Default::default() }).unwrap();
        let fogged =
            fog_at_anchors(&scene.clear, &scene.depths, &scene.panel, &Density::FOGGY).unwrap();
        let beta = |d: Density| fogged.iter().find(|v| v.density == d).unwrap().beta;
        assert!(beta(Density::Dense) > beta(Density::Medium));
        assert!(beta(Density::Medium) > beta(Density::Light));
    }

    #[test]
    fn clear_frames_survive_png_quantization() {
        let scene = procedural_scene(&SceneConfig { frames: 2, ..Default::default() }).unwrap();
        let frame = scene.clear[0].frame(0);
        for &v in frame.pixels() {
            let q = (v * 255.0).round() / 255.0;
            assert_eq!(v, q, "value {v} is off the 8-bit grid");
        }
    }

    #[test]
    fn foggy_targets_cannot_exceed_clear_contrast() {
        let scene = procedural_scene(&SceneConfig { frames: 1, ..Default::default() }).unwrap();
        let err = fog_at_anchors(&scene.clear, &scene.depths, &scene.panel, &[Density::Clear]);
        assert!(err.is_err());
    }
}
