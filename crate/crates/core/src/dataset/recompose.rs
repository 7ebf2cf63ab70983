//! Stop-motion recomposition: regroup per-(position, lighting, density)
//! slices into videos of constant visibility and lighting where the scene
//! appears to move.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

use super::frame::Frame;
use super::sequence::FrameSequence;
use super::tags::{AcquisitionTag, Density};

/// A (lighting, density) combination missing one of the positions the rest
/// of the grid covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    pub lighting: usize,
    pub density: Density,
    pub position: usize,
}

#[derive(Debug, Default)]
pub struct RecomposedVideos {
    /// One video per (lighting, density), frames ordered by position.
    pub videos: BTreeMap<(usize, Density), FrameSequence>,
    /// Positions missing from some video relative to the full grid.
    pub gaps: Vec<Gap>,
}

/// Regroup tagged slices into per-(lighting, density) videos.
///
/// Every (position, lighting, density) may appear at most once; duplicates
/// are ambiguous and rejected. Output frames are ordered by position index.
pub fn recompose(slices: Vec<(Frame, AcquisitionTag)>) -> Result<RecomposedVideos> {
    let mut grouped: BTreeMap<(usize, Density), BTreeMap<usize, Frame>> = BTreeMap::new();
    let mut positions: BTreeSet<usize> = BTreeSet::new();
    for (frame, tag) in slices {
        positions.insert(tag.position);
        let group = grouped.entry(tag.video_key()).or_default();
        if group.insert(tag.position, frame).is_some() {
            return Err(Error::contract(format!(
                "ambiguous slices: position {} appears twice for lighting {} density {}",
                tag.position, tag.lighting, tag.density
            )));
        }
    }

    let mut out = RecomposedVideos::default();
    for ((lighting, density), frames) in grouped {
        for &p in &positions {
            if !frames.contains_key(&p) {
                out.gaps.push(Gap { lighting, density, position: p });
            }
        }
        let mut seq = FrameSequence::new();
        for (position, frame) in frames {
            seq.push(frame, AcquisitionTag::new(position, lighting, density)?)?;
        }
        out.videos.insert((lighting, density), seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slice(pos: usize, light: usize, density: Density) -> (Frame, AcquisitionTag) {
        let v = (pos as f64 * 0.1).min(1.0);
        (
            Frame::filled(8, 8, [v, v, v]).unwrap(),
            AcquisitionTag::new(pos, light, density).unwrap(),
        )
    }

    #[test]
    fn small_grid_counts() {
        // 2 positions x 2 lightings x 2 densities -> 4 videos of 2 frames.
        let mut slices = Vec::new();
        for pos in 0..2 {
            for light in 0..2 {
                for density in [Density::Dense, Density::Medium] {
                    slices.push(slice(pos, light, density));
                }
            }
        }
        let out = recompose(slices).unwrap();
        assert_eq!(out.videos.len(), 4);
        assert!(out.videos.values().all(|v| v.len() == 2));
        assert!(out.gaps.is_empty());
    }

    #[test]
    fn missing_density_shortens_video_and_reports_gap() {
        let mut slices = Vec::new();
        for pos in 0..3 {
            slices.push(slice(pos, 0, Density::Dense));
            if pos != 1 {
                slices.push(slice(pos, 0, Density::Medium));
            }
        }
        let out = recompose(slices).unwrap();
        assert_eq!(out.videos[&(0, Density::Dense)].len(), 3);
        assert_eq!(out.videos[&(0, Density::Medium)].len(), 2);
        assert_eq!(
            out.gaps,
            vec![Gap { lighting: 0, density: Density::Medium, position: 1 }]
        );
    }

    #[test]
    fn full_grid_yields_eighteen_foggy_videos() {
        // 6 lightings x 3 fog densities (+ clear per lighting).
        let mut slices = Vec::new();
        for pos in 0..4 {
            for light in 0..6 {
                for density in Density::FOGGY {
                    slices.push(slice(pos, light, density));
                }
                slices.push(slice(pos, light, Density::Clear));
            }
        }
        let out = recompose(slices).unwrap();
        let foggy = out.videos.keys().filter(|(_, d)| *d != Density::Clear).count();
        let clear = out.videos.keys().filter(|(_, d)| *d == Density::Clear).count();
        assert_eq!(foggy, 18);
        assert_eq!(clear, 6);
    }

    #[test]
    fn duplicate_slice_is_ambiguous() {
        let slices = vec![slice(0, 0, Density::Dense), slice(0, 0, Density::Dense)];
        assert!(matches!(recompose(slices), Err(Error::Contract(_))));
    }

    #[test]
    fn frames_are_ordered_by_position() {
        let slices = vec![slice(2, 0, Density::Clear), slice(0, 0, Density::Clear), slice(1, 0, Density::Clear)];
        let out = recompose(slices).unwrap();
        let video = &out.videos[&(0, Density::Clear)];
        let positions: Vec<usize> = video.frames().iter().map(|(_, t)| t.position).collect();
        assert_eq!(positions, vec![0, 1, 2]);
    }

    #[test]
    fn scatter_then_recompose_is_identity() {
        // Scatter constant-condition videos into tagged slices, recompose,
        // and expect the same videos back.
        let mut slices = Vec::new();
        let mut originals: BTreeMap<(usize, Density), Vec<Frame>> = BTreeMap::new();
        for light in 0..2 {
            for density in [Density::Dense, Density::Clear] {
                let frames: Vec<Frame> = (0..3)
                    .map(|p| {
                        let v = (p as f64 + light as f64 * 3.0) / 10.0;
                        Frame::filled(8, 8, [v, v * 0.5, 1.0 - v]).unwrap()
                    })
                    .collect();
                for (p, f) in frames.iter().enumerate() {
                    slices.push((f.clone(), AcquisitionTag::new(p, light, density).unwrap()));
                }
                originals.insert((light, density), frames);
            }
        }
        let out = recompose(slices).unwrap();
        assert_eq!(out.videos.len(), originals.len());
        for (key, frames) in originals {
            let video = &out.videos[&key];
            assert_eq!(video.len(), frames.len());
            for (i, f) in frames.iter().enumerate() {
                assert_eq!(video.frame(i), f);
            }
        }
    }
}
