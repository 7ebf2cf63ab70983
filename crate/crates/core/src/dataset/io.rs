//! On-disk dataset layout.
//!
//! ```text
//! dataset_root/
//!   foggy/light_<L>/density_<D>/frame_<NNNN>.png   D in {0.015, 0.05, 0.15}
//!   clear/light_<L>/frame_<NNNN>.png
//!   depth/pos_<NNNN>.png                           16-bit gray, value = cm, 0 = invalid
//!   manifest.json                                  optional per-file tag overrides
//! ```
//!
//! Frames are 8-bit RGB PNGs normalized by /255 into [0,1]; depth PNGs are
//! 16-bit grayscale interpreted directly as centimeters.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::DynamicImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::frame::{DepthMap, Frame};
use super::recompose::recompose;
use super::sequence::FrameSequence;
use super::tags::{AcquisitionTag, Density};

/// Optional sidecar with acquisition metadata and per-file tag overrides.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    /// Frame rate, recorded as metadata only; no algorithm consumes it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    /// Root-relative path (forward slashes) to replacement tag.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<String, AcquisitionTag>,
    /// Free-form configuration echo written by generators.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
}

/// A fully loaded dataset root.
#[derive(Debug, Default)]
pub struct Dataset {
    pub foggy: Vec<FrameSequence>,
    pub clear: Vec<FrameSequence>,
    pub depths: BTreeMap<usize, DepthMap>,
    pub fps: Option<f64>,
}

impl Dataset {
    /// Clear sequence under the given lighting, if present.
    pub fn clear_for_lighting(&self, lighting: usize) -> Option<&FrameSequence> {
        self.clear.iter().find(|s| s.video_key().map(|(l, _)| l) == Some(lighting))
    }
}

pub fn load_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    let rgb = match img {
        DynamicImage::ImageRgb8(buf) => buf,
        other => {
            return Err(Error::load(
                path,
                format!("expected 8-bit RGB PNG, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let pixels: Vec<f64> = rgb.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Frame::new(w, h, pixels).map_err(|e| Error::load(path, e.to_string()))
}

pub fn save_frame(path: &Path, frame: &Frame) -> Result<()> {
    let bytes: Vec<u8> = frame
        .pixels()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::RgbImage::from_raw(frame.width() as u32, frame.height() as u32, bytes)
        .expect("pixel buffer matches dimensions");
    buf.save(path).map_err(|e| Error::load(path, e.to_string()))
}

pub fn load_depth(path: &Path) -> Result<DepthMap> {
    let img = image::open(path).map_err(|e| Error::load(path, e.to_string()))?;
    let gray = match img {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::load(
                path,
                format!("expected 16-bit grayscale PNG, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let raw = gray.into_raw();
    let valid: Vec<bool> = raw.iter().map(|&v| v != 0).collect();
    let depth: Vec<f64> = raw.into_iter().map(|v| v as f64).collect();
    DepthMap::new(w, h, depth, valid).map_err(|e| Error::load(path, e.to_string()))
}

pub fn save_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let raw: Vec<u16> = depth
        .depths()
        .iter()
        .zip(depth.valid_mask())
        .map(|(&d, &v)| if v { d.round().clamp(1.0, 65535.0) as u16 } else { 0 })
        .collect();
    let buf =
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .expect("depth buffer matches dimensions");
    buf.save(path).map_err(|e| Error::load(path, e.to_string()))
}

pub fn load_manifest(root: &Path) -> Result<Option<Manifest>> {
    let path = root.join("manifest.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest =
        serde_json::from_str(&text).map_err(|e| Error::load(&path, format!("bad manifest: {e}")))?;
    Ok(Some(manifest))
}

pub fn save_manifest(root: &Path, manifest: &Manifest) -> Result<()> {
    let path = root.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn dir_entries_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        entries.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    entries.sort();
    Ok(entries)
}

/// Parse `prefix_<value>` directory names.
fn dir_suffix<'a>(path: &'a Path, prefix: &str) -> Option<&'a str> {
    path.file_name()?.to_str()?.strip_prefix(prefix)
}

fn frame_index(path: &Path) -> Result<usize> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::load(path, "unreadable file name"))?;
    let idx = stem
        .strip_prefix("frame_")
        .and_then(|s| s.parse::<usize>().ok())
        .ok_or_else(|| Error::load(path, "expected frame_<NNNN>.png"))?;
    Ok(idx)
}

/// Tags implied by a leaf directory's path components.
fn tags_from_dir(dir: &Path) -> Result<(usize, Density)> {
    if let Some(label) = dir_suffix(dir, "density_") {
        let density = Density::parse_label(label)
            .map_err(|e| Error::load(dir, e.to_string()))?;
        let parent = dir.parent().ok_or_else(|| Error::load(dir, "density dir has no parent"))?;
        let lighting = dir_suffix(parent, "light_")
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::load(parent, "expected light_<L> above density dir"))?;
        Ok((lighting, density))
    } else if let Some(l) = dir_suffix(dir, "light_") {
        let lighting = l
            .parse::<usize>()
            .map_err(|_| Error::load(dir, "expected light_<L>"))?;
        Ok((lighting, Density::Clear))
    } else {
        Ok((0, Density::Clear))
    }
}

/// Load one leaf directory of `frame_<NNNN>.png` files, sorted by index.
/// Every PNG present must match the pattern; nothing is silently skipped.
pub fn load_sequence(dir: &Path) -> Result<FrameSequence> {
    let (lighting, density) = tags_from_dir(dir)?;
    let mut frames = Vec::new();
    for path in dir_entries_sorted(dir)? {
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let position = frame_index(&path)?;
        let frame = load_frame(&path)?;
        frames.push((path, frame, AcquisitionTag::new(position, lighting, density)?));
    }
    let mut seq = FrameSequence::new();
    for (path, frame, tag) in frames {
        seq.push(frame, tag).map_err(|e| Error::load(&path, e.to_string()))?;
    }
    Ok(seq)
}

/// Load a full dataset tree, applying manifest tag overrides, and regroup
/// frames into per-(lighting, density) videos ordered by position.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(Error::load(root, "dataset root does not exist"));
    }
    let manifest = load_manifest(root)?.unwrap_or_default();
    let mut slices: Vec<(Frame, AcquisitionTag)> = Vec::new();

    let mut visit_leaf = |dir: &Path| -> Result<()> {
        let (lighting, density) = tags_from_dir(dir)?;
        for path in dir_entries_sorted(dir)? {
            if path.extension().and_then(|e| e.to_str()) != Some("png") {
                continue;
            }
            let position = frame_index(&path)?;
            let frame = load_frame(&path)?;
            let rel = path
                .strip_prefix(root)
                .expect("leaf paths live under the root")
                .to_string_lossy()
                .replace('\\', "/");
            let tag = match manifest.overrides.get(&rel) {
                Some(t) => *t,
                None => AcquisitionTag::new(position, lighting, density)?,
            };
            slices.push((frame, tag));
        }
        Ok(())
    };

    let foggy_root = root.join("foggy");
    if foggy_root.is_dir() {
        for light_dir in dir_entries_sorted(&foggy_root)? {
            if !light_dir.is_dir() {
                continue;
            }
            for density_dir in dir_entries_sorted(&light_dir)? {
                if density_dir.is_dir() {
                    visit_leaf(&density_dir)?;
                }
            }
        }
    }
    let clear_root = root.join("clear");
    if clear_root.is_dir() {
        for light_dir in dir_entries_sorted(&clear_root)? {
            if light_dir.is_dir() {
                visit_leaf(&light_dir)?;
            }
        }
    }

    let mut depths = BTreeMap::new();
    let depth_root = root.join("depth");
    if depth_root.is_dir() {
        for path in dir_entries_sorted(&depth_root)? {
            if path.extension().and_then(|e| e.to_str()) != Some("png") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let pos = stem
                .strip_prefix("pos_")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::load(&path, "expected pos_<NNNN>.png"))?;
            depths.insert(pos, load_depth(&path)?);
        }
    }

    let videos = recompose(slices)?;
    let mut dataset = Dataset { fps: manifest.fps, depths: depths.clone(), ..Default::default() };
    for ((_, density), mut seq) in videos.videos {
        seq.depths = depths.clone();
        if density == Density::Clear {
            dataset.clear.push(seq);
        } else {
            dataset.foggy.push(seq);
        }
    }
    Ok(dataset)
}

/// Write one sequence as a leaf directory of `frame_<NNNN>.png`, named by
/// position index.
pub fn save_sequence(dir: &Path, seq: &FrameSequence) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (frame, tag) in seq.frames() {
        save_frame(&dir.join(format!("frame_{:04}.png", tag.position)), frame)?;
    }
    Ok(())
}

/// Leaf directory for a (lighting, density) video under a dataset root.
pub fn video_dir(root: &Path, lighting: usize, density: Density) -> PathBuf {
    if density == Density::Clear {
        root.join("clear").join(format!("light_{lighting}"))
    } else {
        root.join("foggy").join(format!("light_{lighting}")).join(format!("density_{}", density.label()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(v: f64) -> Frame {
        Frame::filled(8, 8, [v, v, v]).unwrap()
    }

    fn write_tree(root: &Path, lightings: usize, positions: usize) {
        for l in 0..lightings {
            for d in Density::FOGGY {
                let dir = video_dir(root, l, d);
                std::fs::create_dir_all(&dir).unwrap();
                for p in 0..positions {
                    save_frame(&dir.join(format!("frame_{p:04}.png")), &gray(0.25)).unwrap();
                }
            }
            let dir = video_dir(root, l, Density::Clear);
            std::fs::create_dir_all(&dir).unwrap();
            for p in 0..positions {
                save_frame(&dir.join(format!("frame_{p:04}.png")), &gray(0.75)).unwrap();
            }
        }
    }

    #[test]
    fn frame_png_roundtrip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        // Values on the 1/255 grid survive the 8-bit roundtrip exactly.
        let frame = Frame::from_fn(8, 8, |x, y| {
            [((x * 31) % 256) as f64 / 255.0, ((y * 17) % 256) as f64 / 255.0, 0.5019607843137255]
        })
        .unwrap();
        save_frame(&path, &frame).unwrap();
        let back = load_frame(&path).unwrap();
        assert_eq!(back, frame);
    }

    #[test]
    fn depth_png_roundtrip_preserves_integer_centimeters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let depth = DepthMap::from_fn(8, 8, |x, y| if x == 0 { 0.0 } else { (y * 50 + x) as f64 }).unwrap();
        save_depth(&path, &depth).unwrap();
        let back = load_depth(&path).unwrap();
        assert_eq!(back, depth);
    }

    #[test]
    fn sequence_loads_sorted_with_tags_from_path() {
        let dir = tempfile::tempdir().unwrap();
        let leaf = dir.path().join("foggy/light_2/density_0.05");
        std::fs::create_dir_all(&leaf).unwrap();
        for p in (0..10).rev() {
            save_frame(&leaf.join(format!("frame_{p:04}.png")), &gray(p as f64 / 10.0)).unwrap();
        }
        let seq = load_sequence(&leaf).unwrap();
        assert_eq!(seq.len(), 10);
        for i in 0..10 {
            assert_eq!(seq.tag(i).position, i);
            assert_eq!(seq.tag(i).lighting, 2);
            assert_eq!(seq.tag(i).density, Density::Medium);
        }
    }

    #[test]
    fn mixed_dimensions_error_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let leaf = dir.path().join("light_0");
        std::fs::create_dir_all(&leaf).unwrap();
        save_frame(&leaf.join("frame_0000.png"), &gray(0.1)).unwrap();
        save_frame(&leaf.join("frame_0001.png"), &Frame::filled(16, 8, [0.1; 3]).unwrap()).unwrap();
        let err = load_sequence(&leaf).unwrap_err();
        assert!(err.to_string().contains("frame_0001.png"), "{err}");
    }

    #[test]
    fn unknown_density_label_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let leaf = dir.path().join("foggy/light_0/density_0.33");
        std::fs::create_dir_all(&leaf).unwrap();
        save_frame(&leaf.join("frame_0000.png"), &gray(0.5)).unwrap();
        let err = load_sequence(&leaf).unwrap_err();
        assert!(err.to_string().contains("density"), "{err}");
    }

    #[test]
    fn stray_png_is_an_error_not_a_skip() {
        let dir = tempfile::tempdir().unwrap();
        let leaf = dir.path().join("light_0");
        std::fs::create_dir_all(&leaf).unwrap();
        save_frame(&leaf.join("frame_0000.png"), &gray(0.1)).unwrap();
        save_frame(&leaf.join("extra.png"), &gray(0.1)).unwrap();
        let err = load_sequence(&leaf).unwrap_err();
        assert!(err.to_string().contains("extra.png"), "{err}");
    }

    #[test]
    fn full_grid_tree_discovers_18_foggy_and_6_clear() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), 6, 3);
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.foggy.len(), 18);
        assert_eq!(ds.clear.len(), 6);
        assert!(ds.foggy.iter().all(|s| s.len() == 3));
    }

    #[test]
    fn manifest_overrides_retag_frames() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), 1, 2);
        let manifest = Manifest {
            fps: Some(25.0),
            overrides: BTreeMap::from([(
                "clear/light_0/frame_0001.png".to_string(),
                AcquisitionTag::new(5, 0, Density::Clear).unwrap(),
            )]),
            config: BTreeMap::new(),
        };
        save_manifest(dir.path(), &manifest).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.fps, Some(25.0));
        let clear = &ds.clear[0];
        let positions: Vec<usize> = clear.frames().iter().map(|(_, t)| t.position).collect();
        assert_eq!(positions, vec![0, 5]);
    }

    #[test]
    fn depth_maps_attach_by_position() {
        let dir = tempfile::tempdir().unwrap();
        write_tree(dir.path(), 1, 2);
        let depth_dir = dir.path().join("depth");
        std::fs::create_dir_all(&depth_dir).unwrap();
        let dm = DepthMap::from_fn(8, 8, |_, _| 100.0).unwrap();
        save_depth(&depth_dir.join("pos_0000.png"), &dm).unwrap();
        save_depth(&depth_dir.join("pos_0001.png"), &dm).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.depths.len(), 2);
        assert!(ds.foggy[0].depths.contains_key(&1));
    }
}
