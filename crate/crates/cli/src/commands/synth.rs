//! `synth`: write a foggy/clear dataset tree from the procedural scene (or
//! an existing clear dataset) at calibrated panel-contrast anchors.

use std::collections::BTreeMap;
use std::path::Path;

use defog_core::dataset::{
    save_depth, save_frame, save_manifest, video_dir, load_dataset, Density, FrameSequence, Manifest,
};
use defog_core::fog::{apply_fog, density_class, panel_contrast, FogParams, PanelRoi, Rect};
use defog_core::scene::{fog_at_anchors, procedural_scene, FoggedVideo, Scene, SceneConfig};

use crate::config::{ConfigKey, RunConfig};
use crate::CliError;

use super::ensure_dir;

pub const SYNTH_KEYS: &[ConfigKey] = &[
    ConfigKey { name: "out", default: "", help: "output dataset root (required)" },
    ConfigKey { name: "size", default: "64", help: "square frame side of the procedural scene" },
    ConfigKey { name: "frames", default: "12", help: "robot positions to render" },
    ConfigKey { name: "lightings", default: "1", help: "lighting conditions to render (1..=6)" },
    ConfigKey { name: "seed", default: "0", help: "texture seed" },
    ConfigKey {
        name: "densities",
        default: "0.015,0.05,0.15",
        help: "target panel-contrast anchors to synthesize",
    },
    ConfigKey {
        name: "clear_root",
        default: "",
        help: "fog an existing clear dataset root instead of the procedural scene",
    },
    ConfigKey {
        name: "panel_black",
        default: "",
        help: "black panel region x,y,w,h (required with clear_root)",
    },
    ConfigKey {
        name: "panel_white",
        default: "",
        help: "white panel region x,y,w,h (required with clear_root)",
    },
    ConfigKey {
        name: "beta",
        default: "",
        help: "fixed extinction coefficient (1/cm); bypasses contrast calibration",
    },
    ConfigKey {
        name: "airlight",
        default: "",
        help: "airlight r,g,b in [0,1]; only used with a fixed beta",
    },
    ConfigKey { name: "fps", default: "", help: "frame rate recorded in the manifest (metadata only)" },
];

fn parse_rect(cfg: &RunConfig, key: &str) -> Result<Rect, CliError> {
    let v = cfg.get_usize_list(key)?;
    if v.len() != 4 {
        return Err(CliError::Config(format!("key {key}: expected x,y,w,h")));
    }
    Ok(Rect::new(v[0], v[1], v[2], v[3]))
}

fn parse_densities(cfg: &RunConfig) -> Result<Vec<Density>, CliError> {
    let labels = cfg.get_list("densities");
    if labels.is_empty() {
        return Err(CliError::Config("key densities: at least one anchor required".into()));
    }
    labels
        .iter()
        .map(|l| {
            Density::parse_label(l).map_err(|e| CliError::Config(format!("key densities: {e}")))
        })
        .collect()
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.get_path("out")?;

    // Clear material: procedural scene or an existing dataset.
    let (scene, panel) = if cfg.is_set("clear_root") {
        let root = cfg.get_existing_dir("clear_root")?;
        let ds = load_dataset(&root)?;
        if ds.clear.is_empty() {
            return Err(CliError::Data(format!("{}: no clear sequences found", root.display())));
        }
        if ds.depths.is_empty() {
            return Err(CliError::Data(format!("{}: no depth maps found", root.display())));
        }
        let panel = PanelRoi::new(parse_rect(cfg, "panel_black")?, parse_rect(cfg, "panel_white")?)?;
        (Scene { clear: ds.clear, depths: ds.depths, panel }, panel)
    } else {
        let scene_cfg = SceneConfig {
            size: cfg.get_usize("size")?,
            frames: cfg.get_usize("frames")?,
            lightings: cfg.get_usize("lightings")?,
            seed: cfg.get_u64("seed")?,
        };
        let scene = procedural_scene(&scene_cfg)?;
        let panel = if cfg.is_set("panel_black") || cfg.is_set("panel_white") {
            PanelRoi::new(parse_rect(cfg, "panel_black")?, parse_rect(cfg, "panel_white")?)?
        } else {
            scene.panel
        };
        (scene, panel)
    };

    let fogged: Vec<FoggedVideo> = if cfg.is_set("beta") {
        fog_with_fixed_beta(cfg, &scene, &panel)?
    } else {
        let targets = parse_densities(cfg)?;
        fog_at_anchors(&scene.clear, &scene.depths, &panel, &targets)?
    };

    write_dataset(&out, cfg, &scene, &fogged)?;
    println!(
        "synthesized {} foggy and {} clear sequences under {}",
        fogged.len(),
        scene.clear.len(),
        out.display()
    );
    for video in &fogged {
        println!(
            "  light {} density {}: beta {:.6} 1/cm, panel contrast {:.9}",
            video.lighting, video.density, video.beta, video.achieved_contrast
        );
    }
    Ok(())
}

fn fog_with_fixed_beta(
    cfg: &RunConfig,
    scene: &Scene,
    panel: &PanelRoi,
) -> Result<Vec<FoggedVideo>, CliError> {
    let beta = cfg.get_f64("beta")?;
    let airlight = cfg.get_f64_list("airlight")?;
    if airlight.len() != 3 {
        return Err(CliError::Config("key airlight: expected r,g,b".into()));
    }
    let params = FogParams::new(beta, [airlight[0], airlight[1], airlight[2]])?;
    let mut out = Vec::new();
    for seq in &scene.clear {
        let Some((lighting, Density::Clear)) = seq.video_key() else {
            return Err(CliError::Data("clear sequences must be uniformly tagged".into()));
        };
        let mut fogged = FrameSequence::new();
        for (frame, tag) in seq.frames() {
            let depth = scene.depths.get(&tag.position).ok_or_else(|| {
                CliError::Data(format!("no depth map for position {}", tag.position))
            })?;
            let foggy = apply_fog(frame, depth, &params)?;
            fogged.push(foggy, *tag)?;
        }
        let achieved = panel_contrast(fogged.frame(0), panel)?;
        let density = density_class(achieved);
        if density == Density::Clear {
            return Err(CliError::Data(format!(
                "beta {beta} leaves the panel contrast at {achieved:.4}, above the clear threshold"
            )));
        }
        // Re-tag with the measured class so the layout stays well formed.
        let mut tagged = FrameSequence::new();
        for (frame, tag) in fogged.frames() {
            let mut t = *tag;
            t.density = density;
            tagged.push(frame.clone(), t)?;
        }
        out.push(FoggedVideo {
            sequence: tagged,
            lighting,
            density,
            beta,
            airlight: params.airlight,
            achieved_contrast: achieved,
        });
    }
    Ok(out)
}

fn write_dataset(
    out: &Path,
    cfg: &RunConfig,
    scene: &Scene,
    fogged: &[FoggedVideo],
) -> Result<(), CliError> {
    ensure_dir(out)?;
    let mut manifest = Manifest {
        fps: if cfg.is_set("fps") { Some(cfg.get_f64("fps")?) } else { None },
        overrides: BTreeMap::new(),
        config: cfg.echo(),
    };

    let mut record = |root: &Path, dir: &Path, seq: &FrameSequence| -> Result<(), CliError> {
        for (_, tag) in seq.frames() {
            let rel = dir
                .strip_prefix(root)
                .expect("video dirs live under the output root")
                .join(format!("frame_{:04}.png", tag.position));
            manifest.overrides.insert(rel.to_string_lossy().replace('\\', "/"), *tag);
        }
        Ok(())
    };

    for seq in &scene.clear {
        let (lighting, _) = seq.video_key().expect("uniform clear tags");
        let dir = video_dir(out, lighting, Density::Clear);
        ensure_dir(&dir)?;
        for (frame, tag) in seq.frames() {
            save_frame(&dir.join(format!("frame_{:04}.png", tag.position)), frame)?;
        }
        record(out, &dir, seq)?;
    }
    for video in fogged {
        let dir = video_dir(out, video.lighting, video.density);
        ensure_dir(&dir)?;
        for (frame, tag) in video.sequence.frames() {
            save_frame(&dir.join(format!("frame_{:04}.png", tag.position)), frame)?;
        }
        record(out, &dir, &video.sequence)?;
        manifest.config.insert(
            format!("achieved_contrast.light_{}.density_{}", video.lighting, video.density.label()),
            format!("{}", video.achieved_contrast),
        );
        manifest
            .config
            .insert(format!("beta.light_{}.density_{}", video.lighting, video.density.label()), format!("{}", video.beta));
    }

    let depth_dir = out.join("depth");
    ensure_dir(&depth_dir)?;
    for (pos, depth) in &scene.depths {
        save_depth(&depth_dir.join(format!("pos_{pos:04}.png")), depth)?;
    }
    save_manifest(out, &manifest)?;
    Ok(())
}
