//! `recompose`: regroup tagged acquisition slices into per-(lighting,
//! density) videos and write them as a dataset tree.

use std::path::Path;

use defog_core::dataset::{
    load_dataset, load_frame, load_manifest, recompose, save_frame, save_manifest, video_dir,
    AcquisitionTag, Density, Frame, Manifest,
};

use crate::config::{ConfigKey, RunConfig};
use crate::CliError;

use super::ensure_dir;

pub const RECOMPOSE_KEYS: &[ConfigKey] = &[
    ConfigKey {
        name: "input",
        default: "",
        help: "dataset root, or a flat directory of PNGs whose manifest.json tags every file",
    },
    ConfigKey { name: "out", default: "", help: "output dataset root (required)" },
    ConfigKey { name: "seed", default: "0", help: "unused; accepted for uniformity" },
];

fn load_flat_slices(input: &Path) -> Result<Vec<(Frame, AcquisitionTag)>, CliError> {
    let manifest = load_manifest(input)?.ok_or_else(|| {
        CliError::Data(format!(
            "{}: flat recompose input needs a manifest.json tagging every frame",
            input.display()
        ))
    })?;
    let mut entries: Vec<_> = std::fs::read_dir(input)
        .map_err(|e| CliError::Data(format!("{}: {e}", input.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("png"))
        .collect();
    entries.sort();
    let mut slices = Vec::new();
    for path in entries {
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let tag = manifest.overrides.get(&name).ok_or_else(|| {
            CliError::Data(format!("{}: not tagged in manifest.json", path.display()))
        })?;
        slices.push((load_frame(&path)?, *tag));
    }
    Ok(slices)
}

pub fn cmd_recompose(cfg: &RunConfig) -> Result<(), CliError> {
    let input = cfg.get_existing_dir("input")?;
    let out = cfg.get_path("out")?;

    let slices: Vec<(Frame, AcquisitionTag)> =
        if input.join("foggy").is_dir() || input.join("clear").is_dir() {
            let ds = load_dataset(&input)?;
            ds.foggy
                .into_iter()
                .chain(ds.clear)
                .flat_map(|seq| seq.frames().to_vec())
                .collect()
        } else {
            load_flat_slices(&input)?
        };
    let count = slices.len();

    let recomposed = recompose(slices)?;
    for gap in &recomposed.gaps {
        eprintln!(
            "warning: no frame for position {} at lighting {} density {}",
            gap.position, gap.lighting, gap.density
        );
    }

    ensure_dir(&out)?;
    let mut foggy = 0;
    let mut clear = 0;
    for ((lighting, density), seq) in &recomposed.videos {
        if *density == Density::Clear {
            clear += 1;
        } else {
            foggy += 1;
        }
        let dir = video_dir(&out, *lighting, *density);
        ensure_dir(&dir)?;
        for (frame, tag) in seq.frames() {
            save_frame(&dir.join(format!("frame_{:04}.png", tag.position)), frame)?;
        }
    }
    let manifest = Manifest { fps: None, overrides: Default::default(), config: cfg.echo() };
    save_manifest(&out, &manifest)?;
    println!(
        "recomposed {count} slices into {foggy} foggy and {clear} clear videos under {}",
        out.display()
    );
    Ok(())
}
