//! `defog`: restore foggy sequences with the selected method and mirror the
//! input layout under the output root, plus a sidecar recording the method
//! parameters.

use std::collections::BTreeMap;
use std::path::Path;

use defog_core::dataset::{
    load_dataset, load_sequence, resize, save_frame, FrameSequence,
};
use defog_core::dcp::{dcp_defog_video, DcpParams};
use defog_core::tcvd::{infer_video, load_checkpoint, TcvdModel};

use crate::config::{ConfigKey, RunConfig};
use crate::CliError;

use super::{ensure_dir, write_json};

pub const DEFOG_KEYS: &[ConfigKey] = &[
    ConfigKey {
        name: "input",
        default: "",
        help: "dataset root (foggy/ tree) or a single sequence directory (required)",
    },
    ConfigKey { name: "out", default: "", help: "output root (required)" },
    ConfigKey { name: "method", default: "dcp", help: "dcp or tcvd" },
    ConfigKey { name: "checkpoint", default: "", help: "model checkpoint (required for tcvd)" },
    ConfigKey { name: "omega", default: "0.95", help: "dcp: haze retention factor" },
    ConfigKey { name: "patch", default: "15", help: "dcp: dark-channel patch side (odd)" },
    ConfigKey { name: "t0", default: "0.1", help: "dcp: transmission floor" },
    ConfigKey { name: "guided_radius", default: "15", help: "dcp: guided-filter radius" },
    ConfigKey { name: "guided_eps", default: "0.001", help: "dcp: guided-filter regularizer" },
    ConfigKey { name: "seed", default: "0", help: "unused; accepted for uniformity" },
];

enum Method {
    Dcp(DcpParams),
    Tcvd(Box<TcvdModel>),
}

fn build_method(cfg: &RunConfig) -> Result<Method, CliError> {
    match cfg.get("method") {
        "dcp" => Ok(Method::Dcp(DcpParams {
            patch: cfg.get_usize("patch")?,
            omega: cfg.get_f64("omega")?,
            t_floor: cfg.get_f64("t0")?,
            airlight_fraction: 0.001,
            guided_radius: cfg.get_usize("guided_radius")?,
            guided_eps: cfg.get_f64("guided_eps")?,
        })),
        "tcvd" => {
            let path = cfg.get_path("checkpoint").map_err(|_| {
                CliError::Config("method tcvd requires the checkpoint key".into())
            })?;
            if !path.is_file() {
                return Err(CliError::Data(format!("{}: checkpoint not found", path.display())));
            }
            Ok(Method::Tcvd(Box::new(load_checkpoint(&path)?)))
        }
        other => Err(CliError::Config(format!("unknown method {other:?} (expected dcp or tcvd)"))),
    }
}

fn restore(method: &Method, seq: &FrameSequence) -> Result<FrameSequence, CliError> {
    match method {
        Method::Dcp(params) => Ok(dcp_defog_video(seq, params)?),
        Method::Tcvd(model) => {
            let size = model.config().input_size;
            let mut resized = FrameSequence::new();
            for (frame, tag) in seq.frames() {
                resized.push(resize(frame, size), *tag)?;
            }
            Ok(infer_video(model, &resized)?)
        }
    }
}

fn write_sequence(dir: &Path, seq: &FrameSequence) -> Result<(), CliError> {
    ensure_dir(dir)?;
    for (frame, tag) in seq.frames() {
        save_frame(&dir.join(format!("frame_{:04}.png", tag.position)), frame)?;
    }
    Ok(())
}

pub fn cmd_defog(cfg: &RunConfig) -> Result<(), CliError> {
    let input = cfg.get_existing_dir("input")?;
    let out = cfg.get_path("out")?;
    let method = build_method(cfg)?;

    ensure_dir(&out)?;
    let mut frames_written = 0;
    let mut videos = 0;
    if input.join("foggy").is_dir() {
        let ds = load_dataset(&input)?;
        if ds.foggy.is_empty() {
            return Err(CliError::Data(format!("{}: no foggy sequences", input.display())));
        }
        for seq in &ds.foggy {
            let (lighting, density) = seq
                .video_key()
                .ok_or_else(|| CliError::Data("foggy sequence has mixed tags".into()))?;
            let restored = restore(&method, seq)?;
            let dir = out
                .join(format!("light_{lighting}"))
                .join(format!("density_{}", density.label()));
            write_sequence(&dir, &restored)?;
            frames_written += restored.len();
            videos += 1;
        }
    } else {
        let seq = load_sequence(&input)?;
        if seq.is_empty() {
            return Err(CliError::Data(format!("{}: no frames found", input.display())));
        }
        let restored = restore(&method, &seq)?;
        write_sequence(&out, &restored)?;
        frames_written += restored.len();
        videos += 1;
    }

    let mut meta: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    meta.insert("method".into(), cfg.get("method").into());
    meta.insert("config".into(), serde_json::to_value(cfg.echo()).unwrap());
    if let Method::Tcvd(model) = &method {
        meta.insert("model_config".into(), serde_json::to_value(model.config()).unwrap());
    }
    write_json(&out.join("defog_meta.json"), &meta)?;
    println!("restored {videos} videos ({frames_written} frames) under {}", out.display());
    Ok(())
}
