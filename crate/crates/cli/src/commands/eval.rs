//! `eval`: score restored trees against the clear ground truth and write
//! the benchmark report as JSON and CSV.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use defog_core::dataset::{load_dataset, load_sequence, FrameSequence};
use defog_core::metrics::{evaluate, EvalOptions};

use crate::config::{ConfigKey, RunConfig};
use crate::CliError;

use super::ensure_dir;

pub const EVAL_KEYS: &[ConfigKey] = &[
    ConfigKey {
        name: "gt_root",
        default: "",
        help: "dataset root providing clear/ ground truth (and foggy/ for the identity method)",
    },
    ConfigKey {
        name: "restored",
        default: "",
        help: "comma-separated name=path list of restored output roots (required)",
    },
    ConfigKey {
        name: "include_identity",
        default: "true",
        help: "also score the unrestored foggy inputs as method 'identity'",
    },
    ConfigKey { name: "eval_size", default: "224", help: "frames are resized to this before scoring" },
    ConfigKey { name: "out", default: "", help: "report output directory (required)" },
    ConfigKey { name: "seed", default: "0", help: "unused; accepted for uniformity" },
];

/// Load a defog output root: `light_<L>/density_<D>/` leaf dirs (a dataset
/// root with a foggy/ tree also works).
fn load_restored_tree(path: &Path) -> Result<Vec<FrameSequence>, CliError> {
    if path.join("foggy").is_dir() {
        return Ok(load_dataset(path)?.foggy);
    }
    let mut light_dirs: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_dir() && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("light_"))
        })
        .collect();
    light_dirs.sort();
    if light_dirs.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no light_<L> directories found in restored root",
            path.display()
        )));
    }
    let mut sequences = Vec::new();
    for light_dir in light_dirs {
        let mut density_dirs: Vec<PathBuf> = std::fs::read_dir(&light_dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", light_dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        density_dirs.sort();
        for density_dir in density_dirs {
            sequences.push(load_sequence(&density_dir)?);
        }
    }
    Ok(sequences)
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let gt_root = cfg.get_existing_dir("gt_root")?;
    let out = cfg.get_path("out")?;
    let ds = load_dataset(&gt_root)?;
    if ds.clear.is_empty() {
        return Err(CliError::Data(format!("{}: no clear ground truth", gt_root.display())));
    }

    let mut methods: BTreeMap<String, Vec<FrameSequence>> = BTreeMap::new();
    for entry in cfg.get_list("restored") {
        let (name, path) = entry.split_once('=').ok_or_else(|| {
            CliError::Config(format!("key restored: expected name=path, got {entry:?}"))
        })?;
        let sequences = load_restored_tree(Path::new(path))?;
        if methods.insert(name.to_string(), sequences).is_some() {
            return Err(CliError::Config(format!("key restored: duplicate method name {name:?}")));
        }
    }
    if cfg.get_bool("include_identity")? {
        methods.insert("identity".to_string(), ds.foggy.clone());
    }
    if methods.is_empty() {
        return Err(CliError::Config(
            "nothing to evaluate: set restored=name=path or include_identity=true".into(),
        ));
    }

    let opts = EvalOptions { eval_size: cfg.get_usize("eval_size")? };
    let report = evaluate(&methods, &ds.clear, &opts, cfg.echo());

    ensure_dir(&out)?;
    std::fs::write(out.join("report.json"), report.to_json())
        .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;
    std::fs::write(out.join("report.csv"), report.to_csv())
        .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;

    println!("wrote {} rows to {}", report.rows.len(), out.display());
    if !report.errors.is_empty() {
        for err in &report.errors {
            eprintln!("alignment error: {err}");
        }
        return Err(CliError::Data(format!(
            "{} sequence(s) could not be evaluated",
            report.errors.len()
        )));
    }
    Ok(())
}
