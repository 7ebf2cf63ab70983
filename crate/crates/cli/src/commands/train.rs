//! `train`: build (foggy triplet, clear center) samples from one or more
//! dataset roots, train the desk-scale model, and write the checkpoint plus
//! loss log.

use std::collections::BTreeMap;

use defog_core::dataset::{load_dataset, resize, triplet_indices};
use defog_core::tcvd::{save_checkpoint, train, TcvdConfig, TcvdModel, TrainOptions, TrainSample};

use crate::config::{ConfigKey, RunConfig};
use crate::CliError;

use super::{ensure_dir, write_json};

pub const TRAIN_KEYS: &[ConfigKey] = &[
    ConfigKey {
        name: "roots",
        default: "",
        help: "comma-separated dataset roots; batches mix all of them (required)",
    },
    ConfigKey { name: "out", default: "", help: "output directory (required)" },
    ConfigKey { name: "steps", default: "500", help: "optimizer steps" },
    ConfigKey { name: "batch_size", default: "1", help: "samples per step" },
    ConfigKey { name: "lr", default: "0.0001", help: "ADAM learning rate" },
    ConfigKey { name: "seed", default: "0", help: "sampling/augmentation/init seed" },
    ConfigKey { name: "input_size", default: "64", help: "square network input side" },
    ConfigKey { name: "filters", default: "8,16,32,64", help: "encoder stage channels" },
    ConfigKey { name: "heads", default: "2", help: "attention heads" },
    ConfigKey { name: "loss_a", default: "1", help: "weight of the SSIM loss term" },
    ConfigKey { name: "loss_b", default: "1", help: "weight of the L1 loss term" },
    ConfigKey { name: "augment", default: "true", help: "random flips and 90-degree rotations" },
];

fn build_samples(cfg: &RunConfig, input_size: usize) -> Result<Vec<TrainSample>, CliError> {
    let roots = cfg.get_list("roots");
    if roots.is_empty() {
        return Err(CliError::Config("key roots is required".into()));
    }
    let mut samples = Vec::new();
    for (source, root) in roots.iter().enumerate() {
        let root_path = std::path::Path::new(root);
        if !root_path.is_dir() {
            return Err(CliError::Data(format!("{root}: directory not found")));
        }
        let ds = load_dataset(root_path)?;
        if ds.foggy.is_empty() {
            return Err(CliError::Data(format!("{root}: no foggy sequences")));
        }
        for seq in &ds.foggy {
            let Some((lighting, _)) = seq.video_key() else {
                return Err(CliError::Data(format!("{root}: foggy sequence has mixed tags")));
            };
            let Some(gt) = ds.clear_for_lighting(lighting) else {
                return Err(CliError::Data(format!(
                    "{root}: no clear ground truth for lighting {lighting}"
                )));
            };
            if gt.len() != seq.len() {
                return Err(CliError::Data(format!(
                    "{root}: lighting {lighting}: foggy has {} frames but clear has {}",
                    seq.len(),
                    gt.len()
                )));
            }
            for window in triplet_indices(seq.len()) {
                samples.push(TrainSample {
                    triplet: [
                        resize(seq.frame(window[0]), input_size),
                        resize(seq.frame(window[1]), input_size),
                        resize(seq.frame(window[2]), input_size),
                    ],
                    target: resize(gt.frame(window[1]), input_size),
                    source,
                });
            }
        }
    }
    Ok(samples)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.get_path("out")?;
    let filters = cfg.get_usize_list("filters")?;
    let model_cfg = TcvdConfig {
        tpformer_stages: filters.len().saturating_sub(1),
        encoder_filters: filters,
        heads: cfg.get_usize("heads")?,
        input_size: cfg.get_usize("input_size")?,
        triplet_len: 3,
        loss_a: cfg.get_f64("loss_a")?,
        loss_b: cfg.get_f64("loss_b")?,
    };
    model_cfg.validate()?;

    let samples = build_samples(cfg, model_cfg.input_size)?;
    let seed = cfg.get_u64("seed")?;
    let opts = TrainOptions {
        steps: cfg.get_usize("steps")?,
        batch_size: cfg.get_usize("batch_size")?,
        lr: cfg.get_f64("lr")?,
        seed,
        augment: cfg.get_bool("augment")?,
    };

    let mut model = TcvdModel::init(model_cfg, seed)?;
    let log = train(&mut model, &samples, &opts)?;

    ensure_dir(&out)?;
    save_checkpoint(&model, &out.join("checkpoint.ckpt"))?;
    std::fs::write(out.join("train_log.csv"), log.to_csv())
        .map_err(|e| CliError::Data(format!("{}: {e}", out.display())))?;

    let mut meta: BTreeMap<String, serde_json::Value> = BTreeMap::new();
    meta.insert("config".into(), serde_json::to_value(cfg.echo()).unwrap());
    meta.insert("model_config".into(), serde_json::to_value(model.config()).unwrap());
    meta.insert("samples".into(), samples.len().into());
    meta.insert("source_counts".into(), serde_json::to_value(&log.source_counts).unwrap());
    meta.insert("initial_loss".into(), log.initial_loss().unwrap_or(f64::NAN).into());
    meta.insert("final_loss".into(), log.final_loss().unwrap_or(f64::NAN).into());
    write_json(&out.join("train_meta.json"), &meta)?;

    println!(
        "trained {} steps on {} samples: loss {:.6} -> {:.6}",
        opts.steps,
        samples.len(),
        log.initial_loss().unwrap_or(f64::NAN),
        log.final_loss().unwrap_or(f64::NAN)
    );
    Ok(())
}
