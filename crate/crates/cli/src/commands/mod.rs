//! Subcommand implementations.

mod defog;
mod eval;
mod recompose;
mod synth;
mod train;

pub use defog::{cmd_defog, DEFOG_KEYS};
pub use eval::{cmd_eval, EVAL_KEYS};
pub use recompose::{cmd_recompose, RECOMPOSE_KEYS};
pub use synth::{cmd_synth, SYNTH_KEYS};
pub use train::{cmd_train, TRAIN_KEYS};

use std::path::Path;

use crate::CliError;

pub(crate) fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Data(format!("{}: cannot create directory: {e}", path.display())))
}

pub(crate) fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("serialization failed: {e}")))?;
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
