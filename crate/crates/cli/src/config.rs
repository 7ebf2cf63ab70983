//! Plain key=value run configuration.
//!
//! One `key = value` per line, `#` comments, blank lines allowed. Every
//! command declares its key registry with defaults; unknown keys are
//! rejected up front, and the effective configuration (defaults included)
//! is echoed into every artifact a command writes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::CliError;

/// One configuration key a command understands.
#[derive(Debug, Clone, Copy)]
pub struct ConfigKey {
    pub name: &'static str,
    /// Default value; empty means "unset" (required keys check for this).
    pub default: &'static str,
    pub help: &'static str,
}

/// Help block listing a command's keys with defaults.
pub fn keys_help(keys: &[ConfigKey]) -> String {
    let mut out = String::from("Configuration keys (via --config file or --set key=value):\n");
    for k in keys {
        let default = if k.default.is_empty() { "(unset)".to_string() } else { format!("{:?}", k.default) };
        out.push_str(&format!("  {:<16} default {:<10} {}\n", k.name, default, k.help));
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    keys: &'static [ConfigKey],
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Load a config file (if given) and apply `--set key=value` overrides.
    pub fn load(
        keys: &'static [ConfigKey],
        path: Option<&Path>,
        sets: &[String],
    ) -> Result<RunConfig, CliError> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    CliError::Config(format!(
                        "{}:{}: expected key=value, got {raw:?}",
                        path.display(),
                        lineno + 1
                    ))
                })?;
                values.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        for set in sets {
            let (key, value) = set.split_once('=').ok_or_else(|| {
                CliError::Config(format!("--set expects key=value, got {set:?}"))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        for key in values.keys() {
            if !keys.iter().any(|k| k.name == key) {
                return Err(CliError::Config(format!(
                    "unknown configuration key {key:?} (see --help for the key list)"
                )));
            }
        }
        Ok(RunConfig { keys, values })
    }

    /// Effective value: explicit setting or registry default.
    pub fn get(&self, name: &str) -> &str {
        match self.values.get(name) {
            Some(v) => v,
            None => {
                self.keys
                    .iter()
                    .find(|k| k.name == name)
                    .unwrap_or_else(|| panic!("key {name:?} not in registry"))
                    .default
            }
        }
    }

    pub fn is_set(&self, name: &str) -> bool {
        !self.get(name).is_empty()
    }

    pub fn get_usize(&self, name: &str) -> Result<usize, CliError> {
        self.get(name)
            .parse()
            .map_err(|_| CliError::Config(format!("key {name}: expected an integer, got {:?}", self.get(name))))
    }

    pub fn get_u64(&self, name: &str) -> Result<u64, CliError> {
        self.get(name)
            .parse()
            .map_err(|_| CliError::Config(format!("key {name}: expected an integer, got {:?}", self.get(name))))
    }

    pub fn get_f64(&self, name: &str) -> Result<f64, CliError> {
        self.get(name)
            .parse()
            .map_err(|_| CliError::Config(format!("key {name}: expected a number, got {:?}", self.get(name))))
    }

    pub fn get_bool(&self, name: &str) -> Result<bool, CliError> {
        match self.get(name) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(CliError::Config(format!("key {name}: expected true/false, got {other:?}"))),
        }
    }

    /// A required path key; must be non-empty.
    pub fn get_path(&self, name: &str) -> Result<PathBuf, CliError> {
        let v = self.get(name);
        if v.is_empty() {
            return Err(CliError::Config(format!("key {name} is required")));
        }
        Ok(PathBuf::from(v))
    }

    /// A required path that must already exist on disk.
    pub fn get_existing_dir(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.get_path(name)?;
        if !path.is_dir() {
            return Err(CliError::Data(format!("{}: directory not found", path.display())));
        }
        Ok(path)
    }

    /// Comma-separated list values.
    pub fn get_list(&self, name: &str) -> Vec<String> {
        self.get(name)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    }

    /// Comma-separated f64 list.
    pub fn get_f64_list(&self, name: &str) -> Result<Vec<f64>, CliError> {
        self.get_list(name)
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Config(format!("key {name}: expected numbers, got {s:?}")))
            })
            .collect()
    }

    pub fn get_usize_list(&self, name: &str) -> Result<Vec<usize>, CliError> {
        self.get_list(name)
            .iter()
            .map(|s| {
                s.parse()
                    .map_err(|_| CliError::Config(format!("key {name}: expected integers, got {s:?}")))
            })
            .collect()
    }

    /// Every key with its effective value, for embedding into artifacts.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.keys.iter().map(|k| (k.name.to_string(), self.get(k.name).to_string())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[ConfigKey] = &[
        ConfigKey { name: "out", default: "", help: "output dir" },
        ConfigKey { name: "seed", default: "0", help: "rng seed" },
        ConfigKey { name: "size", default: "64", help: "frame side" },
    ];

    #[test]
    fn defaults_apply_and_sets_override() {
        let cfg = RunConfig::load(KEYS, None, &["size=32".to_string()]).unwrap();
        assert_eq!(cfg.get("seed"), "0");
        assert_eq!(cfg.get_usize("size").unwrap(), 32);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::load(KEYS, None, &["nope=1".to_string()]).unwrap_err();
        assert!(matches!(err, CliError::Config(_)));
    }

    #[test]
    fn file_parsing_handles_comments_and_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# comment\n\nsize = 48  # trailing\nseed=9\n").unwrap();
        let cfg = RunConfig::load(KEYS, Some(&path), &[]).unwrap();
        assert_eq!(cfg.get_usize("size").unwrap(), 48);
        assert_eq!(cfg.get_u64("seed").unwrap(), 9);
    }

    #[test]
    fn required_path_errors_when_unset() {
        let cfg = RunConfig::load(KEYS, None, &[]).unwrap();
        assert!(matches!(cfg.get_path("out"), Err(CliError::Config(_))));
    }

    #[test]
    fn echo_lists_every_key() {
        let cfg = RunConfig::load(KEYS, None, &["out=x".to_string()]).unwrap();
        let echo = cfg.echo();
        assert_eq!(echo.len(), 3);
        assert_eq!(echo["out"], "x");
        assert_eq!(echo["seed"], "0");
    }
}
