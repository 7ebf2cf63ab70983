//! Benchmark report rows and their JSON/CSV serializations.
//!
//! Infinite PSNR (zero error) serializes as the string `"inf"` since JSON
//! has no infinity literal; CSV uses the same token.

use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::Density;
use crate::error::{Error, Result};

/// Either one lighting condition or the pool over all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LightingScope {
    Index(usize),
    All,
}

impl std::fmt::Display for LightingScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LightingScope::Index(i) => write!(f, "{i}"),
            LightingScope::All => f.write_str("all"),
        }
    }
}

impl Serialize for LightingScope {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LightingScope {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        if s == "all" {
            Ok(LightingScope::All)
        } else {
            s.parse::<usize>()
                .map(LightingScope::Index)
                .map_err(|_| D::Error::custom(format!("bad lighting scope {s:?}")))
        }
    }
}

fn serialize_psnr<S: Serializer>(v: &f64, serializer: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        serializer.serialize_str("inf")
    } else {
        serializer.serialize_f64(*v)
    }
}

fn deserialize_psnr<'de, D: Deserializer<'de>>(deserializer: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(deserializer)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(s) if s == "inf" => Ok(f64::INFINITY),
        Raw::Text(s) => Err(D::Error::custom(format!("bad psnr value {s:?}"))),
    }
}

/// One aggregated (method, density, lighting) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub density: Density,
    pub lighting: LightingScope,
    pub ssim: f64,
    #[serde(serialize_with = "serialize_psnr", deserialize_with = "deserialize_psnr")]
    pub psnr: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    #[serde(default)]
    pub errors: Vec<String>,
    pub config: BTreeMap<String, String>,
    /// SHA-256 of all scored pixel content.
    pub fingerprint: String,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<MetricsReport> {
        serde_json::from_str(text).map_err(|e| Error::contract(format!("bad report JSON: {e}")))
    }

    /// CSV with the fixed column order `method,density,lighting,ssim,psnr,frames`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,density,lighting,ssim,psnr,frames\n");
        for row in &self.rows {
            let psnr = if row.psnr.is_infinite() { "inf".to_string() } else { row.psnr.to_string() };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.method, row.density, row.lighting, row.ssim, psnr, row.frames
            ));
        }
        out
    }

    /// Rows for one method, in report order.
    pub fn method_rows(&self, method: &str) -> Vec<&MetricsRow> {
        self.rows.iter().filter(|r| r.method == method).collect()
    }
}
