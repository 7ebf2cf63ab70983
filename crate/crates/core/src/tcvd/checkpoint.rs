//! Checkpoint format: versioned header, config echo as JSON, then named
//! parameter blobs (name, shape, little-endian f64 data).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::config::TcvdConfig;
use super::model::{ParamSet, TcvdModel};

const MAGIC: &[u8; 8] = b"TCVDCKPT";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &TcvdModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    let config_json = serde_json::to_vec(model.config()).expect("config serializes");
    w.write_all(&(config_json.len() as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&config_json).map_err(io_err)?;

    w.write_all(&(model.params.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, param) in model.params.iter() {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u16).to_le_bytes()).map_err(io_err)?;
        w.write_all(name_bytes).map_err(io_err)?;
        w.write_all(&(param.shape.len() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in &param.shape {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
        }
        for &v in &param.data {
            w.write_all(&v.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TcvdModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(Error::load(path, "not a checkpoint file (bad magic)"));
    }
    let mut u32_buf = [0u8; 4];
    r.read_exact(&mut u32_buf).map_err(io_err)?;
    let version = u32::from_le_bytes(u32_buf);
    if version != VERSION {
        return Err(Error::load(path, format!("unsupported checkpoint version {version}")));
    }
    r.read_exact(&mut u32_buf).map_err(io_err)?;
    let config_len = u32::from_le_bytes(u32_buf) as usize;
    let mut config_json = vec![0u8; config_len];
    r.read_exact(&mut config_json).map_err(io_err)?;
    let config: TcvdConfig = serde_json::from_slice(&config_json)
        .map_err(|e| Error::load(path, format!("bad config echo: {e}")))?;

    r.read_exact(&mut u32_buf).map_err(io_err)?;
    let count = u32::from_le_bytes(u32_buf) as usize;
    let mut params = ParamSet::default();
    for _ in 0..count {
        let mut u16_buf = [0u8; 2];
        r.read_exact(&mut u16_buf).map_err(io_err)?;
        let name_len = u16::from_le_bytes(u16_buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes).map_err(io_err)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::load(path, "parameter name is not UTF-8"))?;
        r.read_exact(&mut u32_buf).map_err(io_err)?;
        let rank = u32::from_le_bytes(u32_buf) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            r.read_exact(&mut u32_buf).map_err(io_err)?;
            shape.push(u32::from_le_bytes(u32_buf) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut f64_buf = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut f64_buf).map_err(io_err)?;
            data.push(f64::from_le_bytes(f64_buf));
        }
        params.insert(&name, shape, data);
    }
    // Rejects registries that do not match the embedded config.
    TcvdModel::from_parts(config, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tcvd::config::TcvdConfig;

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = TcvdModel::init(TcvdConfig::desk(), 11).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        assert_eq!(loaded.params, model.params);
    }

    #[test]
    fn rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxx").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn rejects_config_registry_mismatch() {
        // A checkpoint whose parameter blobs do not match its own config
        // echo must fail to load. Craft one by saving a desk model, then
        // splicing in a different config header.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let model = TcvdModel::init(TcvdConfig::desk(), 0).unwrap();
        save_checkpoint(&model, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        let mut other = TcvdConfig::desk();
        other.encoder_filters = vec![4, 8, 16, 32];
        let other_json = serde_json::to_vec(&other).unwrap();
        let old_len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let mut spliced = Vec::new();
        spliced.extend_from_slice(&bytes[..12]);
        spliced.extend_from_slice(&(other_json.len() as u32).to_le_bytes());
        spliced.extend_from_slice(&other_json);
        spliced.extend_from_slice(&bytes[16 + old_len..]);
        let bad_path = dir.path().join("spliced.ckpt");
        std::fs::write(&bad_path, spliced).unwrap();

        let err = load_checkpoint(&bad_path).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}
