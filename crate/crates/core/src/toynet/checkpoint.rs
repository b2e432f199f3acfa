//! Binary model checkpoints.
//!
//! Layout: magic `NFED`, `u32` version, then one chunk per parameter tensor:
//! `u32` name length, UTF-8 name, `u32` rank, `u32` dims, `f32` values; all
//! little-endian. The architecture is stored next to it as `<path>.json`.

use std::fs;
use std::path::{Path, PathBuf};

use super::{ToyConfig, ToyModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"NFED";

fn config_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

fn encode(model: &ToyModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for store in [&model.generator, &model.discriminator] {
        for spec in &store.specs {
            out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
            out.extend_from_slice(spec.name.as_bytes());
            out.extend_from_slice(&(spec.shape.len() as u32).to_le_bytes());
            for d in &spec.shape {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            for v in &store.values[spec.offset..spec.offset + spec.len()] {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

/// Writes the parameters to `path` and the configuration to `<path>.json`.
pub fn save_checkpoint(model: &ToyModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, encode(model)).map_err(|e| Error::io(path, e))?;
    let cfg = config_path(path);
    let text = serde_json::to_string_pretty(&model.config)?;
    fs::write(&cfg, text).map_err(|e| Error::io(&cfg, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format("checkpoint", "truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ToyModel> {
    let path = path.as_ref();
    let cfg = config_path(path);
    let text = fs::read_to_string(&cfg).map_err(|e| Error::io(&cfg, e))?;
    let config: ToyConfig = serde_json::from_str(&text)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, config)
}

fn decode(bytes: &[u8], config: ToyConfig) -> Result<ToyModel> {
    let mut model = ToyModel::zeroed(config)?;
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("checkpoint", format!("unsupported version {version}")));
    }
    for store in [&mut model.generator, &mut model.discriminator] {
        for spec in &store.specs {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format("checkpoint", "name is not UTF-8"))?;
            if name != spec.name {
                return Err(Error::format("checkpoint", format!("expected tensor {}, found {name}", spec.name)));
            }
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            if shape != spec.shape {
                return Err(Error::format("checkpoint", format!("tensor {name} has shape {shape:?}, expected {:?}", spec.shape)));
            }
            for v in &mut store.values[spec.offset..spec.offset + spec.len()] {
                let f = f32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
                if !f.is_finite() {
                    return Err(Error::format("checkpoint", format!("non-finite value in {name}")));
                }
                *v = f as f64;
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format("checkpoint", "trailing bytes"));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact_for_fresh_model() {
        let model = ToyModel::new(ToyConfig::micro()).unwrap();
        let back = decode(&encode(&model), model.config.clone()).unwrap();
        assert_eq!(back.generator, model.generator);
        assert_eq!(back.discriminator, model.discriminator);
    }

    #[test]
    fn header_layout() {
        let model = ToyModel::new(ToyConfig::micro()).unwrap();
        let bytes = encode(&model);
        assert_eq!(&bytes[..4], b"NFED");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let name_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(&bytes[12..12 + name_len], b"gen.enc.conv0.weight");
        let rank = u32::from_le_bytes(bytes[12 + name_len..16 + name_len].try_into().unwrap());
        assert_eq!(rank, 4);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let model = ToyModel::new(ToyConfig::micro()).unwrap();
        let bytes = encode(&model);
        assert!(decode(&bytes[..bytes.len() - 1], model.config.clone()).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode(&bad, model.config.clone()).is_err());
        let other = ToyConfig { z_factor: 5, ..ToyConfig::micro() };
        assert!(decode(&bytes, other).is_err());
    }
}
