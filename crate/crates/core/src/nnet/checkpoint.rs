//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `MRSWCKPT`, a little-endian `u32` format version,
//! a `u64` header length and a JSON header, followed by little-endian `f64`
//! arrays: parameters, running mean, running variance and, when present, the
//! Adam first and second moments.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::adam::{Adam, AdamConfig};
use crate::nnet::mlp::{Mlp, MlpSpec};

pub const MAGIC: &[u8; 8] = b"MRSWCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: MlpSpec,
    n_params: usize,
    adam: Option<(AdamConfig, u64)>,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// Everything stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Mlp,
    pub adam: Option<Adam>,
    /// Free-form run information (seeds, training history, ...).
    pub metadata: serde_json::Value,
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Corrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn write_f64s(w: &mut impl Write, xs: &[f64]) -> std::io::Result<()> {
    for x in xs {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(bytes: &[u8], pos: &mut usize, n: usize, path: &Path) -> Result<Vec<f64>> {
    let end = *pos + 8 * n;
    if end > bytes.len() {
        return Err(corrupt(path, "truncated array data"));
    }
    let out = bytes[*pos..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    *pos = end;
    Ok(out)
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let header = Header {
            spec: self.model.spec().clone(),
            n_params: self.model.n_params(),
            adam: self.adam.as_ref().map(|a| (a.config, a.step)),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut buf = Vec::with_capacity(json.len() + 8 * (3 * self.model.n_params() + 64));
        buf.write_all(MAGIC)?;
        buf.write_all(&FORMAT_VERSION.to_le_bytes())?;
        buf.write_all(&(json.len() as u64).to_le_bytes())?;
        buf.write_all(&json)?;
        write_f64s(&mut buf, self.model.params())?;
        write_f64s(&mut buf, self.model.running_mean())?;
        write_f64s(&mut buf, self.model.running_var())?;
        if let Some(a) = &self.adam {
            write_f64s(&mut buf, &a.m)?;
            write_f64s(&mut buf, &a.v)?;
        }
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::NotFound {
                    Error::MissingCheckpoint(path.to_path_buf())
                } else {
                    Error::Io(e)
                }
            })?
            .read_to_end(&mut bytes)?;
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt(path, "not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(corrupt(path, format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let mut pos = 20usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| corrupt(path, "truncated header"))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..pos]).map_err(|e| corrupt(path, format!("bad header: {e}")))?;
        if header.n_params != header.spec.n_params() {
            return Err(corrupt(path, "parameter count does not match the stored spec"));
        }
        let l = header.spec.input_bins;
        let params = read_f64s(&bytes, &mut pos, header.n_params, path)?;
        let mean = read_f64s(&bytes, &mut pos, l, path)?;
        let var = read_f64s(&bytes, &mut pos, l, path)?;
        let model = Mlp::from_parts(header.spec, params, mean, var)?;
        let adam = match header.adam {
            Some((config, step)) => {
                let m = read_f64s(&bytes, &mut pos, header.n_params, path)?;
                let v = read_f64s(&bytes, &mut pos, header.n_params, path)?;
                Some(Adam { config, m, v, step })
            }
            None => None,
        };
        if pos != bytes.len() {
            return Err(corrupt(path, "trailing bytes"));
        }
        Ok(Self {
            model,
            adam,
            metadata: header.metadata,
        })
    }

    /// Loads and checks that the stored network matches `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &MlpSpec) -> Result<Self> {
        let ckpt = Self::load(path)?;
        if ckpt.model.spec() != expected {
            return Err(Error::Config(format!(
                "checkpoint network {:?} does not match the configured network {:?}",
                ckpt.model.spec().widths,
                expected.widths
            )));
        }
        Ok(ckpt)
    }
}
