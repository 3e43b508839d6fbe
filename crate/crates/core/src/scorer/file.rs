//! Model files: an 8-byte magic, a little-endian `u32` format version, a
//! `u64` length and a JSON header (config, vocabularies, tensor names and
//! shapes), then every tensor as little-endian `f64` in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelParams, TokenVocab};
use crate::error::{Error, Result};
use crate::treebank::LabelVocab;

const MAGIC: &[u8; 8] = b"TREECRF\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    init_seed: u64,
    words: TokenVocab,
    chars: TokenVocab,
    labels: LabelVocab,
    tensors: Vec<TensorInfo>,
}

pub(crate) fn write_json<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<()> {
    let json = serde_json::to_vec(value)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    Ok(())
}

pub(crate) fn read_json<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<T> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 32 {
        return Err(Error::ModelFormat(format!("header of {len} bytes")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(serde_json::from_slice(&buf)?)
}

/// Raw values of every tensor, in order.
pub(crate) fn write_values<W: Write>(w: &mut W, params: &ModelParams) -> Result<()> {
    for (_, t, _) in params.tensors() {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_values<R: Read>(r: &mut R, params: &mut ModelParams) -> Result<()> {
    let mut b = [0u8; 8];
    for (name, t) in params.tensors_mut() {
        for v in t.iter_mut() {
            r.read_exact(&mut b)
                .map_err(|e| Error::ModelFormat(format!("truncated tensor {name}: {e}")))?;
            *v = f64::from_le_bytes(b);
            if !v.is_finite() {
                return Err(Error::ModelFormat(format!("non-finite value in {name}")));
            }
        }
    }
    Ok(())
}

impl Model {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = Header {
            config: self.config.clone(),
            init_seed: self.init_seed,
            words: self.words.clone(),
            chars: self.chars.clone(),
            labels: self.labels.clone(),
            tensors: self
                .params
                .tensors()
                .into_iter()
                .map(|(name, _, shape)| TensorInfo { name, shape })
                .collect(),
        };
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_json(w, &header)?;
        write_values(w, &self.params)
    }

    /// Reads a model and leaves `r` just past it.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Model> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::ModelFormat("file too short".into()))?;
        if &magic != MAGIC {
            return Err(Error::ModelFormat("not a model file".into()));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v)?;
        let version = u32::from_le_bytes(v);
        if version != FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let h: Header = read_json(r)?;
        h.config.validate()?;
        if h.labels.is_empty() {
            return Err(Error::EmptyLabelSet);
        }
        let mut params = ModelParams::zeros(&h.config, h.words.len(), h.chars.len(), h.labels.len());
        let expected: Vec<(String, Vec<usize>)> = params.tensors().into_iter().map(|(n, _, s)| (n, s)).collect();
        let found: Vec<(String, Vec<usize>)> = h.tensors.into_iter().map(|t| (t.name, t.shape)).collect();
        if expected != found {
            let diff = expected
                .iter()
                .zip(&found)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("expected {} {:?}, found {} {:?}", a.0, a.1, b.0, b.1))
                .unwrap_or_else(|| format!("expected {} tensors, found {}", expected.len(), found.len()));
            return Err(Error::ModelFormat(format!("tensor mismatch: {diff}")));
        }
        read_values(r, &mut params)?;
        Ok(Model {
            config: h.config,
            words: h.words,
            chars: h.chars,
            labels: h.labels,
            init_seed: h.init_seed,
            params,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Model::read_from(&mut BufReader::new(File::open(path)?))
    }
}
