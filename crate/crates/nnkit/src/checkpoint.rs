//! Named-tensor checkpoints.
//!
//! A checkpoint is two files: a little-endian binary container
//!
//! ```text
//! magic b"LARC", version u16, count u32,
//! count * { name_len u16, name utf-8, rows u32, cols u32, rows*cols f32 }
//! ```
//!
//! and a JSON manifest next to it (`<path>.json`) listing tensor shapes and
//! free-form training metadata.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Matrix, NnError, Parameters, Result};

const MAGIC: &[u8; 4] = b"LARC";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub tensors: Vec<TensorInfo>,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn from_params<P: Parameters>(kind: &str, params: &P, metadata: BTreeMap<String, String>) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|(n, m)| {
                let mut m = m.clone();
                m.round_to_f32();
                (n, m)
            })
            .collect();
        Self {
            kind: kind.to_string(),
            metadata,
            tensors,
        }
    }

    /// Copies tensors into `params`, which must have the same names and shapes.
    pub fn load_into<P: Parameters>(&self, params: &mut P) -> Result<()> {
        let mut idx = 0;
        let mut error = None;
        params.visit_mut(&mut |name, m| {
            if error.is_some() {
                return;
            }
            match self.tensors.get(idx) {
                Some((n, t)) if n == name && t.shape() == m.shape() => {
                    m.as_mut_slice().copy_from_slice(t.as_slice());
                }
                Some((n, t)) => {
                    error = Some(format!(
                        "tensor {idx}: checkpoint has {n} {:?}, model expects {name} {:?}",
                        t.shape(),
                        m.shape()
                    ))
                }
                None => error = Some(format!("checkpoint is missing tensor {name}")),
            }
            idx += 1;
        });
        if let Some(e) = error {
            return Err(NnError::Checkpoint(e));
        }
        if idx != self.tensors.len() {
            return Err(NnError::Checkpoint(format!(
                "checkpoint has {} tensors, model has {idx}",
                self.tensors.len()
            )));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            kind: self.kind.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, m)| TensorInfo {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn encode<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, m) in &self.tensors {
            let bytes = name.as_bytes();
            w.write_all(&(bytes.len() as u16).to_le_bytes())?;
            w.write_all(bytes)?;
            w.write_all(&(m.rows() as u32).to_le_bytes())?;
            w.write_all(&(m.cols() as u32).to_le_bytes())?;
            for &v in m.as_slice() {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Decodes the tensor container; `kind` and `metadata` come from the manifest.
    pub fn decode<R: Read>(mut r: R, manifest: Manifest) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NnError::Checkpoint("bad magic".into()));
        }
        let version = read_u16(&mut r)?;
        if version != VERSION {
            return Err(NnError::Checkpoint(format!("unsupported version {version}")));
        }
        let count = read_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u16(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name).map_err(|_| NnError::Checkpoint("tensor name is not utf-8".into()))?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let mut buf = vec![0u8; rows * cols * 4];
            r.read_exact(&mut buf)?;
            let data = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.push((name, Matrix::new(rows, cols, data)?));
        }
        let listed: Vec<(&str, usize, usize)> = manifest.tensors.iter().map(|t| (t.name.as_str(), t.rows, t.cols)).collect();
        let found: Vec<(&str, usize, usize)> = tensors.iter().map(|(n, m)| (n.as_str(), m.rows(), m.cols())).collect();
        if listed != found {
            return Err(NnError::Checkpoint("manifest does not match tensor container".into()));
        }
        Ok(Self {
            kind: manifest.kind,
            metadata: manifest.metadata,
            tensors,
        })
    }

    pub fn manifest_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.encode(BufWriter::new(File::create(path)?))?;
        let text = serde_json::to_string_pretty(&self.manifest()).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        std::fs::write(Self::manifest_path(path), text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(Self::manifest_path(path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        Self::decode(BufReader::new(File::open(path)?), manifest)
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
