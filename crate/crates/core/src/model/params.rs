//! Flat parameter vectors, their shape manifests, and the checkpoint file.
//!
//! Checkpoint layout: a text header
//!
//! ```text
//! psla-checkpoint 1
//! tensor <name> <d0>x<d1>...
//! end
//! ```
//!
//! followed immediately by the values as little-endian `f64`, in manifest
//! order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ModelError;

const HEADER: &str = "psla-checkpoint 1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn new(name: impl Into<String>, shape: &[usize]) -> Self {
        Self {
            name: name.into(),
            shape: shape.to_vec(),
        }
    }

    pub fn size(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    manifest: Vec<TensorSpec>,
}

impl ParameterVector {
    pub fn new(manifest: Vec<TensorSpec>, values: Vec<f64>) -> Result<Self, ModelError> {
        let total: usize = manifest.iter().map(TensorSpec::size).sum();
        if total != values.len() {
            return Err(ModelError::Manifest(format!(
                "manifest covers {total} values, vector has {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("parameter vector".into()));
        }
        Ok(Self { values, manifest })
    }

    pub fn zeros(manifest: Vec<TensorSpec>) -> Self {
        let total = manifest.iter().map(TensorSpec::size).sum();
        Self {
            values: vec![0.0; total],
            manifest,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn manifest(&self) -> &[TensorSpec] {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The named tensor's values, if present.
    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let mut offset = 0;
        for spec in &self.manifest {
            if spec.name == name {
                return Some(&self.values[offset..offset + spec.size()]);
            }
            offset += spec.size();
        }
        None
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{HEADER}\n");
        for spec in &self.manifest {
            let dims: Vec<String> = spec.shape.iter().map(ToString::to_string).collect();
            out.push_str(&format!("tensor {} {}\n", spec.name, dims.join("x")));
        }
        out.push_str("end\n");
        let mut bytes = out.into_bytes();
        bytes.extend(self.values.iter().flat_map(|v| v.to_le_bytes()));
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let bad = |m: String| ModelError::Checkpoint(m);
        let mut manifest = Vec::new();
        let mut pos = 0;
        let mut first = true;
        loop {
            let rest = &bytes[pos..];
            let nl = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header".into()))?;
            let line = std::str::from_utf8(&rest[..nl]).map_err(|e| bad(e.to_string()))?;
            pos += nl + 1;
            if first {
                if line != HEADER {
                    return Err(bad(format!("expected {HEADER:?}, got {line:?}")));
                }
                first = false;
                continue;
            }
            if line == "end" {
                break;
            }
            let fields: Vec<&str> = line.split(' ').collect();
            let ["tensor", name, dims] = fields[..] else {
                return Err(bad(format!("bad header line {line:?}")));
            };
            let shape = dims
                .split('x')
                .map(str::parse::<usize>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("{line:?}: {e}")))?;
            manifest.push(TensorSpec::new(name, &shape));
        }
        let payload = &bytes[pos..];
        if !payload.len().is_multiple_of(8) {
            return Err(bad(format!("payload of {} bytes is not f64-aligned", payload.len())));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::new(manifest, values)
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| ModelError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }
}
