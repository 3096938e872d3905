//! Model files: pretty-printed JSON with a provenance header.
//!
//! ```text
//! {
//!   "header": { "format": "sqnn-ppp-model", "schema_version": 1, "tool": "...", "config_hash": "...", "seed": 0 },
//!   "model": {
//!     "structure": { "kind": "single", "factor": { "hidden": {...}, "measure": {...} } },
//!     "readout": { "m": [[...], ...], "jitter": 0.01, "alpha": 50.0 },
//!     "kernel_mode": { "kind": "closed_form" }
//!   }
//! }
//! ```
//!
//! Matrices are arrays of rows. Floats are written in shortest round-trip
//! decimal form, so save → load → save is byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::IntensityModel;

pub const MODEL_FORMAT: &str = "sqnn-ppp-model";
const SCHEMA_VERSION: u32 = 1;

/// Provenance block carried by every output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileHeader {
    pub format: String,
    pub schema_version: u32,
    pub tool: String,
    pub config_hash: String,
    pub seed: u64,
}

impl FileHeader {
    pub fn new(format: &str, config_hash: impl Into<String>, seed: u64) -> Self {
        FileHeader {
            format: format.to_string(),
            schema_version: SCHEMA_VERSION,
            tool: crate::TOOL_VERSION.to_string(),
            config_hash: config_hash.into(),
            seed,
        }
    }

    pub fn check(&self, format: &str) -> Result<()> {
        if self.format != format {
            return Err(Error::Format(format!("expected a '{format}' file, found '{}'", self.format)));
        }
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Format(format!("unsupported schema version {}", self.schema_version)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub header: FileHeader,
    pub model: IntensityModel,
}

impl ModelFile {
    pub fn new(model: IntensityModel, config_hash: impl Into<String>, seed: u64) -> Self {
        ModelFile { header: FileHeader::new(MODEL_FORMAT, config_hash, seed), model }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        f.header.check(MODEL_FORMAT)?;
        f.model.validate()?;
        Ok(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ModelFile::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `DMatrix` as an array of rows.
pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        s.collect_seq(rows)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("matrix rows differ in length"));
        }
        Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

pub(crate) mod vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::deserialize(d)?))
    }
}
