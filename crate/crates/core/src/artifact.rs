//! Binary container shared by every `.bin` artifact (WCE matrices,
//! embedding layers, models, regressors).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "WCEART01"
//! header_len u64
//! header     header_len bytes of JSON:
//!            {"kind": str, "meta": {...}, "arrays": [{"name": str, "shape": [usize]}]}
//! payload    each array's f64 values, row-major, in header order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"WCEART01";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArraySpec {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<ArraySpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    kind: String,
    meta: serde_json::Value,
    arrays: Vec<(String, Vec<usize>, Vec<f64>)>,
}

impl Artifact {
    pub fn new<M: Serialize>(kind: &str, meta: &M) -> Result<Self> {
        Ok(Self {
            kind: kind.to_string(),
            meta: serde_json::to_value(meta)?,
            arrays: Vec::new(),
        })
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    pub fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Format(format!(
                "expected a '{kind}' artifact, found '{}'",
                self.kind
            )))
        }
    }

    pub fn meta<M: DeserializeOwned>(&self) -> Result<M> {
        Ok(serde_json::from_value(self.meta.clone())?)
    }

    pub fn push_matrix(&mut self, name: &str, m: &Array2<f64>) {
        let data = m.iter().copied().collect();
        self.arrays.push((name.to_string(), vec![m.nrows(), m.ncols()], data));
    }

    pub fn push_vector(&mut self, name: &str, v: &[f64]) {
        self.arrays.push((name.to_string(), vec![v.len()], v.to_vec()));
    }

    fn find(&self, name: &str) -> Result<&(String, Vec<usize>, Vec<f64>)> {
        self.arrays
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| Error::Format(format!("artifact has no array '{name}'")))
    }

    pub fn has(&self, name: &str) -> bool {
        self.arrays.iter().any(|(n, _, _)| n == name)
    }

    pub fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        let (_, shape, data) = self.find(name)?;
        if shape.len() != 2 {
            return Err(Error::Format(format!("array '{name}' is not a matrix")));
        }
        Array2::from_shape_vec((shape[0], shape[1]), data.clone()).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        let (_, shape, data) = self.find(name)?;
        if shape.len() != 1 {
            return Err(Error::Format(format!("array '{name}' is not a vector")));
        }
        Ok(data.clone())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = Header {
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|(name, shape, _)| ArraySpec {
                    name: name.clone(),
                    shape: shape.clone(),
                })
                .collect(),
        };
        let header = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for (_, _, data) in &self.arrays {
            for v in data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a wce artifact (bad magic)".into()));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: Header = serde_json::from_slice(&header)?;
        let mut arrays = Vec::with_capacity(header.arrays.len());
        let mut word = [0u8; 8];
        for spec in header.arrays {
            let n: usize = spec.shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                r.read_exact(&mut word)?;
                data.push(f64::from_le_bytes(word));
            }
            arrays.push((spec.name, spec.shape, data));
        }
        Ok(Self {
            kind: header.kind,
            meta: header.meta,
            arrays,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        Self::read_from(BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn roundtrip_preserves_bits() {
        let mut a = Artifact::new("demo", &serde_json::json!({"terms": ["x", "y"]})).unwrap();
        a.push_matrix("m", &array![[0.1, -2.0], [1.0 / 3.0, 4.5e-300]]);
        a.push_vector("v", &[f64::MIN_POSITIVE, 7.0]);
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let b = Artifact::read_from(&buf[..]).unwrap();
        assert_eq!(a, b);
        assert!(b.expect_kind("other").is_err());
        assert!(b.matrix("v").is_err());
        assert!(b.vector("missing").is_err());
    }

    #[test]
    fn bad_magic_is_rejected() {
        assert!(Artifact::read_from(&b"NOTANART\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
