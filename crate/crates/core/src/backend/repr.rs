//! Representation archive and label sidecar.
//!
//! ```text
//! magic    8 bytes "SSDREPR\0"
//! version  u8      1
//! count    u32
//! count x entry:
//!   id_len u32, id bytes (UTF-8)
//!   kind   u8   (RepresentationKind::tag)
//!   dim    u32
//!   values dim f64
//! ```
//!
//! Little-endian. Labels live next to the archive as `id<TAB>label` lines;
//! labels are written as `0` (typical) and `1` (disordered) and read from
//! `0`/`1` or `TD`/`SSD`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::archive::{put_string, Reader};

const MAGIC: &[u8; 8] = b"SSDREPR\0";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepresentationKind {
    IVector,
    Functional,
    AccuracyStack,
    Projected,
}

impl RepresentationKind {
    pub fn tag(self) -> u8 {
        match self {
            Self::IVector => 0,
            Self::Functional => 1,
            Self::AccuracyStack => 2,
            Self::Projected => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => Self::IVector,
            1 => Self::Functional,
            2 => Self::AccuracyStack,
            3 => Self::Projected,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Representation {
    pub kind: RepresentationKind,
    pub values: Array1<f64>,
}

/// Id to fixed-length vector, iterated in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RepresentationArchive {
    entries: BTreeMap<String, Representation>,
}

impl RepresentationArchive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, kind: RepresentationKind, values: Array1<f64>) -> Result<()> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("representation values"));
        }
        self.entries.insert(id.into(), Representation { kind, values });
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Representation> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Representation)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Stacks the vectors of `ids` as rows.
    pub fn matrix<S: AsRef<str>>(&self, ids: &[S]) -> Result<Array2<f64>> {
        let first = ids.first().ok_or(Error::TooFew { what: "representation ids", need: 1, got: 0 })?;
        let lookup = |id: &str| self.get(id).ok_or_else(|| Error::InvalidArgument(format!("no representation for {id}")));
        let d = lookup(first.as_ref())?.values.len();
        let mut out = Array2::zeros((ids.len(), d));
        for (row, id) in out.rows_mut().into_iter().zip(ids) {
            let r = lookup(id.as_ref())?;
            if r.values.len() != d {
                return Err(Error::DimensionMismatch { what: "representation", expected: d, got: r.values.len() });
            }
            row.into_iter().zip(&r.values).for_each(|(o, v)| *o = *v);
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (id, r) in &self.entries {
            put_string(&mut out, id);
            out.push(r.kind.tag());
            out.extend_from_slice(&(r.values.len() as u32).to_le_bytes());
            for v in &r.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const WHAT: &str = "representation archive";
        let mut r = Reader::new(WHAT, bytes);
        r.header(MAGIC, VERSION)?;
        let count = r.u32()?;
        let mut archive = Self::new();
        for _ in 0..count {
            let id = r.string()?;
            let tag = r.u8()?;
            let kind = RepresentationKind::from_tag(tag).ok_or_else(|| Error::malformed(WHAT, format!("unknown kind tag {tag}")))?;
            let dim = r.u32()? as usize;
            let raw = r.take(dim.checked_mul(8).ok_or_else(|| Error::malformed(WHAT, "dimension overflow"))?)?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
            archive.insert(id, kind, values).map_err(|e| Error::malformed(WHAT, e.to_string()))?;
        }
        r.finish()?;
        Ok(archive)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

pub fn parse_label(s: &str) -> Option<bool> {
    match s {
        "0" | "TD" => Some(false),
        "1" | "SSD" => Some(true),
        _ => None,
    }
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, bool>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| Error::malformed("label file", format!("line {}: expected id<TAB>label", i + 1)))?;
        let label = parse_label(label.trim())
            .ok_or_else(|| Error::malformed("label file", format!("line {}: unknown label {label:?}", i + 1)))?;
        out.insert(id.to_string(), label);
    }
    Ok(out)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &BTreeMap<String, bool>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (id, &l) in labels {
        writeln!(text, "{id}\t{}", u8::from(l)).expect("string write");
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn archive_roundtrip_and_matrix() {
        let mut a = RepresentationArchive::new();
        a.insert("b", RepresentationKind::IVector, array![1.0, 2.0]).unwrap();
        a.insert("a", RepresentationKind::IVector, array![-0.5, 1e-300]).unwrap();
        let back = RepresentationArchive::from_bytes(&a.to_bytes()).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.ids().collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(back.matrix(&["b", "a"]).unwrap(), array![[1.0, 2.0], [-0.5, 1e-300]]);
        let bytes = a.to_bytes();
        assert!(RepresentationArchive::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(a.insert("c", RepresentationKind::Functional, array![f64::NAN]).is_err());
    }

    #[test]
    fn labels_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels.tsv");
        let labels = BTreeMap::from([("s1".to_string(), true), ("s2".to_string(), false)]);
        write_labels(&p, &labels).unwrap();
        assert_eq!(read_labels(&p).unwrap(), labels);
        fs::write(&p, "x\tSSD\r\ny\tTD\n").unwrap();
        assert_eq!(read_labels(&p).unwrap(), BTreeMap::from([("x".into(), true), ("y".into(), false)]));
        fs::write(&p, "x\tmaybe\n").unwrap();
        assert!(matches!(read_labels(&p), Err(Error::Malformed { .. })));
    }
}
