//! Binary feature archive.
//!
//! ```text
//! magic     8 bytes  "SSDFEAT\0"
//! version   u8       1
//! count     u32
//! count x entry:
//!   id_len      u32
//!   id          id_len bytes, UTF-8
//!   kind        u8     (FeatureKind::tag)
//!   frame_shift f64
//!   T, D        u32, u32
//!   frames      T*D f32, row-major
//! ```
//!
//! All integers and floats are little-endian. Frames are stored as `f32`, so
//! a value read back is the `f32` rounding of what was written; writing a
//! read archive reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::features::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SSDFEAT\0";
const VERSION: u8 = 1;

/// Utterance id to feature matrix, iterated in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureArchive {
    entries: BTreeMap<String, FeatureMatrix>,
}

pub(crate) struct Reader<'a> {
    what: &'static str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(what: &'static str, bytes: &'a [u8]) -> Self {
        Self { what, bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::malformed(
                self.what,
                format!("truncated: wanted {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()),
            )
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::malformed(self.what, "id is not UTF-8"))
    }

    pub(crate) fn header(&mut self, magic: &[u8; 8], version: u8) -> Result<()> {
        if self.take(8)? != magic {
            return Err(Error::malformed(self.what, "bad magic"));
        }
        let v = self.u8()?;
        if v != version {
            return Err(Error::malformed(self.what, format!("unsupported version {v}")));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::malformed(
                self.what,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub(crate) fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl FeatureArchive {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts under the matrix's utterance id, replacing any previous entry.
    pub fn insert(&mut self, features: FeatureMatrix) -> Option<FeatureMatrix> {
        self.entries.insert(features.utterance_id().to_string(), features)
    }

    pub fn get(&self, id: &str) -> Option<&FeatureMatrix> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FeatureMatrix)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn values(&self) -> impl Iterator<Item = &FeatureMatrix> {
        self.entries.values()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.entries.values().map(|m| m.num_frames() * m.dim() * 4 + 64).sum();
        let mut out = Vec::with_capacity(13 + payload);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (id, m) in &self.entries {
            put_string(&mut out, id);
            out.push(m.kind().tag());
            out.extend_from_slice(&m.frame_shift().to_le_bytes());
            out.extend_from_slice(&(m.num_frames() as u32).to_le_bytes());
            out.extend_from_slice(&(m.dim() as u32).to_le_bytes());
            for &v in m.frames() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new("feature archive", bytes);
        r.header(MAGIC, VERSION)?;
        let count = r.u32()?;
        let mut archive = Self::new();
        for _ in 0..count {
            let id = r.string()?;
            let tag = r.u8()?;
            let kind = FeatureKind::from_tag(tag)
                .ok_or_else(|| Error::malformed("feature archive", format!("unknown kind tag {tag} for {id}")))?;
            let shift = r.f64()?;
            let t = r.u32()? as usize;
            let d = r.u32()? as usize;
            let n = t.checked_mul(d).ok_or_else(|| Error::malformed("feature archive", "size overflow"))?;
            // bound the allocation by the file size
            if n.saturating_mul(4) > bytes.len() {
                return Err(Error::malformed("feature archive", format!("truncated: {id} claims {t}x{d} frames")));
            }
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(r.f32()? as f64);
            }
            let frames = Array2::from_shape_vec((t, d), data).expect("length t*d");
            let m = FeatureMatrix::new(id.clone(), kind, shift, frames)
                .map_err(|e| Error::malformed("feature archive", format!("{id}: {e}")))?;
            if archive.insert(m).is_some() {
                return Err(Error::malformed("feature archive", format!("duplicate id {id}")));
            }
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
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl FromIterator<FeatureMatrix> for FeatureArchive {
    fn from_iter<I: IntoIterator<Item = FeatureMatrix>>(iter: I) -> Self {
        let mut a = Self::new();
        for m in iter {
            a.insert(m);
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> FeatureArchive {
        [
            FeatureMatrix::new("spk1/w1", FeatureKind::Filterbank, 0.01, Array2::from_elem((3, 2), 0.25)).unwrap(),
            FeatureMatrix::new("spk2/w1", FeatureKind::Lpr, 0.01, Array2::from_elem((1, 4), -3.5)).unwrap(),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes[8], 1);
        assert_eq!(u32::from_le_bytes(bytes[9..13].try_into().unwrap()), 2);
    }

    #[test]
    fn truncation_is_parse_error() {
        let bytes = sample().to_bytes();
        for cut in [0, 5, 12, 20, bytes.len() - 1] {
            assert!(matches!(
                FeatureArchive::from_bytes(&bytes[..cut]),
                Err(Error::Malformed { .. })
            ));
        }
    }

    #[test]
    fn bad_magic() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        assert!(FeatureArchive::from_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_f32_exact(vals in proptest::collection::vec(-1e4f64..1e4, 1..40), d in 1usize..5) {
            let t = vals.len().div_ceil(d);
            let mut v = vals.clone();
            v.resize(t * d, 0.0);
            let m = FeatureMatrix::new("u", FeatureKind::Mfcc, 0.01, Array2::from_shape_vec((t, d), v.clone()).unwrap()).unwrap();
            let a: FeatureArchive = std::iter::once(m).collect();
            let bytes = a.to_bytes();
            let back = FeatureArchive::from_bytes(&bytes).unwrap();
            let got = back.get("u").unwrap();
            for (x, y) in got.frames().iter().zip(&v) {
                prop_assert_eq!(*x, *y as f32 as f64);
            }
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
