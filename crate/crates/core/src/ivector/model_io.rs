//! i-vector model container.
//!
//! ```text
//! magic     8 bytes  "SSDIVEC\0"
//! version   u8       1
//! C, D, R   u32 x 3  (R = 0 for a UBM without a trained T)
//! weights   C f64
//! means     C*D f64, component-major
//! variances C*D f64
//! m         C*D f64   } present only when R > 0
//! T         C*D*R f64 } row-major
//! sigma     C*D f64   }
//! ```
//!
//! Little-endian throughout.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{DiagGmm, TotalVariability};
use crate::error::{Error, Result};
use crate::frontend::archive::Reader;

const MAGIC: &[u8; 8] = b"SSDIVEC\0";
const VERSION: u8 = 1;

fn put_all<'a>(out: &mut Vec<u8>, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) fn to_bytes(ubm: &DiagGmm, tv: Option<&TotalVariability>) -> Vec<u8> {
    let (c, d) = (ubm.num_components(), ubm.dim());
    let r = tv.map_or(0, |t| t.rank());
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for v in [c, d, r] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    put_all(&mut out, ubm.weights());
    put_all(&mut out, ubm.means());
    put_all(&mut out, ubm.variances());
    if let Some(tv) = tv {
        put_all(&mut out, tv.mean_supervector());
        put_all(&mut out, tv.t_matrix());
        put_all(&mut out, tv.sigma());
    }
    out
}

pub(crate) fn from_bytes(bytes: &[u8]) -> Result<(DiagGmm, Option<TotalVariability>)> {
    const WHAT: &str = "ivector model";
    let mut r = Reader::new(WHAT, bytes);
    r.header(MAGIC, VERSION)?;
    let (c, d, rank) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let cd = c.checked_mul(d).ok_or_else(|| Error::malformed(WHAT, "dimensions overflow"))?;
    let extra = if rank > 0 { rank.saturating_add(2) } else { 0 };
    let needed = cd.saturating_mul(2usize.saturating_add(extra)).saturating_add(c).saturating_mul(8);
    if needed > bytes.len() {
        return Err(Error::malformed(WHAT, format!("header promises {needed} bytes, file has {}", bytes.len())));
    }
    let mut read = |n: usize| -> Result<Vec<f64>> { (0..n).map(|_| r.f64()).collect() };
    let weights = Array1::from(read(c)?);
    let means = Array2::from_shape_vec((c, d), read(cd)?).expect("sized");
    let variances = Array2::from_shape_vec((c, d), read(cd)?).expect("sized");
    let ubm = DiagGmm::new(weights, means, variances).map_err(|e| Error::malformed(WHAT, e.to_string()))?;
    let tv = if rank > 0 {
        let m = Array1::from(read(cd)?);
        let t = Array2::from_shape_vec((cd, rank), read(cd * rank)?).expect("sized");
        let sigma = Array1::from(read(cd)?);
        Some(TotalVariability::new(c, d, m, t, sigma).map_err(|e| Error::malformed(WHAT, e.to_string()))?)
    } else {
        None
    };
    r.finish()?;
    Ok((ubm, tv))
}

/// Writes a UBM and, optionally, its total-variability matrix.
pub fn write_model(path: impl AsRef<Path>, ubm: &DiagGmm, tv: Option<&TotalVariability>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_bytes(ubm, tv)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<(DiagGmm, Option<TotalVariability>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn roundtrip_with_and_without_tv() {
        let ubm = DiagGmm::new(array![0.25, 0.75], array![[0.0, 1.5], [-2.0, 3.0]], array![[1.0, 2.0], [0.5, 0.1]]).unwrap();
        let t = Array2::from_shape_fn((4, 3), |(i, j)| (i * 3 + j) as f64 * 0.1 - 0.4);
        let tv = TotalVariability::from_ubm(&ubm, t).unwrap();
        let (u, v) = from_bytes(&to_bytes(&ubm, Some(&tv))).unwrap();
        assert_eq!(u, ubm);
        assert_eq!(v.unwrap(), tv);
        let (u, v) = from_bytes(&to_bytes(&ubm, None)).unwrap();
        assert_eq!(u, ubm);
        assert!(v.is_none());
        let bytes = to_bytes(&ubm, Some(&tv));
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes.len(), 8 + 1 + 12 + 8 * (2 + 4 + 4 + 4 + 12 + 4));
        assert!(matches!(from_bytes(&bytes[..bytes.len() - 3]), Err(Error::Malformed { .. })));
    }
}
