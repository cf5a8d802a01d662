//! Named dense matrices in a small little-endian binary container, with a
//! JSON manifest written next to every file.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::jsonl::write_atomic;

const MAGIC: &[u8; 4] = b"RPMX";

pub type NamedMatrix = (String, Array2<f64>);

#[derive(Debug, thiserror::Error)]
pub enum MatrixIoError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("{0}: not a matrix file")]
    BadMagic(PathBuf),
    #[error("{0}: truncated")]
    Truncated(PathBuf),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

pub fn encode_matrices(entries: &[NamedMatrix]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (name, m) in entries {
        out.extend_from_slice(&(name.len() as u64).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
        out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
        for x in m.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Option<&'a [u8]> {
    if buf.len() < n {
        return None;
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Some(head)
}

fn take_u64(buf: &mut &[u8]) -> Option<u64> {
    take(buf, 8).map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
}

pub fn decode_matrices(bytes: &[u8]) -> Option<Vec<NamedMatrix>> {
    let mut buf = bytes;
    if take(&mut buf, 4)? != MAGIC {
        return None;
    }
    let count = take_u64(&mut buf)? as usize;
    let mut out = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = take_u64(&mut buf)? as usize;
        let name = String::from_utf8(take(&mut buf, len)?.to_vec()).ok()?;
        let rows = take_u64(&mut buf)? as usize;
        let cols = take_u64(&mut buf)? as usize;
        let raw = take(&mut buf, rows.checked_mul(cols)?.checked_mul(8)?)?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        out.push((name, Array2::from_shape_vec((rows, cols), data).ok()?));
    }
    buf.is_empty().then_some(out)
}

pub fn write_matrices(path: &Path, entries: &[NamedMatrix]) -> io::Result<()> {
    write_atomic(path, &encode_matrices(entries))
}

pub fn read_matrices(path: &Path) -> Result<Vec<NamedMatrix>, MatrixIoError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(MatrixIoError::BadMagic(path.to_path_buf()));
    }
    decode_matrices(&bytes).ok_or_else(|| MatrixIoError::Truncated(path.to_path_buf()))
}

/// Where the manifest of `path` lives.
pub fn manifest_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

pub fn write_manifest<T: Serialize>(path: &Path, manifest: &T) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.write_all(b"\n")?;
    write_atomic(&manifest_path(path), &bytes)
}

pub fn read_manifest<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, MatrixIoError> {
    let bytes = std::fs::read(manifest_path(path))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round_trip_bits() {
        let entries = vec![
            ("a".to_string(), array![[1.0, -0.0], [f64::MIN_POSITIVE, 1e300]]),
            ("empty".to_string(), Array2::zeros((0, 3))),
        ];
        let back = decode_matrices(&encode_matrices(&entries)).unwrap();
        assert_eq!(back.len(), 2);
        for ((n1, m1), (n2, m2)) in entries.iter().zip(&back) {
            assert_eq!(n1, n2);
            assert_eq!(m1.dim(), m2.dim());
            assert!(m1.iter().zip(m2.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn truncated_rejected() {
        let bytes = encode_matrices(&[("x".into(), array![[1.0, 2.0]])]);
        assert!(decode_matrices(&bytes[..bytes.len() - 1]).is_none());
        assert!(decode_matrices(b"NOPE").is_none());
    }

    #[test]
    fn file_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.rpmx");
        write_matrices(&p, &[("w".into(), array![[3.0]])]).unwrap();
        write_manifest(&p, &serde_json::json!({"stage": "t"})).unwrap();
        assert_eq!(read_matrices(&p).unwrap()[0].1, array![[3.0]]);
        let m: serde_json::Value = read_manifest(&p).unwrap();
        assert_eq!(m["stage"], "t");
        assert!(dir.path().join("m.rpmx.manifest.json").exists());
    }
}
