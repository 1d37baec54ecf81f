//! Snapshots, CSV tables and run manifests.
//!
//! Snapshot layout (all integers and floats little-endian):
//!
//! | offset | size | content                         |
//! |--------|------|---------------------------------|
//! | 0      | 4    | magic `HVPF`                    |
//! | 4      | 2    | format version (`u16`, 1)       |
//! | 6      | 4    | `nx` (`u32`)                    |
//! | 10     | 4    | `ny` (`u32`)                    |
//! | 14     | 4    | component count (`u32`, 4)      |
//! | 18     | 6    | reserved, zero                  |
//! | 24     | ...  | `v1`, `v2`, `h`, `a` as `f64`, each row-major (`p = j nx + i`) |
//!
//! A manifest is a flat text file of `key=value` lines in insertion order.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fields::{Grid, StateField};

pub const MAGIC: &[u8; 4] = b"HVPF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 24;
const COMPONENTS: u32 = 4;

fn invalid(msg: impl Into<String>) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into()))
}

pub fn encode_snapshot(grid: &Grid, u: &StateField) -> Result<Vec<u8>> {
    u.check_shape(grid)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 32 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.nx as u32).to_le_bytes());
    out.extend_from_slice(&(grid.ny as u32).to_le_bytes());
    out.extend_from_slice(&COMPONENTS.to_le_bytes());
    out.extend_from_slice(&[0u8; 6]);
    for c in 0..2 {
        for v in &u.v {
            out.extend_from_slice(&v[c].to_le_bytes());
        }
    }
    for x in u.h.iter().chain(&u.a) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

/// Decodes a snapshot into `(nx, ny, state)`.
pub fn decode_snapshot(bytes: &[u8]) -> Result<(usize, usize, StateField)> {
    if bytes.len() < HEADER_LEN || &bytes[0..4] != MAGIC {
        return Err(invalid("not a snapshot file (bad magic)"));
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    let version = u16_at(4);
    if version != VERSION {
        return Err(invalid(format!("unsupported snapshot version {version}")));
    }
    let (nx, ny, nc) = (u32_at(6) as usize, u32_at(10) as usize, u32_at(14));
    if nc != COMPONENTS {
        return Err(invalid(format!("expected {COMPONENTS} components, found {nc}")));
    }
    let n = nx * ny;
    if bytes.len() != HEADER_LEN + 8 * 4 * n {
        return Err(invalid(format!("payload of {} bytes does not match {nx}x{ny}", bytes.len() - HEADER_LEN)));
    }
    let f = |k: usize| {
        let o = HEADER_LEN + 8 * k;
        f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"))
    };
    let mut u = StateField::zeros(n);
    for p in 0..n {
        u.v[p] = [f(p), f(n + p)];
        u.h[p] = f(2 * n + p);
        u.a[p] = f(3 * n + p);
    }
    Ok((nx, ny, u))
}

pub fn write_snapshot(path: &Path, grid: &Grid, u: &StateField) -> Result<()> {
    fs::write(path, encode_snapshot(grid, u)?)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<(usize, usize, StateField)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_snapshot(&bytes)
}

/// Writes serializable rows with a header line.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Ordered `key=value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        let v = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = v,
            None => self.entries.push((key.to_string(), v)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Self {
        let entries = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        Self { entries }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = BufWriter::new(File::create(path)?);
        f.write_all(self.render().as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

/// Hex SHA-256 of the given parts, separated by NUL bytes.
pub fn config_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip() {
        let g = Grid::new(5, 4, 1.0, 2.0).unwrap();
        let u = StateField::from_fn(&g, |x| ([x[0], -x[1]], 1.0 + x[0] * x[1], 0.5 - 0.1 * x[0]));
        let bytes = encode_snapshot(&g, &u).unwrap();
        assert_eq!(bytes.len(), 24 + 4 * 8 * 20);
        assert_eq!(&bytes[0..4], b"HVPF");
        assert_eq!(&bytes[18..24], &[0u8; 6]);
        let (nx, ny, back) = decode_snapshot(&bytes).unwrap();
        assert_eq!((nx, ny), (5, 4));
        assert_eq!(back, u);
    }

    #[test]
    fn corrupt_snapshots_are_rejected() {
        let g = Grid::unit(4).unwrap();
        let mut b = encode_snapshot(&g, &StateField::zeros(16)).unwrap();
        assert!(decode_snapshot(&b[..30]).is_err());
        b[0] = b'X';
        assert!(decode_snapshot(&b).is_err());
    }

    #[test]
    fn manifest_round_trip_and_hash() {
        let mut m = Manifest::new();
        m.set("omega", 2.0).set("termination", "converged").set("omega", 4.0);
        assert_eq!(m.render(), "omega=4\ntermination=converged\n");
        assert_eq!(Manifest::parse(&m.render()), m);
        assert_eq!(config_hash(&[b"a", b"b"]), config_hash(&[b"a", b"b"]));
        assert_ne!(config_hash(&[b"ab"]), config_hash(&[b"a", b"b"]));
    }
}
