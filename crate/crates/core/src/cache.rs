//! Binary cache for resolvent tables and covariance factors.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "VLTRTBL\0"
//! version    u32      FORMAT_VERSION
//! kind       u32      1 = resolvent table, 2 = covariance
//! rho        f64
//! t_end      f64
//! steps      u64      M
//! rows       u64      number of modes (table) or 1 (covariance)
//! key        32 bytes SHA-256 of the eigenvalue data
//! payload    f64 ...
//! ```
//!
//! See docs/cache-format.md for the payloads.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::KernelSpec;
use crate::noise::ConvCovariance;
use crate::resolvent::{ResolventTable, TimeGrid};

pub const MAGIC: &[u8; 8] = b"VLTRTBL\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u32)]
pub enum CacheKind {
    Table = 1,
    Covariance = 2,
}

#[derive(Clone, Debug, PartialEq)]
struct Header {
    kind: u32,
    rho: f64,
    t_end: f64,
    steps: u64,
    rows: u64,
    key: [u8; 32],
}

/// SHA-256 over the little-endian bytes of the values.
pub fn hash_values(values: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// File name for a cached object: kind, ρ, T, M and the key prefix.
pub fn cache_file_name(kind: CacheKind, rho: f64, grid: &TimeGrid, key: &[u8; 32]) -> String {
    let tag = match kind {
        CacheKind::Table => "table",
        CacheKind::Covariance => "cov",
    };
    format!(
        "{tag}-{:016x}-{:016x}-{}-{}.bin",
        rho.to_bits(),
        grid.t_end().to_bits(),
        grid.steps(),
        &hex(key)[..16]
    )
}

fn write_header<W: Write>(w: &mut W, h: &Header) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&h.kind.to_le_bytes())?;
    w.write_all(&h.rho.to_le_bytes())?;
    w.write_all(&h.t_end.to_le_bytes())?;
    w.write_all(&h.steps.to_le_bytes())?;
    w.write_all(&h.rows.to_le_bytes())?;
    w.write_all(&h.key)?;
    Ok(())
}

fn read_exact<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Cache(format!("truncated file: {e}")))?;
    Ok(buf)
}

fn read_header<R: Read>(r: &mut R) -> Result<Header> {
    if &read_exact::<8, _>(r)? != MAGIC {
        return Err(Error::Cache("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_exact(r)?);
    if version != FORMAT_VERSION {
        return Err(Error::Cache(format!("format version {version}, expected {FORMAT_VERSION}")));
    }
    Ok(Header {
        kind: u32::from_le_bytes(read_exact(r)?),
        rho: f64::from_le_bytes(read_exact(r)?),
        t_end: f64::from_le_bytes(read_exact(r)?),
        steps: u64::from_le_bytes(read_exact(r)?),
        rows: u64::from_le_bytes(read_exact(r)?),
        key: read_exact(r)?,
    })
}

fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Cache(format!("truncated payload: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn check_header(h: &Header, expect: &Header) -> Result<()> {
    if h != expect {
        return Err(Error::Cache(format!(
            "header mismatch: file has kind {} rho {} T {} M {} rows {}, expected kind {} rho {} T {} M {} rows {}",
            h.kind, h.rho, h.t_end, h.steps, h.rows, expect.kind, expect.rho, expect.t_end, expect.steps, expect.rows
        )));
    }
    Ok(())
}

fn table_header(rho: f64, grid: &TimeGrid, lambdas: &[f64]) -> Header {
    Header {
        kind: CacheKind::Table as u32,
        rho,
        t_end: grid.t_end(),
        steps: grid.steps() as u64,
        rows: lambdas.len() as u64,
        key: hash_values(lambdas),
    }
}

fn covariance_header(rho: f64, grid: &TimeGrid, lambda: f64, mu: f64) -> Header {
    Header {
        kind: CacheKind::Covariance as u32,
        rho,
        t_end: grid.t_end(),
        steps: grid.steps() as u64,
        rows: 1,
        key: hash_values(&[lambda, mu]),
    }
}

/// Payload: lambdas, then the N rows of s, then the N rows of w.
pub fn write_table<W: Write>(w: &mut W, table: &ResolventTable) -> Result<()> {
    write_header(w, &table_header(table.rho(), table.grid(), table.lambdas()))?;
    write_f64s(w, table.lambdas())?;
    for k in 0..table.modes() {
        write_f64s(w, table.s(k))?;
    }
    for k in 0..table.modes() {
        write_f64s(w, table.w(k))?;
    }
    Ok(())
}

/// Reads a table and checks it was built for (ρ, grid, lambdas).
pub fn read_table<R: Read>(r: &mut R, rho: f64, grid: &TimeGrid, lambdas: &[f64]) -> Result<ResolventTable> {
    check_header(&read_header(r)?, &table_header(rho, grid, lambdas))?;
    let n = lambdas.len();
    let len = grid.steps() + 1;
    let stored = read_f64s(r, n)?;
    if stored.iter().zip(lambdas).any(|(a, b)| a.to_bits() != b.to_bits()) {
        return Err(Error::Cache("eigenvalues differ from the key".into()));
    }
    let s = (0..n).map(|_| read_f64s(r, len)).collect::<Result<_>>()?;
    let w = (0..n).map(|_| read_f64s(r, len)).collect::<Result<_>>()?;
    ResolventTable::from_parts(*grid, rho, stored, s, w)
}

/// Payload: lambda, mu, clamp, sub-panel count, packed matrix, packed factor.
pub fn write_covariance<W: Write>(w: &mut W, cov: &ConvCovariance) -> Result<()> {
    write_header(w, &covariance_header(cov.rho(), cov.grid(), cov.lambda(), cov.mu()))?;
    write_f64s(w, &[cov.lambda(), cov.mu(), cov.clamp(), cov.subpanels() as f64])?;
    write_f64s(w, cov.packed())?;
    write_f64s(w, &cov.packed_factor())?;
    Ok(())
}

pub fn read_covariance<R: Read>(r: &mut R, rho: f64, grid: &TimeGrid, lambda: f64, mu: f64) -> Result<ConvCovariance> {
    check_header(&read_header(r)?, &covariance_header(rho, grid, lambda, mu))?;
    let head = read_f64s(r, 4)?;
    let m = grid.steps();
    let len = m * (m + 1) / 2;
    let matrix = read_f64s(r, len)?;
    let chol = read_f64s(r, len)?;
    ConvCovariance::from_parts(head[0], head[1], rho, grid, matrix, &chol, head[2], head[3] as usize)
}

/// A directory of cached objects.
#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn new<P: AsRef<Path>>(dir: P) -> Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Cache {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Load the table if present, otherwise build and store it.
    pub fn table<F>(&self, kernel: &KernelSpec, grid: &TimeGrid, lambdas: &[f64], build: F) -> Result<ResolventTable>
    where
        F: FnOnce() -> Result<ResolventTable>,
    {
        let key = hash_values(lambdas);
        let path = self.dir.join(cache_file_name(CacheKind::Table, kernel.rho(), grid, &key));
        if path.exists() {
            let mut r = BufReader::new(File::open(&path)?);
            return read_table(&mut r, kernel.rho(), grid, lambdas);
        }
        let table = build()?;
        self.store(&path, |w| write_table(w, &table))?;
        Ok(table)
    }

    pub fn covariance<F>(&self, kernel: &KernelSpec, grid: &TimeGrid, lambda: f64, mu: f64, build: F) -> Result<ConvCovariance>
    where
        F: FnOnce() -> Result<ConvCovariance>,
    {
        let key = hash_values(&[lambda, mu]);
        let path = self.dir.join(cache_file_name(CacheKind::Covariance, kernel.rho(), grid, &key));
        if path.exists() {
            let mut r = BufReader::new(File::open(&path)?);
            return read_covariance(&mut r, kernel.rho(), grid, lambda, mu);
        }
        let cov = build()?;
        self.store(&path, |w| write_covariance(w, &cov))?;
        Ok(cov)
    }

    // Write to a temporary name and rename, so readers never see a partial file.
    fn store<F>(&self, path: &Path, write: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            write(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Spectrum;
    use crate::resolvent::build_resolvent_table;

    #[test]
    fn table_round_trip() {
        let k = KernelSpec::new(1.5).unwrap();
        let g = TimeGrid::new(1.0, 16).unwrap();
        let sp = Spectrum::new(vec![1.0, 50.0], None).unwrap();
        let t = build_resolvent_table(&sp, &k, &g).unwrap();
        let mut buf = Vec::new();
        write_table(&mut buf, &t).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_table(&mut buf.as_slice(), 1.5, &g, sp.lambdas()).unwrap();
        assert_eq!(back, t);
        assert!(matches!(
            read_table(&mut buf.as_slice(), 1.25, &g, sp.lambdas()),
            Err(Error::Cache(_))
        ));
        let mut bad = buf.clone();
        bad[8] = 9;
        assert!(read_table(&mut bad.as_slice(), 1.5, &g, sp.lambdas()).is_err());
        assert!(read_table(&mut &buf[..100], 1.5, &g, sp.lambdas()).is_err());
    }

    #[test]
    fn covariance_round_trip() {
        let k = KernelSpec::new(1.2).unwrap();
        let g = TimeGrid::new(1.0, 8).unwrap();
        let cov = ConvCovariance::new(40.0, 0.5, &k, &g, 1e-10).unwrap();
        let mut buf = Vec::new();
        write_covariance(&mut buf, &cov).unwrap();
        let back = read_covariance(&mut buf.as_slice(), 1.2, &g, 40.0, 0.5).unwrap();
        assert_eq!(back.packed(), cov.packed());
        assert_eq!(back.packed_factor(), cov.packed_factor());
        assert_eq!(back.clamp(), cov.clamp());
    }
}
