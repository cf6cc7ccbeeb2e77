//! Artifact file formats: binary matrices, CSV and JSON helpers.
//!
//! The binary matrix format is the exchange format between pipeline stages:
//! an 8-byte magic, row and column counts as little-endian u64, then
//! row-major little-endian f32 values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 8] = b"EMBMAT01";

pub fn write_matrix(path: &Path, matrix: &Array2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&(matrix.nrows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.ncols() as u64).to_le_bytes())?;
    for &v in matrix.iter() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<Array2<f64>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::MatrixFormat(format!(
            "bad magic in {}: expected {:?}",
            path.display(),
            MATRIX_MAGIC
        )));
    }
    let mut buf8 = [0u8; 8];
    r.read_exact(&mut buf8)?;
    let rows = u64::from_le_bytes(buf8) as usize;
    r.read_exact(&mut buf8)?;
    let cols = u64::from_le_bytes(buf8) as usize;
    let mut values = Vec::with_capacity(rows * cols);
    let mut buf4 = [0u8; 4];
    for _ in 0..rows * cols {
        r.read_exact(&mut buf4)?;
        values.push(f32::from_le_bytes(buf4) as f64);
    }
    Array2::from_shape_vec((rows, cols), values)
        .map_err(|e| Error::MatrixFormat(format!("shape error in {}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let r = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(r)?)
}

/// Writes a matrix as CSV with an optional header row. Values use Rust's
/// shortest-roundtrip float formatting, which is stable across runs.
pub fn write_matrix_csv(path: &Path, matrix: &Array2<f64>, header: Option<&[String]>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(cols) = header {
        writeln!(w, "{}", cols.join(","))?;
    }
    for row in matrix.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_roundtrip_f32_precision() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = array![[1.0, 2.5, -3.75], [0.0, 1e-3, 4096.0]];
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(back.dim(), (2, 3));
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn matrix_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, b"NOTMAGIC\x00\x00\x00\x00\x00\x00\x00\x00").unwrap();
        assert!(matches!(read_matrix(&path), Err(Error::MatrixFormat(_))));
    }
}
