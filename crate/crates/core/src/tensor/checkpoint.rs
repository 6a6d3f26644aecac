//! Versioned binary checkpoint of named parameter arrays.
//!
//! Layout, all integers little-endian:
//! `magic "TCKP" | version u32 | count u32`, then per entry
//! `name_len u32 | name bytes | rows u32 | cols u32 | rows*cols f64`.
//! Entries are written in the order given, which callers keep fixed, so a
//! checkpoint of the same parameters is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::Tensor;

const MAGIC: &[u8; 4] = b"TCKP";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: not a checkpoint file (bad magic)")]
    BadMagic { path: String },
    #[error("{path}: unsupported checkpoint version {found} (expected {VERSION})")]
    BadVersion { path: String, found: u32 },
    #[error("{path}: truncated checkpoint")]
    Truncated { path: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn save_named(path: &Path, entries: &[(&str, &Tensor)]) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, tensor) in entries {
        let bytes = name.as_bytes();
        w.write_all(&(bytes.len() as u32).to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&(tensor.rows() as u32).to_le_bytes())?;
        w.write_all(&(tensor.cols() as u32).to_le_bytes())?;
        for v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_named(path: &Path) -> Result<Vec<(String, Tensor)>, CheckpointError> {
    let display = path.display().to_string();
    let mut r = BufReader::new(File::open(path)?);
    let truncated = || CheckpointError::Truncated { path: display.clone() };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| truncated())?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic { path: display });
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32, CheckpointError> {
        r.read_exact(&mut u32buf).map_err(|_| truncated())?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion { path: display, found: version });
    }
    let count = read_u32(&mut r)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(|_| truncated())?;
        let rows = read_u32(&mut r)? as usize;
        let cols = read_u32(&mut r)? as usize;
        let mut data = vec![0.0f64; rows * cols];
        let mut f64buf = [0u8; 8];
        for v in &mut data {
            r.read_exact(&mut f64buf).map_err(|_| truncated())?;
            *v = f64::from_le_bytes(f64buf);
        }
        out.push((String::from_utf8_lossy(&name).into_owned(), Tensor::from_vec(rows, cols, data)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let a = Tensor::from_vec(2, 3, vec![0.1, -2.5, 3.375, f64::MIN_POSITIVE, 1e300, -0.0]);
        let b = Tensor::scalar(42.0);
        save_named(&path, &[("w", &a), ("bias", &b)]).unwrap();
        let loaded = load_named(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[0].0, "w");
        assert_eq!(loaded[0].1, a);
        assert_eq!(loaded[1].0, "bias");
        assert_eq!(loaded[1].1, b);

        // Same content writes the same bytes.
        let path2 = dir.path().join("p2.bin");
        save_named(&path2, &[("w", &a), ("bias", &b)]).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOPEnope").unwrap();
        assert!(matches!(load_named(&path), Err(CheckpointError::BadMagic { .. })));
    }
}
