//! The VGAM binary matrix format.
//!
//! ```text
//! b"VGAM" | version: u8 = 1 | rows: u64 LE | cols: u64 LE | rows*cols f64 LE, row-major
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, VgaError};

pub const MAGIC: &[u8; 4] = b"VGAM";
pub const VERSION: u8 = 1;

pub fn write_vgam<W: Write>(mut w: W, m: &DMatrix<f64>) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(m.len() * 8);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_vgam<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(VgaError::Format("bad magic, expected VGAM".into()));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(VgaError::Format(format!(
            "unsupported version {}",
            version[0]
        )));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| VgaError::Format("dimensions overflow".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != len * 8 {
        return Err(VgaError::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            len * 8
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    Ok(DMatrix::from_row_iterator(rows, cols, values))
}

pub fn save(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_vgam(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let f = std::fs::File::open(path)?;
    read_vgam(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = DMatrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0) - 1e-300);
        let mut buf = Vec::new();
        write_vgam(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 4 + 1 + 16 + 6 * 8);
        assert_eq!(&buf[..4], b"VGAM");
        assert_eq!(buf[4], 1);
        assert_eq!(u64::from_le_bytes(buf[5..13].try_into().unwrap()), 3);
        // Row-major: the second value is entry (0, 1).
        assert_eq!(
            f64::from_le_bytes(buf[29..37].try_into().unwrap()),
            m[(0, 1)]
        );
        let back = read_vgam(&buf[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_headers() {
        assert!(read_vgam(&b"NOPE\x01"[..]).is_err());
        let mut buf = Vec::new();
        write_vgam(&mut buf, &DMatrix::zeros(1, 1)).unwrap();
        buf[4] = 2;
        assert!(read_vgam(&buf[..]).is_err());
        buf[4] = 1;
        buf.pop();
        assert!(read_vgam(&buf[..]).is_err());
    }
}
