//! Binary matrix files: an 8-byte magic, `u64` rows, `u64` cols, `f64`
//! wavelength (0 when not applicable), then the entries row-major as
//! little-endian `(re, im)` pairs of `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

pub const MAGIC: [u8; 8] = *b"NFMATRX1";

pub fn write_matrix<W: Write>(mut w: W, m: &CMat, wavelength: f64) -> Result<()> {
    w.write_all(&MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    w.write_all(&wavelength.to_le_bytes())?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            let v = m[(r, c)];
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Returns the matrix and the stored wavelength.
pub fn read_matrix<R: Read>(mut r: R) -> Result<(CMat, f64)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::InvalidArgument("not a matrix file (bad magic)".into()));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    let wavelength = f64::from_bits(read_u64(&mut r)?);
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::InvalidArgument("matrix dimensions overflow".into()))?;
    let mut data = vec![Complex64::new(0.0, 0.0); len];
    for v in data.iter_mut() {
        let re = f64::from_bits(read_u64(&mut r)?);
        let im = f64::from_bits(read_u64(&mut r)?);
        *v = Complex64::new(re, im);
    }
    Ok((CMat::from_row_slice(rows, cols, &data), wavelength))
}

pub fn save_matrix(path: &Path, m: &CMat, wavelength: f64) -> Result<()> {
    write_matrix(BufWriter::new(File::create(path)?), m, wavelength)
}

pub fn load_matrix(path: &Path) -> Result<(CMat, f64)> {
    read_matrix(BufReader::new(File::open(path)?))
}
