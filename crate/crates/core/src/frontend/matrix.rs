//! Flat little-endian matrix container shared by feature and distance dumps.
//!
//! Layout: `b"AUFM"`, rows `u32`, cols `u32`, frame_shift `f64`, frame_len `f64`,
//! then `rows * cols` row-major `f64` values.

use std::io::{Read, Write};

use super::FrontendError;

pub const MATRIX_MAGIC: &[u8; 4] = b"AUFM";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixHeader {
    pub rows: usize,
    pub cols: usize,
    pub frame_shift: f64,
    pub frame_len: f64,
}

pub fn write_matrix<W: Write>(mut w: W, header: &MatrixHeader, data: &[f64]) -> std::io::Result<()> {
    assert_eq!(data.len(), header.rows * header.cols);
    let rows = u32::try_from(header.rows).map_err(std::io::Error::other)?;
    let cols = u32::try_from(header.cols).map_err(std::io::Error::other)?;
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    w.write_all(&header.frame_shift.to_le_bytes())?;
    w.write_all(&header.frame_len.to_le_bytes())?;
    let mut buf = Vec::with_capacity(data.len() * 8);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<(MatrixHeader, Vec<f64>), FrontendError> {
    let corrupt = |e: std::io::Error| FrontendError::CorruptFile(format!("matrix: {e}"));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if &magic != MATRIX_MAGIC {
        return Err(FrontendError::UnsupportedFormat("bad matrix magic".into()));
    }
    let mut u = [0u8; 4];
    r.read_exact(&mut u).map_err(corrupt)?;
    let rows = u32::from_le_bytes(u) as usize;
    r.read_exact(&mut u).map_err(corrupt)?;
    let cols = u32::from_le_bytes(u) as usize;
    let mut f = [0u8; 8];
    r.read_exact(&mut f).map_err(corrupt)?;
    let frame_shift = f64::from_le_bytes(f);
    r.read_exact(&mut f).map_err(corrupt)?;
    let frame_len = f64::from_le_bytes(f);

    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| FrontendError::CorruptFile("matrix size overflow".into()))?;
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(corrupt)?;
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((MatrixHeader { rows, cols, frame_shift, frame_len }, data))
}
