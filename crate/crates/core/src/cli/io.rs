//! Binary field files and plot-ready CSV tables.
//!
//! Field format: magic `FVFD`, u32 LE `d`, u32 LE `N`, then `N` nodal values
//! as f64 LE in grid order.

use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};

const FIELD_MAGIC: &[u8; 4] = b"FVFD";
const HEADER_LEN: usize = 12;

pub fn encode_field(field: &Field) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * field.len());
    buf.extend_from_slice(FIELD_MAGIC);
    buf.extend_from_slice(&(field.grid().dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(field.len() as u32).to_le_bytes());
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

/// Decode against `grid`, checking magic, dimension and node count.
pub fn decode_field(bytes: &[u8], grid: &Arc<Grid>) -> Result<Field> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "header truncated ({} bytes)",
            bytes.len()
        )));
    }
    if &bytes[..4] != FIELD_MAGIC {
        return Err(Error::Format("missing FVFD magic".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("four bytes"));
    let (dim, nodes) = (word(4), word(8));
    if dim as usize != grid.dim() {
        return Err(Error::DimensionMismatch {
            file: dim,
            grid: grid.dim() as u32,
        });
    }
    if nodes as usize != grid.len() {
        return Err(Error::Format(format!(
            "file has {nodes} nodes, grid has {}",
            grid.len()
        )));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != 8 * grid.len() {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {}",
            payload.len(),
            8 * grid.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Field::from_values(grid, values)
}

pub fn write_field(path: impl AsRef<Path>, field: &Field) -> Result<()> {
    std::fs::write(path, encode_field(field))?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>, grid: &Arc<Grid>) -> Result<Field> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_field(&bytes, grid)
}

/// Shortest round-trip representation in scientific notation.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

/// `x,value` or `x,y,value`, one row per node.
pub fn field_csv(field: &Field) -> String {
    let grid = field.grid();
    let mut out = String::from(if grid.dim() == 1 {
        "x,value\n"
    } else {
        "x,y,value\n"
    });
    for (i, v) in field.values().iter().enumerate() {
        let c = grid.coord(i);
        for x in &c[..grid.dim()] {
            out.push_str(&num(*x));
            out.push(',');
        }
        let _ = writeln!(out, "{}", num(*v));
    }
    out
}

/// Header plus rows, cells already formatted.
pub fn table_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
