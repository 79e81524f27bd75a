//! Grid persistence: raw little-endian `(re, im)` pairs plus a JSON sidecar,
//! and CSV slices for quick inspection.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, WeylError};
use crate::phase::grid::{Grid, GridFunction, GridKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dims: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub kind: GridKind,
    pub time: f64,
    /// Extra metadata, e.g. the second grid of a kernel table.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

pub fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

pub fn encode_values(values: &[Complex64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 16);
    for v in values {
        out.extend_from_slice(&v.re.to_le_bytes());
        out.extend_from_slice(&v.im.to_le_bytes());
    }
    out
}

pub fn decode_values(bytes: &[u8]) -> Result<Vec<Complex64>> {
    if bytes.len() % 16 != 0 {
        return Err(WeylError::InvalidInput(format!(
            "binary grid length {} is not a multiple of 16",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect())
}

/// Writes `<path>` (binary) and `<path>.json` with the same stem.
pub fn write_grid(f: &GridFunction, path: &Path, extra: serde_json::Value) -> Result<()> {
    File::create(path)?.write_all(&encode_values(&f.values))?;
    let meta = Sidecar {
        dims: f.grid.dims.clone(),
        lo: f.grid.lo.clone(),
        hi: f.grid.hi.clone(),
        kind: f.kind,
        time: f.time,
        extra,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<GridFunction> {
    let meta: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let values = decode_values(&bytes)?;
    let grid = Grid::new(meta.dims, meta.lo, meta.hi)?;
    let mut f = GridFunction::new(grid, values, meta.kind)?;
    f.time = meta.time;
    Ok(f)
}

/// 1-D slice along `axis` through the node `fixed` (other coordinates).
pub fn write_csv_line(f: &GridFunction, axis: usize, fixed: &[usize], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "coord,re,im")?;
    let mut idx = fixed.to_vec();
    for i in 0..f.grid.dims[axis] {
        idx[axis] = i;
        let v = f.values[f.grid.ravel(&idx)];
        writeln!(w, "{:.17e},{:.17e},{:.17e}", f.grid.coord(axis, i), v.re, v.im)?;
    }
    Ok(())
}

/// 2-D slice over axes `(a, b)` with the remaining indices taken from `fixed`.
pub fn write_csv_plane(
    f: &GridFunction,
    a: usize,
    b: usize,
    fixed: &[usize],
    path: &Path,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "x{a},x{b},re,im")?;
    let mut idx = fixed.to_vec();
    for i in 0..f.grid.dims[a] {
        for j in 0..f.grid.dims[b] {
            idx[a] = i;
            idx[b] = j;
            let v = f.values[f.grid.ravel(&idx)];
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                f.grid.coord(a, i),
                f.grid.coord(b, j),
                v.re,
                v.im
            )?;
        }
    }
    Ok(())
}

/// Index of the node nearest the origin on each axis.
pub fn centre_index(grid: &Grid) -> Vec<usize> {
    grid.dims.iter().map(|d| d / 2).collect()
}
