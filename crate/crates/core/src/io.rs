//! Binary matrix files and run artifacts.
//!
//! A matrix file is the 4-byte magic `ESDG`, then the format version, row
//! count and column count as little-endian `u32`, then the entries as
//! little-endian `f64` in column-major order.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Serialize};

use crate::error::{EsdgError, Result};
use crate::fom::Trajectory;

pub const MAGIC: &[u8; 4] = b"ESDG";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

pub fn encode_matrix(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.nrows()).map_err(|_| EsdgError::Format("too many rows for a matrix file".into()))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| EsdgError::Format("too many columns for a matrix file".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(EsdgError::Format("not an ESDG matrix file".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4-byte slice"));
    let version = word(1);
    if version != FORMAT_VERSION {
        return Err(EsdgError::Format(format!("unsupported matrix file version {version}")));
    }
    let (rows, cols) = (word(2) as usize, word(3) as usize);
    let expected = HEADER_LEN + 8 * rows * cols;
    if bytes.len() != expected {
        return Err(EsdgError::Format(format!(
            "{rows}x{cols} matrix needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect::<Vec<_>>();
    Ok(DMatrix::from_vec(rows, cols, data))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    fs::write(path, encode_matrix(m)?)?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    decode_matrix(&fs::read(path)?)
}

/// Human-readable twin of a matrix file, one matrix row per line.
pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a CSV with a header row; every row must match the header length.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for row in rows {
        w.write_record(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> EsdgError {
    EsdgError::Format(format!("csv: {e}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| EsdgError::Format(format!("json: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| EsdgError::Format(format!("{}: {e}", path.display())))
}

#[derive(Serialize, serde::Deserialize)]
struct TrajectoryMeta {
    times: Vec<f64>,
    stats: crate::timestepping::StepStats,
    wall_seconds: f64,
}

/// Stores frames as `<stem>.esdg` (one column per frame) and metadata as `<stem>.json`.
pub fn save_trajectory(dir: &Path, stem: &str, traj: &Trajectory) -> Result<()> {
    let len = traj.states.first().map_or(0, Vec::len);
    let mut m = DMatrix::zeros(len, traj.states.len());
    for (k, s) in traj.states.iter().enumerate() {
        m.column_mut(k).copy_from_slice(s);
    }
    write_matrix(&dir.join(format!("{stem}.esdg")), &m)?;
    write_json(
        &dir.join(format!("{stem}.json")),
        &TrajectoryMeta {
            times: traj.times.clone(),
            stats: traj.stats,
            wall_seconds: traj.wall_seconds,
        },
    )
}

pub fn load_trajectory(dir: &Path, stem: &str) -> Result<Trajectory> {
    let m = read_matrix(&dir.join(format!("{stem}.esdg")))?;
    let meta: TrajectoryMeta = read_json(&dir.join(format!("{stem}.json")))?;
    if meta.times.len() != m.ncols() {
        return Err(EsdgError::Format(format!(
            "{stem}: {} frame times for {} stored frames",
            meta.times.len(),
            m.ncols()
        )));
    }
    Ok(Trajectory {
        times: meta.times,
        states: m.column_iter().map(|c| c.iter().copied().collect()).collect(),
        stats: meta.stats,
        wall_seconds: meta.wall_seconds,
    })
}
