//! Versioned binary checkpoints of a solve in progress.
//!
//! Layout: an 8-byte magic header, a format-version byte, the block
//! dimensions, the iteration counter, the six iterate matrices (column-major
//! f64, little-endian), the residual history, and the objective trace. The
//! problem data (anchors, weights, tolerances) are not stored; the caller
//! must supply the same problem when resuming.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::completion::{AdmmState, HeterogeneousMatrix, ResidualRecord};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HBPECHKP";
pub const CHECKPOINT_VERSION: u8 = 1;

pub fn save_checkpoint(path: &Path, state: &AdmmState) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[CHECKPOINT_VERSION])?;

    let j_h = state.j_h();
    let j_b = state.j_b();
    for dim in [
        j_h.label_rows(),
        j_h.feature_rows(),
        j_b.feature_rows(),
        j_h.samples(),
        state.iteration(),
        state.residuals().len(),
        state.objective_trace().len(),
    ] {
        w.write_all(&(dim as u64).to_le_bytes())?;
    }

    for m in [
        j_h.data(),
        j_b.data(),
        &state.k_h,
        &state.k_b,
        &state.m_h,
        &state.m_b,
    ] {
        write_matrix(&mut w, m)?;
    }
    for r in state.residuals() {
        for v in [r.primal_h, r.primal_b, r.dual_h, r.dual_b] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    for v in state.objective_trace() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<AdmmState> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic header in {}",
            path.display()
        )));
    }
    let mut version = [0u8; 1];
    r.read_exact(&mut version)?;
    if version[0] != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            version[0]
        )));
    }

    let classes = read_u64(&mut r)? as usize;
    let d_h = read_u64(&mut r)? as usize;
    let d_b = read_u64(&mut r)? as usize;
    let t = read_u64(&mut r)? as usize;
    let iteration = read_u64(&mut r)? as usize;
    let n_residuals = read_u64(&mut r)? as usize;
    let n_objective = read_u64(&mut r)? as usize;

    let rows_h = classes + d_h + 1;
    let rows_b = classes + d_b + 1;
    let j_h = HeterogeneousMatrix::new(read_matrix(&mut r, rows_h, t)?, classes, d_h)?;
    let j_b = HeterogeneousMatrix::new(read_matrix(&mut r, rows_b, t)?, classes, d_b)?;
    let k_h = read_matrix(&mut r, rows_h, t)?;
    let k_b = read_matrix(&mut r, rows_b, t)?;
    let m_h = read_matrix(&mut r, rows_h, t)?;
    let m_b = read_matrix(&mut r, rows_b, t)?;

    let mut residuals = Vec::with_capacity(n_residuals);
    for _ in 0..n_residuals {
        residuals.push(ResidualRecord {
            primal_h: read_f64(&mut r)?,
            primal_b: read_f64(&mut r)?,
            dual_h: read_f64(&mut r)?,
            dual_b: read_f64(&mut r)?,
        });
    }
    let mut objective_trace = Vec::with_capacity(n_objective);
    for _ in 0..n_objective {
        objective_trace.push(read_f64(&mut r)?);
    }

    Ok(AdmmState {
        j_h,
        j_b,
        k_h,
        k_b,
        m_h,
        m_b,
        iteration,
        residuals,
        objective_trace,
    })
}

fn write_matrix(w: &mut impl Write, m: &DMatrix<f64>) -> Result<()> {
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    let mut data = vec![0.0; rows * cols];
    for v in &mut data {
        *v = read_f64(r)?;
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}
