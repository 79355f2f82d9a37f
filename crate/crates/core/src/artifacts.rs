//! CSV artifacts: cost history and orbit polylines.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levelset::Trajectory;
use crate::optimize::IterationRecord;

/// One line of the cost history.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub total: f64,
    pub j1: f64,
    /// `Σ_c Yᵀ N(Z_c) Y / ε`.
    pub penalty: f64,
    pub lambda: f64,
    pub trial: Option<usize>,
    pub r_norm_inf: f64,
    pub v_norm_inf: f64,
    pub slope: f64,
    pub components: usize,
    pub boundary_length: f64,
    pub skipped_trials: usize,
    pub elapsed: f64,
}

impl From<&IterationRecord> for HistoryRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iter: r.iter,
            total: r.cost.total,
            j1: r.cost.j1,
            penalty: r.cost.penalty_sum() / r.cost.eps,
            lambda: r.lambda,
            trial: r.trial,
            r_norm_inf: r.r_norm_inf,
            v_norm_inf: r.v_norm_inf,
            slope: r.slope,
            components: r.components,
            boundary_length: r.boundary_length,
            skipped_trials: r.skipped_trials,
            elapsed: r.elapsed,
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(format!("csv: {e}"))
}

pub fn write_history(w: impl Write, rows: &[HistoryRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_history(r: impl Read) -> Result<Vec<HistoryRow>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn save_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    write_history(std::fs::File::create(path)?, rows)
}

pub fn load_history(path: &Path) -> Result<Vec<HistoryRow>> {
    read_history(std::fs::File::open(path)?)
}

/// One orbit vertex; `iter` tags per-iteration dumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitRow {
    pub iter: usize,
    pub component: usize,
    pub k: usize,
    pub t: f64,
    pub x1: f64,
    pub x2: f64,
}

/// Rows for every vertex `Z_0..Z_m` of every orbit.
pub fn orbit_rows(iter: usize, orbits: &[Trajectory]) -> Vec<OrbitRow> {
    orbits
        .iter()
        .flat_map(|t| {
            t.points.iter().enumerate().map(move |(k, p)| OrbitRow {
                iter,
                component: t.component,
                k,
                t: k as f64 * t.dt,
                x1: p[0],
                x2: p[1],
            })
        })
        .collect()
}

pub fn write_orbits(w: impl Write, rows: &[OrbitRow]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_orbits(r: impl Read) -> Result<Vec<OrbitRow>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(csv_err)).collect()
}

pub fn save_orbits(path: &Path, rows: &[OrbitRow]) -> Result<()> {
    write_orbits(std::fs::File::create(path)?, rows)
}

pub fn load_orbits(path: &Path) -> Result<Vec<OrbitRow>> {
    read_orbits(std::fs::File::open(path)?)
}
