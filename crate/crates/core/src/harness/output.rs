//! Output records and writers.
//!
//! Moment snapshots are NDJSON, one object per cell (or solver node) per
//! snapshot, with keys in the fixed order
//! `t, kind, cell|node, rho, ux, uy, uz, T, n_particles`. Vacuum entries
//! carry `null` for the velocity and temperature.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::moments::HydroMoments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    Particles,
    Solver,
    SolverCells,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentRecord {
    pub t: f64,
    pub kind: RecordKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cell: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    pub rho: f64,
    pub ux: Option<f64>,
    pub uy: Option<f64>,
    pub uz: Option<f64>,
    #[serde(rename = "T")]
    pub temperature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_particles: Option<usize>,
}

impl MomentRecord {
    fn new(t: f64, kind: RecordKind, m: &HydroMoments) -> Self {
        let opt = |x: f64| (!m.vacuum).then_some(x);
        MomentRecord {
            t,
            kind,
            cell: None,
            node: None,
            rho: m.rho,
            ux: opt(m.u[0]),
            uy: opt(m.u[1]),
            uz: opt(m.u[2]),
            temperature: opt(m.temperature),
            n_particles: None,
        }
    }

    pub fn cell(t: f64, kind: RecordKind, cell: usize, m: &HydroMoments, n_particles: Option<usize>) -> Self {
        MomentRecord {
            cell: Some(cell),
            n_particles,
            ..Self::new(t, kind, m)
        }
    }

    pub fn node(t: f64, node: usize, m: &HydroMoments) -> Self {
        MomentRecord {
            node: Some(node),
            ..Self::new(t, RecordKind::Solver, m)
        }
    }
}

/// Buffered NDJSON file.
pub struct NdjsonWriter {
    out: BufWriter<File>,
}

impl NdjsonWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(NdjsonWriter {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    /// One record per cell.
    pub fn write_cells(&mut self, t: f64, kind: RecordKind, moments: &[HydroMoments], counts: &[usize]) -> Result<()> {
        for (c, m) in moments.iter().enumerate() {
            self.write(&MomentRecord::cell(t, kind, c, m, counts.get(c).copied()))?;
        }
        Ok(())
    }

    pub fn write_nodes(&mut self, t: f64, moments: &[HydroMoments]) -> Result<()> {
        for (i, m) in moments.iter().enumerate() {
            self.write(&MomentRecord::node(t, i, m))?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_field_order_and_nulls() {
        let r = MomentRecord::cell(0.5, RecordKind::Particles, 3, &HydroMoments::new(1.0, [0.5, 0.0, -1.0], 2.0), Some(7));
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"t":0.5,"kind":"particles","cell":3,"rho":1.0,"ux":0.5,"uy":0.0,"uz":-1.0,"T":2.0,"n_particles":7}"#
        );
        let v = MomentRecord::node(0.0, 1, &HydroMoments::vacuum(0.0));
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"t":0.0,"kind":"solver","node":1,"rho":0.0,"ux":null,"uy":null,"uz":null,"T":null}"#
        );
    }
}
