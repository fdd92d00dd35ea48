//! Empirical moments of particle ensembles, distances between moment
//! trajectories, and velocity-marginal goodness of fit.
//!
//! Densities follow the probability convention: `Σ_Δ ρ_Δ |Δ| = 1`.

pub mod stats;
pub mod study;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geometry::CellGrid;
use crate::kac::ParticleEnsemble;
use crate::microcanonical::{coordinate_marginal_cdf, EnsembleParams};
use crate::moments::HydroMoments;
use crate::solver::SpatialLayout;
use crate::vec3::{self, Vec3};

pub use stats::{chi_square_test, ks_critical_value, ks_p_value, ks_statistic, RunningStats};
pub use study::{convergence_study, StudyPoint, StudyRow, StudyTable};

/// Per-cell moments of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CellMomentField {
    pub grid: CellGrid,
    pub moments: Vec<HydroMoments>,
    /// Particles per cell; empty for fields that do not come from particles.
    pub counts: Vec<usize>,
}

/// `ρ = N_Δ/(n|Δ|)`, `P = Σv/N_Δ`, `E = Σ|v|²/(2N_Δ)`, `T = (2E - |P|²)/3`.
/// Empty cells are vacuum.
pub fn empirical_moments(ensemble: &ParticleEnsemble, grid: &CellGrid) -> CellMomentField {
    let n_cells = grid.n_cells();
    let mut count = vec![0usize; n_cells];
    let mut mom = vec![vec3::ZERO; n_cells];
    let mut sq = vec![0.0; n_cells];
    for (x, v) in ensemble.positions().iter().zip(ensemble.velocities()) {
        let c = grid.linear_cell_of(x);
        count[c] += 1;
        mom[c] = vec3::add(mom[c], *v);
        sq[c] += vec3::norm2(*v);
    }
    let n = ensemble.len().max(1) as f64;
    let moments = (0..n_cells)
        .map(|c| {
            let rho = count[c] as f64 / (n * grid.cell_volume());
            if count[c] == 0 {
                return HydroMoments::vacuum(0.0);
            }
            let k = count[c] as f64;
            let p = vec3::scale(mom[c], 1.0 / k);
            let e = sq[c] / (2.0 * k);
            HydroMoments::new(rho, p, ((2.0 * e - vec3::norm2(p)) / 3.0).max(0.0))
        })
        .collect();
    CellMomentField {
        grid: *grid,
        moments,
        counts: count,
    }
}

/// Averages solver node moments onto particle cells.
///
/// Every node is sampled at its midpoint; the nodes falling in a cell are
/// pooled through their conserved quantities (mass, momentum, energy), which
/// is the cell average of the solver field under the midpoint rule.
pub fn project_to_cells(nodes: &[HydroMoments], layout: &SpatialLayout, grid: &CellGrid) -> Result<CellMomentField> {
    if nodes.len() != layout.n_nodes() {
        return Err(Error::IncompatibleGrids(format!(
            "{} node moments for a layout with {} nodes",
            nodes.len(),
            layout.n_nodes()
        )));
    }
    let n_cells = grid.n_cells();
    let mut weight = vec![0usize; n_cells];
    let mut mass = vec![0.0; n_cells];
    let mut mom = vec![vec3::ZERO; n_cells];
    let mut second = vec![0.0; n_cells];
    let m = grid.m();
    for (idx, node) in nodes.iter().enumerate() {
        let (r, p, s) = node.conserved();
        let mut add = |c: usize| {
            weight[c] += 1;
            mass[c] += r;
            mom[c] = vec3::add(mom[c], p);
            second[c] += s;
        };
        let center = layout.node_center(idx);
        match layout {
            SpatialLayout::Slab { .. } => {
                let i = grid.axis_cell(center[0]);
                for j in 0..m {
                    for k in 0..m {
                        add((i * m + j) * m + k);
                    }
                }
            }
            SpatialLayout::Full { .. } => {
                let c = [grid.axis_cell(center[0]), grid.axis_cell(center[1]), grid.axis_cell(center[2])];
                add((c[0] * m + c[1]) * m + c[2]);
            }
        }
    }
    if let Some(c) = weight.iter().position(|&w| w == 0) {
        return Err(Error::IncompatibleGrids(format!(
            "particle cell {c} contains no solver node; refine the solver grid"
        )));
    }
    let moments = (0..n_cells)
        .map(|c| {
            let w = weight[c] as f64;
            HydroMoments::from_conserved(
                mass[c] / w,
                vec3::scale(mom[c], 1.0 / w),
                second[c] / w,
                crate::solver::VACUUM_FLOOR,
            )
        })
        .collect();
    Ok(CellMomentField {
        grid: *grid,
        moments,
        counts: Vec::new(),
    })
}

/// Snapshots `(t, per-cell moments)` with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    cells: usize,
    times: Vec<f64>,
    frames: Vec<Vec<HydroMoments>>,
}

impl MomentTrajectory {
    pub fn new(cells: usize) -> Self {
        MomentTrajectory {
            cells,
            times: Vec::new(),
            frames: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, moments: Vec<HydroMoments>) -> Result<()> {
        if moments.len() != self.cells {
            return Err(Error::IncompatibleGrids(format!(
                "snapshot has {} cells, trajectory has {}",
                moments.len(),
                self.cells
            )));
        }
        if !t.is_finite() || self.times.last().is_some_and(|&last| t <= last) {
            return Err(Error::invalid(format!("snapshot time {t} does not increase")));
        }
        self.times.push(t);
        self.frames.push(moments);
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn frame(&self, i: usize) -> &[HydroMoments] {
        &self.frames[i]
    }

    /// Index of the snapshot nearest `t` (the earlier one on ties).
    pub fn nearest(&self, t: f64) -> Option<usize> {
        (0..self.times.len()).min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
    }
}

/// Cell-averaged L¹ distances between two moment fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentDistance {
    pub d_rho: f64,
    /// Mean over cells of `|u_a - u_b|` (Euclidean norm per cell).
    pub d_u: f64,
    pub d_t: f64,
    /// Cells skipped because either side is vacuum.
    pub excluded: usize,
}

/// Distances between two per-cell fields; vacuum cells on either side are
/// excluded and counted.
pub fn field_distance(a: &[HydroMoments], b: &[HydroMoments]) -> Result<MomentDistance> {
    if a.len() != b.len() {
        return Err(Error::IncompatibleGrids(format!("{} cells vs {} cells", a.len(), b.len())));
    }
    let (mut dr, mut du, mut dt, mut used) = (0.0, 0.0, 0.0, 0usize);
    for (x, y) in a.iter().zip(b) {
        if x.vacuum || y.vacuum {
            continue;
        }
        used += 1;
        dr += (x.rho - y.rho).abs();
        du += vec3::norm(vec3::sub(x.u, y.u));
        dt += (x.temperature - y.temperature).abs();
    }
    let excluded = a.len() - used;
    if used == 0 {
        return Ok(MomentDistance {
            d_rho: 0.0,
            d_u: 0.0,
            d_t: 0.0,
            excluded,
        });
    }
    let w = used as f64;
    Ok(MomentDistance {
        d_rho: dr / w,
        d_u: du / w,
        d_t: dt / w,
        excluded,
    })
}

/// Distances at the snapshots of `a` and `b` nearest to `t`.
pub fn moment_distance(a: &MomentTrajectory, b: &MomentTrajectory, t: f64) -> Result<MomentDistance> {
    if a.cells != b.cells {
        return Err(Error::IncompatibleGrids(format!(
            "trajectories over {} and {} cells",
            a.cells, b.cells
        )));
    }
    let (Some(i), Some(j)) = (a.nearest(t), b.nearest(t)) else {
        return Err(Error::invalid("distance between empty trajectories"));
    };
    field_distance(&a.frames[i], &b.frames[j])
}

/// One-dimensional velocity marginal to test in-cell samples against.
#[derive(Debug, Clone, PartialEq)]
pub enum MarginalReference {
    Maxwellian { u: Vec3, temperature: f64 },
    Microcanonical(EnsembleParams),
    /// Marginal of a solver velocity slice along the tested axis: `weights[k]`
    /// is the mass at node `first + k·spacing`, spread uniformly over the
    /// node's width.
    Lattice { first: f64, spacing: f64, weights: Vec<f64> },
}

impl MarginalReference {
    pub fn cdf(&self, x: f64, axis: usize) -> f64 {
        match self {
            MarginalReference::Maxwellian { u, temperature } => Normal::new(u[axis], temperature.sqrt())
                .map(|d| d.cdf(x))
                .unwrap_or(if x < u[axis] { 0.0 } else { 1.0 }),
            MarginalReference::Microcanonical(p) => coordinate_marginal_cdf(x, axis, p),
            MarginalReference::Lattice {
                first,
                spacing,
                weights,
            } => {
                let total: f64 = weights.iter().sum();
                let pos = (x - first) / spacing + 0.5;
                if pos <= 0.0 {
                    return 0.0;
                }
                let k = pos.floor() as usize;
                if k >= weights.len() {
                    return 1.0;
                }
                let below: f64 = weights[..k].iter().sum();
                (below + weights[k] * (pos - k as f64)) / total
            }
        }
    }
}

/// Minimum in-cell sample for [`marginal_ks`].
pub const MIN_KS_SAMPLE: usize = 10;

/// KS statistic of velocity component `axis` of the particles in `cell`
/// against `reference`.
pub fn marginal_ks(
    ensemble: &ParticleEnsemble,
    grid: &CellGrid,
    cell: usize,
    axis: usize,
    reference: &MarginalReference,
) -> Result<KsProbe> {
    if cell >= grid.n_cells() || axis >= 3 {
        return Err(Error::invalid(format!("cell {cell} / axis {axis} out of range")));
    }
    let mut xs: Vec<f64> = ensemble
        .positions()
        .iter()
        .zip(ensemble.velocities())
        .filter(|(x, _)| grid.linear_cell_of(x) == cell)
        .map(|(_, v)| v[axis])
        .collect();
    if xs.len() < MIN_KS_SAMPLE {
        return Err(Error::InsufficientSample {
            got: xs.len(),
            need: MIN_KS_SAMPLE,
        });
    }
    let d = ks_statistic(&mut xs, |x| reference.cdf(x, axis));
    Ok(KsProbe {
        cell,
        axis,
        samples: xs.len(),
        statistic: d,
        p_value: ks_p_value(d, xs.len()),
    })
}

/// Result of one [`marginal_ks`] probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsProbe {
    pub cell: usize,
    pub axis: usize,
    pub samples: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// Run parameters recorded alongside a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub n: usize,
    pub tau: Option<f64>,
    pub epsilon: Option<f64>,
    pub cell_volume: f64,
    pub seeds: usize,
}

/// Distances at one snapshot time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnapshotComparison {
    pub t: f64,
    #[serde(flatten)]
    pub distance: MomentDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub metadata: ReportMetadata,
    pub snapshots: Vec<SnapshotComparison>,
    pub ks: Vec<KsProbe>,
}
