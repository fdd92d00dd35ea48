//! Discrete-velocity BGK solver.
//!
//! Solves `∂_t f + v·∇_x f = ρ(ρM_f - f)` on the torus with a cubic velocity
//! lattice. Time stepping is Strang splitting of semi-Lagrangian transport
//! (periodic linear interpolation) and the relaxation step, which is solved
//! exactly: relaxation conserves the moments, so `M_f` is frozen during it
//! and `f - ρM_f` decays like `exp(-ρt)`. The discrete Maxwellian is moment
//! matched so that relaxation conserves mass, momentum and energy to
//! rounding.

pub mod io;
mod maxwellian;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::moments::HydroMoments;
use crate::vec3::{self, Vec3};

pub use maxwellian::{discrete_maxwellian, maxwellian_nodes};

/// Nodes with density at or below this are vacuum.
pub const VACUUM_FLOOR: f64 = 1e-12;

/// Largest field, in `f64` values, the solver will allocate (2 GiB).
pub const MAX_FIELD_VALUES: usize = 1 << 28;

/// Spatial discretization. Nodes are cell midpoints `(i + 1/2)/nx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SpatialLayout {
    /// `nx` nodes along the first axis, uniform along the other two.
    Slab { nx: usize },
    /// `nx³` nodes, row-major in `(x, y, z)`.
    Full { nx: usize },
}

impl SpatialLayout {
    pub fn nx(&self) -> usize {
        match *self {
            SpatialLayout::Slab { nx } | SpatialLayout::Full { nx } => nx,
        }
    }

    pub fn n_nodes(&self) -> usize {
        match *self {
            SpatialLayout::Slab { nx } => nx,
            SpatialLayout::Full { nx } => nx * nx * nx,
        }
    }

    /// Volume represented by one node.
    pub fn node_volume(&self) -> f64 {
        1.0 / self.n_nodes() as f64
    }

    /// Midpoint of node `idx`; slab nodes report `1/2` on the uniform axes.
    pub fn node_center(&self, idx: usize) -> Vec3 {
        let nx = self.nx();
        let c = |i: usize| (i as f64 + 0.5) / nx as f64;
        match self {
            SpatialLayout::Slab { .. } => [c(idx), 0.5, 0.5],
            SpatialLayout::Full { .. } => [c(idx / (nx * nx)), c((idx / nx) % nx), c(idx % nx)],
        }
    }

    /// Extents `(nx, ny, nz)`.
    pub fn dims(&self) -> [usize; 3] {
        match *self {
            SpatialLayout::Slab { nx } => [nx, 1, 1],
            SpatialLayout::Full { nx } => [nx, nx, nx],
        }
    }

    /// Axes along which the field varies.
    fn varying_axes(&self) -> &'static [usize] {
        match self {
            SpatialLayout::Slab { .. } => &[0],
            SpatialLayout::Full { .. } => &[0, 1, 2],
        }
    }
}

/// Cubic lattice of `m_v³` velocities spanning `[-v_max, v_max]³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityLattice {
    m_v: usize,
    v_max: f64,
}

impl VelocityLattice {
    /// `m_v` must be odd (so that `v = 0` is a node) and at least 3.
    pub fn new(m_v: usize, v_max: f64) -> Result<Self> {
        if m_v < 3 || m_v % 2 == 0 {
            return Err(Error::invalid(format!("velocity nodes per axis must be odd and >= 3, got {m_v}")));
        }
        if !(v_max > 0.0) || !v_max.is_finite() {
            return Err(Error::invalid(format!("v_max must be positive, got {v_max}")));
        }
        Ok(VelocityLattice { m_v, v_max })
    }

    pub fn m_v(&self) -> usize {
        self.m_v
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.v_max / (self.m_v - 1) as f64
    }

    /// `Δv³`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn n_nodes(&self) -> usize {
        self.m_v * self.m_v * self.m_v
    }

    /// Velocity of node `k` along one axis.
    pub fn axis_value(&self, k: usize) -> f64 {
        -self.v_max + k as f64 * self.spacing()
    }

    /// Velocity of node `idx`, row-major in `(v_x, v_y, v_z)`.
    pub fn node(&self, idx: usize) -> Vec3 {
        let m = self.m_v;
        [
            self.axis_value(idx / (m * m)),
            self.axis_value((idx / m) % m),
            self.axis_value(idx % m),
        ]
    }

    pub fn nodes(&self) -> Vec<Vec3> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    /// Mass of the Maxwellian `M_{u,T}` lying outside the lattice's cells.
    pub fn gaussian_tail_mass(&self, u: Vec3, temperature: f64) -> f64 {
        let half = self.v_max + 0.5 * self.spacing();
        let Ok(n) = Normal::new(0.0, temperature.sqrt()) else {
            return 0.0;
        };
        let inside: f64 = (0..3).map(|a| n.cdf(half - u[a]) - n.cdf(-half - u[a])).product();
        (1.0 - inside).max(0.0)
    }
}

/// Spatial layout plus velocity lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpaceGrid {
    pub layout: SpatialLayout,
    pub lattice: VelocityLattice,
}

impl PhaseSpaceGrid {
    /// Refuses fields larger than [`MAX_FIELD_VALUES`].
    pub fn new(layout: SpatialLayout, lattice: VelocityLattice) -> Result<Self> {
        if layout.nx() == 0 {
            return Err(Error::invalid("solver grid needs at least one spatial node"));
        }
        let values = layout.n_nodes().checked_mul(lattice.n_nodes());
        match values {
            Some(v) if v <= MAX_FIELD_VALUES => Ok(PhaseSpaceGrid { layout, lattice }),
            _ => Err(Error::invalid(format!(
                "field of {} x {} values exceeds the limit of {MAX_FIELD_VALUES}; use the slab layout or fewer nodes",
                layout.n_nodes(),
                lattice.n_nodes()
            ))),
        }
    }

    pub fn n_values(&self) -> usize {
        self.layout.n_nodes() * self.lattice.n_nodes()
    }
}

/// `f[node][velocity]`, nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    grid: PhaseSpaceGrid,
    data: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(grid: PhaseSpaceGrid) -> Self {
        DistributionField {
            grid,
            data: vec![0.0; grid.n_values()],
        }
    }

    pub fn from_values(grid: PhaseSpaceGrid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.n_values() {
            return Err(Error::invalid(format!(
                "field needs {} values, got {}",
                grid.n_values(),
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("distribution values must be finite and nonnegative"));
        }
        Ok(DistributionField { grid, data })
    }

    /// Fills every node with `f(node center, velocity node)`.
    pub fn from_fn<F: Fn(Vec3, Vec3) -> f64 + Sync>(grid: PhaseSpaceGrid, f: F) -> Result<Self> {
        let nodes = grid.lattice.nodes();
        let nv = nodes.len();
        let mut data = vec![0.0; grid.n_values()];
        data.par_chunks_mut(nv).enumerate().for_each(|(i, row)| {
            let x = grid.layout.node_center(i);
            for (slot, v) in row.iter_mut().zip(&nodes) {
                *slot = f(x, *v);
            }
        });
        Self::from_values(grid, data)
    }

    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Velocity slice at spatial node `i`.
    pub fn node(&self, i: usize) -> &[f64] {
        let nv = self.grid.lattice.n_nodes();
        &self.data[i * nv..(i + 1) * nv]
    }

    pub fn node_mut(&mut self, i: usize) -> &mut [f64] {
        let nv = self.grid.lattice.n_nodes();
        &mut self.data[i * nv..(i + 1) * nv]
    }

    /// Total mass, momentum and `Σ f|v|²` (twice the energy) with both the
    /// spatial and the velocity measure.
    pub fn totals(&self) -> (f64, Vec3, f64) {
        let w = self.grid.layout.node_volume();
        let (mut m, mut p, mut s) = (0.0, vec3::ZERO, 0.0);
        for h in moments(self) {
            let (a, b, c) = h.conserved();
            m += a * w;
            p = vec3::add(p, vec3::scale(b, w));
            s += c * w;
        }
        (m, p, s)
    }
}

/// Conserved discrete moments `(Σf, Σfv, Σf|v|²)·Δv³` of one velocity slice.
pub(crate) fn slice_conserved(values: &[f64], nodes: &[Vec3], dv3: f64) -> [f64; 5] {
    let mut acc = [0.0; 5];
    for (f, v) in values.iter().zip(nodes) {
        acc[0] += f;
        acc[1] += f * v[0];
        acc[2] += f * v[1];
        acc[3] += f * v[2];
        acc[4] += f * vec3::norm2(*v);
    }
    acc.map(|a| a * dv3)
}

fn slice_moments(values: &[f64], nodes: &[Vec3], dv3: f64) -> HydroMoments {
    let c = slice_conserved(values, nodes, dv3);
    let m = HydroMoments::from_conserved(c[0], [c[1], c[2], c[3]], c[4], VACUUM_FLOOR);
    if m.vacuum {
        m
    } else {
        HydroMoments {
            temperature: m.temperature.max(0.0),
            ..m
        }
    }
}

/// Midpoint-rule density, bulk velocity and temperature at every node.
pub fn moments(f: &DistributionField) -> Vec<HydroMoments> {
    let lattice = f.grid.lattice;
    let nodes = lattice.nodes();
    let dv3 = lattice.cell_volume();
    f.data
        .par_chunks(lattice.n_nodes())
        .map(|row| slice_moments(row, &nodes, dv3))
        .collect()
}

/// Semi-Lagrangian free transport `f(x, v) ← f(x - vΔt, v)` with periodic
/// linear interpolation; a full layout is shifted one axis at a time.
pub fn transport_step(f: &mut DistributionField, dt: f64) {
    if dt == 0.0 {
        return;
    }
    let grid = f.grid;
    let nodes = grid.lattice.nodes();
    let nv = nodes.len();
    let nx = grid.layout.nx();
    for &axis in grid.layout.varying_axes() {
        // shift in node units and its split into whole and fractional parts
        let shifts: Vec<(usize, f64)> = nodes
            .iter()
            .map(|v| {
                let s = v[axis] * dt * nx as f64;
                let q = s.floor();
                ((q.rem_euclid(nx as f64)) as usize % nx, s - q)
            })
            .collect();
        let stride = match axis {
            0 => grid.layout.n_nodes() / nx,
            1 => nx,
            _ => 1,
        };
        let old = std::mem::take(&mut f.data);
        let mut new = vec![0.0; old.len()];
        new.par_chunks_mut(nv).enumerate().for_each(|(node, row)| {
            let i = (node / stride) % nx;
            let base = node - i * stride;
            for (k, slot) in row.iter_mut().enumerate() {
                let (q, r) = shifts[k];
                let a = (i + nx - q) % nx;
                let b = (a + nx - 1) % nx;
                let fa = old[(base + a * stride) * nv + k];
                let fb = old[(base + b * stride) * nv + k];
                *slot = (1.0 - r) * fa + r * fb;
            }
        });
        f.data = new;
    }
}

/// Exact relaxation `f ← ρM + (f - ρM)e^{-ρΔt}` at every non-vacuum node,
/// with `ρM` the moment-matched discrete Maxwellian of the node.
pub fn relax_step(f: &mut DistributionField, dt: f64) -> Result<()> {
    let lattice = f.grid.lattice;
    let nodes = lattice.nodes();
    let dv3 = lattice.cell_volume();
    let nv = lattice.n_nodes();
    f.data
        .par_chunks_mut(nv)
        .try_for_each(|row| -> Result<()> {
            let mom = slice_moments(row, &nodes, dv3);
            if mom.vacuum || mom.temperature <= 0.0 {
                return Ok(());
            }
            let target = slice_conserved(row, &nodes, dv3);
            let eq = maxwellian::matched(&mom, &target, &lattice, &nodes)?;
            let decay = (-mom.rho * dt).exp();
            for (x, m) in row.iter_mut().zip(&eq) {
                *x = m + (*x - m) * decay;
            }
            Ok(())
        })
}

/// Strang step: transport `Δt/2`, relax `Δt`, transport `Δt/2`.
pub fn step(f: &mut DistributionField, dt: f64) -> Result<()> {
    transport_step(f, 0.5 * dt);
    relax_step(f, dt)?;
    transport_step(f, 0.5 * dt);
    Ok(())
}

/// Solver time stepping; the last step is shortened to land on `t_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSchedule {
    pub t_end: f64,
    pub dt: f64,
    /// Observe every this many steps; the final state is always observed.
    pub snapshot_every: usize,
}

/// Iterates [`step`] from time 0, calling `observer(t, field)` on the
/// initial field, every `snapshot_every` steps and at `t_end`.
pub fn solve<F>(f: &mut DistributionField, schedule: &SolveSchedule, mut observer: F) -> Result<u64>
where
    F: FnMut(f64, &DistributionField) -> Result<()>,
{
    if !(schedule.t_end >= 0.0) || !schedule.t_end.is_finite() {
        return Err(Error::invalid(format!("end time must be >= 0, got {}", schedule.t_end)));
    }
    if !(schedule.dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {}", schedule.dt)));
    }
    let steps = crate::kac::step_count(schedule.t_end, schedule.dt);
    let every = schedule.snapshot_every.max(1) as u64;
    observer(0.0, f)?;
    let mut t = 0.0;
    for s in 1..=steps {
        let target = if s == steps {
            schedule.t_end
        } else {
            s as f64 * schedule.dt
        };
        step(f, target - t)?;
        t = target;
        if s % every == 0 || s == steps {
            observer(t, f)?;
        }
    }
    Ok(steps)
}

/// Warns when the lattice cuts off more than `tolerance` of the Maxwellian
/// mass at the given parameters; returns the lost mass.
pub fn check_truncation(lattice: &VelocityLattice, u: Vec3, temperature: f64, tolerance: f64) -> f64 {
    let lost = lattice.gaussian_tail_mass(u, temperature);
    if lost > tolerance {
        warn!(
            "velocity lattice (v_max = {}) truncates {lost:.3e} of the Maxwellian mass at T = {temperature}",
            lattice.v_max()
        );
    }
    lost
}
