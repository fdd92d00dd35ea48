//! The spatially inhomogeneous Kac process.
//!
//! Particles stream freely on the unit torus and collide in pairs. Two
//! interaction ranges are supported:
//!
//! * **cell** mode: the torus is cut into `m³` cubes and every pair sharing a
//!   cube collides at rate `1/(n|Δ|)`;
//! * **ball** mode: pairs closer than `ε` collide at rate `ε⁻¹` (the
//!   macroscopic form `ε² φ_ε` with `φ` the indicator of `(0, 1)`).
//!
//! Two ways of advancing the process are provided. [`step_timestep`] is the
//! production path: free flight for `Δt`, then a Poisson number of collision
//! attempts per cell with cell membership frozen. [`next_event`] realizes the
//! jump process exactly, tracking every cell (or ε-shell) crossing, and is
//! meant as an `O(n²)` validation oracle.

use std::f64::consts::PI;

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;

use crate::collision::{collide_in_place, sample_impact, ImpactVector, VelocityPair};
use crate::comparison::{empirical_moments, CellMomentField};
use crate::error::{Error, Result};
use crate::geometry::{min_image_displacement, min_image_distance, CellGrid, TorusPoint};
use crate::rng::Substreams;
use crate::vec3::{self, Vec3};

/// Positions and velocities of `n` particles at a common time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    positions: Vec<TorusPoint>,
    velocities: Vec<Vec3>,
    time: f64,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<TorusPoint>, velocities: Vec<Vec3>) -> Result<Self> {
        if positions.len() != velocities.len() {
            return Err(Error::invalid(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        if velocities.iter().any(|v| !vec3::is_finite(*v)) {
            return Err(Error::NonFinite("particle velocities"));
        }
        Ok(ParticleEnsemble {
            positions,
            velocities,
            time: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[TorusPoint] {
        &self.positions
    }

    pub fn velocities(&self) -> &[Vec3] {
        &self.velocities
    }

    pub fn velocities_mut(&mut self) -> &mut [Vec3] {
        &mut self.velocities
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn total_momentum(&self) -> Vec3 {
        vec3::sum(&self.velocities)
    }

    /// `½ Σ |v|²`.
    pub fn total_energy(&self) -> f64 {
        0.5 * vec3::sum_norm2(&self.velocities)
    }

    /// Moves every particle along its velocity for `dt`; the clock advances.
    pub fn free_flight(&mut self, dt: f64) {
        self.positions
            .par_iter_mut()
            .zip(self.velocities.par_iter())
            .for_each(|(x, v)| *x = x.advanced(*v, dt));
        self.time += dt;
    }

    pub fn cell_bins(&self, grid: &CellGrid) -> CellBins {
        CellBins::new(&self.positions, grid)
    }
}

/// Particles grouped by cell: `order[offsets[c]..offsets[c+1]]` lists the
/// particles of cell `c` in increasing index order.
#[derive(Debug, Clone)]
pub struct CellBins {
    order: Vec<usize>,
    offsets: Vec<usize>,
}

impl CellBins {
    pub fn new(positions: &[TorusPoint], grid: &CellGrid) -> Self {
        let cells: Vec<usize> = positions.par_iter().map(|x| grid.linear_cell_of(x)).collect();
        let mut offsets = vec![0usize; grid.n_cells() + 1];
        for &c in &cells {
            offsets[c + 1] += 1;
        }
        for c in 0..grid.n_cells() {
            offsets[c + 1] += offsets[c];
        }
        let mut cursor = offsets.clone();
        let mut order = vec![0usize; positions.len()];
        for (i, &c) in cells.iter().enumerate() {
            order[cursor[c]] = i;
            cursor[c] += 1;
        }
        CellBins { order, offsets }
    }

    pub fn n_cells(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn members(&self, cell: usize) -> &[usize] {
        &self.order[self.offsets[cell]..self.offsets[cell + 1]]
    }

    pub fn count(&self, cell: usize) -> usize {
        self.offsets[cell + 1] - self.offsets[cell]
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.n_cells()).map(|c| self.count(c)).collect()
    }

    pub(crate) fn order(&self) -> &[usize] {
        &self.order
    }
}

/// Interaction range of the process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProcessMode {
    /// Mean-field interaction inside the cubes of a partition.
    Cell(CellGrid),
    /// Pairs closer than `epsilon` interact; `0 < epsilon < 1/2`.
    Ball { epsilon: f64 },
}

impl ProcessMode {
    pub fn cell(m: usize) -> Result<Self> {
        Ok(ProcessMode::Cell(CellGrid::new(m)?))
    }

    pub fn ball(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(Error::invalid(format!(
                "ball range must lie in (0, 1/2) for the minimum image to be unique, got {epsilon}"
            )));
        }
        Ok(ProcessMode::Ball { epsilon })
    }
}

/// Relation `ε^α n = 1` between the interaction range and the particle number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingPreset {
    alpha: f64,
}

impl ScalingPreset {
    /// `alpha = 2` is the low-density (Boltzmann-Grad) regime; `alpha` in
    /// `(2, 3]` is accepted as the hydrodynamic regime, which is not validated.
    pub fn new(alpha: f64) -> Result<Self> {
        if !(2.0..=3.0).contains(&alpha) {
            return Err(Error::invalid(format!("scaling exponent must lie in [2, 3], got {alpha}")));
        }
        Ok(ScalingPreset { alpha })
    }

    pub fn low_density() -> Self {
        ScalingPreset { alpha: 2.0 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn is_experimental(&self) -> bool {
        self.alpha > 2.0
    }

    /// `ε = n^{-1/α}`.
    pub fn epsilon(&self, n: usize) -> f64 {
        (n as f64).powf(-1.0 / self.alpha)
    }
}

/// Jump rate of the pair `(i, j)` in the current configuration.
pub fn pair_rate(i: usize, j: usize, ensemble: &ParticleEnsemble, mode: &ProcessMode) -> Result<f64> {
    if i == j {
        return Err(Error::invalid("pair rate needs two distinct particles"));
    }
    let n = ensemble.len();
    if i >= n || j >= n {
        return Err(Error::invalid(format!("particle index out of range (n = {n})")));
    }
    let (xi, xj) = (&ensemble.positions[i], &ensemble.positions[j]);
    Ok(match mode {
        ProcessMode::Cell(grid) => {
            if grid.cell_of(xi) == grid.cell_of(xj) {
                cell_pair_rate(n, grid)
            } else {
                0.0
            }
        }
        ProcessMode::Ball { epsilon } => {
            if min_image_distance(xi, xj) < *epsilon {
                1.0 / epsilon
            } else {
                0.0
            }
        }
    })
}

#[inline]
fn cell_pair_rate(n: usize, grid: &CellGrid) -> f64 {
    1.0 / (n as f64 * grid.cell_volume())
}

#[inline]
fn n_pairs(k: usize) -> f64 {
    let k = k as f64;
    0.5 * k * (k - 1.0)
}

/// Pairs `(i, j)`, `i < j`, at minimum-image distance below `epsilon`.
///
/// Uses an auxiliary grid of side `1/floor(1/ε) >= ε`, so only the 27
/// surrounding bins need checking; falls back to all pairs when that grid has
/// fewer than three bins per side.
pub fn neighbor_pairs(positions: &[TorusPoint], epsilon: f64) -> Vec<(usize, usize)> {
    let g = (1.0 / epsilon).floor() as usize;
    let mut pairs = Vec::new();
    if g < 3 {
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if min_image_distance(&positions[i], &positions[j]) < epsilon {
                    pairs.push((i, j));
                }
            }
        }
        return pairs;
    }
    let grid = CellGrid::new(g).expect("g >= 3");
    let bins = CellBins::new(positions, &grid);
    for i in 0..positions.len() {
        let c = grid.cell_of(&positions[i]);
        for di in [g - 1, 0, 1] {
            for dj in [g - 1, 0, 1] {
                for dk in [g - 1, 0, 1] {
                    let nb = crate::geometry::CellIndex {
                        i: (c.i + di) % g,
                        j: (c.j + dj) % g,
                        k: (c.k + dk) % g,
                    };
                    for &j in bins.members(grid.linear(nb)) {
                        if j > i && min_image_distance(&positions[i], &positions[j]) < epsilon {
                            pairs.push((i, j));
                        }
                    }
                }
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Counters from one time step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub attempts: u64,
    pub clamped_cells: usize,
}

const ATTEMPT_CLAMP_FACTOR: u64 = 10;

fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

/// `count` collisions between uniformly chosen distinct members of `vs`.
pub(crate) fn collide_uniform_pairs<R: Rng + ?Sized>(vs: &mut [Vec3], count: u64, rng: &mut R) {
    let k = vs.len();
    if k < 2 {
        return;
    }
    for _ in 0..count {
        let a = rng.random_range(0..k);
        let mut b = rng.random_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        let omega = sample_impact(rng, vec3::sub(vs[a], vs[b]));
        collide_in_place(vs, a, b, omega);
    }
}

/// Runs `f` on the velocities of each cell in parallel; `f` gets the cell
/// index and a contiguous copy of that cell's velocities, which is written
/// back afterwards. Returns the per-cell results in cell order.
pub(crate) fn for_each_cell_velocities<T, F>(ensemble: &mut ParticleEnsemble, bins: &CellBins, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut [Vec3]) -> T + Sync,
{
    let order = bins.order();
    let mut buf: Vec<Vec3> = order.iter().map(|&i| ensemble.velocities[i]).collect();
    let mut slices: Vec<(usize, &mut [Vec3])> = Vec::with_capacity(bins.n_cells());
    let mut rest: &mut [Vec3] = &mut buf;
    for c in 0..bins.n_cells() {
        let (head, tail) = rest.split_at_mut(bins.count(c));
        slices.push((c, head));
        rest = tail;
    }
    let out: Vec<T> = slices.into_par_iter().map(|(c, vs)| f(c, vs)).collect();
    for (slot, &i) in order.iter().enumerate() {
        ensemble.velocities[i] = buf[slot];
    }
    out
}

/// One production step: free flight for `dt`, then collisions with cell
/// membership (or neighbor lists) frozen at the post-flight positions.
///
/// Randomness for cell `c` of step `step` comes from the substream
/// `("kac-collide", [step, c])`, so the result does not depend on how the
/// cells are spread over threads.
pub fn step_timestep(
    ensemble: &mut ParticleEnsemble,
    mode: &ProcessMode,
    dt: f64,
    streams: &Substreams,
    step: u64,
) -> Result<StepStats> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("time step must be positive, got {dt}")));
    }
    ensemble.free_flight(dt);
    collide_phase(ensemble, mode, dt, streams, step)
}

fn collide_phase(
    ensemble: &mut ParticleEnsemble,
    mode: &ProcessMode,
    dt: f64,
    streams: &Substreams,
    step: u64,
) -> Result<StepStats> {
    let n = ensemble.len();
    match mode {
        ProcessMode::Cell(grid) => {
            let bins = ensemble.cell_bins(grid);
            let rate = cell_pair_rate(n, grid);
            let per_cell = for_each_cell_velocities(ensemble, &bins, |c, vs| {
                let k = vs.len();
                if k < 2 {
                    return (0u64, false);
                }
                let mut rng = streams.stream("kac-collide", &[step, c as u64]);
                let mut attempts = poisson_count(&mut rng, dt * rate * n_pairs(k));
                let cap = ATTEMPT_CLAMP_FACTOR * k as u64;
                let clamped = attempts > cap;
                if clamped {
                    attempts = cap;
                }
                collide_uniform_pairs(vs, attempts, &mut rng);
                (attempts, clamped)
            });
            let mut stats = StepStats::default();
            for (a, clamped) in per_cell {
                stats.attempts += a;
                stats.clamped_cells += clamped as usize;
            }
            if stats.clamped_cells > 0 {
                warn!(
                    "step {step}: collision attempts clamped at {ATTEMPT_CLAMP_FACTOR} per particle in {} cells",
                    stats.clamped_cells
                );
            }
            Ok(stats)
        }
        ProcessMode::Ball { epsilon } => {
            let pairs = neighbor_pairs(&ensemble.positions, *epsilon);
            let mut rng = streams.stream("kac-ball", &[step]);
            let mut attempts = poisson_count(&mut rng, dt * pairs.len() as f64 / epsilon);
            let cap = ATTEMPT_CLAMP_FACTOR * n as u64;
            let clamped = attempts > cap;
            if clamped {
                warn!("step {step}: ball-mode collision attempts clamped at {cap}");
                attempts = cap;
            }
            let vs = &mut ensemble.velocities;
            for _ in 0..attempts {
                let (i, j) = pairs[rng.random_range(0..pairs.len())];
                let omega = sample_impact(&mut rng, vec3::sub(vs[i], vs[j]));
                collide_in_place(vs, i, j, omega);
            }
            Ok(StepStats {
                attempts,
                clamped_cells: clamped as usize,
            })
        }
    }
}

/// Result of advancing the exact jump process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventOutcome {
    /// A collision happened at `time` between `pair`.
    Collision { time: f64, pair: (usize, usize) },
    /// The horizon was reached first; the ensemble sits at the horizon.
    Horizon,
    /// No collision can ever happen (no interacting pair and no crossing).
    Never,
}

/// Advances the exact process to its next collision, or to `horizon`
/// (absolute time) if that comes first.
///
/// Between crossings of cell faces (or of the ε-shell of some pair) the set
/// of interacting pairs is constant, so the waiting time to the next
/// collision is exponential with the total rate; by memorylessness a crossing
/// simply restarts the clock.
pub fn next_event<R: Rng + ?Sized>(
    ensemble: &mut ParticleEnsemble,
    mode: &ProcessMode,
    rng: &mut R,
    horizon: f64,
) -> Result<EventOutcome> {
    if horizon.is_nan() || horizon < ensemble.time {
        return Err(Error::invalid("event horizon lies in the past"));
    }
    if ensemble.len() < 2 {
        if horizon.is_finite() {
            ensemble.free_flight(horizon - ensemble.time);
            ensemble.time = horizon;
            return Ok(EventOutcome::Horizon);
        }
        return Ok(EventOutcome::Never);
    }
    match mode {
        ProcessMode::Cell(grid) => next_event_cell(ensemble, grid, rng, horizon),
        ProcessMode::Ball { epsilon } => next_event_ball(ensemble, *epsilon, rng, horizon),
    }
}

/// Exact next-collision step without a horizon. Returns the event time, or
/// `f64::INFINITY` when no collision can ever occur.
pub fn step_exact_event<R: Rng + ?Sized>(
    ensemble: &mut ParticleEnsemble,
    mode: &ProcessMode,
    rng: &mut R,
) -> Result<f64> {
    match next_event(ensemble, mode, rng, f64::INFINITY)? {
        EventOutcome::Collision { time, .. } => Ok(time),
        EventOutcome::Horizon | EventOutcome::Never => Ok(f64::INFINITY),
    }
}

/// Runs the exact process up to absolute time `t`; returns the number of
/// collisions.
pub fn run_exact_until<R: Rng + ?Sized>(
    ensemble: &mut ParticleEnsemble,
    mode: &ProcessMode,
    rng: &mut R,
    t: f64,
) -> Result<u64> {
    let mut collisions = 0;
    loop {
        match next_event(ensemble, mode, rng, t)? {
            EventOutcome::Collision { .. } => collisions += 1,
            EventOutcome::Horizon | EventOutcome::Never => {
                if ensemble.time < t {
                    ensemble.free_flight(t - ensemble.time);
                }
                ensemble.time = t;
                return Ok(collisions);
            }
        }
    }
}

fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    Exp::new(rate).expect("positive rate").sample(rng)
}

/// Time for a coordinate moving at `v` to leave its slab, and the slab it
/// enters.
fn axis_exit(x: f64, v: f64, grid: &CellGrid) -> (f64, usize) {
    let m = grid.m();
    let c = grid.axis_cell(x);
    let h = 1.0 / m as f64;
    if v > 0.0 {
        (((c + 1) as f64 * h - x) / v, (c + 1) % m)
    } else if v < 0.0 {
        ((x - c as f64 * h) / -v, (c + m - 1) % m)
    } else {
        (f64::INFINITY, c)
    }
}

/// A coordinate just inside slab `target`, on the face the particle enters
/// through.
fn snap_into_slab(target: usize, moving_up: bool, grid: &CellGrid) -> f64 {
    let m = grid.m() as f64;
    if moving_up {
        let mut x = target as f64 / m;
        while grid.axis_cell(x) != target {
            x = x.next_up();
        }
        x
    } else {
        let mut x = ((target + 1) as f64 / m).next_down();
        while grid.axis_cell(x) != target {
            x = x.next_down();
        }
        x
    }
}

fn next_event_cell<R: Rng + ?Sized>(
    ens: &mut ParticleEnsemble,
    grid: &CellGrid,
    rng: &mut R,
    horizon: f64,
) -> Result<EventOutcome> {
    let n = ens.len();
    let rate = cell_pair_rate(n.max(1), grid);
    loop {
        let bins = ens.cell_bins(grid);
        let pair_weight: Vec<f64> = (0..bins.n_cells()).map(|c| n_pairs(bins.count(c))).collect();
        let total = pair_weight.iter().sum::<f64>() * rate;

        let (mut t_cross, mut who, mut axis, mut target) = (f64::INFINITY, 0, 0, 0);
        if grid.m() > 1 {
            for (p, (x, v)) in ens.positions.iter().zip(&ens.velocities).enumerate() {
                for d in 0..3 {
                    let (t, c) = axis_exit(x.coord(d), v[d], grid);
                    if t < t_cross {
                        (t_cross, who, axis, target) = (t, p, d, c);
                    }
                }
            }
        }
        if total == 0.0 && t_cross == f64::INFINITY {
            if horizon.is_finite() {
                ens.free_flight(horizon - ens.time);
                ens.time = horizon;
                return Ok(EventOutcome::Horizon);
            }
            return Ok(EventOutcome::Never);
        }
        let remaining = horizon - ens.time;
        let wait = sample_exponential(rng, total);
        if wait < t_cross && wait <= remaining {
            ens.free_flight(wait);
            let mut u = rng.random::<f64>() * pair_weight.iter().sum::<f64>();
            let mut cell = 0;
            for (c, &w) in pair_weight.iter().enumerate() {
                if w > 0.0 {
                    cell = c;
                    if u < w {
                        break;
                    }
                    u -= w;
                }
            }
            let members = bins.members(cell);
            let k = members.len();
            let a = rng.random_range(0..k);
            let mut b = rng.random_range(0..k - 1);
            if b >= a {
                b += 1;
            }
            let (i, j) = (members[a].min(members[b]), members[a].max(members[b]));
            let omega = sample_impact(rng, vec3::sub(ens.velocities[i], ens.velocities[j]));
            collide_in_place(&mut ens.velocities, i, j, omega);
            return Ok(EventOutcome::Collision {
                time: ens.time,
                pair: (i, j),
            });
        }
        if t_cross <= remaining {
            ens.free_flight(t_cross);
            let up = ens.velocities[who][axis] > 0.0;
            let snapped = snap_into_slab(target, up, grid);
            ens.positions[who].set_coord(axis, snapped);
            continue;
        }
        ens.free_flight(remaining);
        ens.time = horizon;
        return Ok(EventOutcome::Horizon);
    }
}

/// Smallest positive time at which the distance between the pair, over all
/// periodic images, crosses `epsilon`.
fn shell_crossing_time(xi: &TorusPoint, xj: &TorusPoint, w: Vec3, epsilon: f64) -> f64 {
    let a = vec3::norm2(w);
    if a == 0.0 {
        return f64::INFINITY;
    }
    let d0 = min_image_displacement(xi, xj);
    let mut best = f64::INFINITY;
    // images beyond the nearest ring cannot come within epsilon < 1/2 before
    // a nearer image does
    for ki in [-1.0, 0.0, 1.0] {
        for kj in [-1.0, 0.0, 1.0] {
            for kk in [-1.0, 0.0, 1.0] {
                let d = [d0[0] + ki, d0[1] + kj, d0[2] + kk];
                let b = vec3::dot(d, w);
                let c = vec3::norm2(d) - epsilon * epsilon;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    continue;
                }
                let s = disc.sqrt();
                for t in [(-b - s) / a, (-b + s) / a] {
                    if t > 0.0 && t < best {
                        best = t;
                    }
                }
            }
        }
    }
    best
}

fn next_event_ball<R: Rng + ?Sized>(
    ens: &mut ParticleEnsemble,
    epsilon: f64,
    rng: &mut R,
    horizon: f64,
) -> Result<EventOutcome> {
    let n = ens.len();
    loop {
        let mut close = Vec::new();
        let mut t_cross = f64::INFINITY;
        let mut w_cross = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let (xi, xj) = (&ens.positions[i], &ens.positions[j]);
                if min_image_distance(xi, xj) < epsilon {
                    close.push((i, j));
                }
                let w = vec3::sub(ens.velocities[j], ens.velocities[i]);
                let t = shell_crossing_time(xi, xj, w, epsilon);
                if t < t_cross {
                    t_cross = t;
                    w_cross = vec3::norm(w);
                }
            }
        }
        let total = close.len() as f64 / epsilon;
        if total == 0.0 && t_cross == f64::INFINITY {
            if horizon.is_finite() {
                ens.free_flight(horizon - ens.time);
                ens.time = horizon;
                return Ok(EventOutcome::Horizon);
            }
            return Ok(EventOutcome::Never);
        }
        let remaining = horizon - ens.time;
        let wait = sample_exponential(rng, total);
        if wait < t_cross && wait <= remaining {
            ens.free_flight(wait);
            let (i, j) = close[rng.random_range(0..close.len())];
            let omega = sample_impact(rng, vec3::sub(ens.velocities[i], ens.velocities[j]));
            collide_in_place(&mut ens.velocities, i, j, omega);
            return Ok(EventOutcome::Collision {
                time: ens.time,
                pair: (i, j),
            });
        }
        // step a hair past the crossing so the pair is unambiguously on
        // its new side of the shell
        let past = t_cross + 1e-9 * epsilon / w_cross;
        if past <= remaining {
            ens.free_flight(past);
            continue;
        }
        ens.free_flight(remaining);
        ens.time = horizon;
        return Ok(EventOutcome::Horizon);
    }
}

/// A test function `φ(x, v)` on one-particle phase space.
pub trait TestFunction: Sync {
    fn value(&self, x: &TorusPoint, v: Vec3) -> f64;

    fn gradient_x(&self, x: &TorusPoint, v: Vec3) -> Vec3;
}

/// Test functions used by the weak-form checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// `v_a`
    Velocity(usize),
    /// `v_a²`
    VelocitySquared(usize),
    /// `|v|²`
    SpeedSquared,
    /// `sin(2π k x_a)`
    SineMode { axis: usize, wavenumber: u32 },
}

impl TestFunction for Observable {
    fn value(&self, x: &TorusPoint, v: Vec3) -> f64 {
        match *self {
            Observable::Velocity(a) => v[a],
            Observable::VelocitySquared(a) => v[a] * v[a],
            Observable::SpeedSquared => vec3::norm2(v),
            Observable::SineMode { axis, wavenumber } => (2.0 * PI * wavenumber as f64 * x.coord(axis)).sin(),
        }
    }

    fn gradient_x(&self, x: &TorusPoint, _v: Vec3) -> Vec3 {
        match *self {
            Observable::SineMode { axis, wavenumber } => {
                let k = 2.0 * PI * wavenumber as f64;
                let mut g = vec3::ZERO;
                g[axis] = k * (k * x.coord(axis)).cos();
                g
            }
            _ => vec3::ZERO,
        }
    }
}

/// Empirical value of the generator applied to `Φ = (1/n) Σ φ(z_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorEstimate {
    pub transport: f64,
    pub collision: f64,
}

impl GeneratorEstimate {
    pub fn total(&self) -> f64 {
        self.transport + self.collision
    }
}

/// Evaluates `(1/n) Σ v_i·∇φ(z_i)` plus the collision term
/// `(1/n) Σ_{i<j} rate_ij ∫dω B [φ(x_i,v_i') - φ(x_i,v_i) + φ(x_j,v_j') - φ(x_j,v_j)]`,
/// the ω-integral estimated with `samples_per_pair` draws from the kernel.
pub fn apply_generator<F: TestFunction + ?Sized>(
    phi: &F,
    ensemble: &ParticleEnsemble,
    mode: &ProcessMode,
    streams: &Substreams,
    samples_per_pair: usize,
) -> Result<GeneratorEstimate> {
    let n = ensemble.len();
    if n == 0 {
        return Err(Error::invalid("generator of an empty ensemble"));
    }
    if samples_per_pair == 0 {
        return Err(Error::invalid("need at least one ω sample per pair"));
    }
    let xs = &ensemble.positions;
    let vs = &ensemble.velocities;
    let transport_terms: Vec<f64> = xs
        .par_iter()
        .zip(vs.par_iter())
        .map(|(x, v)| vec3::dot(*v, phi.gradient_x(x, *v)))
        .collect();
    let transport: f64 = transport_terms.iter().sum::<f64>() / n as f64;
    if !transport.is_finite() {
        return Err(Error::invalid("test function gradient is not finite on the ensemble"));
    }

    let pair_term = |i: usize, j: usize, rng: &mut crate::rng::Stream| -> f64 {
        let (xi, xj) = (&xs[i], &xs[j]);
        let base = phi.value(xi, vs[i]) + phi.value(xj, vs[j]);
        let mut acc = 0.0;
        for _ in 0..samples_per_pair {
            let omega: ImpactVector = sample_impact(rng, vec3::sub(vs[i], vs[j]));
            let out = crate::collision::collide(VelocityPair::new(vs[i], vs[j]), omega);
            acc += phi.value(xi, out.vi) + phi.value(xj, out.vj) - base;
        }
        acc / samples_per_pair as f64
    };

    let collision_sum: f64 = match mode {
        ProcessMode::Cell(grid) => {
            let bins = ensemble.cell_bins(grid);
            let rate = cell_pair_rate(n, grid);
            let per_cell: Vec<f64> = (0..bins.n_cells())
                .into_par_iter()
                .map(|c| {
                    let members = bins.members(c);
                    if members.len() < 2 {
                        return 0.0;
                    }
                    let mut rng = streams.stream("generator", &[c as u64]);
                    let mut s = 0.0;
                    for (a, &i) in members.iter().enumerate() {
                        for &j in &members[a + 1..] {
                            s += pair_term(i, j, &mut rng);
                        }
                    }
                    s * rate
                })
                .collect();
            per_cell.iter().sum()
        }
        ProcessMode::Ball { epsilon } => {
            let pairs = neighbor_pairs(xs, *epsilon);
            let mut rng = streams.stream("generator", &[]);
            pairs.iter().map(|&(i, j)| pair_term(i, j, &mut rng)).sum::<f64>() / epsilon
        }
    };
    let collision = collision_sum / n as f64;
    if !collision.is_finite() {
        return Err(Error::invalid("test function is not finite on the ensemble"));
    }
    Ok(GeneratorEstimate { transport, collision })
}

/// One-dimensional histogram of a velocity component over all particles.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityHistogram {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

/// Binning for [`VelocityHistogram`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramSpec {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl HistogramSpec {
    pub fn build(&self, velocities: &[Vec3]) -> VelocityHistogram {
        let mut counts = vec![0u64; self.bins];
        let w = (self.hi - self.lo) / self.bins as f64;
        for v in velocities {
            let x = v[self.axis];
            if x >= self.lo && x < self.hi {
                let b = (((x - self.lo) / w) as usize).min(self.bins - 1);
                counts[b] += 1;
            }
        }
        VelocityHistogram {
            axis: self.axis,
            lo: self.lo,
            hi: self.hi,
            counts,
        }
    }
}

/// State handed to observers.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub cells: CellMomentField,
    pub histogram: Option<VelocityHistogram>,
}

impl Snapshot {
    pub fn capture(
        ensemble: &ParticleEnsemble,
        grid: &CellGrid,
        time: f64,
        histogram: Option<&HistogramSpec>,
    ) -> Self {
        Snapshot {
            time,
            cells: empirical_moments(ensemble, grid),
            histogram: histogram.map(|h| h.build(ensemble.velocities())),
        }
    }
}

/// Time stepping and observation schedule for [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSchedule {
    pub t_end: f64,
    pub dt: f64,
    /// Observe every this many steps (the final state is always observed).
    pub snapshot_every: usize,
    /// Grid on which per-cell moments are reported.
    pub observation_grid: CellGrid,
    pub histogram: Option<HistogramSpec>,
}

/// Totals over a [`run`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunSummary {
    pub steps: u64,
    pub attempts: u64,
    pub clamped_cells: usize,
    pub snapshots: usize,
}

/// Number of steps covering `[0, t_end]` with step `dt` (the last one may be
/// shorter).
pub(crate) fn step_count(t_end: f64, dt: f64) -> u64 {
    if t_end <= 0.0 {
        return 0;
    }
    ((t_end / dt) - 1e-9).ceil().max(1.0) as u64
}

/// Repeated [`step_timestep`] from the ensemble's current state, calling
/// `observer` on the initial state, every `snapshot_every` steps, and at the
/// end.
pub fn run<F: FnMut(&Snapshot)>(
    ensemble: &mut ParticleEnsemble,
    mode: &ProcessMode,
    schedule: &RunSchedule,
    streams: &Substreams,
    mut observer: F,
) -> Result<RunSummary> {
    if !(schedule.t_end >= 0.0) || !schedule.t_end.is_finite() {
        return Err(Error::invalid(format!("end time must be >= 0, got {}", schedule.t_end)));
    }
    if !(schedule.dt > 0.0) {
        return Err(Error::invalid(format!("time step must be positive, got {}", schedule.dt)));
    }
    let every = schedule.snapshot_every.max(1) as u64;
    let t0 = ensemble.time;
    let steps = step_count(schedule.t_end, schedule.dt);
    let mut summary = RunSummary::default();
    let observe = |ens: &ParticleEnsemble, observer: &mut F, summary: &mut RunSummary| {
        observer(&Snapshot::capture(
            ens,
            &schedule.observation_grid,
            ens.time - t0,
            schedule.histogram.as_ref(),
        ));
        summary.snapshots += 1;
    };
    observe(ensemble, &mut observer, &mut summary);
    for s in 1..=steps {
        let target = if s == steps {
            schedule.t_end
        } else {
            s as f64 * schedule.dt
        };
        let dt = target - (ensemble.time - t0);
        let stats = step_timestep(ensemble, mode, dt, streams, s - 1)?;
        ensemble.time = t0 + target;
        summary.steps += 1;
        summary.attempts += stats.attempts;
        summary.clamped_cells += stats.clamped_cells;
        if s % every == 0 || s == steps {
            observe(ensemble, &mut observer, &mut summary);
        }
    }
    Ok(summary)
}
