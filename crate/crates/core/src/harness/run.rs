//! Run orchestration for every mode. Each runner writes into one output
//! directory and echoes the effective configuration there as `config.json`.
//! Nothing time- or host-dependent is written, so a run is reproducible
//! byte for byte from its configuration.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use log::{info, warn};
use rand::Rng;
use serde::Serialize;

use crate::comparison::{
    self, empirical_moments, field_distance, ks_p_value, ks_statistic, project_to_cells, ComparisonReport,
    MarginalReference, ReportMetadata, SnapshotComparison,
};
use crate::error::{Error, Result};
use crate::geometry::CellGrid;
use crate::kac::{self, HistogramSpec, ProcessMode, RunSchedule};
use crate::microcanonical::{
    coordinate_marginal_cdf, domination_constants, max_deviation_from_maxwellian, sample_microcanonical,
    sphere_ratio_asymptotic_check, EnsembleParams,
};
use crate::moments::HydroMoments;
use crate::rng::Substreams;
use crate::solver::{self, DistributionField, PhaseSpaceGrid, SolveSchedule, SpatialLayout, VelocityLattice};
use crate::splitting::{run_splitting, SplittingConfig, Thermalization};
use crate::vec3::{self, Vec3};

use super::config::{LayoutKind, RunConfig, RunMode, ThermalizationKind};
use super::output::{write_json, NdjsonWriter, RecordKind};

/// CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Solve,
    Compare,
    Sweep,
    MicrocanonicalTest,
}

impl Command {
    fn accepts(&self, mode: RunMode) -> bool {
        match self {
            Command::Simulate => matches!(mode, RunMode::KacCell | RunMode::KacBall | RunMode::Splitting),
            Command::Solve => mode == RunMode::BgkSolve,
            Command::Compare => mode == RunMode::Compare,
            Command::Sweep => mode == RunMode::Sweep,
            Command::MicrocanonicalTest => mode == RunMode::MicrocanonicalTest,
        }
    }
}

/// Human-readable lines summarizing a finished run.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub lines: Vec<String>,
}

/// Runs `config` under `command`, writing into `out`.
pub fn execute(command: Command, config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    if !command.accepts(config.mode) {
        return Err(Error::config(
            "mode",
            format!("mode {:?} cannot be run by the {command:?} command", config.mode),
        ));
    }
    fs::create_dir_all(out)?;
    let mut echoed = config.clone();
    echoed.output = None;
    write_json(&out.join("config.json"), &echoed)?;
    match config.mode {
        RunMode::KacCell | RunMode::KacBall => simulate_kac(config, out),
        RunMode::Splitting => simulate_splitting(config, out),
        RunMode::BgkSolve => solve_bgk(config, out),
        RunMode::Compare => compare(config, out),
        RunMode::Sweep => sweep(config, out),
        RunMode::MicrocanonicalTest => microcanonical_report(config, out),
    }
}

fn required<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(key, "missing after defaults; load configs through load_config"))
}

pub(crate) fn splitting_config(cfg: &RunConfig, m: usize, tau: f64, epsilon: Option<f64>) -> Result<SplittingConfig> {
    let th = match cfg.thermalization.unwrap_or_default() {
        ThermalizationKind::MicrocanonicalLimit => Thermalization::MicrocanonicalLimit,
        ThermalizationKind::Kac => Thermalization::Kac {
            epsilon: required(epsilon, "epsilon")?,
        },
    };
    Ok(SplittingConfig::new(tau, th, CellGrid::new(m)?)?.with_firing(cfg.firing.unwrap_or_default().into()))
}

pub(crate) fn solver_grid(cfg: &RunConfig) -> Result<PhaseSpaceGrid> {
    let s = cfg.solver.clone().unwrap_or_default();
    let layout = match s.layout {
        LayoutKind::Slab => SpatialLayout::Slab { nx: s.nx },
        LayoutKind::Full => SpatialLayout::Full { nx: s.nx },
    };
    PhaseSpaceGrid::new(layout, VelocityLattice::new(s.m_v, required(s.v_max, "solver.v_max")?)?)
}

#[derive(Serialize)]
struct ConservationSummary {
    mass: [f64; 2],
    momentum: [Vec3; 2],
    energy: [f64; 2],
}

#[derive(Serialize)]
struct KacSummary {
    n: usize,
    steps: u64,
    collision_attempts: u64,
    clamped_cells: usize,
    snapshots: usize,
    epsilon: Option<f64>,
    experimental_scaling: bool,
    conservation: ConservationSummary,
}

fn simulate_kac(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let n = required(cfg.n, "n")?;
    let m = required(cfg.m, "m")?;
    let grid = CellGrid::new(m)?;
    let streams = Substreams::new(cfg.seed);
    let initial = cfg.initial.clone().unwrap_or_default().prepare()?;
    let mut ens = initial.sample(n, &streams)?;
    let (mode, epsilon) = match cfg.mode {
        RunMode::KacCell => (ProcessMode::Cell(grid), None),
        _ => {
            let e = required(cfg.ball_epsilon(), "epsilon")?;
            (ProcessMode::ball(e)?, Some(e))
        }
    };
    let experimental = cfg.alpha.is_some_and(|a| a > 2.0);
    if experimental {
        warn!("alpha > 2 selects the hydrodynamic scaling, which is outside the validated scope");
    }
    let dt = required(cfg.dt, "dt")?;
    let hist = cfg.snapshots.as_ref().and_then(|s| s.histogram).map(|h| HistogramSpec {
        axis: h.axis,
        lo: h.lo,
        hi: h.hi,
        bins: h.bins,
    });
    let schedule = RunSchedule {
        t_end: required(cfg.t_end, "t_end")?,
        dt,
        snapshot_every: cfg.snapshot_every(dt),
        observation_grid: grid,
        histogram: hist,
    };
    let (p0, e0) = (ens.total_momentum(), ens.total_energy());
    let mut snaps = NdjsonWriter::create(&out.join("snapshots.ndjson"))?;
    let mut hists = match hist {
        Some(_) => Some(NdjsonWriter::create(&out.join("histograms.ndjson"))?),
        None => None,
    };
    let mut write_err = None;
    let summary = kac::run(&mut ens, &mode, &schedule, &streams, |s| {
        let r = snaps
            .write_cells(s.time, RecordKind::Particles, &s.cells.moments, &s.cells.counts)
            .and_then(|_| match (&mut hists, &s.histogram) {
                (Some(w), Some(h)) => w.write(&serde_json::json!({
                    "t": s.time, "axis": h.axis, "lo": h.lo, "hi": h.hi, "counts": h.counts
                })),
                _ => Ok(()),
            });
        if let Err(e) = r {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    snaps.finish()?;
    if let Some(h) = hists {
        h.finish()?;
    }
    let (p1, e1) = (ens.total_momentum(), ens.total_energy());
    write_json(
        &out.join("summary.json"),
        &KacSummary {
            n,
            steps: summary.steps,
            collision_attempts: summary.attempts,
            clamped_cells: summary.clamped_cells,
            snapshots: summary.snapshots,
            epsilon,
            experimental_scaling: experimental,
            conservation: ConservationSummary {
                mass: [n as f64; 2],
                momentum: [p0, p1],
                energy: [e0, e1],
            },
        },
    )?;
    Ok(RunOutcome {
        lines: vec![
            format!("{} steps, {} collision attempts", summary.steps, summary.attempts),
            format!("energy drift {:.3e} (relative)", (e1 - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)),
        ],
    })
}

#[derive(Serialize)]
struct SplittingSummary {
    n: usize,
    periods: u64,
    fired_cells: usize,
    nonempty_cell_visits: usize,
    kac_collisions: u64,
    conservation: ConservationSummary,
}

/// Runs the splitting dynamics and returns the per-cell trajectory.
pub(crate) fn splitting_trajectory(
    cfg: &RunConfig,
    split: &SplittingConfig,
    n: usize,
    n_periods: u64,
    streams: &Substreams,
    mut sink: impl FnMut(f64, &comparison::CellMomentField) -> Result<()>,
) -> Result<(crate::kac::ParticleEnsemble, crate::splitting::ThermalizeStats, crate::kac::ParticleEnsemble)> {
    let initial = cfg.initial.clone().unwrap_or_default().prepare()?;
    let mut ens = initial.sample(n, streams)?;
    let start = ens.clone();
    let every = cfg.snapshot_every(split.tau) as u64;
    let mut err = None;
    let stats = run_splitting(&mut ens, split, n_periods, streams, |k, e, _| {
        if k % every == 0 || k == n_periods {
            if let Err(x) = sink(e.time(), &empirical_moments(e, &split.grid)) {
                err.get_or_insert(x);
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok((start, stats, ens))
}

fn simulate_splitting(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let n = required(cfg.n, "n")?;
    let periods = required(cfg.n_periods, "n_periods")?;
    let split = splitting_config(cfg, required(cfg.m, "m")?, required(cfg.tau, "tau")?, cfg.epsilon)?;
    let streams = Substreams::new(cfg.seed);
    let mut snaps = NdjsonWriter::create(&out.join("snapshots.ndjson"))?;
    let (start, stats, end) = splitting_trajectory(cfg, &split, n, periods, &streams, |t, f| {
        snaps.write_cells(t, RecordKind::Particles, &f.moments, &f.counts)
    })?;
    snaps.finish()?;
    let (e0, e1) = (start.total_energy(), end.total_energy());
    write_json(
        &out.join("summary.json"),
        &SplittingSummary {
            n,
            periods,
            fired_cells: stats.fired_cells,
            nonempty_cell_visits: stats.nonempty_cells,
            kac_collisions: stats.collisions,
            conservation: ConservationSummary {
                mass: [n as f64; 2],
                momentum: [start.total_momentum(), end.total_momentum()],
                energy: [e0, e1],
            },
        },
    )?;
    Ok(RunOutcome {
        lines: vec![
            format!("{periods} periods, {} cells thermalized", stats.fired_cells),
            format!("energy drift {:.3e} (relative)", (e1 - e0).abs() / e0.abs().max(f64::MIN_POSITIVE)),
        ],
    })
}

/// Solver snapshots: times and node moments; also the final field.
pub(crate) struct SolverRun {
    pub times: Vec<f64>,
    pub nodes: Vec<Vec<HydroMoments>>,
    pub field: DistributionField,
    pub initial_totals: (f64, Vec3, f64),
    pub steps: u64,
}

pub(crate) fn run_solver(
    cfg: &RunConfig,
    t_end: f64,
    mut sink: impl FnMut(f64, &DistributionField, &[HydroMoments]) -> Result<()>,
) -> Result<SolverRun> {
    let grid = solver_grid(cfg)?;
    let initial = cfg.initial.clone().unwrap_or_default();
    let t_max = initial.max_temperature()?;
    solver::check_truncation(&grid.lattice, vec3::ZERO, t_max, 1e-6);
    let mut f = initial.prepare()?.discretize(&grid)?;
    let totals = f.totals();
    let dt = cfg.solver.as_ref().map(|s| s.dt).unwrap_or(0.005);
    let schedule = SolveSchedule {
        t_end,
        dt,
        snapshot_every: cfg.snapshot_every(dt),
    };
    let mut times = Vec::new();
    let mut nodes = Vec::new();
    let steps = solver::solve(&mut f, &schedule, |t, field| {
        let m = solver::moments(field);
        sink(t, field, &m)?;
        times.push(t);
        nodes.push(m);
        Ok(())
    })?;
    Ok(SolverRun {
        times,
        nodes,
        field: f,
        initial_totals: totals,
        steps,
    })
}

#[derive(Serialize)]
struct SolveSummary {
    steps: u64,
    tail_mass: f64,
    conservation: ConservationSummary,
}

fn solve_bgk(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let t_end = required(cfg.t_end, "t_end")?;
    let dump = cfg.solver.as_ref().is_some_and(|s| s.dump_snapshots);
    let mut writer = NdjsonWriter::create(&out.join("moments.ndjson"))?;
    let mut k = 0usize;
    let run = run_solver(cfg, t_end, |t, field, m| {
        writer.write_nodes(t, m)?;
        if dump {
            let f = fs::File::create(out.join(format!("field_{k:04}.bin")))?;
            solver::io::write_field(std::io::BufWriter::new(f), field, t)?;
        }
        k += 1;
        Ok(())
    })?;
    writer.finish()?;
    let f = fs::File::create(out.join("field_final.bin"))?;
    solver::io::write_field(std::io::BufWriter::new(f), &run.field, t_end)?;
    let totals = run.field.totals();
    let grid = solver_grid(cfg)?;
    let t_max = cfg.initial.clone().unwrap_or_default().max_temperature()?;
    write_json(
        &out.join("summary.json"),
        &SolveSummary {
            steps: run.steps,
            tail_mass: grid.lattice.gaussian_tail_mass(vec3::ZERO, t_max),
            conservation: ConservationSummary {
                mass: [run.initial_totals.0, totals.0],
                momentum: [run.initial_totals.1, totals.1],
                energy: [0.5 * run.initial_totals.2, 0.5 * totals.2],
            },
        },
    )?;
    Ok(RunOutcome {
        lines: vec![format!(
            "{} steps, mass drift {:.3e}",
            run.steps,
            (totals.0 - run.initial_totals.0).abs()
        )],
    })
}

/// Velocity marginal along `axis` of the solver nodes inside `cell`.
pub(crate) fn solver_cell_marginal(field: &DistributionField, grid: &CellGrid, cell: usize, axis: usize) -> MarginalReference {
    let lattice = field.grid().lattice;
    let layout = field.grid().layout;
    let m_v = lattice.m_v();
    let idx = grid.unlinear(cell);
    let mut weights = vec![0.0; m_v];
    for node in 0..layout.n_nodes() {
        let c = layout.node_center(node);
        let inside = match layout {
            SpatialLayout::Slab { .. } => grid.axis_cell(c[0]) == idx.i,
            SpatialLayout::Full { .. } => {
                grid.axis_cell(c[0]) == idx.i && grid.axis_cell(c[1]) == idx.j && grid.axis_cell(c[2]) == idx.k
            }
        };
        if !inside {
            continue;
        }
        for (k, f) in field.node(node).iter().enumerate() {
            let a = [k / (m_v * m_v), (k / m_v) % m_v, k % m_v][axis];
            weights[a] += f;
        }
    }
    MarginalReference::Lattice {
        first: -lattice.v_max(),
        spacing: lattice.spacing(),
        weights,
    }
}

fn compare(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let n = required(cfg.n, "n")?;
    let m = required(cfg.m, "m")?;
    let tau = required(cfg.tau, "tau")?;
    let periods = required(cfg.n_periods, "n_periods")?;
    let t_end = periods as f64 * tau;
    let split = splitting_config(cfg, m, tau, cfg.epsilon)?;
    let grid = split.grid;
    let streams = Substreams::new(cfg.seed);

    let layout = solver_grid(cfg)?.layout;
    let mut solver_out = NdjsonWriter::create(&out.join("solver_cells.ndjson"))?;
    let solver_run = run_solver(cfg, t_end, |t, _, nodes| {
        let cells = project_to_cells(nodes, &layout, &grid)?;
        solver_out.write_cells(t, RecordKind::SolverCells, &cells.moments, &[])
    })?;
    solver_out.finish()?;

    let mut particles_out = NdjsonWriter::create(&out.join("particles.ndjson"))?;
    let mut distances = NdjsonWriter::create(&out.join("distances.ndjson"))?;
    let mut snapshots = Vec::new();
    let (_, _, end) = splitting_trajectory(cfg, &split, n, periods, &streams, |t, f| {
        particles_out.write_cells(t, RecordKind::Particles, &f.moments, &f.counts)?;
        let k = nearest(&solver_run.times, t);
        let reference = project_to_cells(&solver_run.nodes[k], &layout, &grid)?;
        let d = SnapshotComparison {
            t,
            distance: field_distance(&f.moments, &reference.moments)?,
        };
        distances.write(&d)?;
        snapshots.push(d);
        Ok(())
    })?;
    particles_out.finish()?;
    distances.finish()?;

    let c = cfg.compare.clone().unwrap_or_default();
    let mut ks = Vec::new();
    for &cell in &c.ks_cells {
        let reference = solver_cell_marginal(&solver_run.field, &grid, cell, c.ks_axis);
        match comparison::marginal_ks(&end, &grid, cell, c.ks_axis, &reference) {
            Ok(p) => ks.push(p),
            Err(Error::InsufficientSample { got, need }) => {
                warn!("skipping KS probe of cell {cell}: {got} particles, need {need}")
            }
            Err(e) => return Err(e),
        }
    }
    let report = ComparisonReport {
        metadata: ReportMetadata {
            n,
            tau: Some(tau),
            epsilon: cfg.epsilon,
            cell_volume: grid.cell_volume(),
            seeds: 1,
        },
        snapshots,
        ks,
    };
    write_json(&out.join("report.json"), &report)?;
    let last = report.snapshots.last().expect("final snapshot").distance;
    Ok(RunOutcome {
        lines: vec![format!(
            "t = {t_end}: d_rho = {:.4}, d_u = {:.4}, d_T = {:.4}",
            last.d_rho, last.d_u, last.d_t
        )],
    })
}

pub(crate) fn nearest(times: &[f64], t: f64) -> usize {
    (0..times.len())
        .min_by(|&a, &b| (times[a] - t).abs().total_cmp(&(times[b] - t).abs()))
        .expect("nonempty snapshot list")
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let table = comparison::study::convergence_study(cfg)?;
    let path = out.join("sweep.csv");
    table.write_csv(&path)?;
    Ok(RunOutcome {
        lines: vec![format!("{} rows written to {}", table.rows.len(), path.display())],
    })
}

#[derive(Serialize)]
struct SphereRow {
    n: usize,
    exact: f64,
    asymptotic: f64,
    relative_error: f64,
}

#[derive(Serialize)]
struct ConstraintRow {
    n: usize,
    momentum_error: f64,
    energy_error: f64,
}

#[derive(Serialize)]
struct KsRow {
    n: usize,
    samples: usize,
    statistic: f64,
    p_value: f64,
}

#[derive(Serialize)]
struct DeviationRow {
    n: usize,
    sup_deviation: f64,
    n_times_deviation: f64,
}

#[derive(Serialize)]
struct MicrocanonicalReport {
    temperature: f64,
    four_over_pi_squared: f64,
    sphere_ratio: Vec<SphereRow>,
    constraints: Vec<ConstraintRow>,
    coordinate_ks: Vec<KsRow>,
    deviation_from_maxwellian: Vec<DeviationRow>,
    domination_c1: f64,
    domination_c2: f64,
}

fn microcanonical_report(cfg: &RunConfig, out: &Path) -> Result<RunOutcome> {
    let mc = cfg.microcanonical.clone().unwrap_or_default();
    let t = mc.temperature;
    let streams = Substreams::new(cfg.seed);
    let p = [0.3, -0.2, 0.1];

    let sphere_ratio = mc
        .sphere_ratio_n
        .iter()
        .map(|&n| {
            let r = sphere_ratio_asymptotic_check(n)?;
            Ok(SphereRow {
                n,
                exact: r.exact,
                asymptotic: r.asymptotic,
                relative_error: r.relative_error(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let constraints = [2usize, 3, 10, 100]
        .iter()
        .map(|&n| {
            let params = EnsembleParams::with_temperature(n, p, t)?;
            let block = sample_microcanonical(&params, &mut streams.stream("mc-constraints", &[n as u64]));
            let vs = block.as_slice();
            let mean = vec3::scale(vec3::sum(vs), 1.0 / n as f64);
            let e = vec3::sum_norm2(vs) / (2.0 * n as f64);
            Ok(ConstraintRow {
                n,
                momentum_error: vec3::norm(vec3::sub(mean, p)),
                energy_error: (e - params.energy()).abs() / params.energy(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let coordinate_ks = mc
        .ks_n
        .iter()
        .map(|&n| {
            let params = EnsembleParams::with_temperature(n, p, t)?;
            let mut rng = streams.stream("mc-ks", &[n as u64]);
            // one coordinate of one particle per independent block
            let mut xs: Vec<f64> = (0..mc.ks_samples)
                .map(|_| {
                    let b = sample_microcanonical(&params, &mut rng);
                    b.as_slice()[rng.random_range(0..n)][0]
                })
                .collect();
            let d = ks_statistic(&mut xs, |x| coordinate_marginal_cdf(x, 0, &params));
            Ok(KsRow {
                n,
                samples: mc.ks_samples,
                statistic: d,
                p_value: ks_p_value(d, mc.ks_samples),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let deviation_from_maxwellian = mc
        .deviation_n
        .iter()
        .map(|&n| {
            let d = max_deviation_from_maxwellian(&EnsembleParams::with_temperature(n, p, t)?, 5.0)?;
            Ok(DeviationRow {
                n,
                sup_deviation: d,
                n_times_deviation: n as f64 * d,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let dom = domination_constants(t)?;
    let report = MicrocanonicalReport {
        temperature: t,
        four_over_pi_squared: 4.0 / (PI * PI),
        sphere_ratio,
        constraints,
        coordinate_ks,
        deviation_from_maxwellian,
        domination_c1: dom.c1,
        domination_c2: dom.c2,
    };
    write_json(&out.join("report.json"), &report)?;
    let mut lines = vec![format!("4/pi^2 = {:.15}", report.four_over_pi_squared)];
    for r in &report.sphere_ratio {
        lines.push(format!(
            "sphere ratio n = {:>5}: exact {:.12e}, asymptotic {:.12e}, relative error {:+.4e}",
            r.n, r.exact, r.asymptotic, r.relative_error
        ));
    }
    for r in &report.coordinate_ks {
        lines.push(format!("coordinate KS n = {}: D = {:.5}, p = {:.4}", r.n, r.statistic, r.p_value));
    }
    for r in &report.deviation_from_maxwellian {
        lines.push(format!("sup |g_n - M| n = {}: {:.4e}", r.n, r.sup_deviation));
    }
    info!("microcanonical report written to {}", out.display());
    Ok(RunOutcome { lines })
}
