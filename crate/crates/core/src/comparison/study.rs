//! Convergence sweeps of the splitting simulator against the solver.
//!
//! Each sweep axis is varied with the others frozen. The iterated limit
//! (ε → 0, then n → ∞, then τ → 0) is not attempted; the table reports the
//! trend along each axis and flags whether it is monotone.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::config::RunConfig;
use crate::harness::run::{nearest, run_solver, solver_grid, splitting_config, splitting_trajectory};
use crate::rng::Substreams;

use super::stats::RunningStats;
use super::{field_distance, project_to_cells};

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StudyPoint {
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    pub epsilon: Option<f64>,
}

/// Replica-averaged distances of one sweep point at one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub n: usize,
    pub m: usize,
    pub tau: f64,
    pub epsilon: Option<f64>,
    pub t: f64,
    pub replicas: usize,
    pub d_rho: f64,
    pub d_rho_se: f64,
    pub d_u: f64,
    pub d_t: f64,
    pub d_t_se: f64,
    pub excluded: f64,
    /// `d_rho` over its value at n/2, all else equal.
    pub rho_ratio_n_halved: Option<f64>,
    pub rho_decreases_with_n: Option<bool>,
    /// `d_t` over its value at 2τ, all else equal.
    pub t_ratio_tau_doubled: Option<f64>,
    /// Non-increasing within two combined standard errors.
    pub t_nonincreasing_with_tau: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Fraction of rows with an n/2 neighbor whose `d_rho` decreased.
    pub fn n_doubling_fraction(&self) -> Option<f64> {
        fraction(self.rows.iter().filter_map(|r| r.rho_decreases_with_n))
    }

    pub fn tau_halving_fraction(&self) -> Option<f64> {
        fraction(self.rows.iter().filter_map(|r| r.t_nonincreasing_with_tau))
    }
}

fn fraction(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let (mut yes, mut all) = (0usize, 0usize);
    for f in flags {
        all += 1;
        yes += f as usize;
    }
    (all > 0).then(|| yes as f64 / all as f64)
}

/// Sweep points in row-major order over (n, m, τ, ε). Empty axes fall back
/// to the base configuration.
pub fn sweep_points(cfg: &RunConfig) -> Result<Vec<StudyPoint>> {
    let s = cfg.sweep.clone().unwrap_or_default();
    if s.n.is_empty() && s.m.is_empty() && s.tau.is_empty() && s.epsilon.is_empty() {
        return Err(Error::config("sweep", "sweep is empty; give at least one axis"));
    }
    let axis = |list: &Vec<usize>, base: Option<usize>, key: &str| -> Result<Vec<usize>> {
        match (list.is_empty(), base) {
            (false, _) => Ok(list.clone()),
            (true, Some(b)) => Ok(vec![b]),
            (true, None) => Err(Error::config(key, "no sweep values and no base value")),
        }
    };
    let ns = axis(&s.n, cfg.n, "sweep.n")?;
    let ms = axis(&s.m, cfg.m, "sweep.m")?;
    let taus = match (s.tau.is_empty(), cfg.tau) {
        (false, _) => s.tau.clone(),
        (true, Some(t)) => vec![t],
        (true, None) => return Err(Error::config("sweep.tau", "no sweep values and no base value")),
    };
    let eps: Vec<Option<f64>> = if s.epsilon.is_empty() {
        vec![cfg.epsilon]
    } else {
        s.epsilon.iter().map(|&e| Some(e)).collect()
    };
    let mut points = Vec::new();
    for &n in &ns {
        for &m in &ms {
            for &tau in &taus {
                for &epsilon in &eps {
                    points.push(StudyPoint { n, m, tau, epsilon });
                }
            }
        }
    }
    Ok(points)
}

/// Runs every sweep point against one solver reference and tabulates the
/// replica-averaged distances at each particle snapshot.
pub fn convergence_study(cfg: &RunConfig) -> Result<StudyTable> {
    let points = sweep_points(cfg)?;
    let replicas = cfg.sweep.as_ref().map_or(1, |s| s.replicas.max(1));
    let t_end = cfg.t_end.ok_or_else(|| Error::config("t_end", "required for a sweep"))?;
    let layout = solver_grid(cfg)?.layout;
    let reference = run_solver(cfg, t_end, |_, _, _| Ok(()))?;

    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..replicas).map(move |r| (p, r)))
        .collect();
    // (t, d_rho, d_u, d_t, excluded) per snapshot
    let traces: Vec<Vec<(f64, f64, f64, f64, usize)>> = jobs
        .par_iter()
        .map(|&(p, r)| {
            let pt = points[p];
            let split = splitting_config(cfg, pt.m, pt.tau, pt.epsilon)?;
            let periods = (t_end / pt.tau).round() as u64;
            let streams = Substreams::new(cfg.seed).child(r as u64);
            let mut trace = Vec::new();
            splitting_trajectory(cfg, &split, pt.n, periods, &streams, |t, f| {
                let k = nearest(&reference.times, t);
                let cells = project_to_cells(&reference.nodes[k], &layout, &split.grid)?;
                let d = field_distance(&f.moments, &cells.moments)?;
                trace.push((t, d.d_rho, d.d_u, d.d_t, d.excluded));
                Ok(())
            })?;
            Ok(trace)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    for (p, pt) in points.iter().enumerate() {
        let reps = &traces[p * replicas..(p + 1) * replicas];
        for (s, &(t, ..)) in reps[0].iter().enumerate() {
            let (mut rho, mut u, mut temp, mut ex) = (
                RunningStats::new(),
                RunningStats::new(),
                RunningStats::new(),
                RunningStats::new(),
            );
            for rep in reps {
                let (_, dr, du, dt, e) = rep[s];
                rho.push(dr);
                u.push(du);
                temp.push(dt);
                ex.push(e as f64);
            }
            let se = |st: &RunningStats| if replicas > 1 { st.std_error() } else { 0.0 };
            rows.push(StudyRow {
                n: pt.n,
                m: pt.m,
                tau: pt.tau,
                epsilon: pt.epsilon,
                t,
                replicas,
                d_rho: rho.mean(),
                d_rho_se: se(&rho),
                d_u: u.mean(),
                d_t: temp.mean(),
                d_t_se: se(&temp),
                excluded: ex.mean(),
                rho_ratio_n_halved: None,
                rho_decreases_with_n: None,
                t_ratio_tau_doubled: None,
                t_nonincreasing_with_tau: None,
            });
        }
    }
    flag_trends(&mut rows);
    Ok(StudyTable { rows })
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

fn flag_trends(rows: &mut [StudyRow]) {
    let snapshot = rows.to_vec();
    for r in rows.iter_mut() {
        let halved = snapshot.iter().find(|o| {
            2 * o.n == r.n && o.m == r.m && o.tau == r.tau && o.epsilon == r.epsilon && same_time(o.t, r.t)
        });
        if let Some(o) = halved {
            if o.d_rho > 0.0 {
                r.rho_ratio_n_halved = Some(r.d_rho / o.d_rho);
                r.rho_decreases_with_n = Some(r.d_rho < o.d_rho);
            }
        }
        let doubled = snapshot.iter().find(|o| {
            o.n == r.n && o.m == r.m && same_time(o.tau, 2.0 * r.tau) && o.epsilon == r.epsilon && same_time(o.t, r.t)
        });
        if let Some(o) = doubled {
            if o.d_t > 0.0 {
                r.t_ratio_tau_doubled = Some(r.d_t / o.d_t);
                let noise = 2.0 * (r.d_t_se.powi(2) + o.d_t_se.powi(2)).sqrt();
                r.t_nonincreasing_with_tau = Some(r.d_t <= o.d_t + noise);
            }
        }
    }
}
