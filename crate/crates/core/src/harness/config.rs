//! Run configuration: JSON document, defaults, validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kac::ScalingPreset;
use crate::splitting::FiringRate;

use super::initial::InitialCondition;

/// What a run does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    KacCell,
    KacBall,
    Splitting,
    BgkSolve,
    MicrocanonicalTest,
    Compare,
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThermalizationKind {
    #[default]
    MicrocanonicalLimit,
    Kac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FiringKind {
    #[default]
    CellFraction,
    CellDensity,
}

impl From<FiringKind> for FiringRate {
    fn from(k: FiringKind) -> Self {
        match k {
            FiringKind::CellFraction => FiringRate::CellFraction,
            FiringKind::CellDensity => FiringRate::CellDensity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutKind {
    #[default]
    Slab,
    Full,
}

/// Discrete-velocity solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub layout: LayoutKind,
    #[serde(default = "default_nx")]
    pub nx: usize,
    #[serde(default = "default_m_v")]
    pub m_v: usize,
    /// Defaults to `6·sqrt(T_max)` of the initial condition.
    #[serde(default)]
    pub v_max: Option<f64>,
    #[serde(default = "default_solver_dt")]
    pub dt: f64,
    /// Also write the field at every snapshot, not only the final one.
    #[serde(default)]
    pub dump_snapshots: bool,
}

fn default_nx() -> usize {
    64
}
fn default_m_v() -> usize {
    33
}
fn default_solver_dt() -> f64 {
    0.005
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            layout: LayoutKind::Slab,
            nx: default_nx(),
            m_v: default_m_v(),
            v_max: None,
            dt: default_solver_dt(),
            dump_snapshots: false,
        }
    }
}

/// Observation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotConfig {
    /// Time between snapshots; defaults to a tenth of the run.
    #[serde(default)]
    pub interval: Option<f64>,
    /// Velocity histogram of one component, `[axis, lo, hi, bins]`.
    #[serde(default)]
    pub histogram: Option<HistogramConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

/// Cells whose velocity marginal is tested in `compare` runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default)]
    pub ks_cells: Vec<usize>,
    #[serde(default)]
    pub ks_axis: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            ks_cells: vec![0],
            ks_axis: 0,
        }
    }
}

/// Axes of a convergence sweep. Empty lists fall back to the base value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub m: Vec<usize>,
    #[serde(default)]
    pub tau: Vec<f64>,
    /// Kac acceleration values; only used with Kac thermalization.
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default = "one")]
    pub replicas: usize,
}

fn one() -> usize {
    1
}

/// Settings of the microcanonical report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrocanonicalConfig {
    #[serde(default = "default_ratio_ns")]
    pub sphere_ratio_n: Vec<usize>,
    #[serde(default = "default_ks_ns")]
    pub ks_n: Vec<usize>,
    #[serde(default = "default_ks_samples")]
    pub ks_samples: usize,
    #[serde(default = "default_deviation_ns")]
    pub deviation_n: Vec<usize>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
}

fn default_ratio_ns() -> Vec<usize> {
    vec![3, 10, 50, 100, 1000]
}
fn default_ks_ns() -> Vec<usize> {
    vec![5, 10, 50]
}
fn default_ks_samples() -> usize {
    100_000
}
fn default_deviation_ns() -> Vec<usize> {
    vec![10, 50, 100, 200]
}
fn default_temperature() -> f64 {
    1.0
}

impl Default for MicrocanonicalConfig {
    fn default() -> Self {
        MicrocanonicalConfig {
            sphere_ratio_n: default_ratio_ns(),
            ks_n: default_ks_ns(),
            ks_samples: default_ks_samples(),
            deviation_n: default_deviation_ns(),
            temperature: default_temperature(),
        }
    }
}

/// A complete run description. After [`load_config`] every optional knob
/// the mode needs has been filled in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub n: Option<usize>,
    /// Cells per side of the particle grid.
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub tau: Option<f64>,
    /// Kac acceleration (splitting) or interaction range (kac-ball).
    #[serde(default)]
    pub epsilon: Option<f64>,
    /// Ball-mode scaling `ε = n^{-1/α}`; mutually exclusive with `epsilon`.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub thermalization: Option<ThermalizationKind>,
    #[serde(default)]
    pub firing: Option<FiringKind>,
    /// Particle time step (kac modes).
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub n_periods: Option<u64>,
    #[serde(default)]
    pub initial: Option<InitialCondition>,
    #[serde(default)]
    pub snapshots: Option<SnapshotConfig>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub microcanonical: Option<MicrocanonicalConfig>,
    /// Output directory; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    /// A config with only the mode set; [`RunConfig::finalize`] fills the rest.
    pub fn new(mode: RunMode) -> Self {
        RunConfig {
            mode,
            seed: 0,
            n: None,
            m: None,
            tau: None,
            epsilon: None,
            alpha: None,
            thermalization: None,
            firing: None,
            dt: None,
            t_end: None,
            n_periods: None,
            initial: None,
            snapshots: None,
            solver: None,
            compare: None,
            sweep: None,
            microcanonical: None,
            output: None,
        }
    }

    fn uses_particles(&self) -> bool {
        !matches!(self.mode, RunMode::BgkSolve | RunMode::MicrocanonicalTest)
    }

    fn uses_splitting(&self) -> bool {
        matches!(self.mode, RunMode::Splitting | RunMode::Compare | RunMode::Sweep)
    }

    fn uses_solver(&self) -> bool {
        matches!(self.mode, RunMode::BgkSolve | RunMode::Compare | RunMode::Sweep)
    }

    /// Fills mode-dependent defaults and checks every constraint. All
    /// violations are reported together.
    pub fn finalize(mut self) -> Result<Self> {
        let mut problems: Vec<(String, String)> = Vec::new();
        let mut bad = |path: &str, msg: String| problems.push((path.to_string(), msg));

        if self.mode == RunMode::MicrocanonicalTest {
            let mc = self.microcanonical.get_or_insert_with(Default::default);
            if !(mc.temperature > 0.0) {
                bad("microcanonical.temperature", format!("must be positive, got {}", mc.temperature));
            }
            if mc.sphere_ratio_n.iter().any(|&n| n < 3) {
                bad("microcanonical.sphere_ratio_n", "entries must be >= 3".into());
            }
            if mc.ks_n.iter().chain(&mc.deviation_n).any(|&n| n < 3) {
                bad("microcanonical", "ks_n and deviation_n entries must be >= 3".into());
            }
            if mc.ks_samples < 10 {
                bad("microcanonical.ks_samples", "must be at least 10".into());
            }
            return finish(self, problems);
        }

        if self.initial.is_none() {
            self.initial = Some(InitialCondition::default());
        }
        if self.mode == RunMode::Sweep {
            // sweep axes stand in for missing base values
            if let Some(s) = &self.sweep {
                if self.n.is_none() {
                    self.n = s.n.first().copied();
                }
                if self.m.is_none() {
                    self.m = s.m.first().copied();
                }
                if self.tau.is_none() {
                    self.tau = s.tau.iter().copied().reduce(f64::max);
                }
                if self.epsilon.is_none() {
                    self.epsilon = s.epsilon.iter().copied().reduce(f64::min);
                }
            }
        }
        if let Err(e) = self.initial.as_ref().expect("set above").validate() {
            bad("initial", e.to_string());
        }

        if self.uses_particles() {
            match self.n {
                None => bad("n", "required for particle runs".into()),
                Some(n) if n < 2 => bad("n", format!("need at least 2 particles, got {n}")),
                _ => {}
            }
            let m = *self.m.get_or_insert(1);
            if m == 0 {
                bad("m", "must be at least 1".into());
            }
        }

        if self.uses_splitting() {
            let th = *self.thermalization.get_or_insert(ThermalizationKind::default());
            self.firing.get_or_insert(FiringKind::default());
            match self.tau {
                None => bad("tau", "required for splitting runs".into()),
                Some(t) if !(t > 0.0 && t <= 0.1) => bad("tau", format!("must satisfy 0 < tau <= 0.1, got {t}")),
                _ => {}
            }
            if th == ThermalizationKind::Kac {
                match (self.epsilon, self.tau) {
                    (None, _) => bad("epsilon", "required with kac thermalization".into()),
                    (Some(e), _) if !(e > 0.0) => bad("epsilon", format!("must be positive, got {e}")),
                    (Some(e), Some(t)) if e > t / 10.0 => {
                        bad("epsilon", format!("must satisfy epsilon <= tau/10 = {}, got {e}", t / 10.0))
                    }
                    _ => {}
                }
            } else if let (Some(e), Some(t)) = (self.epsilon, self.tau) {
                // still enforce the scale separation if epsilon is given
                if e > t / 10.0 {
                    bad("epsilon", format!("must satisfy epsilon <= tau/10 = {}, got {e}", t / 10.0));
                }
            }
            match (self.t_end, self.n_periods, self.tau) {
                (None, None, _) => bad("t_end", "give t_end or n_periods".into()),
                (Some(t), None, Some(tau)) if t >= 0.0 => self.n_periods = Some((t / tau).round() as u64),
                (None, Some(k), Some(tau)) => self.t_end = Some(k as f64 * tau),
                (Some(t), Some(k), Some(tau)) if (k as f64 * tau - t).abs() > 1e-9 * t.max(1.0) => {
                    bad("n_periods", format!("{k} periods of tau = {tau} do not end at t_end = {t}"))
                }
                _ => {}
            }
        }

        if matches!(self.mode, RunMode::KacCell | RunMode::KacBall) {
            let dt = *self.dt.get_or_insert(1e-3);
            if !(dt > 0.0) {
                bad("dt", format!("must be positive, got {dt}"));
            }
        }
        if self.mode == RunMode::KacBall {
            match (self.epsilon, self.alpha) {
                (Some(_), Some(_)) => bad("alpha", "give either epsilon or alpha, not both".into()),
                (None, None) => bad("epsilon", "kac-ball needs epsilon or alpha".into()),
                (Some(e), None) if !(e > 0.0 && e < 0.5) => {
                    bad("epsilon", format!("ball range must lie in (0, 1/2), got {e}"))
                }
                (None, Some(a)) => match ScalingPreset::new(a) {
                    Err(e) => bad("alpha", e.to_string()),
                    Ok(p) => {
                        if let Some(n) = self.n {
                            let e = p.epsilon(n);
                            if e >= 0.5 {
                                bad("alpha", format!("n^(-1/alpha) = {e} is not below 1/2"));
                            }
                        }
                    }
                },
                _ => {}
            }
        }

        match self.t_end {
            None => bad("t_end", "required".into()),
            Some(t) if !(t >= 0.0) || !t.is_finite() => bad("t_end", format!("must be >= 0, got {t}")),
            _ => {}
        }

        if self.uses_solver() {
            let t_max = self.initial.as_ref().and_then(|ic| ic.max_temperature().ok());
            let s = self.solver.get_or_insert_with(Default::default);
            if s.m_v < 3 || s.m_v % 2 == 0 {
                bad("solver.m_v", format!("must be odd and >= 3, got {}", s.m_v));
            }
            if s.nx == 0 {
                bad("solver.nx", "must be positive".into());
            }
            if !(s.dt > 0.0) {
                bad("solver.dt", format!("must be positive, got {}", s.dt));
            }
            if let Some(t_max) = t_max {
                let v = *s.v_max.get_or_insert(6.0 * t_max.sqrt());
                if v < 5.0 * t_max.sqrt() {
                    bad(
                        "solver.v_max",
                        format!("must be at least 5·sqrt(T_max) = {}, got {v}", 5.0 * t_max.sqrt()),
                    );
                }
            }
        }

        if self.mode == RunMode::Compare {
            let c = self.compare.get_or_insert_with(Default::default);
            if c.ks_axis > 2 {
                bad("compare.ks_axis", format!("must be 0, 1 or 2, got {}", c.ks_axis));
            }
            if let Some(m) = self.m {
                if let Some(&c) = c.ks_cells.iter().find(|&&c| c >= m * m * m) {
                    bad("compare.ks_cells", format!("cell {c} outside the {m}^3 grid"));
                }
            }
        }

        if self.mode == RunMode::Sweep {
            let s = self.sweep.get_or_insert_with(Default::default);
            if s.replicas == 0 {
                bad("sweep.replicas", "must be at least 1".into());
            }
            if s.n.iter().any(|&n| n < 2) {
                bad("sweep.n", "entries must be >= 2".into());
            }
            if s.tau.iter().any(|&t| !(t > 0.0 && t <= 0.1)) {
                bad("sweep.tau", "entries must satisfy 0 < tau <= 0.1".into());
            }
        }

        if let Some(t_end) = self.t_end {
            let snap = self.snapshots.get_or_insert(SnapshotConfig {
                interval: None,
                histogram: None,
            });
            let iv = *snap.interval.get_or_insert(if t_end > 0.0 { t_end / 10.0 } else { 1.0 });
            if !(iv > 0.0) {
                bad("snapshots.interval", format!("must be positive, got {iv}"));
            }
            if let Some(h) = snap.histogram {
                if h.axis > 2 || h.bins == 0 || !(h.hi > h.lo) {
                    bad("snapshots.histogram", "needs axis in 0..3, bins > 0 and hi > lo".into());
                }
            }
        }

        finish(self, problems)
    }

    /// Interaction range of a kac-ball run.
    pub fn ball_epsilon(&self) -> Option<f64> {
        match (self.epsilon, self.alpha, self.n) {
            (Some(e), _, _) => Some(e),
            (None, Some(a), Some(n)) => ScalingPreset::new(a).ok().map(|p| p.epsilon(n)),
            _ => None,
        }
    }

    /// Steps between snapshots for a stepper with step `dt`.
    pub fn snapshot_every(&self, dt: f64) -> usize {
        let iv = self.snapshots.as_ref().and_then(|s| s.interval).unwrap_or(dt);
        ((iv / dt).round() as usize).max(1)
    }
}

fn finish(cfg: RunConfig, problems: Vec<(String, String)>) -> Result<RunConfig> {
    match problems.len() {
        0 => Ok(cfg),
        1 => {
            let (p, m) = problems.into_iter().next().expect("one problem");
            Err(Error::config(p, m))
        }
        _ => {
            let path = problems[0].0.clone();
            let all: Vec<String> = problems.iter().map(|(p, m)| format!("`{p}`: {m}")).collect();
            Err(Error::config(path, all.join("; ")))
        }
    }
}

/// Parses a JSON config string; unknown keys and type errors name the key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path.is_empty() { ".".into() } else { path }, e.into_inner().to_string())
    })?;
    cfg.finalize()
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    parse_config(&text)
}
