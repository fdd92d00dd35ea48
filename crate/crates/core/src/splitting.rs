//! Free-flow / thermalization splitting dynamics.
//!
//! Each period moves every particle freely for `τ`, then visits every cell:
//! with probability `τN_Δ/n` the cell's velocities are thermalized with
//! positions frozen, otherwise nothing happens. Thermalization is either an
//! accelerated in-cell Kac process run for time `τ/ε`, or its `ε → 0` limit,
//! a fresh draw from the microcanonical measure at the cell's empirical
//! energy and momentum. The observer clock advances by `τ` per period.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::CellGrid;
use crate::kac::{collide_uniform_pairs, for_each_cell_velocities, ParticleEnsemble};
use crate::microcanonical::{fill_microcanonical, EnsembleParams};
use crate::rng::Substreams;
use crate::vec3::{self, Vec3};

/// How a fired cell is brought to equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Thermalization {
    /// In-cell Kac collisions for time `τ/epsilon`.
    Kac { epsilon: f64 },
    /// Exact resampling on the cell's constant-(E, P) manifold.
    MicrocanonicalLimit,
}

/// Per-cell firing probability per period.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FiringRate {
    /// `τN_Δ/n`, the rule as stated. Over a unit of kinetic time a cell
    /// relaxes at rate `N_Δ/n ≈ ρ|Δ|`.
    #[default]
    CellFraction,
    /// `τN_Δ/(n|Δ|)`, which relaxes at the local density `ρ` as in the BGK
    /// collision term.
    CellDensity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplittingConfig {
    pub tau: f64,
    pub thermalization: Thermalization,
    pub grid: CellGrid,
    pub firing: FiringRate,
}

impl SplittingConfig {
    /// Checks `0 < τ <= 0.1` and, in Kac mode, `0 < ε <= τ/10`.
    pub fn new(tau: f64, thermalization: Thermalization, grid: CellGrid) -> Result<Self> {
        let cfg = SplittingConfig {
            tau,
            thermalization,
            grid,
            firing: FiringRate::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_firing(mut self, firing: FiringRate) -> Self {
        self.firing = firing;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 0.1) {
            return Err(Error::config(
                "tau",
                format!("must satisfy 0 < tau <= 0.1, got {}", self.tau),
            ));
        }
        if let Thermalization::Kac { epsilon } = self.thermalization {
            if !(epsilon > 0.0) {
                return Err(Error::config("epsilon", format!("must be positive, got {epsilon}")));
            }
            if epsilon > self.tau / 10.0 {
                return Err(Error::config(
                    "epsilon",
                    format!(
                        "must satisfy epsilon <= tau/10 = {}, got {epsilon}",
                        self.tau / 10.0
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Firing probability of a cell holding `count` of `n` particles.
    pub fn firing_probability(&self, count: usize, n: usize) -> f64 {
        let p = self.tau * count as f64 / n as f64;
        match self.firing {
            FiringRate::CellFraction => p,
            FiringRate::CellDensity => p / self.grid.cell_volume(),
        }
    }
}

/// Advects every particle by `tau`; velocities are untouched.
pub fn free_phase(ensemble: &mut ParticleEnsemble, tau: f64) {
    ensemble.free_flight(tau);
}

/// Counters from one thermalization phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ThermalizeStats {
    pub nonempty_cells: usize,
    pub fired_cells: usize,
    pub collisions: u64,
}

/// Visits every cell once; period `period` selects the random substreams.
pub fn thermalize_phase(
    ensemble: &mut ParticleEnsemble,
    config: &SplittingConfig,
    streams: &Substreams,
    period: u64,
) -> Result<ThermalizeStats> {
    let n = ensemble.len();
    let bins = ensemble.cell_bins(&config.grid);
    for c in 0..bins.n_cells() {
        let p = config.firing_probability(bins.count(c), n);
        if p > 1.0 {
            return Err(Error::config(
                "tau",
                format!(
                    "firing probability {p} exceeds 1 in cell {c} ({} of {n} particles); decrease tau",
                    bins.count(c)
                ),
            ));
        }
    }
    let pair_rate = 1.0 / (n as f64 * config.grid.cell_volume());
    let per_cell = for_each_cell_velocities(ensemble, &bins, |c, vs| {
        let k = vs.len();
        if k == 0 {
            return (false, false, 0);
        }
        let mut rng = streams.stream("thermalize", &[period, c as u64]);
        let fired = rng.random::<f64>() < config.firing_probability(k, n);
        if !fired || k < 2 {
            return (true, fired, 0);
        }
        let collisions = match config.thermalization {
            Thermalization::Kac { epsilon } => {
                let mean = config.tau / epsilon * 0.5 * (k * (k - 1)) as f64 * pair_rate;
                let count = rand_distr::Distribution::sample(
                    &rand_distr::Poisson::new(mean).expect("positive mean"),
                    &mut rng,
                ) as u64;
                collide_uniform_pairs(vs, count, &mut rng);
                count
            }
            Thermalization::MicrocanonicalLimit => {
                resample_cell(vs, &mut rng);
                0
            }
        };
        (true, true, collisions)
    });
    let mut stats = ThermalizeStats::default();
    for (nonempty, fired, collisions) in per_cell {
        stats.nonempty_cells += nonempty as usize;
        stats.fired_cells += fired as usize;
        stats.collisions += collisions;
    }
    Ok(stats)
}

/// Replaces `vs` by a microcanonical draw with the same `Σv` and `Σ|v|²`.
/// A cell whose velocities all coincide already sits on its (one-point)
/// manifold and is left alone.
fn resample_cell<R: Rng + ?Sized>(vs: &mut [Vec3], rng: &mut R) {
    let k = vs.len() as f64;
    let p = vec3::scale(vec3::sum(vs), 1.0 / k);
    let e = vec3::sum_norm2(vs) / (2.0 * k);
    if let Ok(params) = EnsembleParams::new(vs.len(), e, p) {
        fill_microcanonical(&params, rng, vs);
    }
}

/// Runs `n_periods` periods of free flight then thermalization, calling
/// `observer` on the initial state and after every period. The ensemble
/// clock (and the observer's time label) advances by `τ` per period.
pub fn run_splitting<F>(
    ensemble: &mut ParticleEnsemble,
    config: &SplittingConfig,
    n_periods: u64,
    streams: &Substreams,
    mut observer: F,
) -> Result<ThermalizeStats>
where
    F: FnMut(u64, &ParticleEnsemble, &ThermalizeStats),
{
    config.validate()?;
    let mut total = ThermalizeStats::default();
    observer(0, ensemble, &total);
    for period in 0..n_periods {
        free_phase(ensemble, config.tau);
        let s = thermalize_phase(ensemble, config, streams, period)?;
        total.nonempty_cells += s.nonempty_cells;
        total.fired_cells += s.fired_cells;
        total.collisions += s.collisions;
        observer(period + 1, ensemble, &s);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wrap;
    use crate::rng::seed_substream;
    use rand_distr::StandardNormal;

    fn ensemble(n: usize, seed: u64) -> ParticleEnsemble {
        let mut rng = seed_substream(seed, "split-test", &[]);
        let xs = (0..n)
            .map(|_| wrap([rng.random(), rng.random(), rng.random()]).unwrap())
            .collect();
        let vs = (0..n)
            .map(|_| [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)])
            .collect();
        ParticleEnsemble::new(xs, vs).unwrap()
    }

    #[test]
    fn config_validation() {
        let g = CellGrid::new(4).unwrap();
        assert!(SplittingConfig::new(0.05, Thermalization::Kac { epsilon: 0.005 }, g).is_ok());
        let e = SplittingConfig::new(0.05, Thermalization::Kac { epsilon: 0.01 }, g).unwrap_err();
        assert!(e.is_config_error());
        assert!(e.to_string().contains("epsilon <= tau/10"));
        assert!(SplittingConfig::new(0.2, Thermalization::MicrocanonicalLimit, g).is_err());
        assert!(SplittingConfig::new(0.0, Thermalization::MicrocanonicalLimit, g).is_err());
    }

    #[test]
    fn free_phase_matches_advect() {
        let e0 = ensemble(50, 1);
        let mut e = e0.clone();
        free_phase(&mut e, 0.3);
        for i in 0..50 {
            let x = crate::geometry::advect(&e0.positions()[i], e0.velocities()[i], 0.3).unwrap();
            assert_eq!(e.positions()[i], x);
        }
        assert_eq!(e.velocities(), e0.velocities());
        let mut z = e0.clone();
        free_phase(&mut z, 0.0);
        assert_eq!(z.positions(), e0.positions());
    }

    #[test]
    fn microcanonical_thermalization_preserves_cell_invariants() {
        let mut e = ensemble(400, 2);
        let grid = CellGrid::new(2).unwrap();
        // tau N_Δ/n ≈ 0.0125 per cell: force firing with the density rule at tau = 0.1
        let cfg = SplittingConfig::new(0.1, Thermalization::MicrocanonicalLimit, grid)
            .unwrap()
            .with_firing(FiringRate::CellDensity);
        let before = crate::comparison::empirical_moments(&e, &grid);
        let mut fired = 0;
        for period in 0..20 {
            fired += thermalize_phase(&mut e, &cfg, &Substreams::new(5), period).unwrap().fired_cells;
        }
        assert!(fired > 0);
        let after = crate::comparison::empirical_moments(&e, &grid);
        for (a, b) in before.moments.iter().zip(&after.moments) {
            for d in 0..3 {
                assert!((a.u[d] - b.u[d]).abs() < 1e-10);
            }
            assert!((a.temperature - b.temperature).abs() < 1e-10 * a.temperature);
        }
    }

    #[test]
    fn singleton_and_identical_cells_are_fixed() {
        let mut vs = vec![[1.0, 2.0, 3.0]; 4];
        resample_cell(&mut vs, &mut seed_substream(1, "x", &[]));
        assert_eq!(vs, vec![[1.0, 2.0, 3.0]; 4]);
    }

    #[test]
    fn firing_over_one_is_a_config_error() {
        // all particles in one of 64 cells: tau N_Δ/(n|Δ|) = 0.1·64 > 1
        let xs = (0..20).map(|i| wrap([0.01 * i as f64, 0.1, 0.1]).unwrap()).collect();
        let mut e = ParticleEnsemble::new(xs, vec![[0.0; 3]; 20]).unwrap();
        let cfg = SplittingConfig::new(0.1, Thermalization::MicrocanonicalLimit, CellGrid::new(4).unwrap())
            .unwrap()
            .with_firing(FiringRate::CellDensity);
        let err = thermalize_phase(&mut e, &cfg, &Substreams::new(1), 0).unwrap_err();
        assert!(err.is_config_error());
    }

    #[test]
    fn zero_periods_observe_initial_only() {
        let mut e = ensemble(100, 4);
        let cfg = SplittingConfig::new(0.05, Thermalization::MicrocanonicalLimit, CellGrid::new(2).unwrap()).unwrap();
        let mut times = Vec::new();
        run_splitting(&mut e, &cfg, 0, &Substreams::new(1), |k, ens, _| times.push((k, ens.time()))).unwrap();
        assert_eq!(times, vec![(0, 0.0)]);
    }

    #[test]
    fn kac_thermalization_conserves_globally() {
        let mut e = ensemble(1000, 6);
        let p0 = e.total_momentum();
        let e0 = e.total_energy();
        let cfg = SplittingConfig::new(0.1, Thermalization::Kac { epsilon: 0.001 }, CellGrid::new(2).unwrap())
            .unwrap()
            .with_firing(FiringRate::CellDensity);
        let mut labels = Vec::new();
        let total = run_splitting(&mut e, &cfg, 10, &Substreams::new(9), |_, ens, _| labels.push(ens.time())).unwrap();
        assert!(total.collisions > 0);
        assert!((labels[10] - 1.0).abs() < 1e-12);
        let p1 = e.total_momentum();
        for d in 0..3 {
            assert!((p0[d] - p1[d]).abs() < 1e-9 * e0.sqrt() * 1000f64.sqrt());
        }
        assert!((e0 - e.total_energy()).abs() < 1e-9 * e0);
    }
}
