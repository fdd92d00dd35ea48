//! Initial data `f₀`, shared by the particle sampler and the solver
//! discretizer.
//!
//! Particle initial data are `n` i.i.d. draws from `f₀`. Densities are
//! normalized to unit mass on the torus, so the `rho` of a global Maxwellian
//! only fixes the shape, which is uniform.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap, TorusPoint};
use crate::kac::ParticleEnsemble;
use crate::moments::HydroMoments;
use crate::rng::Substreams;
use crate::solver::{self, discrete_maxwellian, DistributionField, PhaseSpaceGrid};
use crate::vec3::{self, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    GlobalMaxwellian {
        #[serde(default = "unit")]
        rho: f64,
        #[serde(default)]
        u: Vec3,
        #[serde(default = "unit")]
        temperature: f64,
    },
    /// Uniform density at rest; temperature `t_left` for `x₁ < 1/2`.
    TwoTemperatureSlab { t_left: f64, t_right: f64 },
    /// `ρ(x) ∝ 1 + amplitude·sin(2π·wavenumber·x₁)` at rest.
    DensityWave {
        amplitude: f64,
        #[serde(default = "unit_k")]
        wavenumber: u32,
        #[serde(default = "unit")]
        temperature: f64,
    },
    /// A solver field dump.
    File { path: PathBuf },
}

fn unit() -> f64 {
    1.0
}
fn unit_k() -> u32 {
    1
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::GlobalMaxwellian {
            rho: 1.0,
            u: vec3::ZERO,
            temperature: 1.0,
        }
    }
}

/// A loaded initial condition, ready for sampling or discretization.
#[derive(Debug, Clone)]
pub enum PreparedInitial {
    Analytic(InitialCondition),
    Field {
        field: DistributionField,
        moments: Vec<HydroMoments>,
        cumulative: Vec<f64>,
    },
}

fn positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::invalid(format!("{name} must be positive and finite, got {x}")));
    }
    Ok(())
}

impl InitialCondition {
    pub fn validate(&self) -> Result<()> {
        match self {
            InitialCondition::GlobalMaxwellian { rho, u, temperature } => {
                positive("rho", *rho)?;
                positive("temperature", *temperature)?;
                if !vec3::is_finite(*u) {
                    return Err(Error::NonFinite("u"));
                }
            }
            InitialCondition::TwoTemperatureSlab { t_left, t_right } => {
                positive("t_left", *t_left)?;
                positive("t_right", *t_right)?;
            }
            InitialCondition::DensityWave {
                amplitude,
                wavenumber,
                temperature,
            } => {
                positive("temperature", *temperature)?;
                if !(amplitude.abs() <= 1.0) {
                    return Err(Error::invalid(format!(
                        "density-wave amplitude must lie in [-1, 1] for a nonnegative density, got {amplitude}"
                    )));
                }
                if *wavenumber == 0 {
                    return Err(Error::invalid("density-wave wavenumber must be at least 1"));
                }
            }
            InitialCondition::File { path } => {
                if path.as_os_str().is_empty() {
                    return Err(Error::invalid("initial-condition file path is empty"));
                }
            }
        }
        Ok(())
    }

    /// Largest temperature anywhere; used to size the velocity lattice.
    pub fn max_temperature(&self) -> Result<f64> {
        Ok(match self {
            InitialCondition::GlobalMaxwellian { temperature, .. } | InitialCondition::DensityWave { temperature, .. } => {
                *temperature
            }
            InitialCondition::TwoTemperatureSlab { t_left, t_right } => t_left.max(*t_right),
            InitialCondition::File { .. } => {
                let p = self.prepare()?;
                match p {
                    PreparedInitial::Field { moments, .. } => moments
                        .iter()
                        .filter(|m| !m.vacuum)
                        .map(|m| m.temperature)
                        .fold(0.0, f64::max),
                    PreparedInitial::Analytic(_) => unreachable!(),
                }
            }
        })
    }

    /// Reads file-backed data; analytic descriptors pass through.
    pub fn prepare(&self) -> Result<PreparedInitial> {
        self.validate()?;
        let InitialCondition::File { path } = self else {
            return Ok(PreparedInitial::Analytic(self.clone()));
        };
        let file = std::fs::File::open(path)?;
        let (field, _) = solver::io::read_field(std::io::BufReader::new(file))?;
        let moments = solver::moments(&field);
        let mut acc = 0.0;
        let cumulative: Vec<f64> = moments
            .iter()
            .map(|m| {
                acc += m.rho;
                acc
            })
            .collect();
        if !(acc > 0.0) {
            return Err(Error::invalid(format!("initial field {} has no mass", path.display())));
        }
        Ok(PreparedInitial::Field {
            field,
            moments,
            cumulative,
        })
    }
}

impl PreparedInitial {
    /// Unnormalized density at `x` (analytic descriptors only).
    fn density(ic: &InitialCondition, x: Vec3) -> f64 {
        match ic {
            InitialCondition::DensityWave {
                amplitude, wavenumber, ..
            } => 1.0 + amplitude * (2.0 * PI * *wavenumber as f64 * x[0]).sin(),
            _ => 1.0,
        }
    }

    /// Bulk velocity and temperature at `x` (analytic descriptors only).
    fn local(ic: &InitialCondition, x: Vec3) -> (Vec3, f64) {
        match ic {
            InitialCondition::GlobalMaxwellian { u, temperature, .. } => (*u, *temperature),
            InitialCondition::TwoTemperatureSlab { t_left, t_right } => {
                (vec3::ZERO, if x[0] < 0.5 { *t_left } else { *t_right })
            }
            InitialCondition::DensityWave { temperature, .. } => (vec3::ZERO, *temperature),
            InitialCondition::File { .. } => unreachable!("file data is node based"),
        }
    }

    /// Draws one `(x, v)` from `f₀`.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (TorusPoint, Vec3) {
        let (x, u, t) = match self {
            PreparedInitial::Analytic(ic) => {
                let bound = match ic {
                    InitialCondition::DensityWave { amplitude, .. } => 1.0 + amplitude.abs(),
                    _ => 1.0,
                };
                let x = loop {
                    let x: Vec3 = [rng.random(), rng.random(), rng.random()];
                    if bound == 1.0 || rng.random::<f64>() * bound < Self::density(ic, x) {
                        break x;
                    }
                };
                let (u, t) = Self::local(ic, x);
                (x, u, t)
            }
            PreparedInitial::Field {
                field,
                moments,
                cumulative,
            } => {
                let total = *cumulative.last().expect("nonempty");
                let r = rng.random::<f64>() * total;
                let node = cumulative.partition_point(|&c| c <= r).min(cumulative.len() - 1);
                let layout = field.grid().layout;
                let h = 1.0 / layout.nx() as f64;
                let c = layout.node_center(node);
                let mut x: Vec3 = [rng.random(), rng.random(), rng.random()];
                x[0] = c[0] + (x[0] - 0.5) * h;
                if let solver::SpatialLayout::Full { .. } = layout {
                    x[1] = c[1] + (x[1] - 0.5) * h;
                    x[2] = c[2] + (x[2] - 0.5) * h;
                }
                let m = moments[node];
                (x, m.u, m.temperature.max(0.0))
            }
        };
        let s = t.sqrt();
        let v = [
            u[0] + s * rng.sample::<f64, _>(StandardNormal),
            u[1] + s * rng.sample::<f64, _>(StandardNormal),
            u[2] + s * rng.sample::<f64, _>(StandardNormal),
        ];
        (wrap(x).expect("finite position"), v)
    }

    /// `n` i.i.d. particles. Particle `i` uses substream `("initial", [i])`,
    /// so the ensemble is independent of the worker count.
    pub fn sample(&self, n: usize, streams: &Substreams) -> Result<ParticleEnsemble> {
        let draws: Vec<(TorusPoint, Vec3)> = (0..n)
            .into_par_iter()
            .map(|i| self.draw(&mut streams.stream("initial", &[i as u64])))
            .collect();
        let (xs, vs) = draws.into_iter().unzip();
        ParticleEnsemble::new(xs, vs)
    }

    /// `f₀` on the solver grid, normalized to unit mass. Each node carries
    /// the moment-matched discrete Maxwellian of its local parameters.
    pub fn discretize(&self, grid: &PhaseSpaceGrid) -> Result<DistributionField> {
        match self {
            PreparedInitial::Field { field, .. } => {
                if field.grid() != grid {
                    return Err(Error::IncompatibleGrids(
                        "initial field dump does not match the configured solver grid".into(),
                    ));
                }
                let (mass, _, _) = field.totals();
                let values = field.values().iter().map(|x| x / mass).collect();
                DistributionField::from_values(*grid, values)
            }
            PreparedInitial::Analytic(ic) => {
                let layout = grid.layout;
                let nodes: Vec<Vec3> = (0..layout.n_nodes()).map(|i| layout.node_center(i)).collect();
                let raw: Vec<f64> = nodes.iter().map(|x| Self::density(ic, *x)).collect();
                let total = raw.iter().sum::<f64>() * layout.node_volume();
                let mut data = Vec::with_capacity(grid.n_values());
                for (x, r) in nodes.iter().zip(&raw) {
                    let (u, t) = Self::local(ic, *x);
                    data.extend(discrete_maxwellian(&HydroMoments::new(r / total, u, t), &grid.lattice)?);
                }
                DistributionField::from_values(*grid, data)
            }
        }
    }
}

/// Convenience: validate, prepare and sample.
pub fn sample_initial(ic: &InitialCondition, n: usize, streams: &Substreams) -> Result<ParticleEnsemble> {
    ic.prepare()?.sample(n, streams)
}
