//! The microcanonical velocity ensemble and its equivalence with the
//! Maxwellian.
//!
//! For `n` velocities constrained by `Σ|v_j|² = 2nE` and `Σv_j = nP`, the
//! uniform measure on the constraint manifold has a single-velocity marginal
//! supported in the ball of radius `sqrt(3T(n-1))` around `P`, where
//! `3T = 2E - |P|²`. As `n` grows this marginal converges to the Maxwellian
//! `M_{P,T}` at rate `O(1/n)`. Sphere areas are handled in log space
//! throughout; `|S^n|` overflows an `f64` for `n` of a few hundred.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// `(n, E, P, T)` with `3T = 2E - |P|²` and `T > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnsembleParams {
    n: usize,
    energy: f64,
    momentum: Vec3,
    temperature: f64,
}

impl EnsembleParams {
    /// `energy` and `momentum` are per-particle means.
    pub fn new(n: usize, energy: f64, momentum: Vec3) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewParticles {
                what: "microcanonical ensemble",
                min: 2,
                got: n,
            });
        }
        if !energy.is_finite() || !vec3::is_finite(momentum) {
            return Err(Error::NonFinite("ensemble parameters"));
        }
        let temperature = temperature_of(energy, momentum)?;
        Ok(EnsembleParams {
            n,
            energy,
            momentum,
            temperature,
        })
    }

    /// Parameters with prescribed mean velocity and temperature.
    pub fn with_temperature(n: usize, momentum: Vec3, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(Error::NonPositiveTemperature(temperature));
        }
        let energy = 0.5 * (3.0 * temperature + vec3::norm2(momentum));
        let mut p = Self::new(n, energy, momentum)?;
        p.temperature = temperature;
        Ok(p)
    }

    /// Empirical `(E, P)` of a block of velocities.
    pub fn from_velocities(vs: &[Vec3]) -> Result<Self> {
        let n = vs.len();
        if n < 2 {
            return Err(Error::TooFewParticles {
                what: "microcanonical ensemble",
                min: 2,
                got: n,
            });
        }
        let inv = 1.0 / n as f64;
        Self::new(n, 0.5 * vec3::sum_norm2(vs) * inv, vec3::scale(vec3::sum(vs), inv))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn momentum(&self) -> Vec3 {
        self.momentum
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Squared radius `3T(n-1)` of the single-velocity support ball.
    pub fn support_radius2(&self) -> f64 {
        3.0 * self.temperature * (self.n as f64 - 1.0)
    }
}

/// `T = (2E - |P|²)/3`.
pub fn temperature_of(energy: f64, momentum: Vec3) -> Result<f64> {
    let excess = 2.0 * energy - vec3::norm2(momentum);
    if !(excess > 0.0) {
        return Err(Error::DegenerateEnsemble(excess));
    }
    Ok(excess / 3.0)
}

/// `n` velocities on the constraint manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityBlock(Vec<Vec3>);

impl VelocityBlock {
    pub fn as_slice(&self) -> &[Vec3] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Vec3> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Uniform draw from the energy-momentum sphere.
pub fn sample_microcanonical<R: Rng + ?Sized>(params: &EnsembleParams, rng: &mut R) -> VelocityBlock {
    let mut out = vec![vec3::ZERO; params.n];
    fill_microcanonical(params, rng, &mut out);
    VelocityBlock(out)
}

/// Writes a uniform draw from the manifold into `out` (`out.len()` must be
/// `params.n()`).
///
/// Independent Gaussians projected onto the zero-sum subspace form an
/// isotropic Gaussian there; rescaling to the sphere `Σ|v - P|² = 3nT` gives
/// the uniform law.
pub fn fill_microcanonical<R: Rng + ?Sized>(params: &EnsembleParams, rng: &mut R, out: &mut [Vec3]) {
    assert_eq!(out.len(), params.n, "output block length must equal n");
    for v in out.iter_mut() {
        *v = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
    }
    let inv = 1.0 / params.n as f64;
    // second pass removes the rounding residue of the first
    for _ in 0..2 {
        let mean = vec3::scale(vec3::sum(out), inv);
        for v in out.iter_mut() {
            *v = vec3::sub(*v, mean);
        }
    }
    let target = 3.0 * params.n as f64 * params.temperature;
    let s = (target / vec3::sum_norm2(out)).sqrt();
    for v in out.iter_mut() {
        *v = vec3::add(params.momentum, vec3::scale(*v, s));
    }
}

/// `log |S^n| = log 2 + ((n+1)/2) log π - log Γ((n+1)/2)`.
pub fn log_sphere_area(n: i64) -> Result<f64> {
    if n < 0 {
        return Err(Error::invalid(format!("sphere dimension must be >= 0, got {n}")));
    }
    let h = (n as f64 + 1.0) / 2.0;
    Ok(2f64.ln() + h * PI.ln() - ln_gamma(h))
}

fn require_three(n: usize, what: &'static str) -> Result<()> {
    if n < 3 {
        return Err(Error::TooFewParticles { what, min: 3, got: n });
    }
    Ok(())
}

/// `log(|S^{3n-7}| / |S^{3n-4}|)`.
fn log_sphere_ratio(n: usize) -> f64 {
    let n = n as i64;
    log_sphere_area(3 * n - 7).unwrap() - log_sphere_area(3 * n - 4).unwrap()
}

/// The exact sphere-area ratio and its Stirling form `(3n/(2π))^{3/2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereRatio {
    pub exact: f64,
    pub asymptotic: f64,
}

impl SphereRatio {
    pub fn relative_error(&self) -> f64 {
        self.exact / self.asymptotic - 1.0
    }
}

pub fn sphere_ratio_asymptotic_check(n_particles: usize) -> Result<SphereRatio> {
    require_three(n_particles, "sphere ratio")?;
    Ok(SphereRatio {
        exact: log_sphere_ratio(n_particles).exp(),
        asymptotic: (3.0 * n_particles as f64 / (2.0 * PI)).powf(1.5),
    })
}

/// Log of the normalizing prefactor `[3T(n-1)]^{-3/2} |S^{3n-7}|/|S^{3n-4}|`.
fn log_prefactor(params: &EnsembleParams) -> f64 {
    -1.5 * params.support_radius2().ln() + log_sphere_ratio(params.n)
}

/// Single-velocity marginal density `g_n^{E,P}(v)` of the microcanonical
/// measure. Zero outside the support ball.
pub fn marginal_density(v: Vec3, params: &EnsembleParams) -> Result<f64> {
    require_three(params.n, "marginal density")?;
    let r2 = vec3::norm2(vec3::sub(v, params.momentum));
    Ok(radial_marginal(r2, params))
}

fn radial_marginal(r2: f64, params: &EnsembleParams) -> f64 {
    RadialMarginal::new(params).eval(r2)
}

/// `g_n` as a function of `|v - P|²`, with the gamma functions evaluated once.
struct RadialMarginal {
    big_r2: f64,
    exponent: f64,
    log_prefactor: f64,
}

impl RadialMarginal {
    fn new(params: &EnsembleParams) -> Self {
        RadialMarginal {
            big_r2: params.support_radius2(),
            exponent: (3.0 * params.n as f64 - 8.0) / 2.0,
            log_prefactor: log_prefactor(params),
        }
    }

    fn eval(&self, r2: f64) -> f64 {
        if r2 >= self.big_r2 {
            return 0.0;
        }
        (self.log_prefactor + self.exponent * (-r2 / self.big_r2).ln_1p()).exp()
    }
}

/// `M_{u,T}(v) = (2πT)^{-3/2} exp(-|v-u|²/(2T))`.
pub fn maxwellian_density(v: Vec3, u: Vec3, temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    Ok(maxwellian_unchecked(vec3::norm2(vec3::sub(v, u)), temperature))
}

#[inline]
pub(crate) fn maxwellian_unchecked(r2: f64, temperature: f64) -> f64 {
    (2.0 * PI * temperature).powf(-1.5) * (-r2 / (2.0 * temperature)).exp()
}

/// Exponent `b` of the one-coordinate marginal `∝ (1 - x²/R²)^b`.
fn coordinate_exponent(n: usize) -> f64 {
    (3.0 * n as f64 - 6.0) / 2.0
}

/// CDF of one Cartesian component of a single velocity under the
/// microcanonical measure. Valid for every `n >= 2`.
///
/// Integrating the radial marginal over the two transverse components gives
/// a density proportional to `(1 - ξ²)^{(3n-6)/2}` in `ξ = (v_a - P_a)/R`, so
/// `(ξ + 1)/2` is Beta-distributed.
pub fn coordinate_marginal_cdf(x: f64, axis: usize, params: &EnsembleParams) -> f64 {
    let r = params.support_radius2().sqrt();
    let xi = (x - params.momentum[axis]) / r;
    if xi <= -1.0 {
        return 0.0;
    }
    if xi >= 1.0 {
        return 1.0;
    }
    let b = coordinate_exponent(params.n) + 1.0;
    beta_reg(b, b, 0.5 * (xi + 1.0))
}

/// Constants `(C₁, C₂)` of a Gaussian bound `g_n(v) <= C₁ exp(-C₂|v-P|²)`
/// holding for every `n >= 3` at the given temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationBound {
    pub c1: f64,
    pub c2: f64,
}

impl DominationBound {
    pub fn bound(&self, v: Vec3, momentum: Vec3) -> f64 {
        self.c1 * (-self.c2 * vec3::norm2(vec3::sub(v, momentum))).exp()
    }
}

/// `C₂ = 1/(4T)`; `C₁` scales as `T^{-3/2}` from its value at `T = 1`.
pub fn domination_constants(temperature: f64) -> Result<DominationBound> {
    if !(temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    Ok(DominationBound {
        c1: unit_domination_c1() * temperature.powf(-1.5),
        c2: 1.0 / (4.0 * temperature),
    })
}

const CALIBRATION_MAX_N: usize = 4000;
const CALIBRATION_RADIAL_POINTS: usize = 1000;

/// `sup_{n,r} g_n(r) exp(r²/4)` at `T = 1`, with a 1% margin.
///
/// For `n >= 5` the ratio is bounded by the prefactor, which tends to
/// `(2π)^{-3/2}` from above, so scanning up to a few thousand covers every
/// `n`.
fn unit_domination_c1() -> f64 {
    static C1: OnceLock<f64> = OnceLock::new();
    *C1.get_or_init(|| {
        let mut best: f64 = 0.0;
        for n in 3..=CALIBRATION_MAX_N {
            let params = EnsembleParams::with_temperature(n, vec3::ZERO, 1.0).unwrap();
            let g = RadialMarginal::new(&params);
            let big_r = g.big_r2.sqrt();
            for k in 0..CALIBRATION_RADIAL_POINTS {
                let r = big_r * k as f64 / CALIBRATION_RADIAL_POINTS as f64;
                let ratio = g.eval(r * r) * (0.25 * r * r).exp();
                best = best.max(ratio);
            }
        }
        best * 1.01
    })
}

/// `sup_{|v-P| <= radius_factor·sqrt(T)} |g_n(v) - M_{P,T}(v)|`.
///
/// Both densities are radial about `P`, so the supremum is taken over a
/// uniform grid in `|v - P|` refined by golden-section search around the
/// best grid point.
pub fn max_deviation_from_maxwellian(params: &EnsembleParams, radius_factor: f64) -> Result<f64> {
    require_three(params.n, "marginal density")?;
    let t = params.temperature;
    let r_max = radius_factor * t.sqrt();
    let g = RadialMarginal::new(params);
    let dev = |r: f64| (g.eval(r * r) - maxwellian_unchecked(r * r, t)).abs();
    const GRID: usize = 2000;
    let h = r_max / GRID as f64;
    let (best_k, mut best) = (0..=GRID)
        .map(|k| (k, dev(k as f64 * h)))
        .fold((0, f64::MIN), |acc, x| if x.1 > acc.1 { x } else { acc });
    let (mut lo, mut hi) = (
        (best_k as f64 - 1.0).max(0.0) * h,
        (best_k as f64 + 1.0).min(GRID as f64) * h,
    );
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if dev(a) > dev(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best = best.max(dev(0.5 * (lo + hi)));
    Ok(best)
}
