#![allow(dead_code)]

use kac_bgk::geometry::wrap;
use kac_bgk::microcanonical::{marginal_density, EnsembleParams};
use kac_bgk::vec3::Vec3;
use kac_bgk::{ParticleEnsemble, Stream};
use rand::Rng;
use rand_distr::StandardNormal;

/// Composite Simpson rule on `[a, b]` with `2k` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
    let n = 2 * k;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// CDF of one velocity coordinate of the microcanonical marginal, obtained by
/// integrating `marginal_density` numerically: first over the transverse
/// plane (radial, in `w = s²`), then cumulatively along the axis.
pub struct QuadratureCdf {
    xs: Vec<f64>,
    cdf: Vec<f64>,
    pub total_mass: f64,
}

impl QuadratureCdf {
    pub fn new(params: &EnsembleParams, axis: usize, points: usize) -> Self {
        let r = params.support_radius2().sqrt();
        let p = params.momentum();
        let density = |x: f64| {
            let r2 = r * r - x * x;
            if r2 <= 0.0 {
                return 0.0;
            }
            // ∫∫ g dy dz = π ∫_0^{R²-x²} g(x² + w) dw
            std::f64::consts::PI
                * simpson(
                    |w| {
                        let mut v = p;
                        v[axis] += x;
                        v[(axis + 1) % 3] += w.sqrt();
                        marginal_density(v, params).unwrap()
                    },
                    0.0,
                    r2,
                    1000,
                )
        };
        let h = 2.0 * r / (points - 1) as f64;
        let xs: Vec<f64> = (0..points).map(|i| -r + i as f64 * h).collect();
        let ps: Vec<f64> = xs.iter().map(|&x| density(x)).collect();
        let mut cdf = vec![0.0; points];
        for i in 1..points {
            // Simpson on each interval using the midpoint
            let mid = density(0.5 * (xs[i - 1] + xs[i]));
            cdf[i] = cdf[i - 1] + h / 6.0 * (ps[i - 1] + 4.0 * mid + ps[i]);
        }
        let total_mass = cdf[points - 1];
        let xs = xs.into_iter().map(|x| x + p[axis]).collect();
        QuadratureCdf { xs, cdf, total_mass }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return 1.0;
        }
        let i = self.xs.partition_point(|&t| t <= x).min(n - 1);
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let w = (x - x0) / (x1 - x0);
        ((1.0 - w) * self.cdf[i - 1] + w * self.cdf[i]) / self.total_mass
    }
}

pub fn gaussian(rng: &mut Stream, u: Vec3, t: f64) -> Vec3 {
    let s = t.sqrt();
    [
        u[0] + s * rng.sample::<f64, _>(StandardNormal),
        u[1] + s * rng.sample::<f64, _>(StandardNormal),
        u[2] + s * rng.sample::<f64, _>(StandardNormal),
    ]
}

/// Uniform positions and Maxwellian velocities.
pub fn equilibrium(n: usize, t: f64, rng: &mut Stream) -> ParticleEnsemble {
    let xs = (0..n)
        .map(|_| wrap([rng.random(), rng.random(), rng.random()]).unwrap())
        .collect();
    let vs = (0..n).map(|_| gaussian(rng, [0.0; 3], t)).collect();
    ParticleEnsemble::new(xs, vs).unwrap()
}

pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
