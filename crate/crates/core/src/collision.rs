//! Elastic binary collisions with the Maxwell-molecule angular kernel.
//!
//! The kernel `B(ω; V)` is uniform on the unit sphere, `1/(4π)`, and does not
//! depend on the relative speed. [`CollisionKernel`] is the extension point for
//! other angle-only cutoff kernels.

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

const UNIT_TOLERANCE: f64 = 1e-12;

/// A unit impact vector `ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactVector(Vec3);

impl ImpactVector {
    /// Accepts `w` only if `| |w| - 1 | <= 1e-12`.
    pub fn new(w: Vec3) -> Result<Self> {
        if !vec3::is_finite(w) {
            return Err(Error::NonFinite("impact vector"));
        }
        let n = vec3::norm(w);
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NonUnitImpact(n));
        }
        Ok(ImpactVector(w))
    }

    /// Normalizes a nonzero finite vector.
    pub fn normalized(w: Vec3) -> Result<Self> {
        let n = vec3::norm(w);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
        }
        Ok(ImpactVector(vec3::scale(w, 1.0 / n)))
    }

    #[inline]
    pub fn as_vec(&self) -> Vec3 {
        self.0
    }
}

/// Incoming or outgoing velocities of a colliding pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityPair {
    pub vi: Vec3,
    pub vj: Vec3,
}

impl VelocityPair {
    pub fn new(vi: Vec3, vj: Vec3) -> Self {
        VelocityPair { vi, vj }
    }
}

/// `v'_i = v_i - ((v_i - v_j)·ω) ω`, `v'_j = v_j + ((v_i - v_j)·ω) ω`.
///
/// Grazing pairs, `(v_i - v_j)·ω = 0`, come back unchanged.
#[inline]
pub fn collide(pair: VelocityPair, omega: ImpactVector) -> VelocityPair {
    let w = omega.0;
    let s = vec3::dot(vec3::sub(pair.vi, pair.vj), w);
    let dv = vec3::scale(w, s);
    VelocityPair {
        vi: vec3::sub(pair.vi, dv),
        vj: vec3::add(pair.vj, dv),
    }
}

/// Applies [`collide`] in place to entries `i` and `j` of a velocity slice.
#[inline]
pub(crate) fn collide_in_place(vs: &mut [Vec3], i: usize, j: usize, omega: ImpactVector) {
    let out = collide(VelocityPair::new(vs[i], vs[j]), omega);
    vs[i] = out.vi;
    vs[j] = out.vj;
}

/// Angular collision kernel normalized to unit mass on the sphere.
pub trait CollisionKernel: Sync {
    fn density(&self, omega: &ImpactVector, relative_velocity: Vec3) -> f64;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, relative_velocity: Vec3) -> ImpactVector;
}

/// Maxwell molecules with the uniform angular law.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformMaxwell;

impl CollisionKernel for UniformMaxwell {
    #[inline]
    fn density(&self, _omega: &ImpactVector, _relative_velocity: Vec3) -> f64 {
        1.0 / (4.0 * PI)
    }

    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, _relative_velocity: Vec3) -> ImpactVector {
        ImpactVector(uniform_on_sphere(rng))
    }
}

/// Archimedes: `z` uniform on `[-1, 1]`, azimuth uniform.
#[inline]
pub(crate) fn uniform_on_sphere<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    let (s, c) = phi.sin_cos();
    [r * c, r * s, z]
}

/// `B(ω; V)` for the default kernel.
pub fn kernel_density(omega: &ImpactVector, relative_velocity: Vec3) -> f64 {
    UniformMaxwell.density(omega, relative_velocity)
}

/// Draws `ω` from the default kernel.
pub fn sample_impact<R: Rng + ?Sized>(rng: &mut R, relative_velocity: Vec3) -> ImpactVector {
    UniformMaxwell.sample(rng, relative_velocity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_substream;
    use approx::assert_abs_diff_eq;

    fn close(a: Vec3, b: Vec3, tol: f64) {
        for d in 0..3 {
            assert_abs_diff_eq!(a[d], b[d], epsilon = tol);
        }
    }

    #[test]
    fn head_on_swap() {
        let out = collide(
            VelocityPair::new([1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]),
            ImpactVector::new([1.0, 0.0, 0.0]).unwrap(),
        );
        assert_eq!(out.vi, [-1.0, 0.0, 0.0]);
        assert_eq!(out.vj, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn grazing_is_noop() {
        let pair = VelocityPair::new([1.0, 2.0, 0.0], [1.0, -1.0, 0.0]);
        let out = collide(pair, ImpactVector::new([1.0, 0.0, 0.0]).unwrap());
        assert_eq!(out, pair);
    }

    #[test]
    fn oblique_collision() {
        let h = 1.0 / 2f64.sqrt();
        let pair = VelocityPair::new([1.0, 0.0, 0.0], [0.0; 3]);
        let out = collide(pair, ImpactVector::new([h, h, 0.0]).unwrap());
        close(out.vi, [0.5, -0.5, 0.0], 1e-15);
        close(out.vj, [0.5, 0.5, 0.0], 1e-15);
        close(vec3::add(out.vi, out.vj), [1.0, 0.0, 0.0], 1e-15);
        assert_abs_diff_eq!(vec3::norm2(out.vi) + vec3::norm2(out.vj), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn non_unit_impact_rejected() {
        assert!(matches!(
            ImpactVector::new([1.0, 1.0, 0.0]),
            Err(Error::NonUnitImpact(_))
        ));
        assert!(ImpactVector::new([1.0 + 1e-9, 0.0, 0.0]).is_err());
        assert!(ImpactVector::new([f64::NAN, 0.0, 0.0]).is_err());
        assert!(ImpactVector::normalized([0.0; 3]).is_err());
        let w = ImpactVector::normalized([3.0, 4.0, 0.0]).unwrap();
        close(w.as_vec(), [0.6, 0.8, 0.0], 1e-15);
    }

    #[test]
    fn kernel_is_uniform_and_speed_independent() {
        let w = ImpactVector::new([0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(kernel_density(&w, [1.0, 2.0, 3.0]), 0.079_577_471_5, epsilon = 1e-10);
        assert_eq!(
            kernel_density(&w, [1.0, 2.0, 3.0]),
            kernel_density(&w, [2.0, 4.0, 6.0])
        );
    }

    #[test]
    fn kernel_normalizes_under_uniform_sampling() {
        let mut rng = seed_substream(1, "test-kernel", &[]);
        let k = 20_000;
        let mean: f64 = (0..k)
            .map(|_| {
                let w = sample_impact(&mut rng, [1.0, 0.0, 0.0]);
                4.0 * PI * kernel_density(&w, [1.0, 0.0, 0.0])
            })
            .sum::<f64>()
            / k as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn samples_are_unit() {
        let mut rng = seed_substream(2, "test-unit", &[]);
        for _ in 0..10_000 {
            let w = sample_impact(&mut rng, [0.0; 3]);
            assert!((vec3::norm(w.as_vec()) - 1.0).abs() <= 1e-12);
        }
    }
}
