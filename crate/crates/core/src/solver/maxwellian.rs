//! Moment-matched discrete Maxwellians.
//!
//! Sampling `ρM_{u,T}` on the lattice gets the moments wrong by `O(Δv²)`
//! (and by the truncated tails), which makes relaxation leak energy. The
//! matched version stays in the family `exp(a + b·v + c|v|²)` and picks its
//! five parameters by Newton's method so that the discrete mass, momentum
//! and energy equal the target exactly.

use log::warn;

use crate::error::{Error, Result};
use crate::microcanonical::maxwellian_unchecked;
use crate::moments::HydroMoments;
use crate::vec3::{self, Vec3};

use super::{slice_conserved, VelocityLattice};

const NEWTON_MAX_ITER: usize = 60;
const RESIDUAL_TOL: f64 = 1e-13;

/// `ρM_{u,T}` evaluated at the lattice nodes, without correction.
pub fn maxwellian_nodes(mom: &HydroMoments, lattice: &VelocityLattice) -> Result<Vec<f64>> {
    if mom.vacuum || mom.rho == 0.0 {
        return Ok(vec![0.0; lattice.n_nodes()]);
    }
    if !(mom.temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(mom.temperature));
    }
    Ok(lattice
        .nodes()
        .iter()
        .map(|v| mom.rho * maxwellian_unchecked(vec3::norm2(vec3::sub(*v, mom.u)), mom.temperature))
        .collect())
}

/// Discrete Maxwellian whose lattice moments equal `mom`.
pub fn discrete_maxwellian(mom: &HydroMoments, lattice: &VelocityLattice) -> Result<Vec<f64>> {
    if mom.vacuum || mom.rho == 0.0 {
        return Ok(vec![0.0; lattice.n_nodes()]);
    }
    if !(mom.temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(mom.temperature));
    }
    let (r, p, s) = mom.conserved();
    matched(mom, &[r, p[0], p[1], p[2], s], lattice, &lattice.nodes())
}

/// Features `(1, w, |w|²)` in the standardized velocity `w = (v - u)/√T`.
fn features(v: Vec3, u: Vec3, inv_sqrt_t: f64) -> [f64; 5] {
    let w = vec3::scale(vec3::sub(v, u), inv_sqrt_t);
    [1.0, w[0], w[1], w[2], vec3::norm2(w)]
}

/// Matches the conserved totals `target = (Σf, Σfv, Σf|v|²)·Δv³`, with `mom`
/// supplying the starting point.
pub(super) fn matched(mom: &HydroMoments, target: &[f64; 5], lattice: &VelocityLattice, nodes: &[Vec3]) -> Result<Vec<f64>> {
    let dv3 = lattice.cell_volume();
    let u = mom.u;
    let inv_s = 1.0 / mom.temperature.sqrt();
    let feats: Vec<[f64; 5]> = nodes.iter().map(|v| features(*v, u, inv_s)).collect();

    // target in standardized features
    let c0 = target[0];
    let cv = [target[1], target[2], target[3]];
    let t_std = [
        c0,
        (cv[0] - u[0] * c0) * inv_s,
        (cv[1] - u[1] * c0) * inv_s,
        (cv[2] - u[2] * c0) * inv_s,
        (target[4] - 2.0 * vec3::dot(u, cv) + vec3::norm2(u) * c0) * inv_s * inv_s,
    ];

    if let Some(values) = newton(&feats, &t_std, dv3, mom) {
        if residual_ok(&values, target, nodes, dv3) {
            return Ok(values);
        }
    }
    warn!(
        "moment matching did not converge (rho = {}, T = {}); using L2 projection",
        mom.rho, mom.temperature
    );
    Ok(l2_projection(mom, target, lattice, nodes, &feats, &t_std))
}

fn residual_ok(values: &[f64], target: &[f64; 5], nodes: &[Vec3], dv3: f64) -> bool {
    let got = slice_conserved(values, nodes, dv3);
    let scale = target[0].abs() + target[4].abs();
    got.iter().zip(target).all(|(g, t)| (g - t).abs() <= 1e-12 * scale)
}

fn evaluate(feats: &[[f64; 5]], lambda: &[f64; 5], dv3: f64) -> Vec<f64> {
    feats
        .iter()
        .map(|phi| (phi.iter().zip(lambda).map(|(a, b)| a * b).sum::<f64>()).exp() * dv3)
        .collect()
}

/// Convex dual objective `Σ exp(λ·φ)Δv³ - λ·target`, its gradient and Hessian.
fn dual(feats: &[[f64; 5]], lambda: &[f64; 5], target: &[f64; 5], dv3: f64) -> (f64, [f64; 5], [[f64; 5]; 5]) {
    let w = evaluate(feats, lambda, dv3);
    let mut grad = [0.0; 5];
    let mut hess = [[0.0; 5]; 5];
    let mut obj = 0.0;
    for (phi, &wk) in feats.iter().zip(&w) {
        obj += wk;
        for a in 0..5 {
            grad[a] += wk * phi[a];
            for b in a..5 {
                hess[a][b] += wk * phi[a] * phi[b];
            }
        }
    }
    for a in 0..5 {
        for b in 0..a {
            hess[a][b] = hess[b][a];
        }
        grad[a] -= target[a];
        obj -= lambda[a] * target[a];
    }
    (obj, grad, hess)
}

fn newton(feats: &[[f64; 5]], target: &[f64; 5], dv3: f64, mom: &HydroMoments) -> Option<Vec<f64>> {
    let scale = target[0].abs() + target[4].abs();
    let mut lambda = [(mom.rho * (2.0 * std::f64::consts::PI * mom.temperature).powf(-1.5)).ln(), 0.0, 0.0, 0.0, -0.5];
    let (mut obj, mut grad, mut hess) = dual(feats, &lambda, target, dv3);
    for _ in 0..NEWTON_MAX_ITER {
        if grad.iter().all(|g| g.abs() <= RESIDUAL_TOL * scale) {
            break;
        }
        let delta = solve5(hess, grad)?;
        let mut t = 1.0;
        loop {
            let trial: [f64; 5] = std::array::from_fn(|a| lambda[a] - t * delta[a]);
            let (o, g, h) = dual(feats, &trial, target, dv3);
            // Armijo, with slack for rounding once the decrease is tiny
            let armijo = obj - 1e-4 * t * dot5(&grad, &delta) + 1e-14 * obj.abs();
            if o.is_finite() && o <= armijo {
                (lambda, obj, grad, hess) = (trial, o, g, h);
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return None;
            }
        }
    }
    if !grad.iter().all(|g| g.abs() <= 1e3 * RESIDUAL_TOL * scale) {
        return None;
    }
    Some(evaluate(feats, &lambda, dv3).into_iter().map(|x| x / dv3).collect())
}

fn dot5(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting.
fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let piv = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..5 {
            let f = a[row][col] / a[col][col];
            for k in col..5 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let s: f64 = (row + 1..5).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Sampled Maxwellian plus the L²-smallest correction meeting the moment
/// constraints; negatives are clipped and the mass restored by scaling.
fn l2_projection(
    mom: &HydroMoments,
    target: &[f64; 5],
    lattice: &VelocityLattice,
    nodes: &[Vec3],
    feats: &[[f64; 5]],
    t_std: &[f64; 5],
) -> Vec<f64> {
    let dv3 = lattice.cell_volume();
    let mut g = maxwellian_nodes(mom, lattice).unwrap_or_else(|_| vec![0.0; nodes.len()]);
    let mut have = [0.0; 5];
    let mut gram = [[0.0; 5]; 5];
    for (phi, &gk) in feats.iter().zip(&g) {
        for a in 0..5 {
            have[a] += gk * phi[a] * dv3;
            for b in 0..5 {
                gram[a][b] += phi[a] * phi[b] * dv3;
            }
        }
    }
    let rhs: [f64; 5] = std::array::from_fn(|a| t_std[a] - have[a]);
    if let Some(mu) = solve5(gram, rhs) {
        for (phi, gk) in feats.iter().zip(g.iter_mut()) {
            *gk += dot5(phi, &mu);
        }
    }
    if g.iter().any(|&x| x < 0.0) {
        warn!("clipping negative discrete Maxwellian values (rho = {}, T = {})", mom.rho, mom.temperature);
        for x in g.iter_mut() {
            *x = x.max(0.0);
        }
        let mass: f64 = g.iter().sum::<f64>() * dv3;
        if mass > 0.0 {
            let k = target[0] / mass;
            for x in g.iter_mut() {
                *x *= k;
            }
        }
    }
    g
}
