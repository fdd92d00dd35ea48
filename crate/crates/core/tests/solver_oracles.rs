//! Solver checks against closed-form solutions.

use std::f64::consts::PI;

use kac_bgk::solver::{transport_step, DistributionField, PhaseSpaceGrid, SpatialLayout, VelocityLattice};

/// `1 + sin(2πx₁)` carried by the lattice node with `v₁ = 0.25` only.
fn mode_field(nx: usize) -> DistributionField {
    let grid = PhaseSpaceGrid::new(SpatialLayout::Slab { nx }, VelocityLattice::new(3, 0.25).unwrap()).unwrap();
    DistributionField::from_fn(grid, |x, v| {
        if v == [0.25, 0.0, 0.0] {
            1.0 + (2.0 * PI * x[0]).sin()
        } else {
            0.0
        }
    })
    .unwrap()
}

fn shift_error(nx: usize) -> f64 {
    let mut f = mode_field(nx);
    transport_step(&mut f, 1.0);
    let grid = *f.grid();
    let k = (0..grid.lattice.n_nodes())
        .find(|&k| grid.lattice.node(k) == [0.25, 0.0, 0.0])
        .unwrap();
    (0..nx)
        .map(|i| {
            let x = grid.layout.node_center(i)[0];
            (f.node(i)[k] - (1.0 + (2.0 * PI * (x - 0.25)).sin())).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn fourier_mode_shift_error_is_second_order() {
    // whole-node shifts are exact
    assert!(shift_error(64) < 1e-13);
    // half-node shifts: linear interpolation error is (2πΔx)²/8 at worst
    let (coarse, fine) = (50, 102);
    let (ec, ef) = (shift_error(coarse), shift_error(fine));
    for (nx, e) in [(coarse, ec), (fine, ef)] {
        let dx = 1.0 / nx as f64;
        assert!(e <= (2.0 * PI * dx).powi(2) / 8.0 * 1.01, "nx = {nx}: error {e}");
    }
    let expected = (fine as f64 / coarse as f64).powi(2);
    assert!((ec / ef / expected - 1.0).abs() < 0.1, "error ratio {} vs {expected}", ec / ef);
}

/// Distance of one Strang step from the first-order mild-equation expansion
/// `f₀(x - vΔt, v) + Δt·[ρ(ρM - f)](x - vΔt, v)`. All transport shifts are
/// whole nodes, so the only error is the O(Δt²) truncation.
fn mild_defect(dt: f64) -> f64 {
    use kac_bgk::solver::{discrete_maxwellian, moments, step};
    let nx = 800;
    let grid = PhaseSpaceGrid::new(SpatialLayout::Slab { nx }, VelocityLattice::new(9, 2.0).unwrap()).unwrap();
    let f0 = DistributionField::from_fn(grid, |x, v| {
        let rho = 1.0 + 0.2 * (2.0 * PI * x[0]).sin();
        rho * (-(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 0.6).exp() * (1.0 + 0.2 * v[0] * (2.0 * PI * x[0]).cos())
    })
    .unwrap();
    let nv = grid.lattice.n_nodes();
    let mom = moments(&f0);
    let q: Vec<Vec<f64>> = (0..nx)
        .map(|i| {
            let eq = discrete_maxwellian(&mom[i], &grid.lattice).unwrap();
            f0.node(i).iter().zip(&eq).map(|(f, m)| mom[i].rho * (m - f)).collect()
        })
        .collect();
    let mut f = f0.clone();
    step(&mut f, dt).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..nx {
        for k in 0..nv {
            let v = grid.lattice.node(k)[0];
            let s = (v * dt * nx as f64).round() as i64;
            let src = (i as i64 - s).rem_euclid(nx as i64) as usize;
            let expansion = f0.node(src)[k] + dt * q[src][k];
            worst = worst.max((f.node(i)[k] - expansion).abs());
        }
    }
    worst
}

#[test]
fn one_step_matches_the_mild_expansion_to_second_order() {
    let (a, b) = (mild_defect(1e-2), mild_defect(5e-3));
    let order = (a / b).log2();
    assert!(order > 1.8 && order < 2.3, "defects {a:e}, {b:e}: order {order}");
}
