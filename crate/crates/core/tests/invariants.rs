//! Property tests of the structural invariants.

use kac_bgk::collision::{collide, ImpactVector, VelocityPair};
use kac_bgk::comparison::{empirical_moments, field_distance};
use kac_bgk::geometry::{advect, min_image_distance, wrap, CellGrid};
use kac_bgk::microcanonical::{domination_constants, marginal_density, sample_microcanonical, EnsembleParams};
use kac_bgk::moments::HydroMoments;
use kac_bgk::solver::{relax_step, transport_step, DistributionField, PhaseSpaceGrid, SpatialLayout, VelocityLattice};
use kac_bgk::splitting::{thermalize_phase, FiringRate, SplittingConfig, Thermalization};
use kac_bgk::vec3::{self, Vec3};
use kac_bgk::{seed_substream, ParticleEnsemble, Substreams};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -5.0..5.0f64
}

fn point() -> impl Strategy<Value = Vec3> {
    [coord(), coord(), coord()]
}

fn velocity() -> impl Strategy<Value = Vec3> {
    [-4.0..4.0f64, -4.0..4.0f64, -4.0..4.0f64]
}

fn unit() -> impl Strategy<Value = ImpactVector> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
        .prop_filter("not too short", |w| vec3::norm(*w) > 1e-3)
        .prop_map(|w| ImpactVector::normalized(w).unwrap())
}

fn ensemble(max: usize) -> impl Strategy<Value = ParticleEnsemble> {
    prop::collection::vec(([0.0..1.0f64, 0.0..1.0f64, 0.0..1.0f64], velocity()), 2..max).prop_map(|ps| {
        let (xs, vs): (Vec<_>, Vec<_>) = ps.into_iter().map(|(x, v)| (wrap(x).unwrap(), v)).unzip();
        ParticleEnsemble::new(xs, vs).unwrap()
    })
}

fn torus_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

proptest! {
    #[test]
    fn wrap_is_idempotent(x in point()) {
        let once = wrap(x).unwrap();
        prop_assert_eq!(wrap(once.coords()).unwrap(), once);
    }

    #[test]
    fn advect_composes(x in point(), v in velocity(), s in 0.0..3.0f64, t in 0.0..3.0f64) {
        let p = wrap(x).unwrap();
        let twice = advect(&advect(&p, v, s).unwrap(), v, t).unwrap();
        let once = advect(&p, v, s + t).unwrap();
        for a in 0..3 {
            prop_assert!(torus_dist(twice.coord(a), once.coord(a)) < 1e-12);
        }
    }

    #[test]
    fn min_image_is_a_metric(a in point(), b in point(), c in point()) {
        let (a, b, c) = (wrap(a).unwrap(), wrap(b).unwrap(), wrap(c).unwrap());
        let ab = min_image_distance(&a, &b);
        prop_assert!((ab - min_image_distance(&b, &a)).abs() < 1e-15);
        prop_assert!(ab <= min_image_distance(&a, &c) + min_image_distance(&c, &b) + 1e-12);
        prop_assert!(ab <= 3f64.sqrt() / 2.0 + 1e-12);
        prop_assert_eq!(min_image_distance(&a, &a), 0.0);
    }

    #[test]
    fn collision_conserves_and_is_an_involution(vi in velocity(), vj in velocity(), w in unit()) {
        let pair = VelocityPair::new(vi, vj);
        let out = collide(pair, w);
        let p_in = vec3::add(vi, vj);
        let p_out = vec3::add(out.vi, out.vj);
        prop_assert!(vec3::norm(vec3::sub(p_in, p_out)) <= 1e-12);
        let e_in = vec3::norm2(vi) + vec3::norm2(vj);
        let e_out = vec3::norm2(out.vi) + vec3::norm2(out.vj);
        prop_assert!((e_in - e_out).abs() <= 1e-12 * (1.0 + e_in));
        let back = collide(out, w);
        prop_assert!(vec3::norm(vec3::sub(back.vi, vi)) <= 1e-12);
        prop_assert!(vec3::norm(vec3::sub(back.vj, vj)) <= 1e-12);
        prop_assert_eq!(collide(pair, w), out);
    }

    #[test]
    fn marginal_is_dominated(n in 3usize..3000, t in 0.1..5.0f64, r in 0.0..1.0f64, p in velocity()) {
        let params = EnsembleParams::with_temperature(n, p, t).unwrap();
        let bound = domination_constants(t).unwrap();
        let radius = params.support_radius2().sqrt() * r;
        let v = [p[0] + radius, p[1], p[2]];
        let g = marginal_density(v, &params).unwrap();
        prop_assert!(g <= bound.bound(v, p), "g = {g}, bound = {}", bound.bound(v, p));
    }

    #[test]
    fn sampler_hits_constraints(n in 2usize..200, t in 0.05..10.0f64, p in velocity(), seed in any::<u64>()) {
        let params = EnsembleParams::with_temperature(n, p, t).unwrap();
        let block = sample_microcanonical(&params, &mut seed_substream(seed, "prop", &[]));
        let vs = block.as_slice();
        let mean = vec3::scale(vec3::sum(vs), 1.0 / n as f64);
        let e = vec3::sum_norm2(vs) / (2.0 * n as f64);
        prop_assert!(vec3::norm(vec3::sub(mean, p)) <= 1e-10 * (1.0 + vec3::norm(p)));
        prop_assert!((e - params.energy()).abs() <= 1e-10 * params.energy());
    }

    #[test]
    fn empirical_moments_identities(ens in ensemble(300), m in 1usize..5) {
        let grid = CellGrid::new(m).unwrap();
        let f = empirical_moments(&ens, &grid);
        let n = ens.len() as f64;
        let mass: f64 = f.moments.iter().map(|c| c.rho * grid.cell_volume()).sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        prop_assert_eq!(f.counts.iter().sum::<usize>(), ens.len());
        prop_assert!(f.moments.iter().all(|c| c.rho >= 0.0));
        let mut p = [0.0; 3];
        let mut e = 0.0;
        for (c, k) in f.moments.iter().zip(&f.counts) {
            if *k == 0 {
                continue;
            }
            let k = *k as f64;
            p = vec3::add(p, vec3::scale(c.u, k));
            e += k * 0.5 * (vec3::norm2(c.u) + 3.0 * c.temperature);
        }
        let (tp, te) = (ens.total_momentum(), ens.total_energy());
        prop_assert!(vec3::norm(vec3::sub(p, tp)) <= 1e-12 * (1.0 + n * 4.0));
        prop_assert!((e - te).abs() <= 1e-12 * (1.0 + te));
    }

    #[test]
    fn distance_is_symmetric_and_triangular(
        a in prop::collection::vec((0.1..2.0f64, velocity(), 0.1..3.0f64), 8),
        b in prop::collection::vec((0.1..2.0f64, velocity(), 0.1..3.0f64), 8),
        c in prop::collection::vec((0.1..2.0f64, velocity(), 0.1..3.0f64), 8),
    ) {
        let mk = |xs: &Vec<(f64, Vec3, f64)>| -> Vec<HydroMoments> {
            xs.iter().map(|&(r, u, t)| HydroMoments::new(r, u, t)).collect()
        };
        let (a, b, c) = (mk(&a), mk(&b), mk(&c));
        let ab = field_distance(&a, &b).unwrap();
        let ba = field_distance(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        let ac = field_distance(&a, &c).unwrap();
        let cb = field_distance(&c, &b).unwrap();
        prop_assert!(ab.d_rho <= ac.d_rho + cb.d_rho + 1e-12);
        prop_assert!(ab.d_u <= ac.d_u + cb.d_u + 1e-12);
        prop_assert!(ab.d_t <= ac.d_t + cb.d_t + 1e-12);
    }

    #[test]
    fn thermalization_preserves_cell_invariants(
        ens in ensemble(120),
        kac in any::<bool>(),
        period in 0u64..1000,
    ) {
        let grid = CellGrid::new(2).unwrap();
        let th = if kac { Thermalization::Kac { epsilon: 0.001 } } else { Thermalization::MicrocanonicalLimit };
        // τ·N_Δ/(n|Δ|) reaches 1 only when every particle shares one cell
        let cfg = SplittingConfig::new(0.1, th, grid).unwrap().with_firing(FiringRate::CellDensity);
        let before = empirical_moments(&ens, &grid);
        let mut after_ens = ens.clone();
        let fired = thermalize_phase(&mut after_ens, &cfg, &Substreams::new(3), period);
        prop_assume!(fired.is_ok());
        let after = empirical_moments(&after_ens, &grid);
        prop_assert_eq!(ens.positions(), after_ens.positions());
        for (b, a) in before.moments.iter().zip(&after.moments) {
            prop_assert_eq!(a.rho, b.rho);
            if !b.vacuum {
                let scale = 1.0 + vec3::norm2(b.u) + b.temperature;
                prop_assert!(vec3::norm(vec3::sub(a.u, b.u)) <= 1e-9 * scale);
                prop_assert!((a.temperature - b.temperature).abs() <= 1e-9 * scale);
            }
        }
    }

    #[test]
    fn solver_steps_conserve(
        seed in any::<u64>(),
        dt in 0.001..0.2f64,
        full in any::<bool>(),
    ) {
        let layout = if full { SpatialLayout::Full { nx: 4 } } else { SpatialLayout::Slab { nx: 8 } };
        let grid = PhaseSpaceGrid::new(layout, VelocityLattice::new(7, 4.0).unwrap()).unwrap();
        let mut rng = seed_substream(seed, "solver-prop", &[]);
        use rand::Rng;
        let data: Vec<f64> = (0..grid.n_values())
            .map(|_| rng.random::<f64>())
            .collect();
        let mut f = DistributionField::from_values(grid, data).unwrap();
        let close = |a: (f64, Vec3, f64), b: (f64, Vec3, f64)| {
            (a.0 - b.0).abs() <= 1e-12 * a.0
                && vec3::norm(vec3::sub(a.1, b.1)) <= 1e-12 * (a.0 + vec3::norm(a.1)) * 4.0
                && (a.2 - b.2).abs() <= 1e-12 * a.2
        };
        let t0 = f.totals();
        transport_step(&mut f, dt);
        let t1 = f.totals();
        prop_assert!(close(t0, t1), "transport: {t0:?} -> {t1:?}");
        relax_step(&mut f, dt).unwrap();
        let t2 = f.totals();
        prop_assert!(close(t1, t2), "relax: {t1:?} -> {t2:?}");
        prop_assert!(f.values().iter().all(|&x| x >= 0.0));
    }
}
