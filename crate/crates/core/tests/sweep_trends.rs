//! Trends of the convergence study along single axes.

use kac_bgk::comparison::convergence_study;
use kac_bgk::harness::parse_config;

#[test]
fn distances_shrink_with_n_and_tau() {
    let cfg = parse_config(
        r#"{
          "mode": "sweep",
          "seed": 21,
          "m": 4,
          "thermalization": "microcanonical-limit",
          "t_end": 0.2,
          "initial": { "kind": "density-wave", "amplitude": 0.2 },
          "solver": { "nx": 32, "m_v": 21, "dt": 0.01 },
          "snapshots": { "interval": 0.1 },
          "sweep": { "n": [2500, 5000, 10000, 20000, 40000], "tau": [0.025, 0.05, 0.1], "replicas": 4 }
        }"#,
    )
    .unwrap();
    let table = convergence_study(&cfg).unwrap();
    assert_eq!(table.rows.len(), 5 * 3 * 3);
    let n_frac = table.n_doubling_fraction().unwrap();
    assert!(n_frac >= 0.8, "d_rho decreased on doubling n in only {n_frac} of points");
    // τ halving at the largest n
    let flags: Vec<bool> = table
        .rows
        .iter()
        .filter(|r| r.n == 40000)
        .filter_map(|r| r.t_nonincreasing_with_tau)
        .collect();
    assert!(!flags.is_empty());
    assert!(flags.iter().all(|&f| f), "d_T increased beyond noise when halving tau: {flags:?}");
}
