//! Periodic arithmetic on the unit 3-torus and its cubic cell partition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// A point of the unit torus. Every coordinate lies in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[repr(transparent)]
pub struct TorusPoint([f64; 3]);

#[inline]
fn wrap_coord(c: f64) -> f64 {
    let r = c - c.floor();
    // c - floor(c) rounds up to 1.0 for tiny negative c
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    pub const ORIGIN: TorusPoint = TorusPoint([0.0; 3]);

    /// Wraps arbitrary finite coordinates onto the torus.
    pub fn new(x: Vec3) -> Result<Self> {
        wrap(x)
    }

    #[inline]
    pub fn coords(&self) -> Vec3 {
        self.0
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> f64 {
        self.0[axis]
    }

    /// Free flight by `v * t`. Inputs are assumed finite.
    #[inline]
    pub fn advanced(&self, v: Vec3, t: f64) -> TorusPoint {
        TorusPoint([
            wrap_coord(self.0[0] + v[0] * t),
            wrap_coord(self.0[1] + v[1] * t),
            wrap_coord(self.0[2] + v[2] * t),
        ])
    }

    /// Overwrites one coordinate. The value must already lie in `[0, 1)`.
    pub(crate) fn set_coord(&mut self, axis: usize, value: f64) {
        debug_assert!((0.0..1.0).contains(&value));
        self.0[axis] = value;
    }
}

/// Reduces each coordinate modulo 1 into `[0, 1)`.
pub fn wrap(x: Vec3) -> Result<TorusPoint> {
    if !vec3::is_finite(x) {
        return Err(Error::NonFinite("torus coordinates"));
    }
    Ok(TorusPoint([
        wrap_coord(x[0]),
        wrap_coord(x[1]),
        wrap_coord(x[2]),
    ]))
}

/// Free-streaming map `x -> wrap(x + v t)`. Negative `t` traces back along the
/// characteristic.
pub fn advect(x: &TorusPoint, v: Vec3, t: f64) -> Result<TorusPoint> {
    if !vec3::is_finite(v) || !t.is_finite() {
        return Err(Error::NonFinite("advection velocity or time"));
    }
    Ok(x.advanced(v, t))
}

#[inline]
fn min_image_component(d: f64) -> f64 {
    d - d.round()
}

/// Minimum-image displacement `y - x`, each component in `[-1/2, 1/2]`.
#[inline]
pub fn min_image_displacement(x: &TorusPoint, y: &TorusPoint) -> Vec3 {
    [
        min_image_component(y.0[0] - x.0[0]),
        min_image_component(y.0[1] - x.0[1]),
        min_image_component(y.0[2] - x.0[2]),
    ]
}

/// Euclidean distance under the minimum-image convention; at most `sqrt(3)/2`.
pub fn min_image_distance(x: &TorusPoint, y: &TorusPoint) -> f64 {
    vec3::norm(min_image_displacement(x, y))
}

/// Index triple of a cubic cell, each component in `[0, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Partition of the torus into `m^3` equal cubes `[i/m, (i+1)/m) x ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGrid {
    m: usize,
}

impl CellGrid {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("cell grid needs at least one cell per side"));
        }
        Ok(CellGrid { m })
    }

    /// Cells per side.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.m * self.m * self.m
    }

    /// `|Δ| = m^-3`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        let m = self.m as f64;
        1.0 / (m * m * m)
    }

    #[inline]
    fn axis_index(&self, c: f64) -> usize {
        // m * c can round up to m for c just below 1
        ((self.m as f64 * c) as usize).min(self.m - 1)
    }

    #[inline]
    pub fn cell_of(&self, x: &TorusPoint) -> CellIndex {
        CellIndex {
            i: self.axis_index(x.0[0]),
            j: self.axis_index(x.0[1]),
            k: self.axis_index(x.0[2]),
        }
    }

    /// Row-major linear index of the cell containing `x`.
    #[inline]
    pub fn linear_cell_of(&self, x: &TorusPoint) -> usize {
        self.linear(self.cell_of(x))
    }

    #[inline]
    pub fn linear(&self, c: CellIndex) -> usize {
        (c.i * self.m + c.j) * self.m + c.k
    }

    pub fn unlinear(&self, idx: usize) -> CellIndex {
        let m = self.m;
        CellIndex {
            i: idx / (m * m),
            j: (idx / m) % m,
            k: idx % m,
        }
    }

    /// Index of the slab `[i/m, (i+1)/m)` containing `c` along one axis.
    #[inline]
    pub fn axis_cell(&self, c: f64) -> usize {
        self.axis_index(c)
    }
}

/// Free-function form of [`CellGrid::cell_of`].
pub fn cell_of(x: &TorusPoint, grid: &CellGrid) -> CellIndex {
    grid.cell_of(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn close(a: Vec3, b: Vec3) {
        for d in 0..3 {
            assert_abs_diff_eq!(a[d], b[d], epsilon = 1e-12);
        }
    }

    #[test]
    fn wrap_examples() {
        close(wrap([1.2, -0.3, 0.5]).unwrap().coords(), [0.2, 0.7, 0.5]);
        assert_eq!(wrap([0.0, 0.0, 0.0]).unwrap().coords(), [0.0; 3]);
        assert_eq!(wrap([1.0, 2.0, -1.0]).unwrap().coords(), [0.0; 3]);
        assert!(wrap([f64::NAN, 0.0, 0.0]).is_err());
        assert!(wrap([0.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn tiny_negative_wraps_below_one() {
        let p = wrap([-1e-18, -0.0, -5e-324]).unwrap();
        for c in p.coords() {
            assert!((0.0..1.0).contains(&c));
        }
    }

    #[test]
    fn advect_examples() {
        let x = wrap([0.9, 0.0, 0.0]).unwrap();
        close(advect(&x, [0.2, 0.0, 0.0], 1.0).unwrap().coords(), [0.1, 0.0, 0.0]);
        assert_eq!(advect(&x, [3.0, -2.0, 7.0], 0.0).unwrap(), x);
        let y = wrap([0.1, 0.0, 0.0]).unwrap();
        close(advect(&y, [0.2, 0.0, 0.0], -1.0).unwrap().coords(), [0.9, 0.0, 0.0]);
        assert!(advect(&y, [f64::NAN, 0.0, 0.0], 1.0).is_err());
        assert!(advect(&y, [0.0; 3], f64::INFINITY).is_err());
    }

    #[test]
    fn cell_of_examples() {
        let g4 = CellGrid::new(4).unwrap();
        let x = wrap([0.26, 0.1, 0.9]).unwrap();
        assert_eq!(g4.cell_of(&x), CellIndex { i: 1, j: 0, k: 3 });
        assert_eq!(g4.cell_of(&TorusPoint::ORIGIN), CellIndex { i: 0, j: 0, k: 0 });
        let g1 = CellGrid::new(1).unwrap();
        assert_eq!(g1.cell_of(&x), CellIndex { i: 0, j: 0, k: 0 });
        // lower face belongs to the cell
        let face = wrap([0.25, 0.5, 0.75]).unwrap();
        assert_eq!(g4.cell_of(&face), CellIndex { i: 1, j: 2, k: 3 });
        assert!(CellGrid::new(0).is_err());
    }

    #[test]
    fn cell_of_just_below_one_stays_in_range() {
        let g = CellGrid::new(3).unwrap();
        let below = 1.0f64 - f64::EPSILON / 2.0;
        let x = wrap([below, below, below]).unwrap();
        assert_eq!(g.cell_of(&x), CellIndex { i: 2, j: 2, k: 2 });
    }

    #[test]
    fn cell_volume_tiles_torus() {
        for m in 1..20 {
            let g = CellGrid::new(m).unwrap();
            assert_abs_diff_eq!(g.cell_volume() * g.n_cells() as f64, 1.0, epsilon = 1e-14);
            for idx in 0..g.n_cells() {
                assert_eq!(g.linear(g.unlinear(idx)), idx);
            }
        }
    }

    #[test]
    fn min_image_examples() {
        let a = wrap([0.95, 0.0, 0.0]).unwrap();
        let b = wrap([0.05, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(min_image_distance(&a, &b), 0.1, epsilon = 1e-12);
        assert_eq!(min_image_distance(&a, &a), 0.0);
        let c = wrap([0.5, 0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(
            min_image_distance(&TorusPoint::ORIGIN, &c),
            3f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
    }

    fn point() -> impl Strategy<Value = TorusPoint> {
        prop::array::uniform3(-5.0f64..5.0).prop_map(|x| wrap(x).unwrap())
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(x in prop::array::uniform3(-1e6f64..1e6)) {
            let once = wrap(x).unwrap();
            let twice = wrap(once.coords()).unwrap();
            prop_assert_eq!(once, twice);
            for c in once.coords() {
                prop_assert!((0.0..1.0).contains(&c));
            }
        }

        #[test]
        fn advect_composes(x in point(), v in prop::array::uniform3(-10.0f64..10.0),
                           s in -3.0f64..3.0, t in -3.0f64..3.0) {
            let two = advect(&advect(&x, v, s).unwrap(), v, t).unwrap();
            let one = advect(&x, v, s + t).unwrap();
            prop_assert!(min_image_distance(&one, &two) < 1e-12);
        }

        #[test]
        fn min_image_is_a_metric(x in point(), y in point(), z in point()) {
            let dxy = min_image_distance(&x, &y);
            prop_assert!(dxy >= 0.0 && dxy <= 3f64.sqrt() / 2.0 + 1e-15);
            prop_assert!((dxy - min_image_distance(&y, &x)).abs() < 1e-15);
            prop_assert!(dxy <= min_image_distance(&x, &z) + min_image_distance(&z, &y) + 1e-12);
        }
    }
}
