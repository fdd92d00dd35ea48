use serde::{Deserialize, Serialize};

use crate::vec3::{self, Vec3};

/// Density, bulk velocity and temperature at one spatial node or cell.
///
/// When `vacuum` is set the density is below the floor (or the cell is
/// empty) and `u`, `temperature` carry no information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HydroMoments {
    pub rho: f64,
    pub u: Vec3,
    pub temperature: f64,
    pub vacuum: bool,
}

impl HydroMoments {
    pub fn new(rho: f64, u: Vec3, temperature: f64) -> Self {
        HydroMoments {
            rho,
            u,
            temperature,
            vacuum: false,
        }
    }

    pub fn vacuum(rho: f64) -> Self {
        HydroMoments {
            rho,
            u: vec3::ZERO,
            temperature: 0.0,
            vacuum: true,
        }
    }

    /// Builds moments from conserved totals: mass, momentum `ρu`, and the
    /// second moment `ρ(|u|² + 3T)`. Mass below `floor` gives a vacuum.
    pub fn from_conserved(mass: f64, momentum: Vec3, second: f64, floor: f64) -> Self {
        if !(mass > floor) {
            return HydroMoments::vacuum(mass.max(0.0));
        }
        let u = vec3::scale(momentum, 1.0 / mass);
        let t = (second / mass - vec3::norm2(u)) / 3.0;
        HydroMoments::new(mass, u, t)
    }

    /// Inverse of [`HydroMoments::from_conserved`].
    pub fn conserved(&self) -> (f64, Vec3, f64) {
        if self.vacuum {
            return (self.rho, vec3::ZERO, 0.0);
        }
        (
            self.rho,
            vec3::scale(self.u, self.rho),
            self.rho * (vec3::norm2(self.u) + 3.0 * self.temperature),
        )
    }
}
