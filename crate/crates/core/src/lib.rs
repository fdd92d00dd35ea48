//! Stochastic kinetic simulation toolkit.
//!
//! The crate covers four connected pieces:
//!
//! * the spatially inhomogeneous Kac particle system on the unit 3-torus, in
//!   both its cell mean-field form and its short-range ball form ([`kac`]);
//! * the free-flow / per-cell thermalization splitting dynamics whose formal
//!   limit is the BGK equation ([`splitting`]);
//! * sampling and density evaluation for the microcanonical velocity
//!   ensemble and its convergence to the Maxwellian ([`microcanonical`]);
//! * a deterministic discrete-velocity BGK solver used as a reference
//!   ([`solver`]), and the statistics that compare the two ([`comparison`]).
//!
//! Everything random is driven by counter-based substreams ([`rng`]), so a
//! run is fully determined by its configuration and master seed regardless
//! of how many worker threads process it.

pub mod collision;
pub mod comparison;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod kac;
pub mod microcanonical;
pub mod moments;
pub mod rng;
pub mod solver;
pub mod splitting;
pub mod vec3;

pub use error::{Error, Result};
pub use geometry::{CellGrid, CellIndex, TorusPoint};
pub use kac::{ParticleEnsemble, ProcessMode};
pub use moments::HydroMoments;
pub use rng::{seed_substream, Stream, Substreams};
