//! Numerical integral geometry: the density calculus of ellipsoid-type
//! normal densities and Monte Carlo verification of Crofton formulas for
//! Euclidean spaces, spheres and their products.
//!
//! * [`geomcore`]: quadratic forms, frames, Gram volumes, ellipsoids.
//! * [`mixvol`]: mixed volumes of ellipsoids and the densities `d_m`.
//! * [`densities`]: chart manifolds, Finsler fields, ring products of
//!   1-densities and quadrature.
//! * [`croftonsim`]: Crofton data, intersection counters and estimators.
//! * [`zeros`]: average number of zeros of random function systems.
//! * [`experiment`]: named scenarios, configuration and reports.

pub mod error;
pub mod exec;
pub mod experiment;
pub mod croftonsim;
pub mod densities;
pub mod geomcore;
pub mod mixvol;
pub mod numeric;
pub mod zeros;

pub use error::{Error, Result};
pub use exec::Execution;
