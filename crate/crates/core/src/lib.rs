//! Numerical core for the dynamics of polynomial diffeomorphisms of C².
//!
//! Maps are compositions of Hénon factors `(z, w) ↦ ((a + b(z))·w + p(z), a·z)`.
//! The crate computes the escape-rate potentials G± and the Böttcher
//! coordinate, slices of K± along holomorphic transversals together with
//! tangency counting, periodic orbits and power-series unstable manifolds,
//! external rays on unstable leaves, and per-parameter connectivity verdicts.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, parallel scans
//! and the command line live in the `henonlab` crate.

#![no_std]
#![allow(clippy::too_many_arguments)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod contour;
pub mod error;
pub mod family;
pub mod henon;
pub mod linalg;
pub mod measure;
pub mod poly;
pub mod potential;
pub mod rays;
pub mod saddle;
pub mod series;
pub mod slice;

pub use error::{Error, Result};
pub use henon::{
    EscapeRecord, FiltrationGeometry, HenonFactor, MapSpec, Point, Side, Verdict,
};
pub use poly::Poly;

/// Complex scalar used throughout the crate.
pub type C = num_complex::Complex64;

/// Shorthand constructor for a complex number.
#[inline]
pub fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}
