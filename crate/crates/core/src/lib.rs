//! Pair correlation of base-point angles in hyperbolic lattice orbits.
//!
//! The crate has two sides that are meant to be compared against each other:
//!
//! * [`lattice`] and [`empirical`] build concrete orbits `Γ·e_{n+1}` in the
//!   hyperboloid model and count ordered pairs of orbit points whose angle at
//!   the base point is below `2kξ/Q²`;
//! * [`density`] evaluates the limiting pair correlation density `g₂(ξ)`
//!   and its antiderivative `R₂(ξ)` from the distances `t(M)` of orbit
//!   points to the base point, together with the volume formulas and
//!   asymptotic references used to check them.
//!
//! [`geometry`] holds the hyperboloid-model primitives and [`quad`] the
//! adaptive Gauss–Kronrod integrator everything numerical is built on.

pub mod density;
pub mod empirical;
pub mod error;
pub mod geometry;
pub mod lattice;
pub mod quad;
pub mod util;

pub use error::{Error, Result};
