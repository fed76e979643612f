//! Simulation of eigenvalue collisions for matrix-valued Gaussian processes.
//!
//! The crate samples fractional GOE/GUE-type matrix paths
//! `Y(t) = A + X(t)`, tracks their ordered spectra, estimates collision
//! probabilities under grid refinement, and provides the geometric and
//! potential-theoretic tools (degenerate-matrix charts, Bessel–Riesz energy,
//! box-counting dimension) used to reason about when eigenvalues meet.

pub mod capacity;
pub mod config;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod geometry;
pub mod output;
pub mod quadrature;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
