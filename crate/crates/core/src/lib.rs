//! Simulation toolkit for Brownian spatial trees.
//!
//! Real trees are coded by excursions ([`excursion`]), discretized by
//! conditioned Galton-Watson trees ([`gw`]) and embedded in `R^d` by Gaussian
//! snakes or branching random walks ([`embedding`]). The remaining modules
//! cover finite reductions of those trees, random walks on them, arc measures
//! and the cluster representation of super-Brownian motion.

pub mod embedding;
pub mod error;
pub mod excursion;
pub mod gw;
pub mod io;
pub mod measures;
pub mod reduced;
pub mod rmq;
pub mod rng;
pub mod stats;
pub mod superprocess;
pub mod walks;

pub use error::{Error, Result};
