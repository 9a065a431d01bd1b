//! Killed lattice random walks in cones: exact dynamic programming, Monte
//! Carlo, harmonic-function tables and quasistationary distributions, with
//! numerical checks of their large-time limit laws.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod cramer;
pub mod dp;
pub mod error;
pub mod harmonic;
pub mod lattice;
pub mod model;
pub mod report;
pub mod simulate;
pub mod spectral;
pub mod whiten;

pub use error::{LabError, Result};
