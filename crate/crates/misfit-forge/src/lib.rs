//! Construction and relaxation of biphase atomistic lattices.
//!
//! The crate builds lattices with mismatched lattice constants joined across
//! a flat interface, derives their bond topology from Voronoi/Delaunay
//! geometry, assembles discrete harmonic energies, and minimizes them under
//! far-field clamps to measure the misfit transition cost as a function of
//! wire thickness.

pub mod cli;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod geom;
pub mod io;
pub mod lattice;
pub mod relax;
pub mod rigidity;
pub mod seed;
pub mod tessellation;

pub use error::{Error, Result};
