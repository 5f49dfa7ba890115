//! Configuration-space grids, wavefunctions, potentials and unitary
//! Schrodinger evolution.

pub mod evolve;
pub mod grid;
pub mod potential;
pub mod state;
