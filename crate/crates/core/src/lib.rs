//! Numerical laboratory for pilot-wave (de Broglie-Bohm) quantum mechanics
//! on periodic configuration-space grids.
//!
//! The crate is organised around five layers:
//!
//! * [`configspace`] — grids, wavefunctions, potentials and unitary
//!   split-step evolution of the time-dependent Schrodinger equation;
//! * [`pilotwave`] — the Bohmian velocity field and single-trajectory
//!   integration, including guards near wavefunction nodes;
//! * [`ensemble`] — Monte Carlo realisations of trajectory continua:
//!   density sampling, ensemble transport, equivariance testing and
//!   trajectory selection;
//! * [`perception`] — time-stamped configuration-space regions with prior
//!   weights, and their measure densities under the SQM / SBM / SCBM / GCBM
//!   theory variants;
//! * [`inference`] — typicality of perceptions under a theory and Bayesian
//!   posterior weights for competing theories.
//!
//! Everything is deterministic given a seed: random sampling uses a
//! counter-based generator and all reductions run in a fixed order.

pub mod configspace;
pub mod ensemble;
pub mod inference;
pub mod perception;
pub mod pilotwave;
pub mod stats;

mod fft;

pub use configspace::evolve::{evolve, EvolutionConfig, EvolutionContext, EvolveError};
pub use configspace::grid::{Axis, Grid, GridError, Point, MAX_DIMS};
pub use configspace::potential::{Potential, PotentialError};
pub use configspace::state::{make_state, make_state_with, StateError, StateRecipe, Wavefunction};
pub use ensemble::{
    equivariance_test, evolve_ensemble, sample_initial, select_max_density_trajectory, Ensemble,
    EnsembleError, EquivarianceReport, InitialDensity,
};
pub use inference::{
    compare_theories, typicality, typicality_agreement_experiment, typicality_values,
    AgreementReport, InferenceError, TheoryComparison, TypicalityReport,
};
pub use ensemble::path_density_integrals;
pub use perception::{
    build_perception_family, measure_density, sbm_measure_density, scbm_measure_density,
    set_measure, sqm_measure_density, validate_family, FamilySpec, MeasureDensity, Perception,
    PerceptionError, PerceptionSet, Region, TheoryModel,
};
pub use pilotwave::{
    integrate_trajectory, path_density_integral, velocity_field, NodePolicy, PilotWaveError,
    Trajectory, VelocityField, VelocityTable,
};
