//! Numerical laboratory for atomistic thin films: cell energies on the cubic
//! lattice, their von Kármán limit functionals (including the finite-layer
//! variants), explicit recovery sequences and convergence diagnostics.

pub mod config;
pub mod energy;
pub mod error;
pub mod lattice;
pub mod limits;
pub mod minimize;
pub mod potentials;
pub mod quadforms;
pub mod recovery;
pub mod reduce;
pub mod report;

pub use config::RunConfig;
pub use energy::{AtomisticModel, EnergyVariant, ForceField};
pub use error::{Error, Result};
pub use lattice::{CellIndex, CellMatrix, Deformation, FaceMatrix, FilmConfig, Lattice, NodeMap};
pub use limits::{Field, FieldSpec, Quadrature};
pub use minimize::{perturbed_identity, MinimizeOptions, MinimizeResult, StepRule};
pub use quadforms::LimitForms;
pub use recovery::{LevelStats, RecoveryMap, Regime};
pub use report::ReportRow;
