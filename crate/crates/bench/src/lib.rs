//! Shared fixtures for the benchmarks.

use thinfilm::potentials::{BulkLaw, MassSpringParams, SurfaceLaw};
use thinfilm::{AtomisticModel, FilmConfig, LimitForms};

pub fn mass_spring() -> AtomisticModel {
    let p = MassSpringParams { alpha: 1.0, beta: 0.5 };
    AtomisticModel::new(BulkLaw::MassSpring(p), SurfaceLaw::MassSpring(p)).expect("valid spring constants")
}

pub fn forms() -> LimitForms {
    LimitForms::assemble(&mass_spring()).expect("mass-spring forms")
}

/// Unit-square film with `n x n` columns and `nu` layers.
pub fn film(n: usize, nu: usize) -> FilmConfig {
    FilmConfig::new(1.0 / n as f64, nu, n, n).expect("valid film")
}
