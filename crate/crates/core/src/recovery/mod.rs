//! Recovery sequences for the von Kármán limits, discrete strains and
//! interpolation-based rigidity diagnostics.
//!
//! The ansatz lives on the rescaled film `S x [0, 1]`:
//!
//! ```text
//! y(x) = (x', h x3) + (h^2 u, h v) - h^2 (x3 - 1/2) (grad' v, 0) + h^3 d(x', x3)
//! ```
//!
//! and node `(i, j, k)` sits at `x' = (i eps, j eps)`, `x3 = k / (nu - 1)`.

mod interpolation;
mod strain;
mod sweep;

pub use interpolation::{
    cell_simplex_gradients, extract_displacements, interpolate_in_cell, rigidity_diagnostics, CellRigidity,
    Displacements, RigidityReport, FACES,
};
pub use strain::{cell_strain, extract_strain, limit_strain, limit_strain_moments, strain_moments, MomentSet};
pub use sweep::{
    energy_barrier_check, level_stats, limit_energy, loglog_slope, scaled_energy_gap, BarrierReport, Diagnostics,
    LevelStats, SweepOptions,
};

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{embed2, z_matrix, Deformation, FilmConfig, Lattice, NodeMap};
use crate::limits::{strains_from_point, Field, FieldSpec, LimitStrains};
use crate::quadforms::LimitForms;

/// Asymptotic regime of the layer count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `nu -> infinity`; the limit is `E_vK`.
    Thin,
    /// Fixed layer count; the limit is `E_vK^(nu)`.
    Ultrathin,
}

/// Vertical corrector coefficients at one in-plane point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Correctors {
    pub d0: Vector3<f64>,
    pub d1: Vector3<f64>,
}

impl Correctors {
    /// `d(x3) = x3 d0 + (x3^2 - x3)/2 d1`. For a fixed layer count this
    /// coincides at every atomic layer with the layerwise-affine corrector,
    /// which is all the lattice sees.
    #[inline]
    pub fn profile(&self, x3: f64) -> Vector3<f64> {
        self.d0 * x3 + self.d1 * (0.5 * (x3 * x3 - x3))
    }

    /// Layerwise-affine corrector for `nu` layers, continuous and affine on
    /// every `[(j-1)/(nu-1), j/(nu-1)]`.
    pub fn layered_profile(&self, x3: f64, nu: usize) -> Vector3<f64> {
        let n = (nu - 1) as f64;
        let mut d = Vector3::zeros();
        for j in 1..nu {
            let lo = (j - 1) as f64 / n;
            if x3 <= lo {
                break;
            }
            let t = (x3.min(j as f64 / n)) - lo;
            d += self.layer_slope(j, nu) * t;
        }
        d
    }

    /// `d_3 d` on layer `j` (1-based): `d0 + (2j - nu)/(2(nu-1)) d1`.
    #[inline]
    pub fn layer_slope(&self, j: usize, nu: usize) -> Vector3<f64> {
        self.d0 + self.d1 * ((2.0 * j as f64 - nu as f64) / (2.0 * (nu as f64 - 1.0)))
    }
}

/// `[[G1, 0], [0, |grad v|^2 / 2]]`.
fn membrane_block(s: &LimitStrains) -> Matrix3<f64> {
    let mut a = embed2(&s.g1);
    a[(2, 2)] = 0.5 * s.grad_v.norm_squared();
    a
}

/// Minimising vertical correctors `d0`, `d1` at one point.
pub fn solve_correctors(forms: &LimitForms, s: &LimitStrains, regime: Regime, nu: usize) -> Correctors {
    let z = z_matrix();
    let mut a0 = membrane_block(s) * z;
    if regime == Regime::Ultrathin {
        a0 += s.g3 * (0.5 / (nu as f64 - 1.0));
    }
    Correctors {
        d0: forms.relax_b(&a0),
        d1: forms.relax_b(&(embed2(&s.g2) * z)),
    }
}

/// Field data cached per lattice column.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ColumnData {
    pub u: Vector2<f64>,
    pub v: f64,
    pub grad_v: Vector2<f64>,
    pub corr: Correctors,
}

/// The recovery deformation, evaluated lazily from per-column data so that
/// large films never store all node positions.
#[derive(Debug, Clone)]
pub struct RecoveryMap {
    cfg: FilmConfig,
    h: f64,
    rotation: Matrix3<f64>,
    columns: Vec<ColumnData>,
}

fn check_field_covers(field: &Field, cfg: &FilmConfig) -> Result<()> {
    if let FieldSpec::Sampled(s) = field.spec() {
        let (lx, ly) = cfg.lengths();
        if s.lx + 1e-12 < lx || s.ly + 1e-12 < ly {
            return Err(Error::Parameter(format!(
                "sampled field covers {}x{}, film needs {lx}x{ly}",
                s.lx, s.ly
            )));
        }
    }
    Ok(())
}

impl RecoveryMap {
    pub fn new(
        field: &Field,
        forms: &LimitForms,
        cfg: FilmConfig,
        regime: Regime,
        rotation: Matrix3<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        check_field_covers(field, &cfg)?;
        let lat = Lattice::new(cfg)?;
        let n1 = cfg.n1 + 1;
        let columns: Vec<ColumnData> = (0..lat.column_count())
            .into_par_iter()
            .map(|c| {
                let x = lat.column_position(c % n1, c / n1);
                let p = field.point(x);
                let s = strains_from_point(&p);
                ColumnData {
                    u: p.u(),
                    v: p.v.value,
                    grad_v: p.v.grad,
                    corr: solve_correctors(forms, &s, regime, cfg.nu),
                }
            })
            .collect();
        if columns.iter().any(|c| {
            !(c.v.is_finite()
                && c.u
                    .iter()
                    .chain(c.corr.d0.iter())
                    .chain(c.corr.d1.iter())
                    .all(|x| x.is_finite()))
        }) {
            return Err(Error::Numeric("displacement field is not finite on the film".into()));
        }
        Ok(RecoveryMap {
            cfg,
            h: cfg.thickness(),
            rotation,
            columns,
        })
    }

    pub fn config(&self) -> &FilmConfig {
        &self.cfg
    }

    pub fn column(&self, i: usize, j: usize) -> &ColumnData {
        &self.columns[j * (self.cfg.n1 + 1) + i]
    }

    /// The ansatz at rescaled height `x3` above column `(i, j)`.
    #[inline]
    pub fn at(&self, i: usize, j: usize, x3: f64) -> Vector3<f64> {
        let c = self.column(i, j);
        let e = self.cfg.epsilon;
        let h = self.h;
        let h2 = h * h;
        let d = c.corr.profile(x3) * (h2 * h);
        let tilt = h2 * (x3 - 0.5);
        let y = Vector3::new(
            i as f64 * e + h2 * c.u.x - tilt * c.grad_v.x + d.x,
            j as f64 * e + h2 * c.u.y - tilt * c.grad_v.y + d.y,
            h * x3 + h * c.v + d.z,
        );
        self.rotation * y
    }
}

impl NodeMap for RecoveryMap {
    #[inline]
    fn node(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.at(i, j, k as f64 / (self.cfg.nu - 1) as f64)
    }
}

/// Materialised recovery deformation on the lattice.
pub fn build_recovery(field: &Field, forms: &LimitForms, cfg: FilmConfig, regime: Regime) -> Result<Deformation> {
    let map = RecoveryMap::new(field, forms, cfg, regime, Matrix3::identity())?;
    Ok(Deformation::from_map(&Lattice::new(cfg)?, &map))
}

/// The ansatz at an arbitrary rescaled point, computed directly from the
/// field (no column cache).
pub fn ansatz_at(field: &Field, forms: &LimitForms, regime: Regime, cfg: &FilmConfig, x: Vector3<f64>) -> Vector3<f64> {
    let h = cfg.thickness();
    let p = field.point(Vector2::new(x.x, x.y));
    let s = strains_from_point(&p);
    let c = solve_correctors(forms, &s, regime, cfg.nu);
    let d = match regime {
        Regime::Thin => c.profile(x.z),
        Regime::Ultrathin => c.layered_profile(x.z, cfg.nu),
    };
    Vector3::new(
        x.x + h * h * p.u1.value - h * h * (x.z - 0.5) * p.v.grad.x,
        x.y + h * h * p.u2.value - h * h * (x.z - 0.5) * p.v.grad.y,
        h * x.z + h * p.v.value,
    ) + d * h.powi(3)
}
