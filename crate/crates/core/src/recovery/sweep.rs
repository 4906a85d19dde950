//! Convergence sweeps of recovery sequences.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::{rigidity_diagnostics, RecoveryMap, Regime};
use crate::energy::{e_atom, max_cell_distance, AtomisticModel};
use crate::error::{Error, Result};
use crate::lattice::{FilmConfig, Lattice};
use crate::limits::{e_vk, e_vk_nu, Field, Quadrature};
use crate::quadforms::LimitForms;

/// Optional per-level diagnostics; both need a pass over all cells with
/// SVDs and are off by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(default)]
    pub max_dist: bool,
    #[serde(default)]
    pub interpolation: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Midpoint subdivisions per unit length for the limit integrals.
    pub quad_per_unit: usize,
    pub diagnostics: Diagnostics,
    pub timing: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            quad_per_unit: 512,
            diagnostics: Diagnostics::default(),
            timing: false,
        }
    }
}

/// One level of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub eps: f64,
    pub nu: usize,
    pub h: f64,
    /// `h^-4 E_n(y_n)`.
    pub e_scaled: f64,
    pub e_limit: f64,
    pub gap_abs: f64,
    /// `gap_abs / |e_limit|`, or `gap_abs` when the limit vanishes.
    pub gap_rel: f64,
    pub max_dist: Option<f64>,
    pub i_over_h4: Option<f64>,
    pub wall_ms: f64,
}

fn quadrature_for(cfg: &FilmConfig, per_unit: usize) -> Quadrature {
    let (lx, ly) = cfg.lengths();
    Quadrature {
        lx,
        ly,
        m1: ((lx * per_unit as f64).round() as usize).max(1),
        m2: ((ly * per_unit as f64).round() as usize).max(1),
    }
}

/// Limit energy of the regime for the film's domain.
pub fn limit_energy(
    field: &Field,
    forms: &LimitForms,
    cfg: &FilmConfig,
    regime: Regime,
    per_unit: usize,
) -> Result<f64> {
    let quad = quadrature_for(cfg, per_unit);
    match regime {
        Regime::Thin => Ok(e_vk(field, forms, &quad, None)),
        Regime::Ultrathin => e_vk_nu(field, cfg.nu, forms, &quad, None),
    }
}

/// Builds the recovery at `cfg` and compares its scaled energy with
/// `e_limit`.
pub fn level_stats(
    field: &Field,
    forms: &LimitForms,
    model: &AtomisticModel,
    cfg: FilmConfig,
    regime: Regime,
    e_limit: f64,
    opts: &SweepOptions,
) -> Result<LevelStats> {
    let start = Instant::now();
    let lat = Lattice::new(cfg)?;
    let map = RecoveryMap::new(field, forms, cfg, regime, Matrix3::identity())?;
    let h = cfg.thickness();
    let e_scaled = cfg.epsilon.powi(3) / h.powi(5) * e_atom(&map, &lat, model);
    if !e_scaled.is_finite() {
        return Err(Error::Numeric(format!("non-finite energy at eps = {}", cfg.epsilon)));
    }
    let (max_dist, i_over_h4) = match opts.diagnostics {
        Diagnostics {
            interpolation: true, ..
        } => {
            let r = rigidity_diagnostics(&map, &lat, false);
            (Some(r.max_cell_distance), Some(r.interpolation / h.powi(4)))
        }
        Diagnostics { max_dist: true, .. } => (Some(max_cell_distance(&map, &lat)), None),
        _ => (None, None),
    };
    let gap_abs = (e_scaled - e_limit).abs();
    Ok(LevelStats {
        eps: cfg.epsilon,
        nu: cfg.nu,
        h,
        e_scaled,
        e_limit,
        gap_abs,
        gap_rel: if e_limit == 0.0 {
            gap_abs
        } else {
            gap_abs / e_limit.abs()
        },
        max_dist,
        i_over_h4,
        wall_ms: if opts.timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        },
    })
}

/// `h^-4 E_n(y_n)` against the limit energy along a sequence of films; the
/// limit is evaluated once per distinct layer count and domain.
pub fn scaled_energy_gap(
    field: &Field,
    forms: &LimitForms,
    model: &AtomisticModel,
    levels: &[FilmConfig],
    regime: Regime,
    opts: &SweepOptions,
) -> Result<Vec<LevelStats>> {
    let mut limits: HashMap<(usize, u64, u64), f64> = HashMap::new();
    let mut rows = Vec::with_capacity(levels.len());
    for cfg in levels {
        let (lx, ly) = cfg.lengths();
        let key = (
            if regime == Regime::Thin { 0 } else { cfg.nu },
            lx.to_bits(),
            ly.to_bits(),
        );
        let e_limit = match limits.get(&key) {
            Some(&e) => e,
            None => {
                let e = limit_energy(field, forms, cfg, regime, opts.quad_per_unit)?;
                limits.insert(key, e);
                e
            }
        };
        rows.push(level_stats(field, forms, model, *cfg, regime, e_limit, opts)?);
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`; `None` with fewer than
/// two usable (positive, finite) points.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Largest cell distance to `SO(3) Z` per level and the first level from
/// which every later level lies in `S_{delta/2}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierReport {
    pub delta: f64,
    pub h: Vec<f64>,
    pub max_dist: Vec<f64>,
    pub first_inside: Option<usize>,
    /// Fitted exponent of `max_dist ~ h^p`.
    pub slope: Option<f64>,
}

impl BarrierReport {
    pub fn from_levels(h: Vec<f64>, max_dist: Vec<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(Error::Parameter(format!("delta must be positive, got {delta}")));
        }
        let mut first_inside = None;
        for n in (0..max_dist.len()).rev() {
            if max_dist[n] < 0.5 * delta {
                first_inside = Some(n);
            } else {
                break;
            }
        }
        let slope = loglog_slope(&h, &max_dist);
        Ok(BarrierReport {
            delta,
            h,
            max_dist,
            first_inside,
            slope,
        })
    }
}

pub fn energy_barrier_check(
    field: &Field,
    forms: &LimitForms,
    levels: &[FilmConfig],
    regime: Regime,
    delta: f64,
) -> Result<BarrierReport> {
    let mut h = vec![];
    let mut dist = vec![];
    for cfg in levels {
        let lat = Lattice::new(*cfg)?;
        let map = RecoveryMap::new(field, forms, *cfg, regime, Matrix3::identity())?;
        h.push(cfg.thickness());
        dist.push(max_cell_distance(&map, &lat));
    }
    BarrierReport::from_levels(h, dist, delta)
}
