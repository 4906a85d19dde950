//! Discrete strains of lattice deformations and their predicted limits.

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::{solve_correctors, Regime};
use crate::error::{Error, Result};
use crate::lattice::{discrete_gradient, embed2, nearest_rotation, z_matrix, CellIndex, CellMatrix, Lattice, NodeMap};
use crate::limits::{strains_at, Field, Quadrature};
use crate::quadforms::LimitForms;
use crate::reduce::Sum;

/// `(R^T G - Z) / h^2` with `R` the nearest rotation to `G`.
pub fn cell_strain(g: &CellMatrix, h: f64) -> CellMatrix {
    let r = nearest_rotation(g);
    (r.transpose() * g - z_matrix()) / (h * h)
}

/// Per-cell strains in the order of [`Lattice::cells`].
pub fn extract_strain<M: NodeMap + ?Sized>(w: &M, lat: &Lattice) -> Vec<CellMatrix> {
    let h = lat.thickness();
    (0..lat.cell_count())
        .into_par_iter()
        .map(|id| cell_strain(&discrete_gradient(w, lat, lat.cell_at(id)), h))
        .collect()
}

fn sym(a: &Matrix3<f64>) -> Matrix3<f64> {
    (a + a.transpose()) * 0.5
}

/// Predicted limit of the cell strains at `x'` and rescaled height `x3`.
///
/// The recovery correctors and the `|grad v|^2 / 2` stretch enter the
/// third row and column; for a fixed layer count `x3` is snapped to the
/// midpoint of its layer and the non-affine `G3 / (2(nu-1))` is added.
pub fn limit_strain(
    field: &Field,
    forms: &LimitForms,
    regime: Regime,
    nu: usize,
    x: Vector2<f64>,
    x3: f64,
) -> CellMatrix {
    let s = strains_at(field, x);
    let c = solve_correctors(forms, &s, regime, nu);
    let n = nu as f64 - 1.0;
    let x3 = match regime {
        Regime::Thin => x3,
        Regime::Ultrathin => ((x3 * n).floor().clamp(0.0, n - 1.0) + 0.5) / n,
    };
    let t = x3 - 0.5;
    let mut a = embed2(&(s.g1 + s.g2 * t));
    a[(2, 2)] = 0.5 * s.grad_v.norm_squared();
    let d = c.d0 + c.d1 * t;
    a += sym(&(d * Vector3::z().transpose()));
    let mut g = a * z_matrix();
    if regime == Regime::Ultrathin {
        g += s.g3 * (0.5 / n);
    }
    g
}

/// Moments `int phi G dx` of a strain field over `S x (0, 1)` against
/// `1, x1, x2` and the indicators of the `nu - 1` layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub labels: Vec<String>,
    pub values: Vec<CellMatrix>,
}

impl MomentSet {
    fn labels(nu: usize) -> Vec<String> {
        let mut l = vec!["1".to_string(), "x1".to_string(), "x2".to_string()];
        l.extend((1..nu).map(|j| format!("layer{j}")));
        l
    }

    /// Largest Frobenius distance between matching moments.
    pub fn max_gap(&self, other: &MomentSet) -> Result<f64> {
        if self.labels != other.labels {
            return Err(Error::Dimension {
                expected: self.labels.join(","),
                got: other.labels.join(","),
            });
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Largest moment norm.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

struct MomentAcc {
    sums: Vec<[Sum; 24]>,
}

impl MomentAcc {
    fn new(n: usize) -> Self {
        MomentAcc {
            sums: vec![[Sum::default(); 24]; n],
        }
    }

    fn add(&mut self, slot: usize, g: &CellMatrix, w: f64) {
        for (s, x) in self.sums[slot].iter_mut().zip(g.iter()) {
            s.add(w * x);
        }
    }

    fn merge(&mut self, other: MomentAcc) {
        for (a, b) in self.sums.iter_mut().zip(other.sums) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                x.merge(y);
            }
        }
    }

    fn finish(self) -> Vec<CellMatrix> {
        self.sums
            .iter()
            .map(|s| CellMatrix::from_iterator(s.iter().map(Sum::value)))
            .collect()
    }
}

fn accumulate(acc: &mut MomentAcc, g: &CellMatrix, x: Vector2<f64>, layer: usize, vol: f64) {
    acc.add(0, g, vol);
    acc.add(1, g, vol * x.x);
    acc.add(2, g, vol * x.y);
    acc.add(3 + layer, g, vol);
}

/// Moments of the cell strains of `w`; every cell contributes its strain
/// times the test function at the cell midpoint times the rescaled cell
/// volume `eps^2 / (nu - 1)`.
pub fn strain_moments<M: NodeMap + ?Sized>(w: &M, lat: &Lattice) -> MomentSet {
    let cfg = lat.config();
    let h = lat.thickness();
    let vol = cfg.epsilon * cfg.epsilon / (cfg.nu - 1) as f64;
    let slots = 3 + cfg.nu - 1;
    let acc = crate::reduce::chunked(
        lat.cell_count(),
        || MomentAcc::new(slots),
        |acc, id| {
            let c: CellIndex = lat.cell_at(id);
            let g = cell_strain(&discrete_gradient(w, lat, c), h);
            let m = lat.cell_midpoint(c);
            accumulate(acc, &g, Vector2::new(m.x, m.y), c.k, vol);
        },
        |a, b| a.merge(b),
    );
    MomentSet {
        labels: MomentSet::labels(cfg.nu),
        values: acc.finish(),
    }
}

/// Moments of [`limit_strain`] over `(0, lx) x (0, ly) x (0, 1)`; the
/// in-plane integral uses `quad`, the vertical one is exact per layer
/// since the limit strain is affine in `x3` on every layer.
pub fn limit_strain_moments(
    field: &Field,
    forms: &LimitForms,
    regime: Regime,
    nu: usize,
    quad: &Quadrature,
) -> MomentSet {
    let layers = nu - 1;
    let vol = quad.weight() / layers as f64;
    let acc = crate::reduce::chunked(
        quad.len() * layers,
        || MomentAcc::new(3 + layers),
        |acc, id| {
            let (q, k) = (id % quad.len(), id / quad.len());
            let x = quad.node(q);
            let g = limit_strain(field, forms, regime, nu, x, (k as f64 + 0.5) / layers as f64);
            accumulate(acc, &g, x, k, vol);
        },
        |a, b| a.merge(b),
    );
    MomentSet {
        labels: MomentSet::labels(nu),
        values: acc.finish(),
    }
}
