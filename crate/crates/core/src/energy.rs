//! Total atomistic energies: cell sums with surface layers, body forces,
//! non-penetration, the scaled totals and the admissible set `S_delta`.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    discrete_gradient, dist_so3z, lower_face, upper_face, z_lower, z_matrix, CellIndex, CellLayer, CellMatrix,
    Deformation, Lattice, NodeMap,
};
use crate::potentials::{v_nonpen, v_nonpen_gradient, BulkLaw, NonPenParams, SurfaceLaw};
use crate::reduce::{par_max, par_sum, Sum};

/// Cell-energy description of the film.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomisticModel {
    pub bulk: BulkLaw,
    pub surface: SurfaceLaw,
    #[serde(default)]
    pub nonpen: Option<NonPenParams>,
    /// Radius of the admissible set `S_delta` for the restricted energy.
    #[serde(default)]
    pub delta_adm: Option<f64>,
}

impl AtomisticModel {
    pub fn new(bulk: BulkLaw, surface: SurfaceLaw) -> Result<Self> {
        let m = AtomisticModel {
            bulk,
            surface,
            nonpen: None,
            delta_adm: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.bulk.validate()?;
        if let Some(p) = &self.nonpen {
            p.validate()?;
        }
        if let Some(d) = self.delta_adm {
            if !(d > 0.0) {
                return Err(Error::Parameter(format!(
                    "admissibility radius must be positive, got {d}"
                )));
            }
        }
        let wc = self.bulk.energy(&z_matrix());
        let ws = self.surface.energy(&z_lower());
        if wc.abs() > 1e-12 || ws.abs() > 1e-12 {
            return Err(Error::Parameter(format!(
                "cell laws must vanish at the reference cell, got W_cell(Z)={wc:e}, W_surf={ws:e}"
            )));
        }
        Ok(())
    }

    /// Energy of one cell given its discrete gradient and layer.
    #[inline]
    pub fn cell_energy(&self, g: &CellMatrix, layer: CellLayer) -> f64 {
        let mut e = self.bulk.energy(g);
        if layer.has_bottom_surface() {
            e += self.surface.energy(&lower_face(g));
        }
        if layer.has_top_surface() {
            e += self.surface.energy(&upper_face(g));
        }
        e
    }

    /// `dW/dG` for one cell including its surface terms.
    pub fn cell_gradient(&self, g: &CellMatrix, layer: CellLayer) -> CellMatrix {
        let mut out = self.bulk.gradient(g);
        if layer.has_bottom_surface() {
            let s = self.surface.gradient(&lower_face(g));
            let mut view = out.fixed_columns_mut::<4>(0);
            view += s;
        }
        if layer.has_top_surface() {
            let s = self.surface.gradient(&upper_face(g));
            let mut view = out.fixed_columns_mut::<4>(4);
            view += s;
        }
        out
    }
}

/// `E_atom(w)`: cell energies plus top and bottom surface energies.
pub fn e_atom<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, model: &AtomisticModel) -> f64 {
    par_sum(lat.cell_count(), |id| {
        let c = lat.cell_at(id);
        model.cell_energy(&discrete_gradient(w, lat, c), lat.cell_layer(c))
    })
}

/// Gradient of `E_atom` with respect to the node positions.
pub fn e_atom_gradient(w: &Deformation, lat: &Lattice, model: &AtomisticModel) -> Vec<Vector3<f64>> {
    use rayon::prelude::*;
    let inv = 1.0 / lat.epsilon();
    let per_cell: Vec<CellMatrix> = (0..lat.cell_count())
        .into_par_iter()
        .map(|id| {
            let c = lat.cell_at(id);
            let g = model.cell_gradient(&discrete_gradient(w, lat, c), lat.cell_layer(c));
            // chain rule through the column centring and the 1/eps scaling
            let mean = g.column_sum() / 8.0;
            let mut out = g;
            for mut col in out.column_iter_mut() {
                col -= mean;
                col *= inv;
            }
            out
        })
        .collect();
    let mut grad = vec![Vector3::zeros(); lat.node_count()];
    for (id, g) in per_cell.iter().enumerate() {
        let c = lat.cell_at(id);
        for (col, &(i, j, k)) in lat.cell_corners(c).iter().enumerate() {
            grad[lat.node_id(i, j, k)] += g.column(col);
        }
    }
    grad
}

/// Per-column body force, identical on every layer of the column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceField {
    pub n1: usize,
    pub n2: usize,
    pub nu: usize,
    pub columns: Vec<Vector3<f64>>,
}

impl ForceField {
    pub fn zero(lat: &Lattice) -> Self {
        let cfg = lat.config();
        ForceField {
            n1: cfg.n1,
            n2: cfg.n2,
            nu: cfg.nu,
            columns: vec![Vector3::zeros(); lat.column_count()],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.columns.iter().all(|f| *f == Vector3::zeros())
    }

    #[inline]
    pub fn at_column(&self, i: usize, j: usize) -> Vector3<f64> {
        self.columns[j * (self.n1 + 1) + i]
    }

    /// Net force and first moments `sum f`, `sum f x1`, `sum f x2` over all
    /// nodes.
    pub fn moments(&self, lat: &Lattice) -> [Vector3<f64>; 3] {
        let mut m = [Vector3::zeros(); 3];
        let layers = lat.config().nu as f64;
        for j in 0..=self.n2 {
            for i in 0..=self.n1 {
                let f = self.at_column(i, j) * layers;
                let x = lat.column_position(i, j);
                m[0] += f;
                m[1] += f * x.x;
                m[2] += f * x.y;
            }
        }
        m
    }

    /// Checks the zero net force and zero first moment conditions.
    pub fn check(&self, lat: &Lattice) -> Result<()> {
        let cfg = lat.config();
        if (self.n1, self.n2, self.nu) != (cfg.n1, cfg.n2, cfg.nu) || self.columns.len() != lat.column_count() {
            return Err(Error::Dimension {
                expected: format!("force field on {:?}", cfg),
                got: format!("{}x{}x{} ({} columns)", self.n1, self.n2, self.nu, self.columns.len()),
            });
        }
        let (lx, ly) = cfg.lengths();
        let scale: f64 = self.columns.iter().map(|f| f.norm()).sum::<f64>() * cfg.nu as f64 * (1.0 + lx.max(ly));
        let m = self.moments(lat);
        let worst = m.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if worst > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::Force(format!(
                "net force or first moment {worst:e} exceeds tolerance (scale {scale:e})"
            )));
        }
        Ok(())
    }
}

/// Builds an admissible force from a raw in-plane profile: the band of
/// columns next to the lateral boundary is zeroed and the least-squares
/// affine fit in `(1, x1, x2)` over the remaining columns is removed, which
/// makes the net force and first moments vanish.
pub fn make_admissible_force(lat: &Lattice, raw: impl Fn(Vector2<f64>) -> Vector3<f64>) -> Result<ForceField> {
    let cfg = lat.config();
    let mut field = ForceField::zero(lat);
    let mut interior = Vec::new();
    for j in 0..=cfg.n2 {
        for i in 0..=cfg.n1 {
            if !lat.is_boundary_band_column(i, j) {
                interior.push((i, j));
            }
        }
    }
    let mut gram = Matrix3::<f64>::zeros();
    let mut rhs = Matrix3::<f64>::zeros();
    let mut values = Vec::with_capacity(interior.len());
    for &(i, j) in &interior {
        let x = lat.column_position(i, j);
        let basis = Vector3::new(1.0, x.x, x.y);
        let f = raw(x);
        if !f.iter().all(|v| v.is_finite()) {
            return Err(Error::Force(format!("non-finite raw force at column ({i}, {j})")));
        }
        gram += basis * basis.transpose();
        rhs += basis * f.transpose();
        values.push(f);
    }
    // gram is invertible iff the interior columns are not collinear
    let chol = gram.cholesky().filter(|_| {
        let ev = gram.symmetric_eigenvalues();
        ev.min() > 1e-12 * ev.max()
    });
    let Some(chol) = chol else {
        return Err(Error::Force(format!(
            "{} interior columns do not span the plane; the film is too small for an admissible force",
            interior.len()
        )));
    };
    let coef = chol.solve(&rhs);
    for (&(i, j), f) in interior.iter().zip(values) {
        let x = lat.column_position(i, j);
        let fit = coef.transpose() * Vector3::new(1.0, x.x, x.y);
        field.columns[lat.column_id(i, j)] = f - fit;
    }
    Ok(field)
}

/// Samples a continuum force density with the thin-film scaling `h^3 f(x')`
/// and makes it admissible.
pub fn force_from_density(lat: &Lattice, density: impl Fn(Vector2<f64>) -> Vector3<f64>) -> Result<ForceField> {
    let h3 = lat.thickness().powi(3);
    make_admissible_force(lat, |x| density(x) * h3)
}

/// `E_body(w) = sum_x w(x) . f(x)`.
pub fn e_body<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, f: &ForceField) -> Result<f64> {
    f.check(lat)?;
    Ok(e_body_unchecked(w, lat, f))
}

pub(crate) fn e_body_unchecked<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, f: &ForceField) -> f64 {
    let cfg = *lat.config();
    let cols = lat.column_count();
    par_sum(cols, |c| {
        let (i, j) = (c % (cfg.n1 + 1), c / (cfg.n1 + 1));
        let fc = f.at_column(i, j);
        if fc == Vector3::zeros() {
            return 0.0;
        }
        let mut s = Sum::default();
        for k in 0..cfg.nu {
            s.add(w.node(i, j, k).dot(&fc));
        }
        s.value()
    })
}

/// Node pairs `(a, b)`, `a < b`, within interaction range, with their
/// unordered pair energy; sorted by `(a, b)`.
fn nonpen_pairs(points: &[Vector3<f64>], p: &NonPenParams) -> Vec<(usize, usize, f64)> {
    let size = 2.0 * p.delta;
    let key = |v: &Vector3<f64>| {
        (
            (v.x / size).floor() as i64,
            (v.y / size).floor() as i64,
            (v.z / size).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (a, v) in points.iter().enumerate() {
        grid.entry(key(v)).or_default().push(a);
    }
    let mut pairs = Vec::new();
    for (a, v) in points.iter().enumerate() {
        let (kx, ky, kz) = key(v);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = grid.get(&(kx + dx, ky + dy, kz + dz)) {
                        for &b in bucket {
                            if b > a {
                                let e = v_nonpen(v, &points[b], p);
                                if e != 0.0 {
                                    pairs.push((a, b, e));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    pairs.sort_unstable_by_key(|&(a, b, _)| (a, b));
    pairs
}

fn scaled_points(w: &Deformation, lat: &Lattice) -> Vec<Vector3<f64>> {
    let inv = 1.0 / lat.epsilon();
    w.positions.iter().map(|x| x * inv).collect()
}

/// `E_nonpen(w) = sum_{x != x'} V(w(x)/eps, w(x')/eps)`, via a spatial hash.
pub fn e_nonpen(w: &Deformation, lat: &Lattice, p: &NonPenParams) -> f64 {
    let pts = scaled_points(w, lat);
    let mut s = 0.0;
    for (_, _, e) in nonpen_pairs(&pts, p) {
        s += e;
    }
    2.0 * s
}

/// Reference `O(N^2)` evaluation of [`e_nonpen`].
pub fn e_nonpen_naive(w: &Deformation, lat: &Lattice, p: &NonPenParams) -> f64 {
    let pts = scaled_points(w, lat);
    let mut s = 0.0;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            s += v_nonpen(&pts[a], &pts[b], p);
        }
    }
    2.0 * s
}

pub fn e_nonpen_gradient(w: &Deformation, lat: &Lattice, p: &NonPenParams) -> Vec<Vector3<f64>> {
    let pts = scaled_points(w, lat);
    let inv = 1.0 / lat.epsilon();
    let mut grad = vec![Vector3::zeros(); pts.len()];
    // pairs with zero energy can still sit on the ramp boundary; the ramp
    // gradient vanishes there, so the energy-filtered list is sufficient
    for (a, b, _) in nonpen_pairs(&pts, p) {
        let g = v_nonpen_gradient(&pts[a], &pts[b], p) * (2.0 * inv);
        grad[a] += g;
        grad[b] -= g;
    }
    grad
}

/// Which energy functional to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyVariant {
    Plain,
    WithNonpen,
    /// Plain energy on `S_delta`, `+inf` outside.
    Restricted,
}

/// `(eps^3 / h) (E_atom + E_body [+ E_nonpen])`; the restricted variant
/// returns `f64::INFINITY` for deformations outside `S_delta`.
pub fn e_total(
    w: &Deformation,
    lat: &Lattice,
    model: &AtomisticModel,
    f: Option<&ForceField>,
    variant: EnergyVariant,
) -> Result<f64> {
    w.check(lat)?;
    let e = lat.epsilon();
    let pre = e.powi(3) / lat.thickness();
    if variant == EnergyVariant::Restricted {
        let delta = model
            .delta_adm
            .ok_or_else(|| Error::Config("restricted energy needs an admissibility radius".into()))?;
        if !in_s_delta(w, lat, delta).0 {
            return Ok(f64::INFINITY);
        }
    }
    let mut total = e_atom(w, lat, model);
    if let Some(f) = f {
        total += e_body(w, lat, f)?;
    }
    if variant == EnergyVariant::WithNonpen {
        let p = model
            .nonpen
            .ok_or_else(|| Error::Config("non-penetration parameters are not configured".into()))?;
        total += e_nonpen(w, lat, &p);
    }
    Ok(pre * total)
}

/// Largest cell distance `dist(grad w, SO(3) Z)`.
pub fn max_cell_distance<M: NodeMap + ?Sized>(w: &M, lat: &Lattice) -> f64 {
    par_max(lat.cell_count(), |id| {
        dist_so3z(&discrete_gradient(w, lat, lat.cell_at(id)))
    })
}

/// Membership in `S_delta` together with the largest cell distance.
pub fn in_s_delta<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, delta: f64) -> (bool, f64) {
    let m = max_cell_distance(w, lat);
    (m < delta, m)
}

/// Cell-wise table used by diagnostics.
pub fn cell_energies<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, model: &AtomisticModel) -> Vec<(CellIndex, f64)> {
    lat.cells()
        .map(|c| (c, model.cell_energy(&discrete_gradient(w, lat, c), lat.cell_layer(c))))
        .collect()
}
