//! Piecewise-affine interpolation of lattice deformations on 24 simplices
//! per cell, and the rigidity quantities built on it.

use std::sync::OnceLock;

use nalgebra::{Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use crate::lattice::{
    cell_positions, discrete_gradient, dist_so3, dist_so3z, CellIndex, CellMatrix, Lattice, NodeMap, CORNER_OFFSETS,
};
use crate::reduce::{chunked, Sum};

/// Corner indices of the six cell faces, each listed cyclically.
pub const FACES: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 2, 6, 7],
    [0, 3, 7, 4],
    [1, 2, 6, 5],
];

/// Simplex `(cell center, face center, corner a, corner b)` with the inverse
/// of its reference edge matrix in cell units.
struct Simplex {
    face: usize,
    a: usize,
    b: usize,
    inv: Matrix3<f64>,
}

fn corner(i: usize) -> Vector3<f64> {
    let o = CORNER_OFFSETS[i];
    Vector3::new(o[0] as f64, o[1] as f64, o[2] as f64)
}

fn face_center(f: usize) -> Vector3<f64> {
    FACES[f].iter().map(|&i| corner(i)).sum::<Vector3<f64>>() / 4.0
}

const CENTER: Vector3<f64> = Vector3::new(0.5, 0.5, 0.5);

fn simplices() -> &'static [Simplex; 24] {
    static S: OnceLock<[Simplex; 24]> = OnceLock::new();
    S.get_or_init(|| {
        std::array::from_fn(|n| {
            let (f, e) = (n / 4, n % 4);
            let (a, b) = (FACES[f][e], FACES[f][(e + 1) % 4]);
            let x = Matrix3::from_columns(&[face_center(f) - CENTER, corner(a) - CENTER, corner(b) - CENTER]);
            Simplex {
                face: f,
                a,
                b,
                inv: x.try_inverse().expect("reference simplex is non-degenerate"),
            }
        })
    })
}

/// Gradients of the interpolant on the 24 simplices of a cell, from raw
/// corner positions.
pub fn cell_simplex_gradients(raw: &CellMatrix, eps: f64) -> [Matrix3<f64>; 24] {
    let cols: [Vector3<f64>; 8] = std::array::from_fn(|i| raw.column(i).into_owned());
    let center = cols.iter().sum::<Vector3<f64>>() / 8.0;
    let faces: [Vector3<f64>; 6] =
        std::array::from_fn(|f| FACES[f].iter().map(|&i| cols[i]).sum::<Vector3<f64>>() / 4.0);
    let s = simplices();
    std::array::from_fn(|n| {
        let sx = &s[n];
        let w = Matrix3::from_columns(&[faces[sx.face] - center, cols[sx.a] - center, cols[sx.b] - center]);
        w * sx.inv / eps
    })
}

/// The interpolant at local cell coordinates `p` in `[0, 1]^3`.
pub fn interpolate_in_cell<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, c: CellIndex, p: Vector3<f64>) -> Vector3<f64> {
    let raw = cell_positions(w, lat, c);
    let cols: [Vector3<f64>; 8] = std::array::from_fn(|i| raw.column(i).into_owned());
    let center = cols.iter().sum::<Vector3<f64>>() / 8.0;
    let mut best = (f64::NEG_INFINITY, Vector3::zeros());
    for sx in simplices() {
        let lam = sx.inv * (p - CENTER);
        let lam0 = 1.0 - lam.sum();
        let worst = lam.min().min(lam0);
        if worst > best.0 {
            let fc = FACES[sx.face].iter().map(|&i| cols[i]).sum::<Vector3<f64>>() / 4.0;
            let y = center + (fc - center) * lam.x + (cols[sx.a] - center) * lam.y + (cols[sx.b] - center) * lam.z;
            best = (worst, y);
        }
    }
    best.1
}

/// Sandwich pair of one cell: `dist^2(grad w, SO(3) Z)` and the cell
/// average of `dist^2` of the interpolant's gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellRigidity {
    pub cell: CellIndex,
    pub lattice: f64,
    pub interpolated: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RigidityReport {
    /// `I(y) = int dist^2(grad_h y, SO(3))` over the rescaled film.
    pub interpolation: f64,
    pub max_cell_distance: f64,
    pub cells: Vec<CellRigidity>,
}

fn cell_rigidity<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, c: CellIndex) -> CellRigidity {
    let raw = cell_positions(w, lat, c);
    let grads = cell_simplex_gradients(&raw, lat.epsilon());
    let interpolated = grads.iter().map(|f| dist_so3(f).powi(2)).collect::<Sum>().value() / 24.0;
    CellRigidity {
        cell: c,
        lattice: dist_so3z(&discrete_gradient(w, lat, c)).powi(2),
        interpolated,
    }
}

/// `I(y)` and the largest cell distance to `SO(3) Z`; with `per_cell` the
/// sandwich pairs of all cells are kept.
pub fn rigidity_diagnostics<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, per_cell: bool) -> RigidityReport {
    let cfg = lat.config();
    // every cell has rescaled volume eps^3 / h
    let vol = cfg.epsilon.powi(3) / cfg.thickness();
    let (sum, max) = chunked(
        lat.cell_count(),
        || (Sum::default(), 0.0f64),
        |acc, id| {
            let r = cell_rigidity(w, lat, lat.cell_at(id));
            acc.0.add(r.interpolated);
            acc.1 = acc.1.max(r.lattice);
        },
        |a, b| {
            a.0.merge(&b.0);
            a.1 = a.1.max(b.1);
        },
    );
    let cells = if per_cell {
        (0..lat.cell_count())
            .into_par_iter()
            .map(|id| cell_rigidity(w, lat, lat.cell_at(id)))
            .collect()
    } else {
        vec![]
    };
    RigidityReport {
        interpolation: vol * sum.value(),
        max_cell_distance: max.sqrt(),
        cells,
    }
}

/// Vertical averages of a deformation, one value per lattice column.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacements {
    pub n1: usize,
    pub n2: usize,
    pub u: Vec<Vector2<f64>>,
    pub v: Vec<f64>,
}

impl Displacements {
    pub fn at(&self, i: usize, j: usize) -> (Vector2<f64>, f64) {
        let id = j * (self.n1 + 1) + i;
        (self.u[id], self.v[id])
    }
}

/// `u = h^-2 int (y' - x') dx3`, `v = h^-1 int y3 dx3` over the rescaled
/// thickness; the interpolant is affine in `x3` along every column, so the
/// trapezoidal rule is exact.
pub fn extract_displacements<M: NodeMap + ?Sized>(w: &M, lat: &Lattice) -> Displacements {
    let cfg = *lat.config();
    let h = cfg.thickness();
    let nu = cfg.nu;
    let dz = 1.0 / (nu - 1) as f64;
    let (u, v): (Vec<_>, Vec<_>) = (0..lat.column_count())
        .into_par_iter()
        .map(|id| {
            let (i, j) = (id % (cfg.n1 + 1), id / (cfg.n1 + 1));
            let x = lat.column_position(i, j);
            let mut acc = Vector3::zeros();
            for k in 0..nu {
                let wt = if k == 0 || k + 1 == nu { 0.5 * dz } else { dz };
                acc += w.node(i, j, k) * wt;
            }
            (Vector2::new(acc.x - x.x, acc.y - x.y) / (h * h), acc.z / h)
        })
        .unzip();
    Displacements {
        n1: cfg.n1,
        n2: cfg.n2,
        u,
        v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Deformation, FilmConfig};
    use crate::quadforms::LimitForms;
    use crate::recovery::tests::{generic_field, model};
    use crate::recovery::{RecoveryMap, Regime};
    use nalgebra::Rotation3;

    fn small() -> Lattice {
        Lattice::new(FilmConfig::new(0.25, 3, 3, 2).unwrap()).unwrap()
    }

    fn wavy(lat: &Lattice, t: f64) -> Deformation {
        Deformation::from_fn(lat, |x| {
            x + Vector3::new((3.0 * x.y).sin(), (2.0 * x.z + x.x).cos(), (x.x * x.y * 5.0).sin()) * t
        })
    }

    #[test]
    fn simplices_tile_the_cell() {
        let vol: f64 = simplices()
            .iter()
            .map(|s| 1.0 / (6.0 * s.inv.determinant().abs()))
            .sum();
        assert!((vol - 1.0).abs() < 1e-14);
    }

    #[test]
    fn affine_maps_are_reproduced() {
        let lat = small();
        let a = Matrix3::new(1.1, 0.2, -0.3, 0.0, 0.9, 0.4, 0.5, -0.1, 1.3);
        let w = Deformation::from_fn(&lat, |x| a * x + Vector3::new(0.1, 0.2, 0.3));
        for c in lat.cells() {
            for f in cell_simplex_gradients(&cell_positions(&w, &lat, c), lat.epsilon()) {
                assert!((f - a).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_and_rotations_have_no_defect() {
        let lat = small();
        let r = Rotation3::from_euler_angles(0.3, 0.2, -0.7).into_inner();
        for w in [Deformation::identity(&lat), Deformation::from_fn(&lat, |x| r * x)] {
            let rep = rigidity_diagnostics(&w, &lat, true);
            assert!(rep.interpolation < 1e-24);
            assert!(rep.max_cell_distance < 1e-12);
            assert!(rep.cells.iter().all(|c| c.lattice < 1e-24 && c.interpolated < 1e-24));
        }
    }

    #[test]
    fn face_centers_are_corner_averages() {
        let lat = small();
        let w = wavy(&lat, 0.3);
        for c in lat.cells() {
            let raw = cell_positions(&w, &lat, c);
            for f in 0..6 {
                let mean = FACES[f]
                    .iter()
                    .map(|&i| raw.column(i).into_owned())
                    .sum::<Vector3<f64>>()
                    / 4.0;
                let y = interpolate_in_cell(&w, &lat, c, face_center(f));
                assert!((y - mean).norm() < 1e-14);
            }
            let y = interpolate_in_cell(&w, &lat, c, CENTER);
            assert!((y - raw.column_sum() / 8.0).norm() < 1e-14);
            for i in 0..8 {
                assert!((interpolate_in_cell(&w, &lat, c, corner(i)) - raw.column(i)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn interpolant_is_continuous_across_faces() {
        let lat = small();
        let w = wavy(&lat, 0.3);
        let left = CellIndex { i: 0, j: 0, k: 0 };
        let right = CellIndex { i: 1, j: 0, k: 0 };
        let above = CellIndex { i: 0, j: 0, k: 1 };
        for (s, t) in [(0.2, 0.7), (0.5, 0.5), (0.9, 0.1), (0.33, 0.41)] {
            let a = interpolate_in_cell(&w, &lat, left, Vector3::new(1.0, s, t));
            let b = interpolate_in_cell(&w, &lat, right, Vector3::new(0.0, s, t));
            assert!((a - b).norm() < 1e-14);
            let a = interpolate_in_cell(&w, &lat, left, Vector3::new(s, t, 1.0));
            let b = interpolate_in_cell(&w, &lat, above, Vector3::new(s, t, 0.0));
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn sandwich_pair_scales_quadratically() {
        let lat = small();
        let mut ratios = vec![];
        for t in [1e-1, 1e-2, 1e-3] {
            let rep = rigidity_diagnostics(&wavy(&lat, t), &lat, true);
            let l: f64 = rep.cells.iter().map(|c| c.lattice).sum();
            let i: f64 = rep.cells.iter().map(|c| c.interpolated).sum();
            ratios.push((l / (t * t), i / (t * t)));
        }
        for w in ratios.windows(2) {
            assert!((w[0].0 / w[1].0 - 1.0).abs() < 0.2);
            assert!((w[0].1 / w[1].1 - 1.0).abs() < 0.2);
        }
    }

    #[test]
    fn displacements_of_identity_and_translation() {
        let lat = small();
        let h = lat.thickness();
        let d = extract_displacements(&Deformation::identity(&lat), &lat);
        assert!(d.u.iter().all(|u| u.norm() < 1e-12));
        assert!(d.v.iter().all(|v| (v - 0.5).abs() < 1e-12));
        let c = Vector2::new(0.3, -0.7);
        let w = Deformation::from_fn(&lat, |x| x + Vector3::new(c.x, c.y, 0.0) * h * h);
        let d = extract_displacements(&w, &lat);
        assert!(d.u.iter().all(|u| (u - c).norm() < 1e-9));
    }

    #[test]
    fn recovery_displacements_converge() {
        let forms = LimitForms::assemble(&model()).unwrap();
        let field = generic_field();
        let mut errs = vec![];
        for n in [8usize, 16, 32] {
            let cfg = FilmConfig::new(1.0 / n as f64, 3, n, n).unwrap();
            let lat = Lattice::new(cfg).unwrap();
            let map = RecoveryMap::new(&field, &forms, cfg, Regime::Ultrathin, Matrix3::identity()).unwrap();
            let d = extract_displacements(&map, &lat);
            let mut worst: f64 = 0.0;
            for j in 0..=n {
                for i in 0..=n {
                    let p = field.point(lat.column_position(i, j));
                    let (u, v) = d.at(i, j);
                    worst = worst.max((u - p.u()).norm()).max((v - 0.5 - p.v.value).abs());
                }
            }
            errs.push(worst);
        }
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
        assert!(errs[2] < 0.1);
    }
}
