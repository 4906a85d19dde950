//! Film geometry on the cubic lattice, cell enumeration and discrete
//! difference operators.
//!
//! The reference film is `S x [0, h]` with `S = (0, n1 eps) x (0, n2 eps)`
//! and `h = (nu - 1) eps`, so every lattice cell is complete. All 3x8 cell
//! matrices use the fixed corner order `z1..z8`: the bottom face
//! counter-clockwise starting at `(-,-,-)/2`, followed by the top face in the
//! same order.

use nalgebra::{Matrix3, SMatrix, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-corner values of one cell, columns in `z1..z8` order.
pub type CellMatrix = SMatrix<f64, 3, 8>;
/// Per-corner values of one cell face (`z1..z4` or `z5..z8`).
pub type FaceMatrix = SMatrix<f64, 3, 4>;

/// Corner offsets `a^i = z^i + (1,1,1)/2` in `{0,1}^3`.
pub const CORNER_OFFSETS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

/// The cube corners `Z = (z1, ..., z8)`.
pub fn z_matrix() -> CellMatrix {
    CellMatrix::from_fn(|r, c| CORNER_OFFSETS[c][r] as f64 - 0.5)
}

/// `Z_- = (-z1, ..., -z4, z5, ..., z8)`.
pub fn z_minus() -> CellMatrix {
    let z = z_matrix();
    CellMatrix::from_fn(|r, c| if c < 4 { -z[(r, c)] } else { z[(r, c)] })
}

/// `M = 1/2 e3 (x) (+1, -1, +1, -1, +1, -1, +1, -1)`.
pub fn m_matrix() -> CellMatrix {
    CellMatrix::from_fn(|r, c| {
        if r == 2 {
            if c % 2 == 0 {
                0.5
            } else {
                -0.5
            }
        } else {
            0.0
        }
    })
}

/// Corner matrix `A = (a1, ..., a8)`.
pub fn corner_matrix() -> CellMatrix {
    CellMatrix::from_fn(|r, c| CORNER_OFFSETS[c][r] as f64)
}

/// Lower face `Z^(1)`.
pub fn z_lower() -> FaceMatrix {
    lower_face(&z_matrix())
}

/// Upper face `Z^(2)`.
pub fn z_upper() -> FaceMatrix {
    upper_face(&z_matrix())
}

pub fn lower_face(g: &CellMatrix) -> FaceMatrix {
    g.fixed_columns::<4>(0).into_owned()
}

pub fn upper_face(g: &CellMatrix) -> FaceMatrix {
    g.fixed_columns::<4>(4).into_owned()
}

/// `[[a, 0], [0, 0]]` for an in-plane 2x2 block.
pub fn embed2(a: &nalgebra::Matrix2<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    m
}

/// Geometry of a commensurate rectangular film.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilmConfig {
    pub epsilon: f64,
    pub nu: usize,
    pub n1: usize,
    pub n2: usize,
}

impl FilmConfig {
    pub fn new(epsilon: f64, nu: usize, n1: usize, n2: usize) -> Result<Self> {
        let cfg = FilmConfig { epsilon, nu, n1, n2 };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Film covering `(0, lx) x (0, ly)`; both lengths must be integer
    /// multiples of `epsilon`.
    pub fn covering(epsilon: f64, nu: usize, lx: f64, ly: f64) -> Result<Self> {
        let n1 = commensurate_count(lx, epsilon)?;
        let n2 = commensurate_count(ly, epsilon)?;
        Self::new(epsilon, nu, n1, n2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nu < 2 {
            return Err(Error::Geometry(format!(
                "layer count must be at least 2, got {}",
                self.nu
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Geometry(format!(
                "lattice spacing must be positive, got {}",
                self.epsilon
            )));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::Geometry(
                "film needs at least one cell in each in-plane direction".into(),
            ));
        }
        Ok(())
    }

    /// Film thickness `h = (nu - 1) eps`.
    pub fn thickness(&self) -> f64 {
        (self.nu - 1) as f64 * self.epsilon
    }

    pub fn lengths(&self) -> (f64, f64) {
        (self.n1 as f64 * self.epsilon, self.n2 as f64 * self.epsilon)
    }

    pub fn area(&self) -> f64 {
        let (lx, ly) = self.lengths();
        lx * ly
    }
}

fn commensurate_count(length: f64, epsilon: f64) -> Result<usize> {
    let n = (length / epsilon).round();
    if n < 1.0 || ((n * epsilon - length).abs() > 1e-9 * length.max(1.0)) {
        return Err(Error::Geometry(format!(
            "length {length} is not a positive multiple of the lattice spacing {epsilon}"
        )));
    }
    Ok(n as usize)
}

/// Index of a lattice cell; the cell occupies `[i, i+1] x [j, j+1] x [k, k+1]`
/// in units of `eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

/// Position of a cell relative to the top and bottom film surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLayer {
    Interior,
    Bottom,
    Top,
    /// Two-layer films: the single cell layer carries both surfaces.
    Both,
}

impl CellLayer {
    pub fn has_bottom_surface(self) -> bool {
        matches!(self, CellLayer::Bottom | CellLayer::Both)
    }

    pub fn has_top_surface(self) -> bool {
        matches!(self, CellLayer::Top | CellLayer::Both)
    }
}

/// Enumeration of the film atoms and cells.
#[derive(Debug, Clone)]
pub struct Lattice {
    cfg: FilmConfig,
}

impl Lattice {
    pub fn new(cfg: FilmConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Lattice { cfg })
    }

    pub fn config(&self) -> &FilmConfig {
        &self.cfg
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon
    }

    pub fn thickness(&self) -> f64 {
        self.cfg.thickness()
    }

    /// Node counts along x1, x2, x3.
    pub fn node_dims(&self) -> (usize, usize, usize) {
        (self.cfg.n1 + 1, self.cfg.n2 + 1, self.cfg.nu)
    }

    /// Cell counts along x1, x2, x3.
    pub fn cell_dims(&self) -> (usize, usize, usize) {
        (self.cfg.n1, self.cfg.n2, self.cfg.nu - 1)
    }

    pub fn node_count(&self) -> usize {
        let (a, b, c) = self.node_dims();
        a * b * c
    }

    pub fn cell_count(&self) -> usize {
        let (a, b, c) = self.cell_dims();
        a * b * c
    }

    pub fn column_count(&self) -> usize {
        (self.cfg.n1 + 1) * (self.cfg.n2 + 1)
    }

    /// Linear node index; x1 fastest, then x2, then the layer.
    #[inline]
    pub fn node_id(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.cfg.n2 + 1) + j) * (self.cfg.n1 + 1) + i
    }

    #[inline]
    pub fn column_id(&self, i: usize, j: usize) -> usize {
        j * (self.cfg.n1 + 1) + i
    }

    /// Inverse of [`Lattice::node_id`].
    pub fn node_triple(&self, id: usize) -> (usize, usize, usize) {
        let n1 = self.cfg.n1 + 1;
        let n2 = self.cfg.n2 + 1;
        (id % n1, (id / n1) % n2, id / (n1 * n2))
    }

    /// Reference position `(i eps, j eps, k eps)`.
    #[inline]
    pub fn node_position(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        let e = self.cfg.epsilon;
        Vector3::new(i as f64 * e, j as f64 * e, k as f64 * e)
    }

    pub fn column_position(&self, i: usize, j: usize) -> Vector2<f64> {
        let e = self.cfg.epsilon;
        Vector2::new(i as f64 * e, j as f64 * e)
    }

    /// Cells in lexicographic order (i fastest, layer slowest).
    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let (c1, c2, c3) = self.cell_dims();
        (0..c3).flat_map(move |k| (0..c2).flat_map(move |j| (0..c1).map(move |i| CellIndex { i, j, k })))
    }

    /// Cell with linear index `id` in the order of [`Lattice::cells`].
    pub fn cell_at(&self, id: usize) -> CellIndex {
        let (c1, c2, _) = self.cell_dims();
        CellIndex {
            i: id % c1,
            j: (id / c1) % c2,
            k: id / (c1 * c2),
        }
    }

    pub fn cell_midpoint(&self, c: CellIndex) -> Vector3<f64> {
        let e = self.cfg.epsilon;
        Vector3::new((c.i as f64 + 0.5) * e, (c.j as f64 + 0.5) * e, (c.k as f64 + 0.5) * e)
    }

    pub fn cell_layer(&self, c: CellIndex) -> CellLayer {
        let top = self.cfg.nu - 2;
        match (c.k == 0, c.k == top) {
            (true, true) => CellLayer::Both,
            (true, false) => CellLayer::Bottom,
            (false, true) => CellLayer::Top,
            (false, false) => CellLayer::Interior,
        }
    }

    /// Node triples of the 8 corners in `z1..z8` order.
    pub fn cell_corners(&self, c: CellIndex) -> [(usize, usize, usize); 8] {
        CORNER_OFFSETS.map(|a| (c.i + a[0], c.j + a[1], c.k + a[2]))
    }

    /// True if the cell touches the lateral boundary of `S`.
    pub fn is_lateral_boundary_cell(&self, c: CellIndex) -> bool {
        c.i == 0 || c.j == 0 || c.i + 1 == self.cfg.n1 || c.j + 1 == self.cfg.n2
    }

    /// True if the column belongs to a cell touching the lateral boundary.
    pub fn is_boundary_band_column(&self, i: usize, j: usize) -> bool {
        i <= 1 || j <= 1 || i + 1 >= self.cfg.n1 || j + 1 >= self.cfg.n2
    }
}

/// Anything that assigns a deformed position to every lattice node.
pub trait NodeMap: Sync {
    fn node(&self, i: usize, j: usize, k: usize) -> Vector3<f64>;
}

/// A deformation stored densely in node order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub config: FilmConfig,
    pub positions: Vec<Vector3<f64>>,
}

impl Deformation {
    pub fn identity(lat: &Lattice) -> Self {
        Self::from_fn(lat, |x| x)
    }

    /// Samples `map` at every reference node position.
    pub fn from_fn(lat: &Lattice, map: impl Fn(Vector3<f64>) -> Vector3<f64>) -> Self {
        let (a, b, c) = lat.node_dims();
        let mut positions = Vec::with_capacity(lat.node_count());
        for k in 0..c {
            for j in 0..b {
                for i in 0..a {
                    positions.push(map(lat.node_position(i, j, k)));
                }
            }
        }
        Deformation {
            config: *lat.config(),
            positions,
        }
    }

    /// Materialises any node map on the lattice.
    pub fn from_map<M: NodeMap + ?Sized>(lat: &Lattice, map: &M) -> Self {
        let (a, b, c) = lat.node_dims();
        let mut positions = Vec::with_capacity(lat.node_count());
        for k in 0..c {
            for j in 0..b {
                for i in 0..a {
                    positions.push(map.node(i, j, k));
                }
            }
        }
        Deformation {
            config: *lat.config(),
            positions,
        }
    }

    pub fn check(&self, lat: &Lattice) -> Result<()> {
        if self.positions.len() != lat.node_count() || self.config != *lat.config() {
            return Err(Error::Dimension {
                expected: format!("{} nodes for {:?}", lat.node_count(), lat.config()),
                got: format!("{} nodes for {:?}", self.positions.len(), self.config),
            });
        }
        if self.positions.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::Numeric("deformation has non-finite entries".into()));
        }
        Ok(())
    }

    #[inline]
    fn id(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.config.n2 + 1) + j) * (self.config.n1 + 1) + i
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.positions[self.id(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, p: Vector3<f64>) {
        let id = self.id(i, j, k);
        self.positions[id] = p;
    }

    pub fn map_positions(&self, f: impl Fn(&Vector3<f64>) -> Vector3<f64>) -> Self {
        Deformation {
            config: self.config,
            positions: self.positions.iter().map(f).collect(),
        }
    }
}

impl NodeMap for Deformation {
    #[inline]
    fn node(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.positions[self.id(i, j, k)]
    }
}

/// Raw corner positions `w(x + eps z^i)` of a cell, unscaled.
#[inline]
pub fn cell_positions<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, c: CellIndex) -> CellMatrix {
    let corners = lat.cell_corners(c);
    let mut out = CellMatrix::zeros();
    for (col, &(i, j, k)) in corners.iter().enumerate() {
        out.set_column(col, &w.node(i, j, k));
    }
    out
}

/// Mean-subtracted, `1/eps`-scaled corner matrix of a cell.
#[inline]
pub fn discrete_gradient<M: NodeMap + ?Sized>(w: &M, lat: &Lattice, c: CellIndex) -> CellMatrix {
    let raw = cell_positions(w, lat, c);
    center_columns(&raw) / lat.epsilon()
}

/// Subtracts the column mean from every column.
#[inline]
pub fn center_columns(raw: &CellMatrix) -> CellMatrix {
    let mean = raw.column_sum() / 8.0;
    let mut out = *raw;
    for mut col in out.column_iter_mut() {
        col -= mean;
    }
    out
}

/// `G Z^T / 2`; recovers `F` from `F Z` exactly since `Z Z^T = 2 Id`.
#[inline]
pub fn affine_part(g: &CellMatrix) -> Matrix3<f64> {
    g * z_matrix().transpose() * 0.5
}

/// Rotation `R` minimising `|F - R|` for `F` that stands in for `M` in
/// `max tr(R^T M)`; orthogonal Procrustes with determinant correction.
pub fn procrustes_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let mut u = svd.u.expect("svd u requested");
    let v_t = svd.v_t.expect("svd v_t requested");
    if (u * v_t).determinant() < 0.0 {
        let (imin, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc });
        let mut col = u.column_mut(imin);
        col.neg_mut();
    }
    u * v_t
}

/// Nearest `R in SO(3)` to the cell matrix in the sense of `|G - R Z|`.
pub fn nearest_rotation(g: &CellMatrix) -> Matrix3<f64> {
    procrustes_rotation(&(g * z_matrix().transpose()))
}

/// `dist(G, SO(3) Z)` in the Frobenius norm.
pub fn dist_so3z(g: &CellMatrix) -> f64 {
    let r = nearest_rotation(g);
    (g - r * z_matrix()).norm()
}

/// `dist(F, SO(3))` for a 3x3 matrix.
pub fn dist_so3(f: &Matrix3<f64>) -> f64 {
    let r = procrustes_rotation(f);
    (f - r).norm()
}

/// Discrete gradient of a deformation given on the rescaled domain
/// `H^{-1} Lambda`, with `H = diag(1, 1, h)`; `y` is evaluated at rescaled
/// coordinates.
pub fn rescaled_gradient(y: impl Fn(Vector3<f64>) -> Vector3<f64>, c: CellIndex, cfg: &FilmConfig) -> CellMatrix {
    let e = cfg.epsilon;
    let h = cfg.thickness();
    let mid = Vector3::new(
        (c.i as f64 + 0.5) * e,
        (c.j as f64 + 0.5) * e,
        (c.k as f64 + 0.5) * e / h,
    );
    let z = z_matrix();
    let mut raw = CellMatrix::zeros();
    for col in 0..8 {
        let p = Vector3::new(
            mid.x + e * z[(0, col)],
            mid.y + e * z[(1, col)],
            mid.z + e / h * z[(2, col)],
        );
        raw.set_column(col, &y(p));
    }
    center_columns(&raw) / e
}

/// Turns a rescaled deformation into a lattice deformation, `w(x) = y(H^{-1} x)`.
pub fn descale(lat: &Lattice, y: impl Fn(Vector3<f64>) -> Vector3<f64>) -> Deformation {
    let h = lat.thickness();
    Deformation::from_fn(lat, |x| y(Vector3::new(x.x, x.y, x.z / h)))
}
