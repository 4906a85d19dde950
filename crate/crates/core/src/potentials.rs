//! Cell-energy laws: mass-spring bulk and surface energies, the orientation
//! penalty, pair-potential laws and the non-penetration pair term.
//!
//! All spring sums run over *ordered* corner pairs, so every unordered pair
//! appears with a factor 2 in front of the prefactors `alpha/16`, `beta/8`
//! (bulk) and `alpha/8`, `beta/8` (surface).

use nalgebra::{Matrix3, SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{affine_part, z_matrix, CellMatrix, FaceMatrix};

/// Cube edges `|z^i - z^j| = 1`, unordered.
pub const CELL_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (1, 2),
    (2, 3),
    (3, 0),
    (4, 5),
    (5, 6),
    (6, 7),
    (7, 4),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

/// Face diagonals `|z^i - z^j| = sqrt(2)`, unordered.
pub const CELL_DIAGONALS: [(usize, usize); 12] = [
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 5),
    (1, 4),
    (3, 6),
    (2, 7),
    (0, 7),
    (3, 4),
    (1, 6),
    (2, 5),
];

pub const FACE_EDGES: [(usize, usize); 4] = [(0, 1), (1, 2), (2, 3), (3, 0)];
pub const FACE_DIAGONALS: [(usize, usize); 2] = [(0, 2), (1, 3)];

const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassSpringParams {
    pub alpha: f64,
    pub beta: f64,
}

impl MassSpringParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::Parameter(format!(
                "spring stiffnesses must be positive, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Orientation penalty `c * psi(det(G Z^T / 2))` with a cubic smoothstep
/// `psi`: 1 below `r0`, 0 above `r1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyParams {
    pub c: f64,
    pub r0: f64,
    pub r1: f64,
}

impl PenaltyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.r0 < self.r1 && self.r1 < 1.0) {
            return Err(Error::Parameter(format!(
                "penalty needs c > 0 and r0 < r1 < 1, got {self:?}"
            )));
        }
        Ok(())
    }

    fn step(&self, s: f64) -> (f64, f64) {
        if s <= self.r0 {
            (1.0, 0.0)
        } else if s >= self.r1 {
            (0.0, 0.0)
        } else {
            let w = self.r1 - self.r0;
            let t = (self.r1 - s) / w;
            (t * t * (3.0 - 2.0 * t), -6.0 * t * (1.0 - t) / w)
        }
    }
}

/// Scalar pair profile `V(r)` of the bond extension `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairProfile {
    /// `V(r) = r^2`.
    Quadratic,
    /// `V(r) = (1+r)^-12 - 2 (1+r)^-6 + 1`.
    LennardJones,
}

impl PairProfile {
    #[inline]
    pub fn value(self, r: f64) -> f64 {
        match self {
            PairProfile::Quadratic => r * r,
            PairProfile::LennardJones => {
                let s = 1.0 + r;
                if s <= 0.0 {
                    return f64::INFINITY;
                }
                let i6 = s.powi(-6);
                i6 * i6 - 2.0 * i6 + 1.0
            }
        }
    }

    #[inline]
    pub fn d1(self, r: f64) -> f64 {
        match self {
            PairProfile::Quadratic => 2.0 * r,
            PairProfile::LennardJones => {
                let s = 1.0 + r;
                -12.0 * s.powi(-13) + 12.0 * s.powi(-7)
            }
        }
    }

    #[inline]
    pub fn d2(self, r: f64) -> f64 {
        match self {
            PairProfile::Quadratic => 2.0,
            PairProfile::LennardJones => {
                let s = 1.0 + r;
                156.0 * s.powi(-14) - 84.0 * s.powi(-8)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairPotentialParams {
    pub alpha: f64,
    pub beta: f64,
    pub v1: PairProfile,
    pub v2: PairProfile,
}

/// Non-penetration pair term: `gamma` inside `delta`, zero beyond `2 delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonPenParams {
    pub delta: f64,
    pub gamma: f64,
}

impl NonPenParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.gamma > 0.0) {
            return Err(Error::Parameter(format!(
                "non-penetration needs delta, gamma > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// One spring family: unordered pairs, rest length, weight per unordered
/// pair and profile.
struct Springs<'a> {
    pairs: &'a [(usize, usize)],
    rest: f64,
    weight: f64,
    profile: PairProfile,
}

impl Springs<'_> {
    #[inline]
    fn energy<const N: usize>(&self, g: &SMatrix<f64, 3, N>) -> f64 {
        let mut e = 0.0;
        for &(a, b) in self.pairs {
            let d = g.column(a) - g.column(b);
            e += self.profile.value(d.norm() - self.rest);
        }
        self.weight * e
    }

    #[inline]
    fn add_gradient<const N: usize>(&self, g: &SMatrix<f64, 3, N>, out: &mut SMatrix<f64, 3, N>) {
        for &(a, b) in self.pairs {
            let d: Vector3<f64> = g.column(a) - g.column(b);
            let len = d.norm();
            if len == 0.0 {
                continue;
            }
            let f = d * (self.weight * self.profile.d1(len - self.rest) / len);
            let mut ca = out.column_mut(a);
            ca += f;
            let mut cb = out.column_mut(b);
            cb -= f;
        }
    }

    /// Hessian with respect to `vec(G)` (column-major, 3 entries per corner).
    fn add_hessian<const N: usize, const M: usize>(&self, g: &SMatrix<f64, 3, N>, out: &mut SMatrix<f64, M, M>) {
        for &(a, b) in self.pairs {
            let d: Vector3<f64> = g.column(a) - g.column(b);
            let len = d.norm();
            let n = d / len;
            let s = len - self.rest;
            let nn = n * n.transpose();
            let block =
                (nn * self.profile.d2(s) + (Matrix3::identity() - nn) * (self.profile.d1(s) / len)) * self.weight;
            for (p, q, sign) in [(a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)] {
                let mut view = out.fixed_view_mut::<3, 3>(3 * p, 3 * q);
                view += block * sign;
            }
        }
    }
}

fn bulk_springs(alpha: f64, beta: f64, v1: PairProfile, v2: PairProfile) -> [Springs<'static>; 2] {
    [
        Springs {
            pairs: &CELL_EDGES,
            rest: 1.0,
            weight: 2.0 * alpha / 16.0,
            profile: v1,
        },
        Springs {
            pairs: &CELL_DIAGONALS,
            rest: SQRT2,
            weight: 2.0 * beta / 8.0,
            profile: v2,
        },
    ]
}

fn surface_springs(alpha: f64, beta: f64, v1: PairProfile, v2: PairProfile) -> [Springs<'static>; 2] {
    [
        Springs {
            pairs: &FACE_EDGES,
            rest: 1.0,
            weight: 2.0 * alpha / 8.0,
            profile: v1,
        },
        Springs {
            pairs: &FACE_DIAGONALS,
            rest: SQRT2,
            weight: 2.0 * beta / 8.0,
            profile: v2,
        },
    ]
}

pub fn wcell_mass_spring(g: &CellMatrix, p: &MassSpringParams) -> f64 {
    bulk_springs(p.alpha, p.beta, PairProfile::Quadratic, PairProfile::Quadratic)
        .iter()
        .map(|s| s.energy(g))
        .sum()
}

pub fn wsurf_mass_spring(g: &FaceMatrix, p: &MassSpringParams) -> f64 {
    surface_springs(p.alpha, p.beta, PairProfile::Quadratic, PairProfile::Quadratic)
        .iter()
        .map(|s| s.energy(g))
        .sum()
}

pub fn wcell_pair(g: &CellMatrix, p: &PairPotentialParams) -> f64 {
    bulk_springs(p.alpha, p.beta, p.v1, p.v2)
        .iter()
        .map(|s| s.energy(g))
        .sum()
}

pub fn wsurf_pair(g: &FaceMatrix, p: &PairPotentialParams) -> f64 {
    surface_springs(p.alpha, p.beta, p.v1, p.v2)
        .iter()
        .map(|s| s.energy(g))
        .sum()
}

/// Cofactor matrix; `d det(F) / dF`.
pub fn cofactor(f: &Matrix3<f64>) -> Matrix3<f64> {
    let c0: Vector3<f64> = f.column(0).into();
    let c1: Vector3<f64> = f.column(1).into();
    let c2: Vector3<f64> = f.column(2).into();
    Matrix3::from_columns(&[c1.cross(&c2), c2.cross(&c0), c0.cross(&c1)])
}

pub fn chi_penalty(g: &CellMatrix, p: &PenaltyParams) -> f64 {
    p.c * p.step(affine_part(g).determinant()).0
}

fn chi_gradient(g: &CellMatrix, p: &PenaltyParams) -> CellMatrix {
    let f = affine_part(g);
    let (_, dpsi) = p.step(f.determinant());
    if dpsi == 0.0 {
        return CellMatrix::zeros();
    }
    cofactor(&f) * z_matrix() * (0.5 * p.c * dpsi)
}

/// Non-penetration energy of two (already `1/eps`-scaled) points.
pub fn v_nonpen(v: &Vector3<f64>, w: &Vector3<f64>, p: &NonPenParams) -> f64 {
    let r = (v - w).norm();
    p.gamma * ((2.0 * p.delta - r) / p.delta).clamp(0.0, 1.0)
}

/// `d V / d v`; the gradient with respect to `w` is the negative.
pub fn v_nonpen_gradient(v: &Vector3<f64>, w: &Vector3<f64>, p: &NonPenParams) -> Vector3<f64> {
    let d = v - w;
    let r = d.norm();
    if r <= p.delta || r >= 2.0 * p.delta || r == 0.0 {
        return Vector3::zeros();
    }
    d * (-p.gamma / (p.delta * r))
}

/// Bulk cell law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BulkLaw {
    MassSpring(MassSpringParams),
    MassSpringPenalty {
        springs: MassSpringParams,
        penalty: PenaltyParams,
    },
    Pair(PairPotentialParams),
}

impl BulkLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            BulkLaw::MassSpring(p) => p.validate(),
            BulkLaw::MassSpringPenalty { springs, penalty } => {
                springs.validate()?;
                penalty.validate()
            }
            BulkLaw::Pair(p) => MassSpringParams {
                alpha: p.alpha,
                beta: p.beta,
            }
            .validate(),
        }
    }

    pub fn energy(&self, g: &CellMatrix) -> f64 {
        match self {
            BulkLaw::MassSpring(p) => wcell_mass_spring(g, p),
            BulkLaw::MassSpringPenalty { springs, penalty } => wcell_mass_spring(g, springs) + chi_penalty(g, penalty),
            BulkLaw::Pair(p) => wcell_pair(g, p),
        }
    }

    /// `dW/dG`.
    pub fn gradient(&self, g: &CellMatrix) -> CellMatrix {
        let mut out = CellMatrix::zeros();
        let (alpha, beta, v1, v2) = self.spring_data();
        for s in bulk_springs(alpha, beta, v1, v2).iter() {
            s.add_gradient(g, &mut out);
        }
        if let BulkLaw::MassSpringPenalty { penalty, .. } = self {
            out += chi_gradient(g, penalty);
        }
        out
    }

    /// Exact Hessian with respect to `vec(G)`, available for every built-in
    /// law at points where the penalty is inactive.
    pub fn analytic_hessian(&self, g: &CellMatrix) -> Option<SMatrix<f64, 24, 24>> {
        if let BulkLaw::MassSpringPenalty { penalty, .. } = self {
            let s = affine_part(g).determinant();
            if s < penalty.r1 {
                return None;
            }
        }
        let mut out = SMatrix::<f64, 24, 24>::zeros();
        let (alpha, beta, v1, v2) = self.spring_data();
        for s in bulk_springs(alpha, beta, v1, v2).iter() {
            s.add_hessian(g, &mut out);
        }
        Some(out)
    }

    fn spring_data(&self) -> (f64, f64, PairProfile, PairProfile) {
        match self {
            BulkLaw::MassSpring(p) | BulkLaw::MassSpringPenalty { springs: p, .. } => {
                (p.alpha, p.beta, PairProfile::Quadratic, PairProfile::Quadratic)
            }
            BulkLaw::Pair(p) => (p.alpha, p.beta, p.v1, p.v2),
        }
    }

    /// Whether the law is invariant under the full orthogonal group.
    pub fn is_reflection_invariant(&self) -> bool {
        !matches!(self, BulkLaw::MassSpringPenalty { .. })
    }
}

/// Surface law acting on the 4 corners of a top or bottom face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceLaw {
    None,
    MassSpring(MassSpringParams),
    Pair(PairPotentialParams),
}

impl SurfaceLaw {
    pub fn energy(&self, g: &FaceMatrix) -> f64 {
        match self {
            SurfaceLaw::None => 0.0,
            SurfaceLaw::MassSpring(p) => wsurf_mass_spring(g, p),
            SurfaceLaw::Pair(p) => wsurf_pair(g, p),
        }
    }

    pub fn gradient(&self, g: &FaceMatrix) -> FaceMatrix {
        let mut out = FaceMatrix::zeros();
        if let Some((alpha, beta, v1, v2)) = self.spring_data() {
            for s in surface_springs(alpha, beta, v1, v2).iter() {
                s.add_gradient(g, &mut out);
            }
        }
        out
    }

    pub fn analytic_hessian(&self, g: &FaceMatrix) -> SMatrix<f64, 12, 12> {
        let mut out = SMatrix::<f64, 12, 12>::zeros();
        if let Some((alpha, beta, v1, v2)) = self.spring_data() {
            for s in surface_springs(alpha, beta, v1, v2).iter() {
                s.add_hessian(g, &mut out);
            }
        }
        out
    }

    fn spring_data(&self) -> Option<(f64, f64, PairProfile, PairProfile)> {
        match self {
            SurfaceLaw::None => None,
            SurfaceLaw::MassSpring(p) => Some((p.alpha, p.beta, PairProfile::Quadratic, PairProfile::Quadratic)),
            SurfaceLaw::Pair(p) => Some((p.alpha, p.beta, p.v1, p.v2)),
        }
    }
}

/// Reflection `P(x', x3) = (x', -x3)` applied to the corners together with
/// the swap of the lower and upper faces.
pub fn antiplane_reflect(g: &CellMatrix) -> CellMatrix {
    CellMatrix::from_fn(|r, c| {
        let src = (c + 4) % 8;
        if r == 2 {
            -g[(r, src)]
        } else {
            g[(r, src)]
        }
    })
}

pub fn antiplane_reflect_face(g: &FaceMatrix) -> FaceMatrix {
    FaceMatrix::from_fn(|r, c| if r == 2 { -g[(r, c)] } else { g[(r, c)] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{dist_so3z, z_lower};
    use approx::assert_relative_eq;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn springs() -> MassSpringParams {
        MassSpringParams { alpha: 1.3, beta: 0.7 }
    }

    fn penalty() -> PenaltyParams {
        PenaltyParams {
            c: 2.0,
            r0: 0.0,
            r1: 0.5,
        }
    }

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        Rotation3::from_euler_angles(
            rng.random_range(-3.0..3.0),
            rng.random_range(-1.5..1.5),
            rng.random_range(-3.0..3.0),
        )
        .into_inner()
    }

    #[test]
    fn pair_lists_have_expected_lengths() {
        let z = z_matrix();
        for &(a, b) in &CELL_EDGES {
            assert_relative_eq!((z.column(a) - z.column(b)).norm(), 1.0);
        }
        for &(a, b) in &CELL_DIAGONALS {
            assert_relative_eq!((z.column(a) - z.column(b)).norm(), SQRT2);
        }
        let mut all: Vec<_> = CELL_EDGES
            .iter()
            .chain(&CELL_DIAGONALS)
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 24);
    }

    #[test]
    fn mass_spring_reference_values() {
        let p = springs();
        let z = z_matrix();
        assert_eq!(wcell_mass_spring(&z, &p), 0.0);
        let reflected = -z;
        assert!(wcell_mass_spring(&reflected, &p) < 1e-28);
        // 24 ordered edges at stretch 0.1, 24 ordered diagonals at 0.1 sqrt 2
        let expect = 0.015 * p.alpha + 0.06 * p.beta;
        assert_relative_eq!(wcell_mass_spring(&(z * 1.1), &p), expect, epsilon = 1e-14);
    }

    #[test]
    fn surface_reference_values() {
        let p = springs();
        let z1 = z_lower();
        assert_eq!(wsurf_mass_spring(&z1, &p), 0.0);
        // 8 ordered edges: alpha/8 * 8 * 0.01; 4 ordered diagonals: beta/8 * 4 * 0.02
        let expect = p.alpha / 8.0 * 8.0 * 0.01 + p.beta / 8.0 * 4.0 * 0.02;
        assert_relative_eq!(wsurf_mass_spring(&(z1 * 1.1), &p), expect, epsilon = 1e-14);
        let shifted = z1 + FaceMatrix::from_fn(|r, _| [1.0, -2.0, 0.3][r]);
        assert!(wsurf_mass_spring(&shifted, &p) < 1e-28);
    }

    #[test]
    fn penalty_values() {
        let p = penalty();
        let z = z_matrix();
        assert_eq!(chi_penalty(&z, &p), 0.0);
        assert_eq!(chi_penalty(&-z, &p), p.c);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pert = CellMatrix::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let pert = pert * (0.01 / pert.norm());
            assert_eq!(chi_penalty(&(z + pert), &p), 0.0);
        }
        let (mid, _) = p.step(0.25);
        assert_relative_eq!(mid, 0.5);
    }

    #[test]
    fn pair_law_with_quadratic_profile_is_mass_spring() {
        let q = PairPotentialParams {
            alpha: 1.3,
            beta: 0.7,
            v1: PairProfile::Quadratic,
            v2: PairProfile::Quadratic,
        };
        let z = z_matrix();
        assert_relative_eq!(wcell_pair(&(z * 1.1), &q), 0.015 * 1.3 + 0.06 * 0.7, epsilon = 1e-14);
        let lj = PairPotentialParams {
            v1: PairProfile::LennardJones,
            v2: PairProfile::LennardJones,
            ..q
        };
        assert!(wcell_pair(&z, &lj).abs() < 1e-15);
        assert!(wcell_pair(&-z, &lj).abs() < 1e-15);
    }

    #[test]
    fn lennard_jones_profile() {
        let v = PairProfile::LennardJones;
        assert_eq!(v.value(0.0), 0.0);
        assert_relative_eq!(v.d2(0.0), 72.0);
        assert!(v.d1(0.0).abs() < 1e-14);
        // growth floor V(r) >= c0 min(r^2, 1), sampled
        let mut c0 = f64::INFINITY;
        for n in 1..4000 {
            let r = -0.9 + n as f64 * 1e-3;
            if r.abs() < 1e-9 {
                continue;
            }
            c0 = c0.min(v.value(r) / (r * r).min(1.0));
        }
        assert!(c0 > 0.5, "sampled growth constant {c0}");
        // derivatives by central differences
        for r in [-0.3, 0.1, 0.7] {
            let h = 1e-6;
            assert_relative_eq!(
                v.d1(r),
                (v.value(r + h) - v.value(r - h)) / (2.0 * h),
                max_relative = 1e-6
            );
            assert_relative_eq!(v.d2(r), (v.d1(r + h) - v.d1(r - h)) / (2.0 * h), max_relative = 1e-6);
        }
    }

    #[test]
    fn nonpen_ramp() {
        let p = NonPenParams { delta: 0.2, gamma: 3.0 };
        let o = Vector3::zeros();
        assert_eq!(v_nonpen(&o, &Vector3::new(0.6, 0.0, 0.0), &p), 0.0);
        assert_eq!(v_nonpen(&o, &Vector3::new(0.0, 0.1, 0.0), &p), p.gamma);
        assert_relative_eq!(
            v_nonpen(&o, &Vector3::new(0.0, 0.0, 0.3), &p),
            p.gamma / 2.0,
            epsilon = 1e-14
        );
        let a = Vector3::new(0.1, 0.2, -0.05);
        let b = Vector3::new(0.2, 0.05, 0.1);
        assert_eq!(v_nonpen(&a, &b, &p), v_nonpen(&b, &a, &p));
        let g = v_nonpen_gradient(&a, &b, &p);
        let h = 1e-7;
        for d in 0..3 {
            let mut ap = a;
            ap[d] += h;
            let mut am = a;
            am[d] -= h;
            let fd = (v_nonpen(&ap, &b, &p) - v_nonpen(&am, &b, &p)) / (2.0 * h);
            assert_relative_eq!(g[d], fd, epsilon = 1e-6);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let laws = [
            BulkLaw::MassSpring(springs()),
            BulkLaw::MassSpringPenalty {
                springs: springs(),
                penalty: penalty(),
            },
            BulkLaw::Pair(PairPotentialParams {
                alpha: 1.0,
                beta: 0.5,
                v1: PairProfile::LennardJones,
                v2: PairProfile::LennardJones,
            }),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // include a sample where the penalty ramp is active
        let squashed = z_matrix().map(|v| v) * 1.0;
        let mut squashed = squashed;
        squashed.row_mut(2).scale_mut(0.3);
        let samples: Vec<CellMatrix> = (0..5)
            .map(|_| z_matrix() + CellMatrix::from_fn(|_, _| rng.random_range(-0.15..0.15)))
            .chain(std::iter::once(squashed))
            .collect();
        for law in &laws {
            for g in &samples {
                let grad = law.gradient(g);
                let h = 1e-6;
                for idx in 0..24 {
                    let mut gp = *g;
                    gp[idx] += h;
                    let mut gm = *g;
                    gm[idx] -= h;
                    let fd = (law.energy(&gp) - law.energy(&gm)) / (2.0 * h);
                    assert_relative_eq!(grad[idx], fd, epsilon = 1e-6, max_relative = 1e-5);
                }
            }
        }
        let surf = SurfaceLaw::MassSpring(springs());
        let g = z_lower() + FaceMatrix::from_fn(|_, _| rng.random_range(-0.1..0.1));
        let grad = surf.gradient(&g);
        for idx in 0..12 {
            let h = 1e-6;
            let mut gp = g;
            gp[idx] += h;
            let mut gm = g;
            gm[idx] -= h;
            let fd = (surf.energy(&gp) - surf.energy(&gm)) / (2.0 * h);
            assert_relative_eq!(grad[idx], fd, epsilon = 1e-7);
        }
    }

    #[test]
    fn frame_indifference_and_reflections() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let laws = [
            BulkLaw::MassSpring(springs()),
            BulkLaw::MassSpringPenalty {
                springs: springs(),
                penalty: penalty(),
            },
            BulkLaw::Pair(PairPotentialParams {
                alpha: 1.0,
                beta: 0.5,
                v1: PairProfile::LennardJones,
                v2: PairProfile::LennardJones,
            }),
        ];
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            let c = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            let g = z_matrix() + CellMatrix::from_fn(|_, _| rng.random_range(-0.3..0.3));
            let moved = r * g + CellMatrix::from_fn(|row, _| c[row]);
            for law in &laws {
                let a = law.energy(&g);
                let b = law.energy(&moved);
                assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{law:?}: {a} vs {b}");
                if law.is_reflection_invariant() {
                    let q = -r;
                    let b = law.energy(&(q * g));
                    assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
                }
            }
        }
        let penalised = laws[1];
        assert!(penalised.energy(&-z_matrix()) >= penalty().c);
        assert!(laws[0].energy(&-z_matrix()) < 1e-28);
    }

    #[test]
    fn antiplane_symmetry_of_mass_spring() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let law = BulkLaw::MassSpring(springs());
        let surf = SurfaceLaw::MassSpring(springs());
        assert_eq!(antiplane_reflect(&z_matrix()), z_matrix());
        for _ in 0..50 {
            let g = z_matrix() + CellMatrix::from_fn(|_, _| rng.random_range(-0.3..0.3));
            assert_relative_eq!(law.energy(&g), law.energy(&antiplane_reflect(&g)), max_relative = 1e-12);
            let f = z_lower() + FaceMatrix::from_fn(|_, _| rng.random_range(-0.3..0.3));
            assert_relative_eq!(
                surf.energy(&f),
                surf.energy(&antiplane_reflect_face(&f)),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn empirical_single_well_growth() {
        let law = BulkLaw::MassSpringPenalty {
            springs: springs(),
            penalty: penalty(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut c0 = f64::INFINITY;
        let mut n = 0;
        while n < 10_000 {
            let mut pert = CellMatrix::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let mean = pert.column_sum() / 8.0;
            for mut col in pert.column_iter_mut() {
                col -= mean;
            }
            let pert = pert * (rng.random_range(0.0..1.0) / pert.norm());
            let g = random_rotation(&mut rng) * (z_matrix() + pert);
            let d = dist_so3z(&g);
            if d > 1.0 || d < 1e-8 {
                continue;
            }
            c0 = c0.min(law.energy(&g) / (d * d));
            n += 1;
        }
        println!("fitted growth constant c0 = {c0:.4}");
        assert!(c0 > 0.0);
    }
}
