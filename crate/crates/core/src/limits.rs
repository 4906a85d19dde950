//! Displacement fields, limit strains and the von Kármán limit functionals
//! (the classical one and its finite-layer variant).

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{embed2, m_matrix, z_lower, z_matrix, z_minus, CellMatrix, FaceMatrix};
use crate::quadforms::LimitForms;
use crate::reduce::par_sum;

/// `amp * sin(k1 x1 + p1) * sin(k2 x2 + p2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amp: f64,
    pub k1: f64,
    #[serde(default)]
    pub p1: f64,
    pub k2: f64,
    #[serde(default)]
    pub p2: f64,
}

/// `coef * x1^e1 * x2^e2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub e1: u32,
    pub e2: u32,
}

/// Value, gradient and Hessian of a scalar function of `x'`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub grad: Vector2<f64>,
    pub hess: Matrix2<f64>,
}

impl std::ops::AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        self.value += o.value;
        self.grad += o.grad;
        self.hess += o.hess;
    }
}

impl TrigTerm {
    #[inline]
    pub fn value(&self, x: Vector2<f64>) -> f64 {
        self.amp * (self.k1 * x.x + self.p1).sin() * (self.k2 * x.y + self.p2).sin()
    }

    fn jet(&self, x: Vector2<f64>) -> Jet {
        let (s1, c1) = (self.k1 * x.x + self.p1).sin_cos();
        let (s2, c2) = (self.k2 * x.y + self.p2).sin_cos();
        let a = self.amp;
        Jet {
            value: a * s1 * s2,
            grad: Vector2::new(a * self.k1 * c1 * s2, a * self.k2 * s1 * c2),
            hess: Matrix2::new(
                -a * self.k1 * self.k1 * s1 * s2,
                a * self.k1 * self.k2 * c1 * c2,
                a * self.k1 * self.k2 * c1 * c2,
                -a * self.k2 * self.k2 * s1 * s2,
            ),
        }
    }
}

fn pow_d(x: f64, e: u32, d: u32) -> f64 {
    if d > e {
        return 0.0;
    }
    let mut c = 1.0;
    for i in 0..d {
        c *= (e - i) as f64;
    }
    c * x.powi((e - d) as i32)
}

impl Monomial {
    fn jet(&self, x: Vector2<f64>) -> Jet {
        let p = |d1: u32, d2: u32| self.coef * pow_d(x.x, self.e1, d1) * pow_d(x.y, self.e2, d2);
        Jet {
            value: p(0, 0),
            grad: Vector2::new(p(1, 0), p(0, 1)),
            hess: Matrix2::new(p(2, 0), p(1, 1), p(1, 1), p(0, 2)),
        }
    }
}

/// Nodal samples on a uniform grid over `[0, lx] x [0, ly]`, node `(i, j)`
/// stored at `j * (nx + 1) + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    pub v: Vec<f64>,
}

/// Grid derivatives of a sampled field, computed once.
#[derive(Debug, Clone, PartialEq)]
struct GridJets {
    u1: Vec<Jet>,
    u2: Vec<Jet>,
    v: Vec<Jet>,
}

impl SampledField {
    pub fn from_field(field: &Field, lx: f64, ly: f64, nx: usize, ny: usize) -> Self {
        let mut u1 = Vec::new();
        let mut u2 = Vec::new();
        let mut v = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let x = Vector2::new(lx * i as f64 / nx as f64, ly * j as f64 / ny as f64);
                let p = field.point(x);
                u1.push(p.u1.value);
                u2.push(p.u2.value);
                v.push(p.v.value);
            }
        }
        SampledField {
            lx,
            ly,
            nx,
            ny,
            u1,
            u2,
            v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = (self.nx + 1) * (self.ny + 1);
        if self.nx < 2 || self.ny < 2 || !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(Error::Config(
                "sampled field needs at least 3x3 nodes and a positive extent".into(),
            ));
        }
        for (name, data) in [("u1", &self.u1), ("u2", &self.u2), ("v", &self.v)] {
            if data.len() != n {
                return Err(Error::Dimension {
                    expected: format!("{n} samples of {name}"),
                    got: format!("{}", data.len()),
                });
            }
        }
        Ok(())
    }

    /// First differences along one axis: central inside, one-sided at the
    /// boundary ring.
    fn diff(&self, data: &[f64], axis: usize) -> Vec<f64> {
        let (nx, ny) = (self.nx, self.ny);
        let (n, step) = if axis == 0 {
            (nx, self.lx / nx as f64)
        } else {
            (ny, self.ly / ny as f64)
        };
        let mut out = vec![0.0; data.len()];
        for j in 0..=ny {
            for i in 0..=nx {
                let idx = |a: usize| if axis == 0 { j * (nx + 1) + a } else { a * (nx + 1) + i };
                let a = if axis == 0 { i } else { j };
                out[idx(a)] = if a == 0 {
                    (data[idx(1)] - data[idx(0)]) / step
                } else if a == n {
                    (data[idx(n)] - data[idx(n - 1)]) / step
                } else {
                    (data[idx(a + 1)] - data[idx(a - 1)]) / (2.0 * step)
                };
            }
        }
        out
    }

    fn jets(&self, data: &[f64]) -> Vec<Jet> {
        let d1 = self.diff(data, 0);
        let d2 = self.diff(data, 1);
        let d11 = self.diff(&d1, 0);
        let d22 = self.diff(&d2, 1);
        let d12 = self.diff(&d1, 1);
        let d21 = self.diff(&d2, 0);
        (0..data.len())
            .map(|n| {
                let m = 0.5 * (d12[n] + d21[n]);
                Jet {
                    value: data[n],
                    grad: Vector2::new(d1[n], d2[n]),
                    hess: Matrix2::new(d11[n], m, m, d22[n]),
                }
            })
            .collect()
    }

    fn grid_jets(&self) -> GridJets {
        GridJets {
            u1: self.jets(&self.u1),
            u2: self.jets(&self.u2),
            v: self.jets(&self.v),
        }
    }
}

fn reflect(x: f64, len: f64) -> f64 {
    let period = 2.0 * len;
    let r = x.rem_euclid(period);
    if r > len {
        period - r
    } else {
        r
    }
}

/// Jets of `u1`, `u2` and `v` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldPoint {
    pub u1: Jet,
    pub u2: Jet,
    pub v: Jet,
}

impl FieldPoint {
    /// `grad' u`, rows are the gradients of `u1` and `u2`.
    pub fn grad_u(&self) -> Matrix2<f64> {
        Matrix2::new(self.u1.grad.x, self.u1.grad.y, self.u2.grad.x, self.u2.grad.y)
    }

    pub fn u(&self) -> Vector2<f64> {
        Vector2::new(self.u1.value, self.u2.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FieldSpec {
    Zero,
    Trig {
        #[serde(default)]
        u1: Vec<TrigTerm>,
        #[serde(default)]
        u2: Vec<TrigTerm>,
        #[serde(default)]
        v: Vec<TrigTerm>,
    },
    Polynomial {
        #[serde(default)]
        u1: Vec<Monomial>,
        #[serde(default)]
        u2: Vec<Monomial>,
        #[serde(default)]
        v: Vec<Monomial>,
    },
    Sampled(SampledField),
}

/// In-plane and out-of-plane displacement pair `(u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    spec: FieldSpec,
    grid: Option<GridJets>,
}

impl Field {
    pub fn new(spec: FieldSpec) -> Result<Self> {
        let grid = match &spec {
            FieldSpec::Sampled(s) => {
                s.validate()?;
                Some(s.grid_jets())
            }
            _ => None,
        };
        Ok(Field { spec, grid })
    }

    pub fn zero() -> Self {
        Field {
            spec: FieldSpec::Zero,
            grid: None,
        }
    }

    /// `u = 0`, `v = amp sin(pi x1) sin(pi x2)`.
    pub fn canonical(amp: f64) -> Self {
        let pi = std::f64::consts::PI;
        Field {
            spec: FieldSpec::Trig {
                u1: vec![],
                u2: vec![],
                v: vec![TrigTerm {
                    amp,
                    k1: pi,
                    p1: 0.0,
                    k2: pi,
                    p2: 0.0,
                }],
            },
            grid: None,
        }
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn point(&self, x: Vector2<f64>) -> FieldPoint {
        match &self.spec {
            FieldSpec::Zero => FieldPoint::default(),
            FieldSpec::Trig { u1, u2, v } => {
                let sum = |terms: &[TrigTerm]| {
                    let mut j = Jet::default();
                    for t in terms {
                        j += t.jet(x);
                    }
                    j
                };
                FieldPoint {
                    u1: sum(u1),
                    u2: sum(u2),
                    v: sum(v),
                }
            }
            FieldSpec::Polynomial { u1, u2, v } => {
                let sum = |terms: &[Monomial]| {
                    let mut j = Jet::default();
                    for t in terms {
                        j += t.jet(x);
                    }
                    j
                };
                FieldPoint {
                    u1: sum(u1),
                    u2: sum(u2),
                    v: sum(v),
                }
            }
            FieldSpec::Sampled(s) => {
                let grid = self.grid.as_ref().expect("sampled grid prepared in Field::new");
                let hx = s.lx / s.nx as f64;
                let hy = s.ly / s.ny as f64;
                let px = reflect(x.x, s.lx) / hx;
                let py = reflect(x.y, s.ly) / hy;
                let i = (px.floor() as usize).min(s.nx - 1);
                let j = (py.floor() as usize).min(s.ny - 1);
                let (tx, ty) = (px - i as f64, py - j as f64);
                let lerp = |data: &[Jet]| {
                    let at = |a: usize, b: usize| data[b * (s.nx + 1) + a];
                    let w = [
                        ((1.0 - tx) * (1.0 - ty), at(i, j)),
                        (tx * (1.0 - ty), at(i + 1, j)),
                        ((1.0 - tx) * ty, at(i, j + 1)),
                        (tx * ty, at(i + 1, j + 1)),
                    ];
                    let mut out = Jet::default();
                    for (c, jt) in w {
                        out += Jet {
                            value: c * jt.value,
                            grad: jt.grad * c,
                            hess: jt.hess * c,
                        };
                    }
                    out
                };
                FieldPoint {
                    u1: lerp(&grid.u1),
                    u2: lerp(&grid.u2),
                    v: lerp(&grid.v),
                }
            }
        }
    }
}

/// Strains of the limit theory at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitStrains {
    /// `sym grad' u + 1/2 grad' v (x) grad' v`.
    pub g1: Matrix2<f64>,
    /// `-grad'^2 v`.
    pub g2: Matrix2<f64>,
    pub d12v: f64,
    /// `[[G2, 0], [0, 0]] Z_- + d12 v M`.
    pub g3: CellMatrix,
    pub grad_v: Vector2<f64>,
}

pub fn strains_from_point(p: &FieldPoint) -> LimitStrains {
    let gu = p.grad_u();
    let gv = p.v.grad;
    let g1 = (gu + gu.transpose()) * 0.5 + gv * gv.transpose() * 0.5;
    let g2 = -p.v.hess;
    let d12v = p.v.hess[(0, 1)];
    let g3 = embed2(&g2) * z_minus() + m_matrix() * d12v;
    LimitStrains {
        g1,
        g2,
        d12v,
        g3,
        grad_v: gv,
    }
}

pub fn strains_at(field: &Field, x: Vector2<f64>) -> LimitStrains {
    strains_from_point(&field.point(x))
}

/// Composite midpoint rule on an `m1 x m2` subdivision of `(0, lx) x (0, ly)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub lx: f64,
    pub ly: f64,
    pub m1: usize,
    pub m2: usize,
}

impl Quadrature {
    pub fn square(l: f64, m: usize) -> Self {
        Quadrature {
            lx: l,
            ly: l,
            m1: m,
            m2: m,
        }
    }

    pub fn len(&self) -> usize {
        self.m1 * self.m2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn node(&self, n: usize) -> Vector2<f64> {
        let (i, j) = (n % self.m1, n / self.m1);
        Vector2::new(
            (i as f64 + 0.5) * self.lx / self.m1 as f64,
            (j as f64 + 0.5) * self.ly / self.m2 as f64,
        )
    }

    #[inline]
    pub fn weight(&self) -> f64 {
        self.lx * self.ly / (self.m1 * self.m2) as f64
    }

    /// `sum_n w f(x_n)`, deterministic across thread counts.
    pub fn integrate(&self, f: impl Fn(Vector2<f64>) -> f64 + Sync) -> f64 {
        self.weight() * par_sum(self.len(), |n| f(self.node(n)))
    }
}

/// Dead load density `f(x')` together with the limiting rotation `R*`.
pub struct ForceTerm<'a> {
    pub density: &'a (dyn Fn(Vector2<f64>) -> Vector3<f64> + Sync),
    pub rotation: Matrix3<f64>,
}

impl ForceTerm<'_> {
    #[inline]
    fn density_at(&self, x: Vector2<f64>, v: f64) -> f64 {
        (self.density)(x).dot(&(self.rotation * Vector3::z())) * v
    }
}

/// Integrand of `E_vK` without forces.
pub fn vk_density(forms: &LimitForms, s: &LimitStrains) -> f64 {
    0.5 * forms.q2(&s.g1) + forms.q2(&s.g2) / 24.0
}

fn check_nu(nu: usize) -> Result<()> {
    if nu < 2 {
        return Err(Error::Parameter(format!("layer count must be at least 2, got {nu}")));
    }
    Ok(())
}

fn m_lower() -> FaceMatrix {
    m_matrix().fixed_columns::<4>(0).into_owned()
}

/// Integrand of `E_vK^(nu)` without forces, term by term as in the
/// finite-layer limit.
pub fn vk_nu_density(forms: &LimitForms, s: &LimitStrains, nu: usize) -> f64 {
    let n = nu as f64;
    let c = 1.0 / (n - 1.0);
    let z = z_matrix();
    let z1 = z_lower();
    let sym_g1 = (s.g1 + s.g1.transpose()) * 0.5;
    let bulk_membrane = 0.5 * forms.q_rel(&(embed2(&sym_g1) * z + s.g3 * (0.5 * c)));
    let bulk_bending = n * (n - 2.0) * c * c / 24.0 * forms.q_rel(&(embed2(&s.g2) * z));
    let surf_membrane = c * forms.q_surf(&(embed2(&sym_g1) * z1 + m_lower() * (s.d12v * 0.25 * c)));
    let surf_bending = 0.25 * c * forms.q_surf(&(embed2(&s.g2) * z1));
    bulk_membrane + bulk_bending + surf_membrane + surf_bending
}

/// Integrand of the decoupled form valid under antiplane symmetry.
pub fn vk_nu_decoupled_density(forms: &LimitForms, s: &LimitStrains, nu: usize) -> f64 {
    let c = 1.0 / (nu as f64 - 1.0);
    vk_density(forms, s)
        + c * (forms.q2_surf(&s.g1) + 0.25 * forms.q2_surf(&s.g2))
        + c * c / 8.0 * (forms.q_rel(&s.g3) - forms.q2(&s.g2) / 3.0)
        + c * c * c / 16.0 * s.d12v * s.d12v * forms.q_surf_m()
}

/// `E_vK(u, v, R*)`.
pub fn e_vk(field: &Field, forms: &LimitForms, quad: &Quadrature, force: Option<&ForceTerm>) -> f64 {
    quad.integrate(|x| {
        let p = field.point(x);
        let mut d = vk_density(forms, &strains_from_point(&p));
        if let Some(f) = force {
            d += f.density_at(x, p.v.value);
        }
        d
    })
}

/// `E_vK^(nu)(u, v, R*)`.
pub fn e_vk_nu(
    field: &Field,
    nu: usize,
    forms: &LimitForms,
    quad: &Quadrature,
    force: Option<&ForceTerm>,
) -> Result<f64> {
    check_nu(nu)?;
    let factor = nu as f64 / (nu as f64 - 1.0);
    Ok(quad.integrate(|x| {
        let p = field.point(x);
        let mut d = vk_nu_density(forms, &strains_from_point(&p), nu);
        if let Some(f) = force {
            d += factor * f.density_at(x, p.v.value);
        }
        d
    }))
}

/// `E_vK^(nu)` through the decoupled expression; requires antiplane
/// symmetric laws.
pub fn e_vk_nu_decoupled(
    field: &Field,
    nu: usize,
    forms: &LimitForms,
    quad: &Quadrature,
    symmetric: bool,
) -> Result<f64> {
    check_nu(nu)?;
    if !symmetric {
        return Err(Error::Parameter(
            "decoupled limit requires cell and surface laws with antiplane symmetry".into(),
        ));
    }
    Ok(quad.integrate(|x| vk_nu_decoupled_density(forms, &strains_at(field, x), nu)))
}

/// Limit of the scaled body-force term: `int f . v R* e3` times `nu/(nu-1)`
/// for a fixed layer count, times 1 when `nu = None` (`nu -> infinity`).
pub fn force_limit(field: &Field, force: &ForceTerm, nu: Option<usize>, quad: &Quadrature) -> Result<f64> {
    let factor = match nu {
        Some(n) => {
            check_nu(n)?;
            n as f64 / (n as f64 - 1.0)
        }
        None => 1.0,
    };
    Ok(factor * quad.integrate(|x| force.density_at(x, field.point(x).v.value)))
}

/// Exact check of the layer-sum identities at one layer count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub nu: usize,
    /// `sum_{k=1}^{nu-1} (2k - nu)^2 / (2 nu - 2)^3`.
    pub layer_sum: String,
    /// `nu (nu - 2) / (24 (nu - 1)^2)`.
    pub closed_form: String,
    /// `sum_{k=1}^{nu-1} (2k - nu) / (nu - 1)`.
    pub mean: String,
    pub ok: bool,
}

pub fn coefficient_identities(nu: usize) -> Result<IdentityReport> {
    check_nu(nu)?;
    let n = nu as i128;
    let mut lhs = Ratio::from_integer(0i128);
    let mut mean = Ratio::from_integer(0i128);
    for k in 1..n {
        lhs += Ratio::new((2 * k - n) * (2 * k - n), (2 * n - 2).pow(3));
        mean += Ratio::new(2 * k - n, n - 1);
    }
    let rhs = Ratio::new(n * (n - 2), 24 * (n - 1) * (n - 1));
    Ok(IdentityReport {
        nu,
        layer_sum: lhs.to_string(),
        closed_form: rhs.to_string(),
        mean: mean.to_string(),
        ok: lhs == rhs && mean == Ratio::from_integer(0),
    })
}

/// `(2Z)(2Z)^T = 8 Id` in integer arithmetic, i.e. `Z Z^T = 2 Id`.
pub fn z_gram_is_exact() -> bool {
    let z2 = z_matrix() * 2.0;
    let ints: Vec<[i64; 8]> = (0..3).map(|r| std::array::from_fn(|c| z2[(r, c)] as i64)).collect();
    (0..3).all(|a| {
        (0..3).all(|b| {
            let s: i64 = (0..8).map(|c| ints[a][c] * ints[b][c]).sum();
            s == if a == b { 8 } else { 0 }
        })
    }) && z2.iter().all(|v| v.fract() == 0.0)
}
