//! Quadratic forms obtained as Hessians of the cell laws at the reference
//! cell, and the relaxation over vertical shifts `(b (x) e3) Z`.
//!
//! A 3xN matrix is identified with its column-major vector of length 3N, so a
//! form on 3x8 matrices is a symmetric 24x24 matrix.

use nalgebra::{Cholesky, Matrix2, Matrix3, SMatrix, SVector, Vector3, U3};
use serde::{Deserialize, Serialize};

use crate::energy::AtomisticModel;
use crate::error::{Error, Result};
use crate::lattice::{embed2, m_matrix, z_lower, z_matrix, CellMatrix, FaceMatrix};
use crate::potentials::{antiplane_reflect, antiplane_reflect_face};

/// Symmetric bilinear form on 3xC matrices (`D = 3C`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticForm<const C: usize, const D: usize> {
    pub matrix: SMatrix<f64, D, D>,
}

pub type CellForm = QuadraticForm<8, 24>;
pub type FaceForm = QuadraticForm<4, 12>;

impl<const C: usize, const D: usize> QuadraticForm<C, D> {
    pub fn new(matrix: SMatrix<f64, D, D>) -> Self {
        QuadraticForm { matrix }
    }

    #[inline]
    fn flat(a: &SMatrix<f64, 3, C>) -> SVector<f64, D> {
        SVector::<f64, D>::from_column_slice(a.as_slice())
    }

    /// `Q[A, B]`.
    #[inline]
    pub fn pair(&self, a: &SMatrix<f64, 3, C>, b: &SMatrix<f64, 3, C>) -> f64 {
        Self::flat(a).dot(&(self.matrix * Self::flat(b)))
    }

    /// `Q(A) = Q[A, A]`.
    #[inline]
    pub fn eval(&self, a: &SMatrix<f64, 3, C>) -> f64 {
        let v = Self::flat(a);
        v.dot(&(self.matrix * v))
    }

    /// Evaluation on a column-major flat vector, checked for length.
    pub fn eval_slice(&self, a: &[f64]) -> Result<f64> {
        if a.len() != D {
            return Err(Error::Dimension {
                expected: format!("{D} entries (3x{C} matrix)"),
                got: format!("{} entries", a.len()),
            });
        }
        let v = SVector::<f64, D>::from_column_slice(a);
        Ok(v.dot(&(self.matrix * v)))
    }

    /// Largest relative asymmetry `max |Q_ij - Q_ji| / max |Q_ij|`.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.matrix.amax().max(f64::MIN_POSITIVE);
        (self.matrix - self.matrix.transpose()).amax() / scale
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Smallest eigenvalue on the zero-column-sum subspace.
    pub fn min_eigenvalue_on_centered(&self) -> f64 {
        // project onto the orthogonal complement of the three translations
        let mut p = SMatrix::<f64, D, D>::identity();
        for r in 0..3 {
            let mut t = SVector::<f64, D>::zeros();
            for c in 0..C {
                t[3 * c + r] = 1.0 / (C as f64).sqrt();
            }
            p -= t * t.transpose();
        }
        let restricted = p * self.matrix * p;
        let sym = (restricted + restricted.transpose()) * 0.5;
        nalgebra::DMatrix::from_column_slice(D, D, sym.as_slice())
            .symmetric_eigenvalues()
            .min()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..D).map(|i| (0..D).map(|j| self.matrix[(i, j)]).collect()).collect()
    }
}

/// Central-difference Hessian with one Richardson refinement, symmetrized.
pub fn hessian_fd<const C: usize, const D: usize>(
    f: impl Fn(&SMatrix<f64, 3, C>) -> f64,
    base: &SMatrix<f64, 3, C>,
    step: f64,
) -> Result<SMatrix<f64, D, D>> {
    let at = |h: f64| -> SMatrix<f64, D, D> {
        let mut out = SMatrix::<f64, D, D>::zeros();
        for i in 0..D {
            for j in i..D {
                let eval = |si: f64, sj: f64| {
                    let mut g = *base;
                    g[i] += si * h;
                    g[j] += sj * h;
                    f(&g)
                };
                let v = (eval(1.0, 1.0) - eval(1.0, -1.0) - eval(-1.0, 1.0) + eval(-1.0, -1.0)) / (4.0 * h * h);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    };
    let coarse = at(step);
    let fine = at(step / 2.0);
    let h = (fine * 4.0 - coarse) / 3.0;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "finite-difference Hessian has non-finite entries".into(),
        ));
    }
    Ok((h + h.transpose()) * 0.5)
}

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMethod {
    /// Closed-form spring Hessians.
    Analytic,
    FiniteDifference,
}

/// `Q_cell = D^2 W_cell(Z)`.
pub fn cell_hessian(model: &AtomisticModel, method: HessianMethod) -> Result<CellForm> {
    let z = z_matrix();
    let m = match method {
        HessianMethod::Analytic => model
            .bulk
            .analytic_hessian(&z)
            .ok_or_else(|| Error::Numeric("no closed-form Hessian at the reference cell for this law".into()))?,
        HessianMethod::FiniteDifference => hessian_fd(|g| model.bulk.energy(g), &z, FD_STEP)?,
    };
    Ok(CellForm::new(m))
}

/// `Q_surf = D^2 W_surf(Z^(1))`.
pub fn surface_hessian(model: &AtomisticModel, method: HessianMethod) -> Result<FaceForm> {
    let z1 = z_lower();
    let m = match method {
        HessianMethod::Analytic => model.surface.analytic_hessian(&z1),
        HessianMethod::FiniteDifference => hessian_fd(|g| model.surface.energy(g), &z1, FD_STEP)?,
    };
    Ok(FaceForm::new(m))
}

/// `(e_i (x) e3) Z`.
pub fn vertical_shift(i: usize) -> CellMatrix {
    let z = z_matrix();
    let mut out = CellMatrix::zeros();
    out.row_mut(i).copy_from(&z.row(2));
    out
}

/// `sym(e_i (x) e3) Z`.
pub fn vertical_shift_sym(i: usize) -> CellMatrix {
    let mut e = Matrix3::zeros();
    e[(i, 2)] += 0.5;
    e[(2, i)] += 0.5;
    e * z_matrix()
}

/// Minimisation of `b -> Q(A + sum_i b_i B_i)` for a fixed basis `B_i`.
#[derive(Debug, Clone)]
pub struct RelaxationSolver {
    form: CellForm,
    basis: [CellMatrix; 3],
    qbasis: [SVector<f64, 24>; 3],
    gram: Matrix3<f64>,
    chol: Cholesky<f64, U3>,
}

impl RelaxationSolver {
    pub fn new(form: CellForm) -> Result<Self> {
        Self::with_basis(form, [vertical_shift(0), vertical_shift(1), vertical_shift(2)])
    }

    /// Relaxation over `sym(b (x) e3) Z`.
    pub fn symmetric(form: CellForm) -> Result<Self> {
        Self::with_basis(
            form,
            [vertical_shift_sym(0), vertical_shift_sym(1), vertical_shift_sym(2)],
        )
    }

    fn with_basis(form: CellForm, basis: [CellMatrix; 3]) -> Result<Self> {
        let qbasis = basis.map(|b| form.matrix * SVector::<f64, 24>::from_column_slice(b.as_slice()));
        let gram = Matrix3::from_fn(|i, j| SVector::<f64, 24>::from_column_slice(basis[i].as_slice()).dot(&qbasis[j]));
        let gram = (gram + gram.transpose()) * 0.5;
        let ev = gram.symmetric_eigenvalues();
        let scale = form.norm().max(f64::MIN_POSITIVE);
        if ev.min() <= 1e-10 * scale {
            return Err(Error::Numeric(format!(
                "relaxation Gram matrix is not positive definite (eigenvalues {ev:?}); \
                 the cell law violates the single-well growth condition"
            )));
        }
        let chol = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric("Cholesky of the Gram matrix failed".into()))?;
        Ok(RelaxationSolver {
            form,
            basis,
            qbasis,
            gram,
            chol,
        })
    }

    pub fn gram(&self) -> &Matrix3<f64> {
        &self.gram
    }

    pub fn form(&self) -> &CellForm {
        &self.form
    }

    /// The minimiser `b(A)`.
    #[inline]
    pub fn relax_b(&self, a: &CellMatrix) -> Vector3<f64> {
        let v = SVector::<f64, 24>::from_column_slice(a.as_slice());
        let r = Vector3::new(
            -self.qbasis[0].dot(&v),
            -self.qbasis[1].dot(&v),
            -self.qbasis[2].dot(&v),
        );
        self.chol.solve(&r)
    }

    /// `A + sum_i b_i B_i`.
    #[inline]
    pub fn shifted(&self, a: &CellMatrix, b: &Vector3<f64>) -> CellMatrix {
        a + self.basis[0] * b.x + self.basis[1] * b.y + self.basis[2] * b.z
    }

    /// `Q^rel(A) = min_b Q(A + sum_i b_i B_i)`.
    #[inline]
    pub fn q_rel(&self, a: &CellMatrix) -> f64 {
        let b = self.relax_b(a);
        self.form.eval(&self.shifted(a, &b))
    }
}

/// The forms entering the limit functionals.
#[derive(Debug, Clone)]
pub struct LimitForms {
    pub cell: CellForm,
    pub surf: FaceForm,
    pub relax: RelaxationSolver,
    pub method: HessianMethod,
}

impl LimitForms {
    /// Assembles the forms, preferring closed-form Hessians.
    pub fn assemble(model: &AtomisticModel) -> Result<Self> {
        let method = if model.bulk.analytic_hessian(&z_matrix()).is_some() {
            HessianMethod::Analytic
        } else {
            HessianMethod::FiniteDifference
        };
        Self::assemble_with(model, method)
    }

    pub fn assemble_with(model: &AtomisticModel, method: HessianMethod) -> Result<Self> {
        let cell = cell_hessian(model, method)?;
        let surf = surface_hessian(model, method)?;
        let relax = RelaxationSolver::new(cell)?;
        Ok(LimitForms {
            cell,
            surf,
            relax,
            method,
        })
    }

    #[inline]
    pub fn q_rel(&self, a: &CellMatrix) -> f64 {
        self.relax.q_rel(a)
    }

    #[inline]
    pub fn relax_b(&self, a: &CellMatrix) -> Vector3<f64> {
        self.relax.relax_b(a)
    }

    /// `Q_2(A) = Q^rel([[A, 0], [0, 0]] Z)`.
    #[inline]
    pub fn q2(&self, a: &Matrix2<f64>) -> f64 {
        self.q_rel(&(embed2(a) * z_matrix()))
    }

    /// `Q_2,surf(A) = Q_surf([[A, 0], [0, 0]] Z^(1))`.
    #[inline]
    pub fn q2_surf(&self, a: &Matrix2<f64>) -> f64 {
        self.surf.eval(&(embed2(a) * z_lower()))
    }

    #[inline]
    pub fn q_surf(&self, a: &FaceMatrix) -> f64 {
        self.surf.eval(a)
    }

    /// `Q_surf(M^(1))`.
    pub fn q_surf_m(&self) -> f64 {
        self.surf.eval(&m_matrix().fixed_columns::<4>(0).into_owned())
    }
}

/// Randomised check of the antiplane symmetry of the configured laws,
/// `W(w1..w8) = W(P w5..P w8, P w1..P w4)` with `P = diag(1, 1, -1)`.
pub fn antiplane_symmetric(model: &AtomisticModel, samples: usize, seed: u64) -> bool {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..samples).all(|_| {
        let g = z_matrix() + CellMatrix::from_fn(|_, _| rng.random_range(-0.2..0.2));
        let a = model.bulk.energy(&g);
        let b = model.bulk.energy(&antiplane_reflect(&g));
        let f = z_lower() + FaceMatrix::from_fn(|_, _| rng.random_range(-0.2..0.2));
        let c = model.surface.energy(&f);
        let d = model.surface.energy(&antiplane_reflect_face(&f));
        (a - b).abs() <= 1e-12 * (1.0 + a.abs()) && (c - d).abs() <= 1e-12 * (1.0 + c.abs())
    })
}
