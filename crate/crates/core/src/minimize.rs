//! Descent on the scaled atomistic energy with a backtracking line search.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::energy::{
    e_atom_gradient, e_nonpen_gradient, e_total, in_s_delta, AtomisticModel, EnergyVariant, ForceField,
};
use crate::error::{Error, Result};
use crate::lattice::{Deformation, Lattice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepRule {
    SteepestDescent,
    Lbfgs { memory: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizeOptions {
    pub rule: StepRule,
    pub max_iter: usize,
    /// Stop once the gradient norm drops below this value.
    pub grad_tol: f64,
    /// Stop once the energy falls below `rel_tol` times the initial energy.
    pub rel_tol: f64,
    /// Sufficient decrease constant of the Armijo condition.
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    pub variant: EnergyVariant,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            rule: StepRule::Lbfgs { memory: 8 },
            max_iter: 500,
            grad_tol: 1e-12,
            rel_tol: 0.0,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 60,
            variant: EnergyVariant::Plain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    GradientTolerance,
    RelativeTolerance,
    IterationBudget,
    /// No step satisfied the sufficient decrease condition; the result
    /// carries the last accepted iterate.
    LineSearch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeResult {
    pub w: Deformation,
    /// Energy before the first and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stop: StopReason,
}

impl MinimizeResult {
    /// Converts a line-search stop into an error.
    pub fn into_checked(self) -> Result<Self> {
        if self.stop == StopReason::LineSearch {
            return Err(Error::LineSearch {
                iterations: self.iterations,
                energy: *self.trace.last().unwrap_or(&f64::NAN),
            });
        }
        Ok(self)
    }
}

/// Gradient of [`e_total`] (the restricted variant uses the plain gradient
/// inside `S_delta`).
pub fn e_total_gradient(
    w: &Deformation,
    lat: &Lattice,
    model: &AtomisticModel,
    f: Option<&ForceField>,
    variant: EnergyVariant,
) -> Result<Vec<Vector3<f64>>> {
    w.check(lat)?;
    let mut g = e_atom_gradient(w, lat, model);
    if let Some(f) = f {
        f.check(lat)?;
        for (id, gi) in g.iter_mut().enumerate() {
            let (i, j, _) = lat.node_triple(id);
            *gi += f.at_column(i, j);
        }
    }
    if variant == EnergyVariant::WithNonpen {
        let p = model
            .nonpen
            .ok_or_else(|| Error::Config("non-penetration parameters are not configured".into()))?;
        for (a, b) in g.iter_mut().zip(e_nonpen_gradient(w, lat, &p)) {
            *a += b;
        }
    }
    let pre = lat.epsilon().powi(3) / lat.thickness();
    for gi in &mut g {
        *gi *= pre;
    }
    Ok(g)
}

fn dot(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

fn axpy(y: &mut [Vector3<f64>], a: f64, x: &[Vector3<f64>]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * a;
    }
}

fn diff(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Two-loop recursion for the L-BFGS direction `-H g`.
fn lbfgs_direction(g: &[Vector3<f64>], hist: &[(Vec<Vector3<f64>>, Vec<Vector3<f64>>)]) -> Vec<Vector3<f64>> {
    let mut q: Vec<Vector3<f64>> = g.to_vec();
    let mut alpha = vec![0.0; hist.len()];
    for (n, (s, y)) in hist.iter().enumerate().rev() {
        let rho = 1.0 / dot(y, s);
        alpha[n] = rho * dot(s, &q);
        axpy(&mut q, -alpha[n], y);
    }
    if let Some((s, y)) = hist.last() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for (n, (s, y)) in hist.iter().enumerate() {
        let rho = 1.0 / dot(y, s);
        let beta = rho * dot(y, &q);
        axpy(&mut q, alpha[n] - beta, s);
    }
    for qi in &mut q {
        *qi = -*qi;
    }
    q
}

/// Minimises the scaled total energy starting from `w0`.
///
/// Every accepted step satisfies the Armijo condition, so the trace is
/// nonincreasing. With the restricted variant, trial points outside
/// `S_delta` have infinite energy and are rejected by the line search.
pub fn minimize_atomistic(
    w0: &Deformation,
    lat: &Lattice,
    model: &AtomisticModel,
    force: Option<&ForceField>,
    opts: &MinimizeOptions,
) -> Result<MinimizeResult> {
    if !(opts.shrink > 0.0 && opts.shrink < 1.0) || !(opts.armijo > 0.0 && opts.armijo < 1.0) {
        return Err(Error::Parameter(
            "line search needs 0 < shrink < 1 and 0 < armijo < 1".into(),
        ));
    }
    if let StepRule::Lbfgs { memory: 0 } = opts.rule {
        return Err(Error::Parameter("L-BFGS memory must be positive".into()));
    }
    if opts.variant == EnergyVariant::Restricted {
        let delta = model
            .delta_adm
            .ok_or_else(|| Error::Config("restricted energy needs an admissibility radius".into()))?;
        let (inside, dist) = in_s_delta(w0, lat, delta);
        if !inside {
            return Err(Error::Parameter(format!(
                "initial deformation is outside S_delta (max cell distance {dist:e} >= {delta:e})"
            )));
        }
    }
    let energy = |w: &Deformation| e_total(w, lat, model, force, opts.variant);
    let mut w = w0.clone();
    let mut e = energy(&w)?;
    if !e.is_finite() {
        return Err(Error::Numeric("initial energy is not finite".into()));
    }
    let e0 = e;
    let mut g = e_total_gradient(&w, lat, model, force, opts.variant)?;
    let mut trace = vec![e];
    let mut hist: Vec<(Vec<Vector3<f64>>, Vec<Vector3<f64>>)> = Vec::new();
    let mut step_hint = 1.0;
    let mut iterations = 0;
    let stop = loop {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= opts.grad_tol || e == 0.0 {
            break StopReason::GradientTolerance;
        }
        if opts.rel_tol > 0.0 && e <= opts.rel_tol * e0 {
            break StopReason::RelativeTolerance;
        }
        if iterations >= opts.max_iter {
            break StopReason::IterationBudget;
        }
        let mut dir = match opts.rule {
            StepRule::SteepestDescent => g.iter().map(|x| -x).collect(),
            StepRule::Lbfgs { .. } => lbfgs_direction(&g, &hist),
        };
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // curvature information went stale; fall back to the gradient
            hist.clear();
            dir = g.iter().map(|x| -x).collect();
            slope = -gnorm * gnorm;
        }
        let mut t = match opts.rule {
            StepRule::Lbfgs { .. } if !hist.is_empty() => 1.0,
            _ => step_hint / dot(&dir, &dir).sqrt().max(f64::MIN_POSITIVE),
        };
        let mut accepted = None;
        for _ in 0..=opts.max_backtracks {
            let trial = Deformation {
                config: w.config,
                positions: w.positions.iter().zip(&dir).map(|(x, d)| x + d * t).collect(),
            };
            let et = energy(&trial)?;
            if et.is_finite() && et <= e + opts.armijo * t * slope {
                accepted = Some((trial, et));
                break;
            }
            t *= opts.shrink;
        }
        let Some((trial, et)) = accepted else {
            break StopReason::LineSearch;
        };
        let gt = e_total_gradient(&trial, lat, model, force, opts.variant)?;
        if let StepRule::Lbfgs { memory } = opts.rule {
            let s = diff(&trial.positions, &w.positions);
            let y = diff(&gt, &g);
            if dot(&s, &y) > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
                if hist.len() == memory {
                    hist.remove(0);
                }
                hist.push((s, y));
            }
        }
        step_hint = 2.0 * t * dot(&dir, &dir).sqrt();
        w = trial;
        e = et;
        g = gt;
        trace.push(e);
        iterations += 1;
    };
    Ok(MinimizeResult {
        w,
        trace,
        iterations,
        grad_norm: dot(&g, &g).sqrt(),
        stop,
    })
}

/// Identity deformation with every node moved uniformly at random by at
/// most `amplitude * eps` per component; reproducible for a given seed.
pub fn perturbed_identity(lat: &Lattice, amplitude: f64, seed: u64) -> Deformation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = amplitude * lat.epsilon();
    let mut w = Deformation::identity(lat);
    for x in &mut w.positions {
        *x += Vector3::new(
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
            rng.random_range(-1.0..=1.0),
        ) * step;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{force_from_density, max_cell_distance};
    use crate::lattice::FilmConfig;
    use crate::potentials::{BulkLaw, MassSpringParams, SurfaceLaw};
    use nalgebra::Vector2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Lattice, AtomisticModel) {
        let lat = Lattice::new(FilmConfig::new(0.125, 2, 8, 8).unwrap()).unwrap();
        let p = MassSpringParams { alpha: 1.0, beta: 0.5 };
        let model = AtomisticModel::new(BulkLaw::MassSpring(p), SurfaceLaw::MassSpring(p)).unwrap();
        (lat, model)
    }

    fn perturbed(lat: &Lattice, amp: f64, seed: u64) -> Deformation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = lat.epsilon();
        let mut w = Deformation::identity(lat);
        for x in &mut w.positions {
            *x += Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ) * (amp * e);
        }
        w
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (lat, model) = perturbed_setup();
        let w = perturbed(&lat, 0.05, 3);
        let f = force_from_density(&lat, |x: Vector2<f64>| Vector3::new(0.1, 0.0, (6.0 * x.x).sin())).unwrap();
        let g = e_total_gradient(&w, &lat, &model, Some(&f), EnergyVariant::Plain).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let node = rng.random_range(0..lat.node_count());
            for a in 0..3 {
                let s = 1e-6;
                let mut wp = w.clone();
                wp.positions[node][a] += s;
                let mut wm = w.clone();
                wm.positions[node][a] -= s;
                let fd = (e_total(&wp, &lat, &model, Some(&f), EnergyVariant::Plain).unwrap()
                    - e_total(&wm, &lat, &model, Some(&f), EnergyVariant::Plain).unwrap())
                    / (2.0 * s);
                assert!(
                    (fd - g[node][a]).abs() < 1e-6 * (1.0 + fd.abs()),
                    "{fd} vs {}",
                    g[node][a]
                );
            }
        }
    }

    fn perturbed_setup() -> (Lattice, AtomisticModel) {
        let (lat, mut model) = setup();
        model.delta_adm = Some(0.5);
        (lat, model)
    }

    #[test]
    fn identity_is_already_optimal() {
        let (lat, model) = setup();
        let r = minimize_atomistic(
            &Deformation::identity(&lat),
            &lat,
            &model,
            None,
            &MinimizeOptions::default(),
        )
        .unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.trace, vec![0.0]);
    }

    #[test]
    fn perturbation_relaxes_with_either_rule() {
        let (lat, model) = setup();
        let w0 = perturbed(&lat, 0.05, 1);
        for rule in [StepRule::Lbfgs { memory: 8 }, StepRule::SteepestDescent] {
            let opts = MinimizeOptions {
                rule,
                rel_tol: 1e-8,
                max_iter: 5000,
                ..Default::default()
            };
            let r = minimize_atomistic(&w0, &lat, &model, None, &opts).unwrap();
            assert!(r.trace.windows(2).all(|p| p[1] <= p[0]));
            assert!(*r.trace.last().unwrap() <= 1e-8 * r.trace[0], "{rule:?}: {:?}", r.stop);
        }
    }

    #[test]
    fn restricted_runs_stay_inside() {
        let (lat, model) = perturbed_setup();
        let w0 = perturbed(&lat, 0.02, 2);
        let f = force_from_density(&lat, |x: Vector2<f64>| {
            Vector3::new(0.0, 0.0, 50.0 * (2.0 * x.x - 1.0).powi(2))
        })
        .unwrap();
        let opts = MinimizeOptions {
            variant: EnergyVariant::Restricted,
            max_iter: 200,
            ..Default::default()
        };
        let r = minimize_atomistic(&w0, &lat, &model, Some(&f), &opts).unwrap();
        assert!(r.trace.last().unwrap() < &r.trace[0]);
        assert!(max_cell_distance(&r.w, &lat) < 0.5);
        let far = perturbed(&lat, 2.0, 4);
        assert!(minimize_atomistic(&far, &lat, &model, None, &opts).is_err());
    }
}
