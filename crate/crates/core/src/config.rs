//! Run configuration read from a TOML file.
//!
//! Every constant that affects results (model parameters, field, force,
//! sweep plan, quadrature) comes from the file; commands that need a
//! section fail with a configuration error when it is missing.

use std::path::{Path, PathBuf};

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::energy::AtomisticModel;
use crate::error::{Error, Result};
use crate::lattice::FilmConfig;
use crate::limits::{Field, FieldSpec, TrigTerm};
use crate::minimize::MinimizeOptions;
use crate::potentials::{BulkLaw, NonPenParams, SurfaceLaw};
use crate::quadforms::{HessianMethod, LimitForms};
use crate::recovery::{Diagnostics, Regime, SweepOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub bulk: BulkLaw,
    pub surface: SurfaceLaw,
    #[serde(default)]
    pub nonpen: Option<NonPenParams>,
    #[serde(default)]
    pub delta_adm: Option<f64>,
    /// Defaults to closed-form Hessians when the law has them.
    #[serde(default)]
    pub hessian: Option<HessianMethod>,
}

impl ModelConfig {
    pub fn model(&self) -> Result<AtomisticModel> {
        let m = AtomisticModel {
            bulk: self.bulk,
            surface: self.surface,
            nonpen: self.nonpen,
            delta_adm: self.delta_adm,
        };
        m.validate().map_err(|e| Error::Config(format!("[model]: {e}")))?;
        Ok(m)
    }

    pub fn forms(&self) -> Result<LimitForms> {
        let m = self.model()?;
        match self.hessian {
            Some(method) => LimitForms::assemble_with(&m, method),
            None => LimitForms::assemble(&m),
        }
    }
}

/// Dead load density, each component a sum of trigonometric terms.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSpec {
    #[serde(default)]
    pub e1: Vec<TrigTerm>,
    #[serde(default)]
    pub e2: Vec<TrigTerm>,
    #[serde(default)]
    pub e3: Vec<TrigTerm>,
}

impl ForceSpec {
    pub fn density(&self, x: Vector2<f64>) -> Vector3<f64> {
        let sum = |terms: &[TrigTerm]| terms.iter().map(|t| t.value(x)).sum::<f64>();
        Vector3::new(sum(&self.e1), sum(&self.e2), sum(&self.e3))
    }
}

/// Layer counts of a sweep: one for all levels or one per level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuPlan {
    Fixed(usize),
    PerLevel(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub regime: Regime,
    pub lx: f64,
    pub ly: f64,
    pub eps: Vec<f64>,
    pub nu: NuPlan,
    /// Admissibility radius for the barrier check.
    #[serde(default)]
    pub delta: Option<f64>,
}

impl SweepConfig {
    /// Film configurations of the sweep; lattice spacings must strictly
    /// decrease, a fixed-layer regime needs one layer count and the
    /// growing-layer regime strictly increasing counts.
    pub fn levels(&self) -> Result<Vec<FilmConfig>> {
        if self.eps.is_empty() {
            return Err(Error::Config("[sweep]: eps is empty".into()));
        }
        if self.eps.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::Config("[sweep]: eps must be strictly decreasing".into()));
        }
        let nus = match &self.nu {
            NuPlan::Fixed(n) => vec![*n; self.eps.len()],
            NuPlan::PerLevel(v) if v.len() == self.eps.len() => v.clone(),
            NuPlan::PerLevel(v) => {
                return Err(Error::Config(format!(
                    "[sweep]: {} layer counts for {} levels",
                    v.len(),
                    self.eps.len()
                )))
            }
        };
        match self.regime {
            Regime::Ultrathin if nus.windows(2).any(|w| w[0] != w[1]) => {
                return Err(Error::Config(
                    "[sweep]: the ultrathin regime needs a fixed layer count".into(),
                ));
            }
            Regime::Thin if nus.len() > 1 && nus.windows(2).any(|w| w[1] <= w[0]) => {
                return Err(Error::Config(
                    "[sweep]: the thin regime needs increasing layer counts".into(),
                ));
            }
            _ => {}
        }
        self.eps
            .iter()
            .zip(nus)
            .map(|(&e, nu)| {
                FilmConfig::covering(e, nu, self.lx, self.ly).map_err(|err| Error::Config(format!("[sweep]: {err}")))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Midpoint subdivisions per unit length.
    pub per_unit: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub diagnostics: Diagnostics,
    #[serde(default)]
    pub timing: bool,
}

/// Descent run on a small film started from a randomly perturbed identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimizeConfig {
    pub eps: f64,
    pub nu: usize,
    pub n1: usize,
    pub n2: usize,
    /// Uniform random node displacement amplitude in units of `eps`.
    pub perturbation: f64,
    /// Apply the `[force]` density.
    #[serde(default)]
    pub use_force: bool,
    #[serde(default)]
    pub options: MinimizeOptions,
}

impl MinimizeConfig {
    pub fn film(&self) -> Result<FilmConfig> {
        FilmConfig::new(self.eps, self.nu, self.n1, self.n2).map_err(|e| Error::Config(format!("[minimize]: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub field: Option<FieldSpec>,
    #[serde(default)]
    pub force: Option<ForceSpec>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub quadrature: Option<QuadratureConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub minimize: Option<MinimizeConfig>,
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing [{section}] section"))
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.model.model()?;
        if let Some(s) = &cfg.sweep {
            s.levels()?;
        }
        if let Some(q) = cfg.quadrature {
            if q.per_unit == 0 {
                return Err(Error::Config("[quadrature]: per_unit must be positive".into()));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn field(&self) -> Result<Field> {
        let spec = self.field.clone().ok_or_else(|| missing("field"))?;
        Field::new(spec).map_err(|e| Error::Config(format!("[field]: {e}")))
    }

    pub fn sweep(&self) -> Result<&SweepConfig> {
        self.sweep.as_ref().ok_or_else(|| missing("sweep"))
    }

    pub fn quadrature(&self) -> Result<QuadratureConfig> {
        self.quadrature.ok_or_else(|| missing("quadrature"))
    }

    pub fn minimize(&self) -> Result<&MinimizeConfig> {
        self.minimize.as_ref().ok_or_else(|| missing("minimize"))
    }

    pub fn sweep_options(&self) -> Result<SweepOptions> {
        Ok(SweepOptions {
            quad_per_unit: self.quadrature()?.per_unit,
            diagnostics: self.output.diagnostics,
            timing: self.output.timing,
        })
    }
}
