//! JSON run configuration and its translation into library objects.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use msde_core::fem::{initial_data, Mesh1D, NewtonConfig, NoiseCoefficient, PLaplaceModel, PsiShape};
use msde_core::models::{
    builtin_drift, ConstantDiffusion, DiagonalLinearDiffusion, FixedInitial, GaussianInitial,
    LinearMap, SineMap, ZeroMap,
};
use msde_core::{
    DMatrix, DVector, DiffusionMap, InitialLaw, LipschitzMap, MonotoneDrift, ProblemSpec,
    StepGate, StepSolverConfig,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub drift: DriftConfig,
    #[serde(default)]
    pub b: PerturbationConfig,
    pub g: DiffusionConfig,
    pub x0: InitialConfig,
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DriftConfig {
    /// Subdifferential of `|x|`.
    Abs,
    /// Gradient of `|x|^p`.
    Power { p: f64 },
    Linear { matrix: Vec<Vec<f64>> },
    Zero { dim: usize },
    Plaplace(PlaplaceConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaplaceConfig {
    #[serde(default = "one")]
    pub length: f64,
    pub elements: usize,
    pub p_lap: f64,
    /// `"zero"` or `"scalar-lipschitz:<L>"`.
    #[serde(default = "zero_noise")]
    pub noise: String,
    #[serde(default = "sin_shape")]
    pub shape: String,
    #[serde(default = "one_usize")]
    pub noise_dim: usize,
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

fn zero_noise() -> String {
    "zero".into()
}

fn sin_shape() -> String {
    "sin".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PerturbationConfig {
    #[default]
    Zero,
    Linear { matrix: Vec<Vec<f64>> },
    Sine { amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DiffusionConfig {
    /// Additive noise `g(x) = g0`, a `d × m` matrix.
    Constant { g0: Vec<Vec<f64>> },
    DiagonalLinear { sigma: f64 },
    /// The projected Nemytskii noise of the p-Laplace model.
    Plaplace,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialConfig {
    Fixed { value: Vec<f64> },
    Gaussian { mean: Vec<f64>, std: f64 },
    /// L² projection of a named profile (`zero`, `sine`, `hat`).
    Plaplace { profile: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rate,
    Diagnostics,
    Gap,
    EtaRate,
    WienerCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Rate => "rate",
            Self::Diagnostics => "diagnostics",
            Self::Gap => "gap",
            Self::EtaRate => "eta-rate",
            Self::WienerCheck => "wiener-check",
        }
    }

    /// Gate required on top of solvability.
    pub fn regime(self) -> StepGate {
        match self {
            Self::Rate | Self::EtaRate => StepGate::Convergence,
            Self::Diagnostics | Self::Gap => StepGate::Apriori,
            Self::WienerCheck => StepGate::Solvability,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub k_levels: Vec<f64>,
    /// Defaults to the smallest level divided by 16.
    #[serde(default)]
    pub k_ref: Option<f64>,
    pub paths: usize,
    pub seed: u64,
    /// Fine-grid factor of the Wiener check.
    #[serde(default)]
    pub refinement: Option<usize>,
}

impl ExperimentConfig {
    pub fn k_ref(&self) -> Option<f64> {
        match self.kind {
            ExperimentKind::Rate | ExperimentKind::EtaRate => Some(self.k_ref.unwrap_or_else(|| {
                self.k_levels.iter().copied().fold(f64::INFINITY, f64::min) / 16.0
            })),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_outer_iters")]
    pub outer_max_iters: usize,
    #[serde(default = "default_outer_tol")]
    pub outer_tol: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_iters")]
    pub newton_max_iters: usize,
}

fn default_outer_iters() -> usize {
    StepSolverConfig::default().outer_max_iters
}

fn default_outer_tol() -> f64 {
    StepSolverConfig::default().outer_tol
}

fn default_newton_tol() -> f64 {
    NewtonConfig::default().tol
}

fn default_newton_iters() -> usize {
    NewtonConfig::default().max_iters
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_max_iters: default_outer_iters(),
            outer_tol: default_outer_tol(),
            newton_tol: default_newton_tol(),
            newton_max_iters: default_newton_iters(),
        }
    }
}

impl SolverConfig {
    pub fn step_config(&self) -> StepSolverConfig {
        StepSolverConfig {
            outer_max_iters: self.outer_max_iters,
            outer_tol: self.outer_tol,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub directory: Option<PathBuf>,
    /// Defaults to the experiment kind.
    #[serde(default)]
    pub prefix: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn prefix(&self) -> String {
        self.output
            .prefix
            .clone()
            .unwrap_or_else(|| self.experiment.kind.name().to_string())
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    ensure!(!rows.is_empty() && !rows[0].is_empty(), "{what} must be a nonempty matrix");
    let cols = rows[0].len();
    ensure!(rows.iter().all(|r| r.len() == cols), "{what} has rows of different lengths");
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Builds the problem. The p-Laplace diffusion and initial value reuse the
/// drift's mesh and mass matrix factorizations.
pub fn build_problem(cfg: &ProblemConfig, solver: &SolverConfig) -> Result<ProblemSpec> {
    let mut plaplace: Option<PLaplaceModel> = None;
    let drift: Arc<dyn MonotoneDrift> = match &cfg.drift {
        DriftConfig::Abs => builtin_drift("abs", None)?,
        DriftConfig::Power { p } => builtin_drift(&format!("power:{p}"), None)?,
        DriftConfig::Linear { matrix: m } => builtin_drift("linear", Some(matrix(m, "drift matrix")?))?,
        DriftConfig::Zero { dim } => {
            ensure!(*dim > 0, "zero drift needs a positive dimension");
            builtin_drift("zero", Some(DMatrix::zeros(*dim, *dim)))?
        }
        DriftConfig::Plaplace(p) => {
            let mesh = Mesh1D::new(p.length, p.elements)?;
            let shape = PsiShape::from_name(&p.shape)?;
            let noise = NoiseCoefficient::parse(&p.noise, shape, p.noise_dim)?;
            let newton = NewtonConfig {
                tol: solver.newton_tol,
                max_iters: solver.newton_max_iters,
            };
            let model = PLaplaceModel::new(mesh, p.p_lap, noise)?.with_newton(newton);
            plaplace = Some(model.clone());
            Arc::new(model)
        }
    };
    let d = drift.dim();

    let b: Arc<dyn LipschitzMap> = match &cfg.b {
        PerturbationConfig::Zero => Arc::new(ZeroMap::new(d)),
        PerturbationConfig::Linear { matrix: m } => Arc::new(LinearMap::new(matrix(m, "b matrix")?)?),
        PerturbationConfig::Sine { amplitude } => Arc::new(SineMap::new(d, *amplitude)),
    };

    let g: Arc<dyn DiffusionMap> = match &cfg.g {
        DiffusionConfig::Constant { g0 } => Arc::new(ConstantDiffusion::new(matrix(g0, "g0")?)),
        DiffusionConfig::DiagonalLinear { sigma } => Arc::new(DiagonalLinearDiffusion::new(d, *sigma)),
        DiffusionConfig::Plaplace => {
            let (Some(model), DriftConfig::Plaplace(p)) = (&plaplace, &cfg.drift) else {
                bail!("g kind `plaplace` requires the `plaplace` drift model");
            };
            Arc::new(model.build_diffusion(p.noise_dim)?)
        }
    };

    let initial: Arc<dyn InitialLaw> = match &cfg.x0 {
        InitialConfig::Fixed { value } => Arc::new(FixedInitial::new(DVector::from_column_slice(value))),
        InitialConfig::Gaussian { mean, std } => {
            ensure!(*std >= 0.0, "initial std must be nonnegative");
            Arc::new(GaussianInitial::new(DVector::from_column_slice(mean), *std))
        }
        InitialConfig::Plaplace { profile } => {
            let Some(model) = &plaplace else {
                bail!("x0 kind `plaplace` requires the `plaplace` drift model");
            };
            let u0 = initial_data(profile, model.mesh().length())?;
            Arc::new(FixedInitial::new(model.project_initial(u0)?))
        }
    };

    Ok(ProblemSpec::new(drift, b, g, initial, cfg.horizon)?)
}
