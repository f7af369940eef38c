//! P1 finite elements for the stochastic p-Laplace equation on `(0, L)`
//!
//! ```text
//! du − ∂_ξ(|∂_ξ u|^{p−2} ∂_ξ u) dt = ψ(u) dW,   u(t, 0) = u(t, L) = 0.
//! ```
//!
//! Coefficient vectors `x ∈ ℝ^d` hold the interior nodal values of
//! `v_x = Σ x_i φ_i`. The drift is the assembled stiffness vector
//! `S(x)_j = ∫ |v_x'|^{p−2} v_x' φ_j' dξ`, i.e. the gradient of the energy
//! `Φ_h(x) = (1/p) ∫ |v_x'|^p dξ`. On a uniform mesh `v_x'` is constant on
//! each element, so all element integrals are evaluated exactly.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{MsdeError, Result};
use crate::linalg::solve_tridiagonal;
use crate::problem::{DiffusionMap, GrowthParams, MonotoneDrift};

/// Three-point Gauss–Legendre rule on `[0, 1]`.
const GAUSS_NODES: [f64; 3] = [
    0.112_701_665_379_258_3,
    0.5,
    0.887_298_334_620_741_7,
];
const GAUSS_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Uniform mesh of `(0, L)` with homogeneous Dirichlet boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh1D {
    length: f64,
    elements: usize,
}

impl Mesh1D {
    pub fn new(length: f64, elements: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(MsdeError::invalid(format!("domain length {length} must be positive")));
        }
        if elements < 2 {
            return Err(MsdeError::invalid("mesh needs at least two elements"));
        }
        Ok(Self { length, elements })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn elements(&self) -> usize {
        self.elements
    }

    pub fn width(&self) -> f64 {
        self.length / self.elements as f64
    }

    /// Number of interior nodes, the dimension `d` of the coefficient space.
    pub fn dofs(&self) -> usize {
        self.elements - 1
    }

    /// Coordinate of node `i ∈ 0..=E` (interior unknown `j` is node `j + 1`).
    pub fn node(&self, i: usize) -> f64 {
        if i == self.elements {
            self.length
        } else {
            i as f64 * self.width()
        }
    }
}

/// Mass matrix `(φ_i, φ_j)_{L²}`: tridiagonal with `2h/3` and `h/6`.
pub fn assemble_mass(mesh: &Mesh1D) -> DMatrix<f64> {
    let d = mesh.dofs();
    let h = mesh.width();
    let mut m = DMatrix::zeros(d, d);
    // Element e spans nodes e−1 and e; local mass h/6 [[2, 1], [1, 2]].
    for e in 1..=mesh.elements() {
        let nodes = [e.checked_sub(1).and_then(interior), interior(e).filter(|&j| j < d)];
        for (a, na) in nodes.iter().enumerate() {
            for (b, nb) in nodes.iter().enumerate() {
                if let (Some(i), Some(j)) = (na, nb) {
                    m[(*i, *j)] += if a == b { h / 3.0 } else { h / 6.0 };
                }
            }
        }
    }
    m
}

/// Interior index of node `i`, if it is interior.
fn interior(i: usize) -> Option<usize> {
    i.checked_sub(1)
}

/// Linear (`p = 2`) stiffness matrix `(1/h) tridiag(−1, 2, −1)`.
pub fn linear_stiffness(mesh: &Mesh1D) -> DMatrix<f64> {
    let d = mesh.dofs();
    let h = mesh.width();
    DMatrix::from_fn(d, d, |i, j| match i.abs_diff(j) {
        0 => 2.0 / h,
        1 => -1.0 / h,
        _ => 0.0,
    })
}

/// Shape of the scalar noise coefficient `ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsiShape {
    Sin,
    Tanh,
    Identity,
    Constant,
}

impl PsiShape {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "sin" => Ok(Self::Sin),
            "tanh" => Ok(Self::Tanh),
            "identity" => Ok(Self::Identity),
            "constant" => Ok(Self::Constant),
            other => Err(MsdeError::invalid(format!("unknown noise shape {other:?}"))),
        }
    }

    fn eval(self, u: f64) -> f64 {
        match self {
            Self::Sin => u.sin(),
            Self::Tanh => u.tanh(),
            Self::Identity => u,
            Self::Constant => 1.0,
        }
    }

    fn lipschitz(self) -> f64 {
        match self {
            Self::Constant => 0.0,
            _ => 1.0,
        }
    }
}

/// `ψ(u) = scale · shape(u) · weights`, a row vector in `ℝ^{1×m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCoefficient {
    pub scale: f64,
    pub shape: PsiShape,
    pub weights: Vec<f64>,
}

impl NoiseCoefficient {
    /// Equal weights `1/√m`, so the Lipschitz constant is `|scale|`.
    pub fn uniform(scale: f64, shape: PsiShape, noise_dim: usize) -> Result<Self> {
        if noise_dim == 0 {
            return Err(MsdeError::invalid("noise dimension must be positive"));
        }
        let w = 1.0 / (noise_dim as f64).sqrt();
        Ok(Self {
            scale,
            shape,
            weights: vec![w; noise_dim],
        })
    }

    /// Parses `"zero"` (returns `None`) or `"scalar-lipschitz:<L>"`.
    pub fn parse(spec: &str, shape: PsiShape, noise_dim: usize) -> Result<Option<Self>> {
        if spec == "zero" {
            return Ok(None);
        }
        let scale = spec
            .strip_prefix("scalar-lipschitz:")
            .and_then(|s| s.parse::<f64>().ok())
            .filter(|s| s.is_finite())
            .ok_or_else(|| MsdeError::invalid(format!("bad diffusion spec {spec:?}")))?;
        Self::uniform(scale, shape, noise_dim).map(Some)
    }

    fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn lipschitz(&self) -> f64 {
        self.scale.abs() * self.shape.lipschitz() * self.weight_norm()
    }

    fn scalar(&self, u: f64) -> f64 {
        self.scale * self.shape.eval(u)
    }
}

/// Named initial data on `(0, L)`.
pub fn initial_data(name: &str, length: f64) -> Result<Box<dyn Fn(f64) -> f64 + Send + Sync>> {
    use std::f64::consts::PI;
    match name {
        "zero" => Ok(Box::new(|_| 0.0)),
        "sine" => Ok(Box::new(move |xi| (PI * xi / length).sin())),
        "hat" => Ok(Box::new(move |xi| 1.0 - (2.0 * xi / length - 1.0).abs())),
        other => Err(MsdeError::invalid(format!("unknown initial data {other:?}"))),
    }
}

#[derive(Debug)]
struct Shared {
    mesh: Mesh1D,
    mass: DMatrix<f64>,
    mass_chol: Cholesky<f64, Dyn>,
    /// Symmetric square root `M_h^{1/2}` and its inverse.
    sqrt_mass: DMatrix<f64>,
    inv_sqrt_mass: DMatrix<f64>,
}

/// Semi-discrete p-Laplace problem on a uniform mesh.
#[derive(Debug, Clone)]
pub struct PLaplaceModel {
    shared: Arc<Shared>,
    p_lap: f64,
    noise: Option<NoiseCoefficient>,
    newton: NewtonConfig,
}

/// Newton settings for [`PLaplaceModel::resolvent_pair`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 100,
        }
    }
}

impl PLaplaceModel {
    pub fn new(mesh: Mesh1D, p_lap: f64, noise: Option<NoiseCoefficient>) -> Result<Self> {
        if !(p_lap >= 2.0) || !p_lap.is_finite() {
            return Err(MsdeError::invalid(format!("p-Laplace exponent {p_lap} must be >= 2")));
        }
        let mass = assemble_mass(&mesh);
        let mass_chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| MsdeError::Factorization("mass matrix is not positive definite".into()))?;
        let eig = mass.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
            return Err(MsdeError::Factorization("mass matrix has a nonpositive eigenvalue".into()));
        }
        let root = |f: fn(f64) -> f64| {
            let scaled = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
            &eig.eigenvectors * scaled * eig.eigenvectors.transpose()
        };
        let sqrt_mass = root(f64::sqrt);
        let inv_sqrt_mass = root(|l| 1.0 / l.sqrt());
        Ok(Self {
            shared: Arc::new(Shared {
                mesh,
                mass,
                mass_chol,
                sqrt_mass,
                inv_sqrt_mass,
            }),
            p_lap,
            noise,
            newton: NewtonConfig::default(),
        })
    }

    /// Replaces the Newton settings used by the resolvent.
    pub fn with_newton(mut self, newton: NewtonConfig) -> Self {
        self.newton = newton;
        self
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.shared.mesh
    }

    pub fn p_lap(&self) -> f64 {
        self.p_lap
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.shared.mass
    }

    /// Noise factor `B = M_h^{1/2}`, so `B Bᵀ = Bᵀ B = M_h`.
    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.shared.sqrt_mass
    }

    pub fn dofs(&self) -> usize {
        self.mesh().dofs()
    }

    /// Element gradients `c_e = (x_e − x_{e−1}) / h`, boundary values 0.
    pub fn element_gradients(&self, x: &DVector<f64>) -> Vec<f64> {
        let mesh = self.mesh();
        let h = mesh.width();
        let d = mesh.dofs();
        let value = |i: usize| if i == 0 || i > d { 0.0 } else { x[i - 1] };
        (1..=mesh.elements())
            .map(|e| (value(e) - value(e - 1)) / h)
            .collect()
    }

    fn flux(&self, c: f64) -> f64 {
        if c == 0.0 {
            0.0
        } else {
            c.abs().powf(self.p_lap - 2.0) * c
        }
    }

    /// `S(x)_j = flux(c_j) − flux(c_{j+1})` for the element fluxes.
    pub fn apply_stiffness(&self, x: &DVector<f64>) -> DVector<f64> {
        let flux: Vec<f64> = self
            .element_gradients(x)
            .into_iter()
            .map(|c| self.flux(c))
            .collect();
        DVector::from_fn(self.dofs(), |j, _| flux[j] - flux[j + 1])
    }

    /// `Φ_h(x) = (1/p) Σ_e h |c_e|^p`.
    pub fn energy(&self, x: &DVector<f64>) -> f64 {
        let h = self.mesh().width();
        let p = self.p_lap;
        self.element_gradients(x)
            .into_iter()
            .map(|c| h * c.abs().powf(p))
            .sum::<f64>()
            / p
    }

    /// Tridiagonal Hessian of `Φ_h` as `(lower, diag, upper)`.
    fn energy_hessian(&self, x: &DVector<f64>) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.dofs();
        let h = self.mesh().width();
        let p = self.p_lap;
        let a: Vec<f64> = self
            .element_gradients(x)
            .into_iter()
            .map(|c| {
                if p == 2.0 {
                    1.0 / h
                } else {
                    (p - 1.0) * c.abs().powf(p - 2.0) / h
                }
            })
            .collect();
        let diag = (0..d).map(|j| a[j] + a[j + 1]).collect();
        let off: Vec<f64> = (0..d.saturating_sub(1)).map(|j| -a[j + 1]).collect();
        (off.clone(), diag, off)
    }

    /// Minimizes `½|x − w|² + k Φ_h(x)` by damped Newton.
    ///
    /// Returns `x` and `η = (w − x) / k`, which equals `S(x)` up to the
    /// stationarity residual `|x + k S(x) − w| ≤ tol (1 + |w|)`.
    pub fn resolvent_pair(
        &self,
        w: &DVector<f64>,
        k: f64,
        cfg: &NewtonConfig,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = self.dofs();
        if w.len() != d {
            return Err(MsdeError::Dimension(format!("expected length {d}, got {}", w.len())));
        }
        if !(k > 0.0) {
            return Err(MsdeError::invalid("step size must be positive"));
        }
        let objective = |x: &DVector<f64>| 0.5 * (x - w).norm_squared() + k * self.energy(x);
        let gradient = |x: &DVector<f64>| x - w + self.apply_stiffness(x) * k;
        let tol = cfg.tol * (1.0 + w.norm());

        let mut x = w.clone();
        let mut grad = gradient(&x);
        let mut value = objective(&x);
        for _ in 0..cfg.max_iters {
            let gnorm = grad.norm();
            if gnorm <= tol {
                let eta = (w - &x) / k;
                return Ok((x, eta));
            }
            let (lower, diag, upper) = self.energy_hessian(&x);
            let diag: Vec<f64> = diag.into_iter().map(|v| 1.0 + k * v).collect();
            let lower: Vec<f64> = lower.into_iter().map(|v| k * v).collect();
            let upper: Vec<f64> = upper.into_iter().map(|v| k * v).collect();
            let step = solve_tridiagonal(&lower, &diag, &upper, &(-&grad))
                .ok_or(MsdeError::LineSearch { gradient_norm: gnorm })?;
            let slope = grad.dot(&step);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let trial = &x + &step * t;
                let trial_value = objective(&trial);
                let trial_grad = gradient(&trial);
                // Near the minimizer the objective decrease drowns in
                // rounding; a halved gradient norm also counts as progress.
                if trial_value <= value + 1e-4 * t * slope || trial_grad.norm() <= 0.5 * gnorm {
                    accepted = Some((trial, trial_value, trial_grad));
                    break;
                }
                t *= 0.5;
            }
            let (nx, nv, ng) = accepted.ok_or(MsdeError::LineSearch { gradient_norm: gnorm })?;
            x = nx;
            value = nv;
            grad = ng;
        }
        Err(MsdeError::NoConvergence {
            iterations: cfg.max_iters,
            residual: grad.norm(),
        })
    }

    /// Load vector `(u, φ_j)` by 3-point Gauss quadrature per element.
    pub fn load_vector(&self, u: impl Fn(f64) -> f64) -> Result<DVector<f64>> {
        let mesh = self.mesh();
        let d = mesh.dofs();
        let h = mesh.width();
        let mut load = DVector::zeros(d);
        for e in 1..=mesh.elements() {
            let left = mesh.node(e - 1);
            for (s, wq) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let val = u(left + s * h);
                if !val.is_finite() {
                    return Err(MsdeError::invalid(format!(
                        "non-finite integrand at ξ = {}",
                        left + s * h
                    )));
                }
                // φ for node e−1 is 1 − s, for node e it is s.
                if let Some(i) = interior(e - 1) {
                    load[i] += h * wq * val * (1.0 - s);
                }
                if e <= d {
                    load[e - 1] += h * wq * val * s;
                }
            }
        }
        Ok(load)
    }

    /// L² projection onto the finite element space: solves `M x = (u0, φ_j)`.
    pub fn project_initial(&self, u0: impl Fn(f64) -> f64) -> Result<DVector<f64>> {
        let load = self.load_vector(u0)?;
        Ok(self.shared.mass_chol.solve(&load))
    }

    /// Nodal interpolant of `u` at the interior nodes.
    pub fn interpolate(&self, u: impl Fn(f64) -> f64) -> DVector<f64> {
        let mesh = self.mesh();
        DVector::from_fn(mesh.dofs(), |j, _| u(mesh.node(j + 1)))
    }

    /// Diffusion `g(x) = B g̃(x)` with `g̃(x)` the projected noise
    /// coefficients; zero when no noise coefficient is configured.
    pub fn build_diffusion(&self, noise_dim: usize) -> Result<PLaplaceDiffusion> {
        if let Some(psi) = &self.noise {
            if psi.weights.len() != noise_dim {
                return Err(MsdeError::Dimension(format!(
                    "noise coefficient has {} columns, expected {noise_dim}",
                    psi.weights.len()
                )));
            }
        }
        if noise_dim == 0 {
            return Err(MsdeError::invalid("noise dimension must be positive"));
        }
        Ok(PLaplaceDiffusion {
            model: self.clone(),
            noise_dim,
        })
    }

    /// Evaluates `v_x` at local coordinate `s` of element `e`.
    fn field_at(&self, x: &DVector<f64>, e: usize, s: f64) -> f64 {
        let d = self.dofs();
        let value = |i: usize| if i == 0 || i > d { 0.0 } else { x[i - 1] };
        value(e - 1) * (1.0 - s) + value(e) * s
    }

    /// Load vector of `ψ_scalar(v_x)`, shared by every noise column.
    fn noise_load(&self, psi: &NoiseCoefficient, x: &DVector<f64>) -> DVector<f64> {
        let mesh = self.mesh();
        let d = mesh.dofs();
        let h = mesh.width();
        let mut load = DVector::zeros(d);
        for e in 1..=mesh.elements() {
            for (s, wq) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS) {
                let val = psi.scalar(self.field_at(x, e, *s));
                if let Some(i) = interior(e - 1) {
                    load[i] += h * wq * val * (1.0 - s);
                }
                if e <= d {
                    load[e - 1] += h * wq * val * s;
                }
            }
        }
        load
    }

    /// Coefficients `g̃(x) = M^{-1} F(x)` of the projected noise, `d × m`.
    pub fn projected_noise(&self, x: &DVector<f64>, noise_dim: usize) -> DMatrix<f64> {
        let d = self.dofs();
        match &self.noise {
            None => DMatrix::zeros(d, noise_dim),
            Some(psi) => {
                let coeffs = self.shared.mass_chol.solve(&self.noise_load(psi, x));
                DMatrix::from_fn(d, noise_dim, |i, c| coeffs[i] * psi.weights[c])
            }
        }
    }
}

impl MonotoneDrift for PLaplaceModel {
    fn dim(&self) -> usize {
        self.dofs()
    }

    fn resolvent(&self, w: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
        self.resolvent_pair(w, k, &self.newton).map(|(x, _)| x)
    }

    /// `⟨S(x), x⟩ = Σ h|c_e|^p ≥ L^{1−p} d^{−p/2} |x|^p` by the discrete
    /// Poincaré and Hölder inequalities; `|S(x)| ≤ 2√d (2/h)^{p−1} |x|^{p−1}`.
    fn growth(&self) -> GrowthParams {
        let p = self.p_lap;
        let mesh = self.mesh();
        let d = mesh.dofs() as f64;
        GrowthParams {
            p,
            mu: mesh.length().powf(1.0 - p) * d.powf(-p / 2.0),
            lambda: 0.0,
            beta: 2.0 * d.sqrt() * (2.0 / mesh.width()).powf(p - 1.0),
        }
    }

    fn min_norm_selection(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_stiffness(x)
    }

    fn potential(&self, x: &DVector<f64>) -> Option<f64> {
        Some(self.energy(x))
    }

    fn name(&self) -> String {
        format!("plaplace:{}", self.p_lap)
    }
}

/// Noise term of the semi-discrete problem.
#[derive(Debug, Clone)]
pub struct PLaplaceDiffusion {
    model: PLaplaceModel,
    noise_dim: usize,
}

impl DiffusionMap for PLaplaceDiffusion {
    fn dim(&self) -> usize {
        self.model.dofs()
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    /// `B g̃(x) = M_h^{1/2} M_h^{-1} F(x) = M_h^{-1/2} F(x)`, column by column.
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.model.dofs();
        match &self.model.noise {
            None => DMatrix::zeros(d, self.noise_dim),
            Some(psi) => {
                let load = self.model.noise_load(psi, x);
                let col = &self.model.shared.inv_sqrt_mass * load;
                DMatrix::from_fn(d, self.noise_dim, |i, c| col[i] * psi.weights[c])
            }
        }
    }

    /// `max(Lip(ψ) √h, |ψ(0)| √L)`: the Lipschitz modulus uses
    /// `λ_max(M_h) ≤ h`, the second term covers linear growth.
    fn lipschitz(&self) -> f64 {
        match &self.model.noise {
            None => 0.0,
            Some(psi) => {
                let mesh = self.model.mesh();
                let at_zero = psi.scalar(0.0).abs() * psi.weight_norm();
                (psi.lipschitz() * mesh.width().sqrt()).max(at_zero * mesh.length().sqrt())
            }
        }
    }

    fn name(&self) -> String {
        match &self.model.noise {
            None => "plaplace-zero".into(),
            Some(psi) => format!("plaplace-noise:{:?}:{}", psi.shape, psi.scale),
        }
    }
}
