//! Built-in drifts, perturbations, diffusions and initial laws.
//!
//! The scalar drifts are subdifferentials of convex potentials, so their
//! resolvents are proximal maps:
//!
//! | name         | potential Φ          | resolvent                       |
//! |--------------|----------------------|---------------------------------|
//! | `abs`        | `|x|`                | soft thresholding               |
//! | `power:<p>`  | `|x|^p`, `p > 1`     | bracketed Newton on `[0, |w|]`  |
//! | `linear`     | `½⟨Ax, x⟩`           | `(I + kA)^{-1} w`               |
//! | `zero`       | `0`                  | identity                        |

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{MsdeError, Result};
use crate::problem::{DiffusionMap, GrowthParams, InitialLaw, LipschitzMap, MonotoneDrift};

/// Names accepted by [`builtin_drift`], with a short description.
pub const BUILTIN_DRIFTS: &[(&str, &str)] = &[
    ("abs", "subdifferential of |x| (d = 1), multi-valued at 0"),
    ("power:<p>", "gradient of |x|^p for p > 1 (d = 1); (p-1)-Hoelder for p <= 2"),
    ("linear", "monotone linear map x -> A x, A given as a matrix"),
    ("zero", "f = 0 (test double, not coercive)"),
];

/// Looks up a drift by registry name. `matrix` is required for `linear`.
pub fn builtin_drift(name: &str, matrix: Option<DMatrix<f64>>) -> Result<Arc<dyn MonotoneDrift>> {
    if let Some(p) = name.strip_prefix("power:") {
        let p: f64 = p
            .parse()
            .map_err(|_| MsdeError::invalid(format!("bad exponent in model name {name:?}")))?;
        return Ok(Arc::new(PowerPotentialGrad::new(p)?));
    }
    match name {
        "abs" => Ok(Arc::new(AbsSubdifferential)),
        "linear" => {
            let a = matrix.ok_or_else(|| MsdeError::invalid("model `linear` needs a matrix"))?;
            Ok(Arc::new(MonotoneLinearDrift::new(a)?))
        }
        "zero" => Ok(Arc::new(ZeroDrift::new(matrix.map_or(1, |m| m.nrows())))),
        other => Err(MsdeError::invalid(format!("unknown model {other:?}"))),
    }
}

fn check_k(k: f64) {
    debug_assert!(k > 0.0 && k.is_finite(), "step size must be positive, got {k}");
}

/// Soft thresholding: the resolvent of `∂|·|`.
pub fn prox_abs(w: f64, k: f64) -> (f64, f64) {
    check_k(k);
    let x = w.signum() * (w.abs() - k).max(0.0);
    let x = if x == 0.0 { 0.0 } else { x };
    (x, (w - x) / k)
}

/// Resolvent of `x ↦ p|x|^{p−2}x`, i.e. the proximal map of `k|x|^p`.
///
/// Solves `s + k p s^{p−1} = |w|` for `s ∈ [0, |w|]` and reflects.
pub fn prox_power(w: f64, k: f64, p: f64) -> (f64, f64) {
    check_k(k);
    debug_assert!(p > 1.0);
    let a = w.abs();
    if a == 0.0 {
        return (0.0, 0.0);
    }
    let s = if p == 2.0 {
        a / (1.0 + 2.0 * k)
    } else {
        solve_power_root(a, k * p, p - 1.0)
    };
    let x = w.signum() * s;
    (x, (w - x) / k)
}

/// Root of `s + c s^e − a` on `[0, a]` for `c > 0`, `e > 0`.
///
/// Newton safeguarded by a shrinking bracket; bisects whenever the Newton
/// iterate leaves the bracket.
fn solve_power_root(a: f64, c: f64, e: f64) -> f64 {
    let phi = |s: f64| s + c * s.powf(e) - a;
    let (mut lo, mut hi) = (0.0_f64, a);
    // Both one-term approximations bound the root from above.
    let mut s = a.min((a / c).powf(1.0 / e));
    for _ in 0..200 {
        let r = phi(s);
        if r == 0.0 {
            return s;
        }
        if r > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let slope = 1.0 + c * e * s.powf(e - 1.0);
        let newton = s - r / slope;
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - s).abs() <= 1e-14 * a || hi - lo <= 1e-14 * a {
            return next;
        }
        s = next;
    }
    s
}

/// Solves `(I + kA) x = w`; returns `(x, Ax)`.
pub fn resolvent_linear(w: &DVector<f64>, k: f64, a: &DMatrix<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    check_k(k);
    let n = a.nrows();
    if a.ncols() != n || w.len() != n {
        return Err(MsdeError::Dimension(format!(
            "matrix {}x{} with vector of length {}",
            a.nrows(),
            a.ncols(),
            w.len()
        )));
    }
    if n == 1 {
        let x = w[0] / (1.0 + k * a[(0, 0)]);
        return Ok((DVector::from_element(1, x), DVector::from_element(1, a[(0, 0)] * x)));
    }
    let system = DMatrix::identity(n, n) + a * k;
    let x = system
        .lu()
        .solve(w)
        .ok_or_else(|| MsdeError::Factorization("I + kA is singular".into()))?;
    let eta = a * &x;
    Ok((x, eta))
}

fn scalar(w: &DVector<f64>) -> Result<f64> {
    if w.len() != 1 {
        return Err(MsdeError::Dimension(format!("scalar model got vector of length {}", w.len())));
    }
    Ok(w[0])
}

/// `f = ∂|·|` on ℝ: `{sign x}` off zero and `[−1, 1]` at zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct AbsSubdifferential;

impl MonotoneDrift for AbsSubdifferential {
    fn dim(&self) -> usize {
        1
    }

    fn resolvent(&self, w: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, prox_abs(scalar(w)?, k).0))
    }

    fn growth(&self) -> GrowthParams {
        GrowthParams {
            p: 1.0,
            mu: 1.0,
            lambda: 0.0,
            beta: 1.0,
        }
    }

    fn min_norm_selection(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| if v == 0.0 { 0.0 } else { v.signum() })
    }

    fn potential(&self, x: &DVector<f64>) -> Option<f64> {
        Some(x[0].abs())
    }

    fn name(&self) -> String {
        "abs".into()
    }
}

/// `f(x) = p |x|^{p−2} x = ∇|x|^p` on ℝ.
#[derive(Debug, Clone, Copy)]
pub struct PowerPotentialGrad {
    exponent: f64,
}

impl PowerPotentialGrad {
    pub fn new(exponent: f64) -> Result<Self> {
        if !(exponent > 1.0) || !exponent.is_finite() {
            return Err(MsdeError::invalid(format!("power exponent {exponent} must be > 1")));
        }
        Ok(Self { exponent })
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn eval(&self, x: f64) -> f64 {
        let p = self.exponent;
        if x == 0.0 {
            0.0
        } else {
            p * x.abs().powf(p - 1.0) * x.signum()
        }
    }

    /// Hölder exponent `α = p − 1` of the drift, when `p ≤ 2`.
    pub fn holder_exponent(&self) -> Option<f64> {
        (self.exponent <= 2.0).then(|| self.exponent - 1.0)
    }

    /// Constant `L_f = p · 2^{1−α}` with `|f(x) − f(y)| ≤ L_f |x − y|^α`.
    /// Reported, never used by the solver.
    pub fn holder_constant(&self) -> Option<f64> {
        self.holder_exponent()
            .map(|alpha| self.exponent * 2f64.powf(1.0 - alpha))
    }
}

impl MonotoneDrift for PowerPotentialGrad {
    fn dim(&self) -> usize {
        1
    }

    fn resolvent(&self, w: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
        Ok(DVector::from_element(1, prox_power(scalar(w)?, k, self.exponent).0))
    }

    fn growth(&self) -> GrowthParams {
        let p = self.exponent;
        GrowthParams {
            p,
            mu: p,
            lambda: 0.0,
            beta: p,
        }
    }

    fn min_norm_selection(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.eval(v))
    }

    fn potential(&self, x: &DVector<f64>) -> Option<f64> {
        Some(x[0].abs().powf(self.exponent))
    }

    fn name(&self) -> String {
        format!("power:{}", self.exponent)
    }
}

/// `f(x) = A x` with `⟨Ax, x⟩ ≥ 0`.
#[derive(Debug, Clone)]
pub struct MonotoneLinearDrift {
    a: DMatrix<f64>,
    growth: GrowthParams,
    symmetric: bool,
}

impl MonotoneLinearDrift {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() == 0 {
            return Err(MsdeError::Dimension(format!(
                "linear drift needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let sym = (&a + a.transpose()) * 0.5;
        let min_eig = sym.clone().symmetric_eigen().eigenvalues.min();
        let scale = a.amax().max(1.0);
        if min_eig < -1e-12 * scale {
            return Err(MsdeError::invalid(format!(
                "matrix is not monotone: symmetric part has eigenvalue {min_eig}"
            )));
        }
        let norm = a.clone().singular_values().max();
        // A singular A is not coercive; mu = 1 is then only a reporting weight.
        let mu = if min_eig > 1e-12 * scale { min_eig } else { 1.0 };
        let symmetric = (&a - a.transpose()).amax() <= 1e-14 * scale;
        Ok(Self {
            a,
            growth: GrowthParams {
                p: 2.0,
                mu,
                lambda: 0.0,
                beta: norm,
            },
            symmetric,
        })
    }

    pub fn scalar(a: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, a))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl MonotoneDrift for MonotoneLinearDrift {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn resolvent(&self, w: &DVector<f64>, k: f64) -> Result<DVector<f64>> {
        resolvent_linear(w, k, &self.a).map(|(x, _)| x)
    }

    fn growth(&self) -> GrowthParams {
        self.growth
    }

    fn min_norm_selection(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    fn potential(&self, x: &DVector<f64>) -> Option<f64> {
        self.symmetric.then(|| 0.5 * x.dot(&(&self.a * x)))
    }

    fn name(&self) -> String {
        "linear".into()
    }
}

/// `f = 0`. Not coercive; the declared growth parameters only weight
/// diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct ZeroDrift {
    dim: usize,
}

impl ZeroDrift {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl MonotoneDrift for ZeroDrift {
    fn dim(&self) -> usize {
        self.dim
    }

    fn resolvent(&self, w: &DVector<f64>, _k: f64) -> Result<DVector<f64>> {
        Ok(w.clone())
    }

    fn growth(&self) -> GrowthParams {
        GrowthParams {
            p: 2.0,
            mu: 1.0,
            lambda: 0.0,
            beta: 0.0,
        }
    }

    fn min_norm_selection(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    fn potential(&self, _x: &DVector<f64>) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

/// `b = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroMap {
    dim: usize,
}

impl ZeroMap {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl LipschitzMap for ZeroMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    fn lipschitz(&self) -> f64 {
        0.0
    }

    fn name(&self) -> String {
        "zero".into()
    }
}

/// `b(x) = B x`, with `L_b` the spectral norm of `B`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    matrix: DMatrix<f64>,
    lipschitz: f64,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(MsdeError::Dimension("linear b needs a square matrix".into()));
        }
        let lipschitz = matrix.clone().singular_values().max();
        Ok(Self { matrix, lipschitz })
    }

    pub fn scalar(c: f64) -> Self {
        Self {
            matrix: DMatrix::from_element(1, 1, c),
            lipschitz: c.abs(),
        }
    }
}

impl LipschitzMap for LinearMap {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn name(&self) -> String {
        "linear".into()
    }
}

/// `b(x)_i = a sin(x_i)`, Lipschitz with constant `|a|`.
#[derive(Debug, Clone, Copy)]
pub struct SineMap {
    dim: usize,
    amplitude: f64,
}

impl SineMap {
    pub fn new(dim: usize, amplitude: f64) -> Self {
        Self { dim, amplitude }
    }
}

impl LipschitzMap for SineMap {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.amplitude * v.sin())
    }

    fn lipschitz(&self) -> f64 {
        self.amplitude.abs()
    }

    fn name(&self) -> String {
        format!("sine:{}", self.amplitude)
    }
}

/// Additive noise `g(x) = g0`.
#[derive(Debug, Clone)]
pub struct ConstantDiffusion {
    g0: DMatrix<f64>,
}

impl ConstantDiffusion {
    pub fn new(g0: DMatrix<f64>) -> Self {
        Self { g0 }
    }

    pub fn scalar(g0: f64) -> Self {
        Self::new(DMatrix::from_element(1, 1, g0))
    }
}

impl DiffusionMap for ConstantDiffusion {
    fn dim(&self) -> usize {
        self.g0.nrows()
    }

    fn noise_dim(&self) -> usize {
        self.g0.ncols()
    }

    fn eval(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.g0.clone()
    }

    /// Linear-growth constant `|g0|`; the Lipschitz modulus itself is 0.
    fn lipschitz(&self) -> f64 {
        self.g0.norm()
    }

    fn as_constant(&self) -> Option<&DMatrix<f64>> {
        Some(&self.g0)
    }

    fn name(&self) -> String {
        "constant".into()
    }
}

/// Multiplicative noise `g(x) = σ diag(x)` with `m = d`.
#[derive(Debug, Clone, Copy)]
pub struct DiagonalLinearDiffusion {
    dim: usize,
    sigma: f64,
}

impl DiagonalLinearDiffusion {
    pub fn new(dim: usize, sigma: f64) -> Self {
        Self { dim, sigma }
    }
}

impl DiffusionMap for DiagonalLinearDiffusion {
    fn dim(&self) -> usize {
        self.dim
    }

    fn noise_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&(x * self.sigma))
    }

    fn lipschitz(&self) -> f64 {
        self.sigma.abs()
    }

    fn name(&self) -> String {
        format!("diagonal-linear:{}", self.sigma)
    }
}

/// Deterministic initial value.
#[derive(Debug, Clone)]
pub struct FixedInitial {
    x0: DVector<f64>,
}

impl FixedInitial {
    pub fn new(x0: DVector<f64>) -> Self {
        Self { x0 }
    }

    pub fn scalar(x0: f64) -> Self {
        Self::new(DVector::from_element(1, x0))
    }
}

impl InitialLaw for FixedInitial {
    fn dim(&self) -> usize {
        self.x0.len()
    }

    fn sample(&self, _rng: &mut dyn RngCore) -> DVector<f64> {
        self.x0.clone()
    }

    fn name(&self) -> String {
        "fixed".into()
    }
}

/// `X0 ~ N(mean, std² I)`.
#[derive(Debug, Clone)]
pub struct GaussianInitial {
    mean: DVector<f64>,
    std: f64,
}

impl GaussianInitial {
    pub fn new(mean: DVector<f64>, std: f64) -> Self {
        Self { mean, std }
    }
}

impl InitialLaw for GaussianInitial {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        self.mean.map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            m + self.std * z
        })
    }

    fn name(&self) -> String {
        "gaussian".into()
    }
}
