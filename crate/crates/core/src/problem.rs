//! Operator abstractions for `dX + f(X) dt ∋ b(X) dt + g(X) dW` and the
//! step-size gates that the solver and the experiments check before running.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{MsdeError, Result};

/// A maximal monotone drift `f`, exposed only through its resolvent.
///
/// Implementations must be pure: the same inputs give the same outputs and
/// no interior mutability is observable. This is what allows paths to be
/// simulated concurrently.
pub trait MonotoneDrift: Send + Sync {
    fn dim(&self) -> usize;

    /// Solves `x + k f(x) ∋ w` for `x`.
    fn resolvent(&self, w: &DVector<f64>, k: f64) -> Result<DVector<f64>>;

    fn growth(&self) -> GrowthParams;

    /// Minimal-norm element of `f(x)`, used as the starting selection `η⁰`.
    fn min_norm_selection(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Convex potential `Φ` with `f = ∂Φ`, when the drift has one.
    fn potential(&self, _x: &DVector<f64>) -> Option<f64> {
        None
    }

    fn in_domain(&self, _x: &DVector<f64>) -> bool {
        true
    }

    fn name(&self) -> String;
}

/// The selection `η(w, k) = (w − R(w, k)) / k` realized by a resolvent call.
pub fn resolvent_selection(
    drift: &dyn MonotoneDrift,
    w: &DVector<f64>,
    k: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let x = drift.resolvent(w, k)?;
    let eta = (w - &x) / k;
    Ok((x, eta))
}

/// Coercivity and growth constants of the drift:
/// `⟨f_v, v⟩ ≥ μ|v|^p − λ` and `|f_v| ≤ β(1 + |v|^{p−1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthParams {
    pub p: f64,
    pub mu: f64,
    pub lambda: f64,
    pub beta: f64,
}

impl GrowthParams {
    pub fn new(p: f64, mu: f64, lambda: f64, beta: f64) -> Result<Self> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(MsdeError::invalid(format!("growth exponent p = {p} must be >= 1")));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(MsdeError::invalid(format!("mu = {mu} must be positive")));
        }
        if !(lambda >= 0.0) || !(beta >= 0.0) {
            return Err(MsdeError::invalid("lambda and beta must be nonnegative"));
        }
        Ok(Self { p, mu, lambda, beta })
    }

    /// Conjugate exponent `q = p / (p − 1)`; `None` for `p = 1`.
    pub fn conjugate(&self) -> Option<f64> {
        (self.p > 1.0).then(|| self.p / (self.p - 1.0))
    }
}

/// Lipschitz perturbation `b`.
pub trait LipschitzMap: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Declared constant `L_b`.
    fn lipschitz(&self) -> f64;
    fn name(&self) -> String;
}

/// Diffusion `g: ℝ^d → ℝ^{d×m}`, Lipschitz in the Frobenius norm.
pub trait DiffusionMap: Send + Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64>;
    /// Declared constant `L_g`.
    fn lipschitz(&self) -> f64;

    /// The matrix `g0` when the noise is additive.
    fn as_constant(&self) -> Option<&DMatrix<f64>> {
        None
    }

    fn name(&self) -> String;
}

/// Law of the initial value `X0`.
pub trait InitialLaw: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64>;
    fn name(&self) -> String;
}

/// One MSDE instance on `[0, T]`.
#[derive(Clone)]
pub struct ProblemSpec {
    pub drift: Arc<dyn MonotoneDrift>,
    pub b: Arc<dyn LipschitzMap>,
    pub g: Arc<dyn DiffusionMap>,
    pub initial: Arc<dyn InitialLaw>,
    pub horizon: f64,
}

impl ProblemSpec {
    pub fn new(
        drift: Arc<dyn MonotoneDrift>,
        b: Arc<dyn LipschitzMap>,
        g: Arc<dyn DiffusionMap>,
        initial: Arc<dyn InitialLaw>,
        horizon: f64,
    ) -> Result<Self> {
        let d = drift.dim();
        if d == 0 {
            return Err(MsdeError::Dimension("state dimension must be positive".into()));
        }
        if b.dim() != d {
            return Err(MsdeError::Dimension(format!("b has dimension {}, drift {d}", b.dim())));
        }
        if g.dim() != d {
            return Err(MsdeError::Dimension(format!("g has {} rows, drift dimension {d}", g.dim())));
        }
        if g.noise_dim() == 0 {
            return Err(MsdeError::Dimension("noise dimension must be positive".into()));
        }
        if initial.dim() != d {
            return Err(MsdeError::Dimension(format!(
                "initial law has dimension {}, drift {d}",
                initial.dim()
            )));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(MsdeError::invalid(format!("horizon T = {horizon} must be positive")));
        }
        Ok(Self {
            drift,
            b,
            g,
            initial,
            horizon,
        })
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn noise_dim(&self) -> usize {
        self.g.noise_dim()
    }

    pub fn lipschitz_b(&self) -> f64 {
        self.b.lipschitz()
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("drift", &self.drift.name())
            .field("b", &self.b.name())
            .field("g", &self.g.name())
            .field("initial", &self.initial.name())
            .field("horizon", &self.horizon)
            .finish()
    }
}

/// Smallness conditions on `L_b k`.
///
/// `Solvability` makes each implicit step uniquely solvable, `Apriori`
/// gives step-size independent moment bounds and `Convergence` is the
/// condition of the strong error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepGate {
    Solvability,
    Apriori,
    Convergence,
}

impl StepGate {
    pub const ALL: [StepGate; 3] = [StepGate::Solvability, StepGate::Apriori, StepGate::Convergence];

    pub fn factor(self) -> f64 {
        match self {
            StepGate::Solvability => 1.0,
            StepGate::Apriori => 5.0,
            StepGate::Convergence => 8.0,
        }
    }

    pub fn from_factor(factor: f64) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|g| g.factor() == factor)
            .ok_or_else(|| MsdeError::invalid(format!("no step gate with factor {factor}")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StepGate::Solvability => "Solvability",
            StepGate::Apriori => "Apriori",
            StepGate::Convergence => "Convergence",
        }
    }
}

impl fmt::Display for StepGate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Outcome of a passed gate check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateCheck {
    pub regime: StepGate,
    pub k: f64,
    pub product: f64,
    /// `1 − factor·L_b·k`, strictly positive.
    pub slack: f64,
}

/// Checks `factor·L_b·k < 1` for the given regime.
pub fn validate_step_size(spec: &ProblemSpec, k: f64, regime: StepGate) -> Result<GateCheck> {
    check_gate(spec.lipschitz_b(), k, regime)
}

pub(crate) fn check_gate(lipschitz_b: f64, k: f64, regime: StepGate) -> Result<GateCheck> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(MsdeError::invalid(format!("step size k = {k} must be positive")));
    }
    let factor = regime.factor();
    let product = factor * lipschitz_b * k;
    if product < 1.0 {
        Ok(GateCheck {
            regime,
            k,
            product,
            slack: 1.0 - product,
        })
    } else {
        Err(MsdeError::Gate {
            regime,
            k,
            factor,
            product,
        })
    }
}
