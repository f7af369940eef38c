//! The backward Euler–Maruyama recursion
//!
//! ```text
//! X^n + k η^n = X^{n−1} + k b(X^n) + g(X^{n−1}) ΔW^n,   η^n ∈ f(X^n),
//! ```
//!
//! implicit in `f` and `b`, explicit in the diffusion.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::error::{MsdeError, Result};
use crate::problem::{check_gate, LipschitzMap, MonotoneDrift, ProblemSpec, StepGate};
use crate::wiener::{BrownianPath, Grid};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSolverConfig {
    pub outer_max_iters: usize,
    /// Stopping tolerance on successive outer iterates, scaled by `1 + |w|`.
    pub outer_tol: f64,
}

impl Default for StepSolverConfig {
    fn default() -> Self {
        Self {
            outer_max_iters: 200,
            outer_tol: 1e-12,
        }
    }
}

impl StepSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_max_iters == 0 {
            return Err(MsdeError::invalid("outer_max_iters must be positive"));
        }
        if !(self.outer_tol > 0.0) {
            return Err(MsdeError::invalid("outer_tol must be positive"));
        }
        Ok(())
    }
}

/// Solves `x + k η − k b(x) = w` with `η ∈ f(x)`.
///
/// Runs the fixed-point iteration `x ← R(w + k b(x), k)` from
/// `x = R(w, k)`; it contracts with ratio `k L_b < 1`. With `L_b = 0` the
/// perturbation is constant and a single resolvent call is exact. The
/// returned `η = (w + k b(x) − x) / k` makes the scheme residual vanish.
pub fn resolve_step(
    w: &DVector<f64>,
    k: f64,
    drift: &dyn MonotoneDrift,
    b: &dyn LipschitzMap,
    cfg: &StepSolverConfig,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_gate(b.lipschitz(), k, StepGate::Solvability)?;
    if b.lipschitz() == 0.0 {
        let shifted = w + b.eval(w) * k;
        let x = drift.resolvent(&shifted, k)?;
        let eta = (shifted - &x) / k;
        return Ok((x, eta));
    }
    let start = drift.resolvent(w, k)?;
    iterate_from(w, k, drift, b, cfg, start)
}

/// Like [`resolve_step`] but starting the outer iteration at `start`.
pub fn resolve_step_from(
    w: &DVector<f64>,
    k: f64,
    drift: &dyn MonotoneDrift,
    b: &dyn LipschitzMap,
    cfg: &StepSolverConfig,
    start: DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_gate(b.lipschitz(), k, StepGate::Solvability)?;
    iterate_from(w, k, drift, b, cfg, start)
}

fn iterate_from(
    w: &DVector<f64>,
    k: f64,
    drift: &dyn MonotoneDrift,
    b: &dyn LipschitzMap,
    cfg: &StepSolverConfig,
    start: DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let tol = cfg.outer_tol * (1.0 + w.norm());
    let mut x = start;
    let mut change = f64::INFINITY;
    for _ in 0..cfg.outer_max_iters {
        let next = drift.resolvent(&(w + b.eval(&x) * k), k)?;
        change = (&next - &x).norm();
        x = next;
        if change <= tol {
            let eta = (w + b.eval(&x) * k - &x) / k;
            return Ok((x, eta));
        }
    }
    Err(MsdeError::NoConvergence {
        iterations: cfg.outer_max_iters,
        residual: change,
    })
}

/// One simulated path of the scheme.
#[derive(Debug, Clone)]
pub struct Trajectory {
    grid: Grid,
    states: Vec<DVector<f64>>,
    selections: Vec<DVector<f64>>,
    /// `g(X^{n−1}) ΔW^n` for `n = 1..=N`.
    noise: Vec<DVector<f64>>,
}

/// Values of the grid interpolants at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolants {
    /// Piecewise linear interpolant of `X^n`.
    pub x_lin: DVector<f64>,
    /// `X^n` on `(t_{n−1}, t_n]`.
    pub x_right: DVector<f64>,
    /// `X^{n−1}` on `(t_{n−1}, t_n]`.
    pub x_left: DVector<f64>,
    /// Piecewise linear interpolant of `η^n`.
    pub h_lin: DVector<f64>,
    pub h_right: DVector<f64>,
    pub h_left: DVector<f64>,
    /// Accumulated diffusion `Σ_{i<n} g(X^{i−1})ΔW^i` plus the linear part
    /// of the current increment.
    pub g_lin: DVector<f64>,
}

impl Trajectory {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn selections(&self) -> &[DVector<f64>] {
        &self.selections
    }

    pub fn noise_increments(&self) -> &[DVector<f64>] {
        &self.noise
    }

    /// Running sums `k Σ_{j ≤ n} η^j`, `n = 0..=N` (zero at `n = 0`).
    pub fn selection_integrals(&self) -> Vec<DVector<f64>> {
        let k = self.grid.step_size();
        let d = self.states[0].len();
        let mut acc = DVector::zeros(d);
        let mut out = Vec::with_capacity(self.selections.len());
        out.push(acc.clone());
        for eta in &self.selections[1..] {
            acc += eta * k;
            out.push(acc.clone());
        }
        out
    }

    pub fn interpolants(&self, t: f64) -> Result<Interpolants> {
        let d = self.states[0].len();
        if t == 0.0 {
            return Ok(Interpolants {
                x_lin: self.states[0].clone(),
                x_right: self.states[0].clone(),
                x_left: self.states[0].clone(),
                h_lin: self.selections[0].clone(),
                h_right: self.selections[0].clone(),
                h_left: self.selections[0].clone(),
                g_lin: DVector::zeros(d),
            });
        }
        let (n, theta) = self.grid.locate(t)?;
        let lerp = |lo: &DVector<f64>, hi: &DVector<f64>| lo * (1.0 - theta) + hi * theta;
        let g_prior = self.noise[..n - 1]
            .iter()
            .fold(DVector::zeros(d), |acc, g| acc + g);
        Ok(Interpolants {
            x_lin: lerp(&self.states[n - 1], &self.states[n]),
            x_right: self.states[n].clone(),
            x_left: self.states[n - 1].clone(),
            h_lin: lerp(&self.selections[n - 1], &self.selections[n]),
            h_right: self.selections[n].clone(),
            h_left: self.selections[n - 1].clone(),
            g_lin: g_prior + &self.noise[n - 1] * theta,
        })
    }

    /// CSV with columns `t, X_1..X_d, eta_1..eta_d`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let d = self.states[0].len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=d).map(|i| format!("X_{i}")));
        header.extend((1..=d).map(|i| format!("eta_{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (n, (x, eta)) in self.states.iter().zip(&self.selections).enumerate() {
            let mut row = vec![self.grid.time(n).to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            row.extend(eta.iter().map(|v| v.to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Runs the scheme along `path` from `(x0, eta0)`, `eta0 ∈ f(x0)`.
pub fn run_backward_euler(
    spec: &ProblemSpec,
    path: &BrownianPath,
    cfg: &StepSolverConfig,
    x0: DVector<f64>,
    eta0: DVector<f64>,
) -> Result<Trajectory> {
    let grid = path.grid();
    if ((grid.horizon() - spec.horizon) / spec.horizon).abs() > 1e-12 {
        return Err(MsdeError::invalid(format!(
            "path horizon {} differs from problem horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    let d = spec.dim();
    if x0.len() != d || eta0.len() != d {
        return Err(MsdeError::Dimension(format!("initial data must have length {d}")));
    }
    if path.noise_dim() != spec.noise_dim() {
        return Err(MsdeError::Dimension(format!(
            "path has {} noise components, diffusion expects {}",
            path.noise_dim(),
            spec.noise_dim()
        )));
    }
    if !spec.drift.in_domain(&x0) {
        return Err(MsdeError::invalid("initial value outside the drift domain"));
    }
    let k = grid.step_size();
    check_gate(spec.lipschitz_b(), k, StepGate::Solvability)?;

    let steps = grid.steps();
    let mut states = Vec::with_capacity(steps + 1);
    let mut selections = Vec::with_capacity(steps + 1);
    let mut noise = Vec::with_capacity(steps);
    let constant_g: Option<&DMatrix<f64>> = spec.g.as_constant();
    states.push(x0);
    selections.push(eta0);
    for n in 1..=steps {
        let prev = &states[n - 1];
        let dw = path.increment(n);
        let gdw = match constant_g {
            Some(g0) => g0 * dw,
            None => spec.g.eval(prev) * dw,
        };
        let w = prev + &gdw;
        let (x, eta) = resolve_step(&w, k, spec.drift.as_ref(), spec.b.as_ref(), cfg)
            .map_err(|e| e.at_step(n))?;
        states.push(x);
        selections.push(eta);
        noise.push(gdw);
    }
    Ok(Trajectory {
        grid,
        states,
        selections,
        noise,
    })
}
