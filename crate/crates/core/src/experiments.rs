//! Coupled-path strong error tables, rate regression and the moment
//! diagnostics of the scheme.
//!
//! Every Monte Carlo loop runs paths in parallel, stores one result per path
//! and reduces them in path-index order with compensated sums, so results
//! do not depend on the thread count.

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{MsdeError, Result};
use crate::problem::{check_gate, GateCheck, ProblemSpec, StepGate};
use crate::stats::{KahanSum, MeanEstimate};
use crate::stepper::{run_backward_euler, StepSolverConfig, Trajectory};
use crate::wiener::{initial_rng, BrownianPath, Grid};

/// One level of a [`RateTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub k: f64,
    /// `sqrt(E max_n |X_ref(t_n) − X_k(t_n)|²)`.
    pub rms_error: f64,
    /// Delta-method standard error of `rms_error`.
    pub mc_se: f64,
    pub paths: usize,
}

/// OLS fit of `log₂ error = intercept + slope · log₂ k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    /// Step sizes left out because their error was exactly zero.
    pub excluded: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
    pub k_ref: f64,
    pub horizon: f64,
    /// `None` when fewer than three levels have nonzero error.
    pub fit: Option<RateFit>,
    /// Every gate checked before simulating.
    pub gates: Vec<GateCheck>,
}

impl RateTable {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,rms_error,mc_se,paths")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.k, r.rms_error, r.mc_se, r.paths)?;
        }
        Ok(())
    }
}

/// Checks the ladder and returns the reference grid and coarsening factors.
fn ladder(horizon: f64, k_levels: &[f64], k_ref: f64) -> Result<(Grid, Vec<usize>)> {
    if k_levels.is_empty() {
        return Err(MsdeError::invalid("no step sizes given"));
    }
    if k_levels.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(MsdeError::invalid("step sizes must be strictly decreasing"));
    }
    let fine = Grid::with_step(horizon, k_ref)?;
    let factors = k_levels
        .iter()
        .map(|&k| {
            let f = (k / k_ref).round();
            if f < 1.0 || (f * k_ref - k).abs() > 1e-9 * k {
                return Err(MsdeError::invalid(format!(
                    "step size {k} is not an integer multiple of k_ref = {k_ref}"
                )));
            }
            let f = f as usize;
            fine.coarsen(f)?;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((fine, factors))
}

fn check_levels(spec: &ProblemSpec, ks: impl IntoIterator<Item = f64>, regime: StepGate) -> Result<Vec<GateCheck>> {
    let mut checks = Vec::new();
    for k in ks {
        checks.push(check_gate(spec.lipschitz_b(), k, StepGate::Solvability)?);
        if regime != StepGate::Solvability {
            checks.push(check_gate(spec.lipschitz_b(), k, regime)?);
        }
    }
    Ok(checks)
}

/// Samples `X0` for path `index` and pairs it with the minimal selection.
pub fn initial_state(spec: &ProblemSpec, seed: u64, index: u64) -> (DVector<f64>, DVector<f64>) {
    let mut rng = initial_rng(seed, index);
    let x0 = spec.initial.sample(&mut rng);
    let eta0 = spec.drift.min_norm_selection(&x0);
    (x0, eta0)
}

/// Simulates one path at the step count of `path`.
fn simulate(
    spec: &ProblemSpec,
    path: &BrownianPath,
    x0: &DVector<f64>,
    eta0: &DVector<f64>,
    cfg: &StepSolverConfig,
) -> Result<Trajectory> {
    run_backward_euler(spec, path, cfg, x0.clone(), eta0.clone())
        .map_err(|e| e.at_path(path.path_index, path.grid().steps()))
}

/// The coupled Monte Carlo harness behind [`strong_error`] and
/// [`eta_integral_error`].
///
/// `per_path(index)` returns one squared error per level; rows and the
/// rate fit are computed from these.
pub fn coupled_rate_table<F>(
    horizon: f64,
    k_levels: &[f64],
    k_ref: f64,
    paths: usize,
    per_path: F,
) -> Result<RateTable>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    ladder(horizon, k_levels, k_ref)?;
    if paths < 2 {
        return Err(MsdeError::invalid("need at least two paths"));
    }
    let samples = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let errs = per_path(p)?;
            if errs.len() != k_levels.len() {
                return Err(MsdeError::Dimension(format!(
                    "path {p} returned {} levels, expected {}",
                    errs.len(),
                    k_levels.len()
                )));
            }
            Ok(errs)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<RateRow> = k_levels
        .iter()
        .enumerate()
        .map(|(level, &k)| {
            let sq: Vec<f64> = samples.iter().map(|s| s[level]).collect();
            let est = MeanEstimate::from_samples(&sq);
            let rms = est.mean.sqrt();
            let mc_se = if rms > 0.0 { est.se / (2.0 * rms) } else { 0.0 };
            RateRow {
                k,
                rms_error: rms,
                mc_se,
                paths,
            }
        })
        .collect();
    let mut table = RateTable {
        rows,
        k_ref,
        horizon,
        fit: None,
        gates: Vec::new(),
    };
    table.fit = fit_rate(&table).ok();
    Ok(table)
}

/// Runs the reference and every coarse level along one path and compares
/// `quantity` at the shared grid points.
fn coupled_path_errors(
    spec: &ProblemSpec,
    fine: Grid,
    factors: &[usize],
    seed: u64,
    index: u64,
    cfg: &StepSolverConfig,
    quantity: fn(&Trajectory) -> Vec<DVector<f64>>,
) -> Result<Vec<f64>> {
    let path = BrownianPath::sample(seed, index, fine, spec.noise_dim())?;
    let (x0, eta0) = initial_state(spec, seed, index);
    let reference = quantity(&simulate(spec, &path, &x0, &eta0, cfg)?);
    factors
        .iter()
        .map(|&f| {
            let coarse_path = path.coarsen(f)?;
            let coarse = quantity(&simulate(spec, &coarse_path, &x0, &eta0, cfg)?);
            Ok(coarse
                .iter()
                .enumerate()
                .map(|(n, v)| (&reference[n * f] - v).norm_squared())
                .fold(0.0, f64::max))
        })
        .collect()
}

fn coupled_experiment(
    spec: &ProblemSpec,
    k_levels: &[f64],
    k_ref: f64,
    paths: usize,
    seed: u64,
    cfg: &StepSolverConfig,
    quantity: fn(&Trajectory) -> Vec<DVector<f64>>,
) -> Result<RateTable> {
    cfg.validate()?;
    let (fine, factors) = ladder(spec.horizon, k_levels, k_ref)?;
    let gates = check_levels(
        spec,
        k_levels.iter().copied().chain([k_ref]),
        StepGate::Convergence,
    )?;
    let mut table = coupled_rate_table(spec.horizon, k_levels, k_ref, paths, |p| {
        coupled_path_errors(spec, fine, &factors, seed, p, cfg, quantity)
    })?;
    table.gates = gates;
    Ok(table)
}

/// Self-convergence table for the states `X^n`.
///
/// Each path is simulated once at `k_ref` and once per level on the
/// coarsened Wiener path, from the same `(X0, η⁰)`.
pub fn strong_error(
    spec: &ProblemSpec,
    k_levels: &[f64],
    k_ref: f64,
    paths: usize,
    seed: u64,
    cfg: &StepSolverConfig,
) -> Result<RateTable> {
    coupled_experiment(spec, k_levels, k_ref, paths, seed, cfg, |t| t.states().to_vec())
}

/// Self-convergence table for the running integrals `k Σ_{j≤n} η^j`.
pub fn eta_integral_error(
    spec: &ProblemSpec,
    k_levels: &[f64],
    k_ref: f64,
    paths: usize,
    seed: u64,
    cfg: &StepSolverConfig,
) -> Result<RateTable> {
    coupled_experiment(spec, k_levels, k_ref, paths, seed, cfg, |t| t.selection_integrals())
}

/// Least-squares slope of `log₂ rms_error` against `log₂ k`.
pub fn fit_rate(table: &RateTable) -> Result<RateFit> {
    let mut excluded = Vec::new();
    let mut pts = Vec::new();
    for r in &table.rows {
        if r.rms_error == 0.0 {
            log::warn!("k = {} reproduces the reference exactly; left out of the fit", r.k);
            excluded.push(r.k);
        } else if r.rms_error.is_finite() && r.rms_error > 0.0 {
            pts.push((r.k.log2(), r.rms_error.log2()));
        } else {
            return Err(MsdeError::invalid(format!("error {} at k = {} cannot be fitted", r.rms_error, r.k)));
        }
    }
    if pts.len() < 3 {
        return Err(MsdeError::invalid(format!(
            "rate fit needs three nonzero levels, have {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(MsdeError::invalid("step sizes must differ"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_se = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(RateFit {
        slope,
        slope_se,
        intercept,
        excluded,
    })
}

/// Per-path quantities behind [`LevelDiagnostics`].
#[derive(Debug, Clone)]
struct PathDiagnostics {
    second_moments: Vec<f64>,
    sum_increments: f64,
    coercive_sum: f64,
    gap: f64,
    initial_second_moment: f64,
    /// `Σ|ΔX|² + 4k ΣΦ(X^n)` when the drift has a potential.
    langevin_lhs: Option<f64>,
}

fn path_diagnostics(spec: &ProblemSpec, traj: &Trajectory, x0_sq: f64) -> PathDiagnostics {
    let k = traj.grid().step_size();
    let growth = spec.drift.growth();
    let xs = traj.states();
    let etas = traj.selections();
    let mut inc = KahanSum::new();
    let mut coercive = KahanSum::new();
    let mut gap = KahanSum::new();
    let mut potential = Some(KahanSum::new());
    for n in 1..xs.len() {
        let dx = &xs[n] - &xs[n - 1];
        inc.add(dx.norm_squared());
        coercive.add(xs[n].norm().powf(growth.p));
        gap.add((&etas[n] - &etas[n - 1]).dot(&dx));
        potential = match (potential, spec.drift.potential(&xs[n])) {
            (Some(mut acc), Some(phi)) => {
                acc.add(phi);
                Some(acc)
            }
            _ => None,
        };
    }
    PathDiagnostics {
        second_moments: xs.iter().map(|x| x.norm_squared()).collect(),
        sum_increments: 0.5 * inc.total(),
        coercive_sum: 2.0 * growth.mu * k * coercive.total(),
        gap: k * gap.total(),
        initial_second_moment: x0_sq,
        langevin_lhs: potential.map(|acc| inc.total() + 4.0 * k * acc.total()),
    }
}

/// The additive-noise, `b = 0` bound on the moments of the scheme for a
/// drift with convex potential `Φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinCheck {
    /// `Σ E|X^n − X^{n−1}|² + 4k Σ E Φ(X^n)`.
    pub lhs: MeanEstimate,
    /// `2 E|X0|² + 4T (Φ(0) + |g0|²)` with `E|X0|²` estimated.
    pub rhs: f64,
    pub rhs_se: f64,
    /// `E|X0|² + 2T (Φ(0) + |g0|²)`, the bound on `max_n E|X^n|²`.
    pub moment_rhs: f64,
    pub moment_rhs_se: f64,
}

/// Monte Carlo moments of one step size.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelDiagnostics {
    pub k: f64,
    pub paths: usize,
    /// `max_{n ≥ 1} E|X^n|²`, with the standard error at the maximizing `n`.
    pub max_second_moment: MeanEstimate,
    /// `½ Σ E|X^n − X^{n−1}|²`.
    pub sum_increments: MeanEstimate,
    /// `2μk Σ E|X^n|^p`.
    pub coercive_sum: MeanEstimate,
    /// `k Σ E⟨η^n − η^{n−1}, X^n − X^{n−1}⟩`.
    pub monotone_gap: MeanEstimate,
    pub gates: Vec<GateCheck>,
    pub langevin: Option<LangevinCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport {
    pub levels: Vec<LevelDiagnostics>,
    pub seed: u64,
}

impl DiagnosticsReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,max_second_moment,sum_increments,coercive_sum,monotone_gap,gap_se")?;
        for l in &self.levels {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                l.k,
                l.max_second_moment.mean,
                l.sum_increments.mean,
                l.coercive_sum.mean,
                l.monotone_gap.mean,
                l.monotone_gap.se
            )?;
        }
        Ok(())
    }
}

fn summarize(spec: &ProblemSpec, k: f64, gates: Vec<GateCheck>, per_path: &[PathDiagnostics]) -> LevelDiagnostics {
    let column = |f: &dyn Fn(&PathDiagnostics) -> f64| {
        MeanEstimate::from_samples(&per_path.iter().map(f).collect::<Vec<_>>())
    };
    let states = per_path[0].second_moments.len();
    let max_second_moment = (1..states)
        .map(|n| column(&|p| p.second_moments[n]))
        .fold(None::<MeanEstimate>, |best, est| match best {
            Some(b) if b.mean >= est.mean => Some(b),
            _ => Some(est),
        })
        .expect("trajectory has at least one step");

    let langevin = match (spec.g.as_constant(), spec.drift.potential(&DVector::zeros(spec.dim()))) {
        (Some(g0), Some(phi0)) if spec.lipschitz_b() == 0.0 => {
            let lhs: Option<Vec<f64>> = per_path.iter().map(|p| p.langevin_lhs).collect();
            lhs.map(|lhs| {
                let x0 = column(&|p| p.initial_second_moment);
                let x0_se = if x0.se.is_nan() { 0.0 } else { x0.se };
                let forcing = spec.horizon * (phi0 + g0.norm_squared());
                LangevinCheck {
                    lhs: MeanEstimate::from_samples(&lhs),
                    rhs: 2.0 * x0.mean + 4.0 * forcing,
                    rhs_se: 2.0 * x0_se,
                    moment_rhs: x0.mean + 2.0 * forcing,
                    moment_rhs_se: x0_se,
                }
            })
        }
        _ => None,
    };

    LevelDiagnostics {
        k,
        paths: per_path.len(),
        max_second_moment,
        sum_increments: column(&|p| p.sum_increments),
        coercive_sum: column(&|p| p.coercive_sum),
        monotone_gap: column(&|p| p.gap),
        gates,
        langevin,
    }
}

/// Moment diagnostics at each step size.
///
/// All levels are driven by coarsenings of one Wiener path per index,
/// sampled at the smallest step size, so level-to-level differences are
/// not inflated by independent noise.
pub fn apriori_diagnostics(
    spec: &ProblemSpec,
    k_levels: &[f64],
    paths: usize,
    seed: u64,
    cfg: &StepSolverConfig,
) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    if paths < 2 {
        return Err(MsdeError::invalid("need at least two paths"));
    }
    let k_min = k_levels.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sorted = k_levels.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted.dedup();
    if sorted.len() != k_levels.len() {
        return Err(MsdeError::invalid("step sizes must be distinct"));
    }
    let (fine, _) = ladder(spec.horizon, &sorted, k_min)?;
    let factors: Vec<usize> = k_levels.iter().map(|&k| (k / k_min).round() as usize).collect();
    let gates: Vec<Vec<GateCheck>> = k_levels
        .iter()
        .map(|&k| check_levels(spec, [k], StepGate::Apriori))
        .collect::<Result<_>>()?;

    let per_path: Vec<Vec<PathDiagnostics>> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let path = BrownianPath::sample(seed, p, fine, spec.noise_dim())?;
            let (x0, eta0) = initial_state(spec, seed, p);
            let x0_sq = x0.norm_squared();
            factors
                .iter()
                .map(|&f| {
                    let traj = simulate(spec, &path.coarsen(f)?, &x0, &eta0, cfg)?;
                    Ok(path_diagnostics(spec, &traj, x0_sq))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let levels = k_levels
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let column: Vec<PathDiagnostics> = per_path.iter().map(|p| p[i].clone()).collect();
            summarize(spec, k, gates[i].clone(), &column)
        })
        .collect();
    Ok(DiagnosticsReport { levels, seed })
}

/// Monte Carlo estimate of `k Σ E⟨η^n − η^{n−1}, X^n − X^{n−1}⟩`.
pub fn monotone_gap(
    spec: &ProblemSpec,
    k: f64,
    paths: usize,
    seed: u64,
    cfg: &StepSolverConfig,
) -> Result<MeanEstimate> {
    let report = apriori_diagnostics(spec, &[k], paths, seed, cfg)?;
    Ok(report.levels[0].monotone_gap)
}
