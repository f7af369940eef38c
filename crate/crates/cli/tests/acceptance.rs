//! Acceptance suite. Each test prints one `PASS`/`FAIL` line with the
//! measured numbers and then asserts the criterion at its stated tolerance.
//!
//! Run with `cargo test -p msde-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use msde_core::fem::{assemble_mass, initial_data, Mesh1D, PLaplaceModel};
use msde_core::models::{
    prox_abs, prox_power, AbsSubdifferential, ConstantDiffusion, FixedInitial, LinearMap,
    MonotoneLinearDrift, PowerPotentialGrad, SineMap, ZeroMap,
};
use msde_core::wiener::{interpolation_error_exact, interpolation_error_mc, InterpolationCheck};
use msde_core::{
    apriori_diagnostics, monotone_gap, resolve_step, run_backward_euler, strong_error,
    BrownianPath, DMatrix, DVector, Grid, LipschitzMap, MonotoneDrift, ProblemSpec,
    StepSolverConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, pass: bool, detail: String) {
    println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{name}: {detail}");
}

fn additive(drift: Arc<dyn MonotoneDrift>, b: Arc<dyn LipschitzMap>, x0: f64) -> ProblemSpec {
    ProblemSpec::new(
        drift,
        b,
        Arc::new(ConstantDiffusion::scalar(1.0)),
        Arc::new(FixedInitial::scalar(x0)),
        1.0,
    )
    .unwrap()
}

const LADDER: [f64; 5] = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0];
const K_REF: f64 = 1.0 / 4096.0;
const RATE_PATHS: usize = 10_000;

fn measured_slope(drift: Arc<dyn MonotoneDrift>) -> (f64, f64, String) {
    let spec = additive(drift, Arc::new(ZeroMap::new(1)), 1.0);
    let table = strong_error(&spec, &LADDER, K_REF, RATE_PATHS, 2024, &StepSolverConfig::default()).unwrap();
    let fit = table.fit.clone().expect("all levels have nonzero error");
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| format!("{:.3e}±{:.1e}", r.rms_error, r.mc_se))
        .collect();
    (fit.slope, fit.slope_se, rows.join(" "))
}

/// Minimizer of `½(x − w)² + k|x|` by bisection on the one-sided
/// derivatives, bracketed by a grid scan of the objective.
fn abs_oracle(w: f64, k: f64) -> f64 {
    let obj = |x: f64| 0.5 * (x - w).powi(2) + k * x.abs();
    let span = w.abs() + 1.0;
    let n = 4000;
    let h = 2.0 * span / n as f64;
    let best = (0..=n)
        .map(|i| -span + i as f64 * h)
        .min_by(|a, b| obj(*a).total_cmp(&obj(*b)))
        .unwrap();
    let (mut a, mut b) = (best - h, best + h);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let left = m - w + if m > 0.0 { k } else { -k };
        let right = m - w + if m >= 0.0 { k } else { -k };
        if left > 0.0 {
            b = m;
        } else if right < 0.0 {
            a = m;
        } else {
            return m;
        }
    }
    0.5 * (a + b)
}

/// Root of the increasing map `x − w + k p |x|^{p−1} sign x` by bisection.
fn power_oracle(w: f64, k: f64, p: f64) -> f64 {
    let f = |x: f64| x - w + k * p * x.abs().powf(p - 1.0) * x.signum();
    let (mut a, mut b) = (-w.abs() - 1.0, w.abs() + 1.0);
    for _ in 0..300 {
        let m = 0.5 * (a + b);
        if f(m) > 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn wiener_interpolation_identity() {
    let g0 = DMatrix::from_element(1, 1, 1.0);
    let grid = Grid::new(1.0, 64).unwrap();
    let est = interpolation_error_mc(&g0, grid, 100_000, 20_240, InterpolationCheck { refinement: 32 }).unwrap();
    let target = interpolation_error_exact(&g0, grid);
    let z = (est.mean - target) / est.se;
    report(
        "wiener interpolation identity",
        z.abs() <= 3.0 && (target - 1.0 / 384.0).abs() < 1e-15,
        format!("estimate {:.6e} ± {:.2e}, target k/6 = {target:.6e}, z = {z:.2}", est.mean, est.se),
    );
}

#[test]
fn prox_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst_abs: f64 = 0.0;
    let mut worst_pow: f64 = 0.0;
    for _ in 0..100 {
        let w: f64 = rng.random_range(-5.0..5.0);
        let k: f64 = rng.random_range(1e-3..2.0);
        worst_abs = worst_abs.max((prox_abs(w, k).0 - abs_oracle(w, k)).abs());
    }
    for _ in 0..100 {
        let w: f64 = rng.random_range(-5.0..5.0);
        let k: f64 = rng.random_range(1e-3..2.0);
        worst_pow = worst_pow.max((prox_power(w, k, 1.5).0 - power_oracle(w, k, 1.5)).abs());
    }
    report(
        "prox oracles",
        worst_abs <= 1e-8 && worst_pow <= 1e-8,
        format!("max deviation abs {worst_abs:.2e}, power(1.5) {worst_pow:.2e} (tolerance 1e-8)"),
    );
}

#[test]
fn step_map_stability() {
    let drift = MonotoneLinearDrift::scalar(1.0).unwrap();
    let b = LinearMap::scalar(0.5);
    let k = 0.1;
    let bound = 1.0 / (1.0 - k * b.lipschitz());
    let cfg = StepSolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let w1 = DVector::from_element(1, rng.random_range(-10.0..10.0));
        let w2 = DVector::from_element(1, rng.random_range(-10.0..10.0));
        let (x1, _) = resolve_step(&w1, k, &drift, &b, &cfg).unwrap();
        let (x2, _) = resolve_step(&w2, k, &drift, &b, &cfg).unwrap();
        worst = worst.max((x1 - x2).norm() - bound * (w1 - w2).norm());
    }
    report(
        "step-map stability",
        worst <= 1e-8,
        format!("max of |S(w1)-S(w2)| - {bound:.4}|w1-w2| over 1000 pairs: {worst:.3e}"),
    );
}

#[test]
fn lipschitz_drift_rate() {
    let (slope, se, rows) = measured_slope(Arc::new(MonotoneLinearDrift::scalar(1.0).unwrap()));
    report(
        "lipschitz drift rate",
        (0.4..=0.6).contains(&slope),
        format!("slope {slope:.3} ± {se:.3}, required [0.4, 0.6]; rms errors {rows}"),
    );
}

#[test]
fn discontinuous_drift_rate() {
    let (slope, se, rows) = measured_slope(Arc::new(AbsSubdifferential));
    report(
        "discontinuous drift rate",
        slope >= 0.20,
        format!("slope {slope:.3} ± {se:.3}, required >= 0.20; rms errors {rows}"),
    );
}

#[test]
fn holder_drift_rate() {
    let (slope, se, rows) = measured_slope(Arc::new(PowerPotentialGrad::new(1.5).unwrap()));
    report(
        "holder drift rate",
        slope >= 0.275,
        format!("slope {slope:.3} ± {se:.3}, required >= 0.275; rms errors {rows}"),
    );
}

#[test]
fn monotone_gap_decay() {
    let spec = additive(Arc::new(AbsSubdifferential), Arc::new(ZeroMap::new(1)), 1.0);
    let cfg = StepSolverConfig::default();
    let k = 1.0 / 16.0;
    let coarse = monotone_gap(&spec, k, 10_000, 31, &cfg).unwrap();
    let fine = monotone_gap(&spec, k / 4.0, 10_000, 31, &cfg).unwrap();
    let se = ((0.5 * coarse.se).powi(2) + fine.se.powi(2)).sqrt();
    let pass = coarse.mean >= -3.0 * coarse.se
        && fine.mean >= -3.0 * fine.se
        && fine.mean <= 0.5 * coarse.mean + 3.0 * se;
    report(
        "monotone gap",
        pass,
        format!(
            "gap(k) = {:.4e} ± {:.1e}, gap(k/4) = {:.4e} ± {:.1e}, 0.5 gap(k) + 3 SE = {:.4e}",
            coarse.mean,
            coarse.se,
            fine.mean,
            fine.se,
            0.5 * coarse.mean + 3.0 * se
        ),
    );
}

#[test]
fn apriori_bounds() {
    let cfg = StepSolverConfig::default();
    let langevin = additive(Arc::new(AbsSubdifferential), Arc::new(ZeroMap::new(1)), 1.0);
    let rep = apriori_diagnostics(&langevin, &[1.0 / 16.0, 1.0 / 64.0], 4000, 8, &cfg).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for l in &rep.levels {
        let c = l.langevin.expect("sign drift has a potential and additive noise");
        let ok = c.lhs.mean <= c.rhs + 3.0 * (c.lhs.se.powi(2) + c.rhs_se.powi(2)).sqrt()
            && l.max_second_moment.mean <= c.moment_rhs + 3.0 * l.max_second_moment.se;
        pass &= ok;
        detail.push(format!(
            "k={}: lhs {:.3} ≤ rhs {:.3}, max E|X|² {:.3} ≤ {:.3}",
            l.k, c.lhs.mean, c.rhs, l.max_second_moment.mean, c.moment_rhs
        ));
    }

    let perturbed = additive(Arc::new(AbsSubdifferential), Arc::new(SineMap::new(1, 0.5)), 1.0);
    let ks = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0];
    let rep = apriori_diagnostics(&perturbed, &ks, 4000, 9, &cfg).unwrap();
    for pair in rep.levels.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        for (name, qa, qb) in [
            ("max E|X|²", a.max_second_moment, b.max_second_moment),
            ("½ΣE|ΔX|²", a.sum_increments, b.sum_increments),
            ("2μkΣE|X|^p", a.coercive_sum, b.coercive_sum),
        ] {
            let se = ((1.1 * qa.se).powi(2) + qb.se.powi(2)).sqrt();
            let ok = qb.mean <= 1.1 * qa.mean + 3.0 * se;
            pass &= ok;
            if !ok {
                detail.push(format!("{name} grew from {:.4} to {:.4} at k={}", qa.mean, qb.mean, b.k));
            }
        }
    }
    let last = rep.levels.last().unwrap();
    detail.push(format!(
        "perturbed at k={}: {:.3}, {:.3}, {:.3}",
        last.k, last.max_second_moment.mean, last.sum_increments.mean, last.coercive_sum.mean
    ));
    report("a priori bounds", pass, detail.join("; "));
}

#[test]
fn plaplace_module() {
    let spd = (1..=50).all(|d| {
        let m = assemble_mass(&Mesh1D::new(1.0, d + 1).unwrap());
        m == m.transpose() && m.cholesky().is_some()
    });

    let mesh = Mesh1D::new(1.0, 16).unwrap();
    let model = PLaplaceModel::new(mesh, 3.0, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_identity: f64 = 0.0;
    let mut worst_fd: f64 = 0.0;
    for _ in 0..100 {
        let x = DVector::from_fn(15, |_, _| rng.random_range(-2.0..2.0));
        let s = model.apply_stiffness(&x);
        let pairing = s.dot(&x);
        worst_identity = worst_identity.max((pairing - 3.0 * model.energy(&x)).abs() / pairing.abs().max(1.0));
        let eps = 1e-6;
        let fd = DVector::from_fn(15, |j, _| {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += eps;
            xm[j] -= eps;
            (model.energy(&xp) - model.energy(&xm)) / (2.0 * eps)
        });
        worst_fd = worst_fd.max((fd - &s).norm() / s.norm());
    }

    let drift: Arc<dyn MonotoneDrift> = Arc::new(model.clone());
    let x0 = model.project_initial(initial_data("sine", 1.0).unwrap()).unwrap();
    let spec = ProblemSpec::new(
        drift,
        Arc::new(ZeroMap::new(15)),
        Arc::new(ConstantDiffusion::new(DMatrix::zeros(15, 1))),
        Arc::new(FixedInitial::new(x0.clone())),
        0.2,
    )
    .unwrap();
    let path = BrownianPath::sample(0, 0, Grid::new(0.2, 200).unwrap(), 1).unwrap();
    let eta0 = model.apply_stiffness(&x0);
    let traj = run_backward_euler(&spec, &path, &StepSolverConfig::default(), x0, eta0).unwrap();
    let energies: Vec<f64> = traj.states().iter().map(|x| model.energy(x)).collect();
    let worst_rise = energies
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].max(1e-300))
        .fold(f64::NEG_INFINITY, f64::max);
    let pass = spd && worst_identity <= 1e-12 && worst_fd <= 1e-6 && worst_rise <= 1e-10;
    report(
        "p-laplace module",
        pass,
        format!(
            "mass SPD d<=50: {spd}; coercivity identity {worst_identity:.1e}; FD gradient {worst_fd:.1e}; \
             energy {:.4e} -> {:.4e}, largest relative rise {worst_rise:.1e}",
            energies[0],
            energies[energies.len() - 1]
        ),
    );
}

const BIN: &str = env!("CARGO_BIN_EXE_msde");

fn gate_config(dir: &Path, kind: &str, k: f64, lipschitz_b: f64) -> std::path::PathBuf {
    let text = format!(
        r#"{{
  "problem": {{
    "drift": {{"model": "linear", "matrix": [[1.0]]}},
    "b": {{"kind": "linear", "matrix": [[{lipschitz_b}]]}},
    "g": {{"kind": "constant", "g0": [[1.0]]}},
    "x0": {{"kind": "fixed", "value": [1.0]}},
    "horizon": 1.0
  }},
  "experiment": {{"kind": "{kind}", "k_levels": [{k}], "paths": 10, "seed": 1}},
  "output": {{"prefix": "gated"}}
}}"#
    );
    let path = dir.join(format!("{kind}-{k}.json"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn gate_behavior() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("rate", 1.0, "Solvability"),
        ("diagnostics", 0.25, "Apriori"),
        ("rate", 0.125, "Convergence"),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (kind, k, regime) in cases {
        let config = gate_config(dir.path(), kind, k, 1.0);
        let out = dir.path().join(format!("out-{kind}-{k}"));
        let run = Command::new(BIN)
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        let stderr = String::from_utf8_lossy(&run.stderr);
        let rejected = !run.status.success() && stderr.contains(regime) && !out.join("gated.csv").exists();
        let validate = Command::new(BIN).args(["validate", "--config"]).arg(&config).output().unwrap();
        let validated = !validate.status.success() && String::from_utf8_lossy(&validate.stderr).contains(regime);
        pass &= rejected && validated;
        detail.push(format!("{regime} at k={k}: {}", if rejected && validated { "rejected" } else { "NOT rejected" }));
    }
    report("gate behavior", pass, detail.join(", "));
}

#[test]
fn determinism_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("det.json");
    std::fs::write(
        &config,
        r#"{
  "problem": {
    "drift": {"model": "abs"},
    "b": {"kind": "sine", "amplitude": 0.5},
    "g": {"kind": "constant", "g0": [[1.0]]},
    "x0": {"kind": "gaussian", "mean": [1.0], "std": 0.3},
    "horizon": 1.0
  },
  "experiment": {"kind": "rate", "k_levels": [0.125, 0.0625, 0.03125], "paths": 300, "seed": 99}
}"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for (i, threads) in [1, 4, 1, 3].into_iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let status = Command::new(BIN)
            .args(["run", "--config"])
            .arg(&config)
            .args(["--threads", &threads.to_string(), "--out"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("rate.csv")).unwrap());
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    report(
        "determinism",
        identical && !outputs[0].is_empty(),
        format!("4 runs with 1, 4, 1, 3 threads: byte-identical = {identical}"),
    );
}
