//! Gate checks, experiment dispatch and output files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use msde_core::wiener::{interpolation_error_exact, interpolation_error_mc, InterpolationCheck};
use msde_core::{
    apriori_diagnostics, eta_integral_error, strong_error, validate_step_size, GateCheck, Grid,
    ProblemSpec, RateTable, StepGate, VERSION,
};
use serde_json::{json, Value};

use crate::config::{build_problem, ExperimentKind, RunConfig};

/// A configuration that parsed, built and passed every gate.
pub struct Prepared {
    pub config: RunConfig,
    pub spec: ProblemSpec,
    pub k_ref: Option<f64>,
    pub gates: Vec<GateCheck>,
}

/// Builds the problem and checks the gates of every step size the
/// experiment will use, solvability first.
pub fn prepare(config: RunConfig) -> Result<Prepared> {
    let exp = &config.experiment;
    if exp.k_levels.is_empty() {
        bail!("experiment.k_levels is empty");
    }
    if exp.paths < 2 {
        bail!("experiment.paths must be at least 2");
    }
    config.solver.step_config().validate()?;
    let spec = build_problem(&config.problem, &config.solver)?;
    let k_ref = exp.k_ref();
    let ks: Vec<f64> = exp.k_levels.iter().copied().chain(k_ref).collect();
    let mut regimes = vec![StepGate::Solvability];
    if exp.kind.regime() != StepGate::Solvability {
        regimes.push(exp.kind.regime());
    }
    let mut gates = Vec::new();
    for regime in regimes {
        for &k in &ks {
            gates.push(validate_step_size(&spec, k, regime)?);
        }
    }
    for &k in &ks {
        Grid::with_step(spec.horizon, k)?;
    }
    if exp.kind == ExperimentKind::WienerCheck && spec.g.as_constant().is_none() {
        bail!("wiener-check needs constant (additive) noise");
    }
    Ok(Prepared {
        config,
        spec,
        k_ref,
        gates,
    })
}

pub fn gate_json(gates: &[GateCheck]) -> Value {
    gates
        .iter()
        .map(|g| json!({"regime": g.regime.as_str(), "k": g.k, "product": g.product, "slack": g.slack}))
        .collect()
}

fn fit_json(table: &RateTable) -> Value {
    match &table.fit {
        Some(fit) => json!({
            "slope": fit.slope,
            "slope_se": fit.slope_se,
            "intercept": fit.intercept,
            "excluded_k": fit.excluded,
        }),
        None => Value::Null,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub struct Outcome {
    pub csv: PathBuf,
    pub meta: PathBuf,
    pub summary: Value,
}

/// Runs the experiment and writes `<prefix>.csv` and `<prefix>.meta.json`.
pub fn execute(prepared: &Prepared, out_dir: &Path, seed: u64, seed_source: &str, threads: usize) -> Result<Outcome> {
    let started = Instant::now();
    let cfg = &prepared.config;
    let exp = &cfg.experiment;
    let spec = &prepared.spec;
    let solver = cfg.solver.step_config();
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let prefix = cfg.prefix();
    let csv = out_dir.join(format!("{prefix}.csv"));
    let meta_path = out_dir.join(format!("{prefix}.meta.json"));
    let mut out = create(&csv)?;

    let summary = match exp.kind {
        ExperimentKind::Rate | ExperimentKind::EtaRate => {
            let k_ref = prepared.k_ref.expect("rate experiments have a reference step");
            let table = if exp.kind == ExperimentKind::Rate {
                strong_error(spec, &exp.k_levels, k_ref, exp.paths, seed, &solver)?
            } else {
                eta_integral_error(spec, &exp.k_levels, k_ref, exp.paths, seed, &solver)?
            };
            table.write_csv(&mut out)?;
            json!({
                "k_ref": k_ref,
                "fit": fit_json(&table),
                "reference_note": "errors are measured against the same scheme at k_ref on the same Wiener path (self-convergence); the fitted slope is biased low once k approaches k_ref",
            })
        }
        ExperimentKind::Diagnostics => {
            let report = apriori_diagnostics(spec, &exp.k_levels, exp.paths, seed, &solver)?;
            report.write_csv(&mut out)?;
            let levels: Vec<Value> = report
                .levels
                .iter()
                .map(|l| {
                    json!({
                        "k": l.k,
                        "max_second_moment_se": l.max_second_moment.se,
                        "sum_increments_se": l.sum_increments.se,
                        "coercive_sum_se": l.coercive_sum.se,
                        "langevin": l.langevin.map(|c| json!({
                            "lhs": c.lhs.mean, "lhs_se": c.lhs.se, "rhs": c.rhs, "rhs_se": c.rhs_se,
                            "moment_rhs": c.moment_rhs,
                        })),
                    })
                })
                .collect();
            json!({ "levels": levels })
        }
        ExperimentKind::Gap => {
            let report = apriori_diagnostics(spec, &exp.k_levels, exp.paths, seed, &solver)?;
            writeln!(out, "k,monotone_gap,gap_se,paths")?;
            for l in &report.levels {
                writeln!(out, "{},{},{},{}", l.k, l.monotone_gap.mean, l.monotone_gap.se, l.paths)?;
            }
            Value::Null
        }
        ExperimentKind::WienerCheck => {
            let g0 = spec.g.as_constant().expect("checked in prepare");
            let check = InterpolationCheck {
                refinement: exp.refinement.unwrap_or(InterpolationCheck::default().refinement),
            };
            writeln!(out, "k,estimate,se,target,paths")?;
            let mut rows = Vec::new();
            for &k in &exp.k_levels {
                let grid = Grid::with_step(spec.horizon, k)?;
                let est = interpolation_error_mc(g0, grid, exp.paths, seed, check)?;
                let target = interpolation_error_exact(g0, grid);
                writeln!(out, "{},{},{},{},{}", k, est.mean, est.se, target, exp.paths)?;
                rows.push(json!({"k": k, "estimate": est.mean, "se": est.se, "target": target,
                    "z": (est.mean - target) / est.se}));
            }
            json!({ "refinement": check.refinement, "rows": rows })
        }
    };
    out.flush()?;

    let meta = json!({
        "config": cfg,
        "version": VERSION,
        "kind": exp.kind.name(),
        "seed": seed,
        "seed_source": seed_source,
        "threads": threads,
        "problem": format!("{:?}", spec),
        "gates": gate_json(&prepared.gates),
        "result": summary,
        "wall_time_s": started.elapsed().as_secs_f64(),
    });
    let mut meta_out = create(&meta_path)?;
    serde_json::to_writer_pretty(&mut meta_out, &meta)?;
    writeln!(meta_out)?;
    meta_out.flush()?;
    Ok(Outcome {
        csv,
        meta: meta_path,
        summary: meta["result"].clone(),
    })
}
