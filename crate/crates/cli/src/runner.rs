use std::fs;
use std::path::Path;
use std::time::Instant;

use riemstab_core::discretization::{Grid, TestFunctionFamily};
use riemstab_core::geometry::TrigSum;
use riemstab_core::lab::{
    bochner_sweep, digest, hessian_inequality_scan, level_set_geodesic_check, liouville_compact,
    parabolicity_capacity, volume_growth, ExperimentReport, Verdict,
};
use riemstab_core::stability::{
    classify_stability_with, poincare_margins, stability_margins, ClassifyOptions, MarginReport,
    StabilityClass,
};
use riemstab_core::system::{
    gradient_flow_with, newton_solve_with, stable_step_bound, FlowOptions, NewtonOptions, Problem,
    SolutionState,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{
    BochnerExperiment, ExperimentConfig, Resolved, SolveMode, StabilityExperiment, Tolerances,
};
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub id: String,
    pub kind: String,
    pub error: String,
}

/// Everything written to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    /// SHA-256 of the resolved configuration.
    pub config_digest: String,
    pub status: String,
    pub violations: usize,
    pub experiments: Vec<ExperimentReport>,
    pub failures: Vec<Failure>,
}

impl RunReport {
    /// 0 when clean, 1 on any violation or failed experiment.
    pub fn exit_code(&self) -> i32 {
        if self.violations > 0 || !self.failures.is_empty() {
            1
        } else {
            0
        }
    }

    pub fn get(&self, id: &str) -> Option<&ExperimentReport> {
        self.experiments.iter().find(|e| e.id == id)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

/// Runs every experiment in order on the current rayon pool.
pub fn execute(resolved: &Resolved) -> RunReport {
    let cfg = &resolved.config;
    let seed = cfg.seed;
    let mut experiments = Vec::new();
    let mut failures = Vec::new();
    for (e, id) in cfg.experiments.iter().zip(&resolved.ids) {
        let t = Instant::now();
        log::info!("{id}: starting {}", e.kind());
        match run_one(resolved, e, seed) {
            Ok(mut rep) => {
                rep.id = id.clone();
                rep.seed = Some(seed);
                log::info!("{id}: {} in {:.2?}", rep.verdict.as_str(), t.elapsed());
                experiments.push(rep);
            }
            Err(err) => {
                log::error!("{id}: {err}");
                failures.push(Failure {
                    id: id.clone(),
                    kind: e.kind().into(),
                    error: err,
                });
            }
        }
    }
    let violations = experiments
        .iter()
        .filter(|r| r.verdict == Verdict::Violation)
        .count();
    let status = if !failures.is_empty() {
        "failure"
    } else if violations > 0 {
        "violation"
    } else {
        "ok"
    };
    RunReport {
        seed,
        config_digest: digest(&serde_json::to_value(cfg).expect("configs always serialize")),
        status: status.into(),
        violations,
        experiments,
        failures,
    }
}

/// Writes `report.json`, one `<id>.csv` per experiment and `replay.toml`.
pub fn write_outputs(resolved: &Resolved, report: &RunReport, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report.to_json())?;
    for rep in &report.experiments {
        let f = fs::File::create(dir.join(format!("{}.csv", rep.id)))?;
        rep.write_csv(f).map_err(|e| CliError::Io(e.to_string()))?;
    }
    let mut replay = resolved.config.clone();
    replay.out = None;
    fs::write(dir.join("replay.toml"), replay.to_toml())?;
    Ok(())
}

fn run_one(r: &Resolved, e: &ExperimentConfig, seed: u64) -> Result<ExperimentReport, String> {
    let tol = &r.config.tolerances;
    let s = |e: &dyn std::fmt::Display| e.to_string();
    match e {
        ExperimentConfig::Stability(x) => stability(r, x, seed, tol),
        ExperimentConfig::Liouville(x) => {
            let mut opts = x.options.clone();
            if let Some(c) = tol.const_rel {
                opts.const_rel = c;
            }
            if tol.eigenvalue.is_some() {
                opts.classify.tol = tol.eigenvalue;
            }
            let grid = r.grid.as_ref().expect("validated");
            let nl = r.nonlinearity.clone().expect("validated");
            liouville_compact(grid, nl, x.n_starts, seed, &opts).map_err(|e| s(&e))
        }
        ExperimentConfig::Bochner(x) => bochner(r, x, seed),
        ExperimentConfig::HessianScan(x) => {
            let chart = r.chart.as_ref().expect("validated");
            let fields = TrigSum::random_family(chart.dim(), x.functions, x.max_freq, seed);
            hessian_inequality_scan(chart, &fields, x.eps_grad, x.resolution).map_err(|e| s(&e))
        }
        ExperimentConfig::VolumeGrowth(x) => {
            volume_growth(x.dim, &x.radii, x.spacing).map_err(|e| s(&e))
        }
        ExperimentConfig::Capacity(x) => {
            parabolicity_capacity(x.dim, &x.radii, x.spacing).map_err(|e| s(&e))
        }
        ExperimentConfig::LevelSet(x) => {
            let grid = r.grid.as_ref().expect("validated");
            let f = x.field.build(grid.dim())?;
            let mut opts = x.options.clone();
            if let Some(t) = tol.level_set {
                opts.tol = t;
            }
            level_set_geodesic_check(grid, &grid.sample(&f), x.level, &opts).map_err(|e| s(&e))
        }
    }
}

fn bochner(r: &Resolved, x: &BochnerExperiment, seed: u64) -> Result<ExperimentReport, String> {
    let chart = r.chart.as_ref().expect("validated");
    let fields = TrigSum::random_family(chart.dim(), x.functions, x.max_freq, seed);
    let mut rep = ExperimentReport::new(
        "bochner",
        json!({"chart": chart.name, "functions": fields, "resolutions": x.resolutions}),
    );
    let mut cols = vec!["function".to_string(), "order".to_string()];
    cols.extend(x.resolutions.iter().map(|n| format!("residual_{n}")));
    cols.push("verdict".into());
    rep.columns = cols;
    let mut orders = Vec::new();
    let mut verdicts = Vec::new();
    for (k, f) in fields.iter().enumerate() {
        let sub = bochner_sweep(chart, f, &x.resolutions).map_err(|e| e.to_string())?;
        if rep.tolerances.is_empty() {
            rep.tolerances = sub.tolerances.clone();
        }
        let order = sub.summary_f64("order");
        let mut row = vec![json!(k), order.map_or(Value::Null, |p| json!(p))];
        row.extend(sub.records.iter().map(|r| r[2].clone()));
        row.push(json!(sub.verdict.as_str()));
        rep.push(row);
        rep.replay.extend(sub.replay);
        orders.extend(order);
        verdicts.push(sub.verdict);
    }
    if !orders.is_empty() {
        rep.note(
            "min_order",
            orders.iter().cloned().fold(f64::INFINITY, f64::min),
        );
        rep.note(
            "max_order",
            orders.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        );
    }
    rep.verdict = if verdicts.contains(&Verdict::Violation) {
        Verdict::Violation
    } else if verdicts.iter().all(|v| *v == Verdict::Consistent) {
        Verdict::Consistent
    } else {
        Verdict::Inconclusive
    };
    Ok(rep)
}

fn solve(
    problem: &Problem,
    u0: &SolutionState,
    x: &StabilityExperiment,
) -> Result<(SolutionState, Value), String> {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    match x.solve {
        SolveMode::None => Ok((u0.clone(), json!({"mode": "none"}))),
        SolveMode::Newton | SolveMode::FlowNewton => {
            let flow_newton = x.solve == SolveMode::FlowNewton;
            let start = if flow_newton {
                let dt = stable_step_bound(problem);
                let steps = (x.flow_time / dt).ceil() as usize;
                let opts = FlowOptions {
                    dt: Some(dt),
                    steps,
                    ..FlowOptions::default()
                };
                gradient_flow_with(problem, u0, &opts)
                    .map_err(|e| s(&e))?
                    .state
            } else {
                u0.clone()
            };
            let opts = NewtonOptions {
                pin_mean: flow_newton,
                ..NewtonOptions::default()
            };
            let (u, rep) = newton_solve_with(problem, &start, &opts).map_err(|e| s(&e))?;
            let info = json!({
                "mode": if flow_newton { "flow_newton" } else { "newton" },
                "converged": rep.converged,
                "iterations": rep.iterations,
                "residual": rep.residual,
            });
            Ok((u, info))
        }
    }
}

fn push_margins(rep: &mut ExperimentReport, check: &str, m: &MarginReport, rel: f64) -> bool {
    let mut ok = true;
    for row in &m.rows {
        let relative = if row.rhs > 0.0 {
            row.margin / row.rhs
        } else {
            f64::NAN
        };
        let bad = row.margin < -rel * row.rhs.abs();
        ok &= !bad;
        rep.push(vec![
            json!(check),
            serde_json::to_value(row.kind).unwrap_or(Value::Null),
            json!(row.index),
            json!(row.lhs),
            json!(row.rhs),
            json!(row.margin),
            if relative.is_finite() {
                json!(relative)
            } else {
                Value::Null
            },
            row.margin_literal.map_or(Value::Null, |v| json!(v)),
        ]);
    }
    ok
}

fn stability(
    r: &Resolved,
    x: &StabilityExperiment,
    seed: u64,
    tol: &Tolerances,
) -> Result<ExperimentReport, String> {
    let s = |e: &dyn std::fmt::Display| e.to_string();
    let grid: &Grid = r.grid.as_ref().expect("validated");
    let nl = r.nonlinearity.clone().expect("validated");
    let problem = Problem::new(grid.clone(), nl.clone()).map_err(|e| s(&e))?;
    let u0 = x.initial.build(grid, nl.components()).map_err(|e| s(&e))?;
    let inputs = json!({
        "nonlinearity": nl.name(),
        "params": nl.params(),
        "chart": grid.chart().name,
        "counts": grid.counts(),
        "experiment": x,
    });
    let mut rep = ExperimentReport::new("stability", inputs.clone());
    rep.columns(&[
        "check",
        "family",
        "index",
        "lhs",
        "rhs",
        "margin",
        "relative_margin",
        "margin_literal",
    ]);
    rep.tolerance("stability_rel", tol.stability_rel());
    rep.tolerance("poincare_rel", tol.poincare_rel());

    let (u, info) = solve(&problem, &u0, x)?;
    let converged = info
        .get("converged")
        .and_then(Value::as_bool)
        .unwrap_or(true);
    rep.note("solve", info);
    rep.note("sup_norm", u.sup_norm());
    rep.note("constancy_defect", u.constancy_defect());

    let copts = ClassifyOptions {
        tol: tol.eigenvalue.or(x.classify.tol),
        ..x.classify
    };
    let class = classify_stability_with(&problem, &u, &copts).map_err(|e| s(&e))?;
    rep.note("class", class.label());
    if let Some(mu) = class.mu1() {
        rep.note("mu1", mu);
    }
    if let StabilityClass::Stable(cert) = &class {
        rep.note("certificate_tolerance", cert.tolerance);
        rep.note("eigen_residual", cert.residual);
    }
    let mut inequalities_ok = true;
    if class.is_stable() {
        let mut families = Vec::new();
        if x.bumps > 0 {
            families.push(TestFunctionFamily::bumps(seed, x.bumps));
        }
        if x.trig > 0 {
            families.push(TestFunctionFamily::trig(seed, x.trig));
        }
        if !families.is_empty() {
            let m = stability_margins(&problem, &u, &families).map_err(|e| s(&e))?;
            rep.note("stability_min_relative", num(m.min_relative));
            inequalities_ok &= push_margins(&mut rep, "stability", &m, tol.stability_rel());
        }
        if x.poincare > 0 {
            let fam = [TestFunctionFamily::bumps(seed, x.poincare)];
            let m = poincare_margins(&problem, &u, &fam).map_err(|e| s(&e))?;
            rep.note("poincare_min_relative", num(m.min_relative));
            inequalities_ok &= push_margins(&mut rep, "poincare", &m, tol.poincare_rel());
        }
    }
    let expectation_ok = x.expect.map_or(true, |e| e.as_str() == class.label());
    if let Some(e) = x.expect {
        rep.note("expected", e.as_str());
    }
    rep.verdict = if !expectation_ok || !inequalities_ok {
        rep.replay.push(inputs);
        Verdict::Violation
    } else if !converged {
        Verdict::Inconclusive
    } else if class.is_stable() || x.expect.is_some() {
        Verdict::Consistent
    } else {
        Verdict::Inconclusive
    };
    Ok(rep)
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}
