use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::discretization::Grid;
use crate::error::{LabError, SolverError};
use crate::lab::report::{grid_json, num, ExperimentReport, Verdict};
use crate::stability::{classify_stability_with, ClassifyOptions};
use crate::system::{
    gradient_flow_with, newton_solve_with, stable_step_bound, FlowOptions, InitialData,
    NewtonOptions, Nonlinearity, Problem,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiouvilleOptions {
    /// Gradient-flow time before Newton polishing.
    pub flow_time: f64,
    /// Cap on explicit steps (the flow stops early when reached).
    pub max_flow_steps: usize,
    /// Amplitude of the random perturbation around each start's mean.
    pub amplitude: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Constancy tolerance is `const_rel · (1 + ‖u‖_∞)`.
    pub const_rel: f64,
    /// Flow-then-Newton rounds before a start is reported as failed.
    pub flow_rounds: usize,
    pub classify: ClassifyOptions,
}

impl Default for LiouvilleOptions {
    fn default() -> Self {
        LiouvilleOptions {
            flow_time: 20.0,
            max_flow_steps: 200_000,
            amplitude: 0.5,
            newton_tol: 1e-10,
            newton_max_iter: 60,
            const_rel: 1e-6,
            flow_rounds: 4,
            classify: ClassifyOptions::default(),
        }
    }
}

/// Outcome of one start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartOutcome {
    pub start: usize,
    pub initial: InitialData,
    pub converged: bool,
    pub flow_rounds: usize,
    pub newton_iterations: usize,
    pub residual: f64,
    pub class: String,
    pub mu1: Option<f64>,
    pub defect: f64,
    pub sup_norm: f64,
    pub error: Option<String>,
}

/// Initial data for start `k`: means uniform in the middle half of the
/// preset's sample box, plus a smooth random field.
pub fn liouville_start(nl: &dyn Nonlinearity, seed: u64, k: usize, amplitude: f64) -> InitialData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    let (lo, hi) = nl.sample_box();
    let (c, r) = (0.5 * (lo + hi), 0.25 * (hi - lo));
    InitialData::Random {
        seed: rng.gen(),
        amplitude,
        mean: (0..nl.components())
            .map(|_| rng.gen_range(c - r..c + r))
            .collect(),
    }
}

fn run_start(
    problem: &Problem,
    start: usize,
    initial: InitialData,
    opts: &LiouvilleOptions,
) -> StartOutcome {
    let mut out = StartOutcome {
        start,
        initial: initial.clone(),
        converged: false,
        flow_rounds: 0,
        newton_iterations: 0,
        residual: f64::NAN,
        class: "failed".into(),
        mu1: None,
        defect: f64::NAN,
        sup_norm: f64::NAN,
        error: None,
    };
    let t0 = std::time::Instant::now();
    let result = (|| -> Result<(), LabError> {
        let grid = problem.grid();
        let mut state = initial.build(grid, problem.components())?;
        let dt = stable_step_bound(problem);
        let steps = ((opts.flow_time / dt).ceil() as usize).min(opts.max_flow_steps);
        let newton = NewtonOptions {
            tol: opts.newton_tol,
            max_iter: opts.newton_max_iter,
            pin_mean: true,
            ..NewtonOptions::default()
        };
        let mut round = 0;
        let (u, rep) = loop {
            round += 1;
            let flow = gradient_flow_with(
                problem,
                &state,
                &FlowOptions {
                    dt: Some(dt),
                    steps,
                    ..FlowOptions::default()
                },
            )?;
            state = flow.state;
            match newton_solve_with(problem, &state, &newton) {
                Ok(done) => break done,
                // degenerate roots stall Newton; the flow still contracts there
                Err(
                    e @ (SolverError::LineSearchFailed { .. }
                    | SolverError::MaxIterExceeded { .. }
                    | SolverError::SingularJacobian(_)),
                ) => {
                    if round >= opts.flow_rounds {
                        return Err(e.into());
                    }
                    log::debug!("start {start}: {e}; flowing again");
                }
                Err(e) => return Err(e.into()),
            }
        };
        out.flow_rounds = round;
        out.converged = rep.converged;
        out.newton_iterations = rep.iterations;
        out.residual = rep.residual;
        out.defect = u.constancy_defect();
        out.sup_norm = u.sup_norm();
        let class = classify_stability_with(problem, &u, &opts.classify)?;
        out.mu1 = class.mu1();
        out.class = class.label().into();
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    log::debug!("start {start}: {} in {:.2?}", out.class, t0.elapsed());
    out
}

/// Random starts, each driven by gradient flow then Newton, then classified.
///
/// The verdict is a one-sided check of "stable implies constant": `violation`
/// when some converged Stable solution has oscillation above tolerance,
/// `inconclusive` when no start ends Stable.
pub fn liouville_compact(
    grid: &Grid,
    nl: Arc<dyn Nonlinearity>,
    n_starts: usize,
    seed: u64,
    opts: &LiouvilleOptions,
) -> Result<ExperimentReport, LabError> {
    let problem = Problem::new(grid.clone(), nl.clone())?;
    let inputs = json!({
        "grid": grid_json(grid),
        "nonlinearity": nl.name(),
        "params": nl.params(),
        "n_starts": n_starts,
        "seed": seed,
        "options": opts,
    });
    let mut rep = ExperimentReport::new("liouville_compact", inputs.clone());
    rep.seed = Some(seed);
    rep.tolerance("const_rel", opts.const_rel);
    rep.tolerance("newton_tol", opts.newton_tol);
    rep.columns(&[
        "start",
        "converged",
        "flow_rounds",
        "newton_iterations",
        "residual",
        "class",
        "mu1",
        "defect",
        "sup_norm",
        "error",
    ]);
    let outcomes: Vec<StartOutcome> = (0..n_starts)
        .into_par_iter()
        .map(|k| {
            run_start(
                &problem,
                k,
                liouville_start(nl.as_ref(), seed, k, opts.amplitude),
                opts,
            )
        })
        .collect();
    let mut stable = 0;
    let mut stable_nonconstant = 0;
    let mut unstable = 0;
    for o in &outcomes {
        rep.push(vec![
            json!(o.start),
            json!(o.converged),
            json!(o.flow_rounds),
            json!(o.newton_iterations),
            num(o.residual),
            json!(o.class),
            o.mu1.map_or(Value::Null, num),
            num(o.defect),
            num(o.sup_norm),
            o.error.as_ref().map_or(Value::Null, |e| json!(e)),
        ]);
        if o.converged && o.class == "stable" {
            stable += 1;
            if !(o.defect <= opts.const_rel * (1.0 + o.sup_norm)) {
                stable_nonconstant += 1;
                let mut case = inputs.clone();
                case["start"] = json!(o.start);
                case["initial"] = serde_json::to_value(&o.initial).unwrap_or(Value::Null);
                rep.replay.push(case);
            }
        }
        if o.class == "unstable" {
            unstable += 1;
        }
    }
    rep.note("stable", stable);
    rep.note("stable_nonconstant", stable_nonconstant);
    rep.note("unstable", unstable);
    rep.note(
        "failed",
        outcomes.iter().filter(|o| o.error.is_some()).count(),
    );
    rep.verdict = if stable_nonconstant > 0 {
        Verdict::Violation
    } else if stable == 0 {
        Verdict::Inconclusive
    } else {
        Verdict::Consistent
    };
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ChartSpec;
    use crate::system::{AllenCahn, Bose, Linear};

    #[test]
    fn negative_definite_linear_system_relaxes_to_zero() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[16, 16]).unwrap();
        let a = nalgebra::DMatrix::from_row_slice(2, 2, &[-2.0, 0.5, 0.5, -1.0]);
        let nl = Arc::new(Linear::symmetric(a).unwrap());
        let opts = LiouvilleOptions {
            flow_time: 5.0,
            ..Default::default()
        };
        let rep = liouville_compact(&g, nl, 4, 7, &opts).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        assert_eq!(rep.summary_f64("stable"), Some(4.0));
        assert!(rep.column("sup_norm").unwrap().iter().all(|&s| s < 1e-9));
    }

    #[test]
    fn small_torus_suites() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[24, 24]).unwrap();
        let opts = LiouvilleOptions {
            flow_time: 10.0,
            ..Default::default()
        };
        for nl in [
            Arc::new(Bose { g: 1.0 }) as Arc<dyn Nonlinearity>,
            Arc::new(AllenCahn),
        ] {
            let rep = liouville_compact(&g, nl, 4, 3, &opts).unwrap();
            assert_ne!(rep.verdict, Verdict::Violation, "{rep:?}");
            let again = liouville_compact(&g, rep_nl(&rep), 4, 3, &opts).unwrap();
            assert_eq!(
                serde_json::to_string(&rep).unwrap(),
                serde_json::to_string(&again).unwrap()
            );
        }
    }

    fn rep_nl(rep: &ExperimentReport) -> Arc<dyn Nonlinearity> {
        match rep.inputs["nonlinearity"].as_str().unwrap() {
            "bose" => Arc::new(Bose { g: 1.0 }),
            _ => Arc::new(AllenCahn),
        }
    }
}
