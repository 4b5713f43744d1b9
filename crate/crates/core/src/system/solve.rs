use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::discretization::{assemble_laplacian, Grid, SparseOperator};
use crate::error::SolverError;
use crate::linalg::{bicgstab, minres, pairwise_sum_by, sup_norm, KrylovStatus};
use crate::system::nonlinearity::Nonlinearity;
use crate::system::state::SolutionState;

/// A grid, its assembled Laplacian and a nonlinearity: everything needed to
/// evaluate `−Δ_g u_i = H_i(u)`.
#[derive(Debug, Clone)]
pub struct Problem {
    grid: Grid,
    laplacian: SparseOperator,
    nl: Arc<dyn Nonlinearity>,
}

impl Problem {
    pub fn new(grid: Grid, nl: Arc<dyn Nonlinearity>) -> Result<Self, SolverError> {
        let laplacian = assemble_laplacian(&grid)?;
        Ok(Problem {
            grid,
            laplacian,
            nl,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn laplacian(&self) -> &SparseOperator {
        &self.laplacian
    }

    pub fn nonlinearity(&self) -> &Arc<dyn Nonlinearity> {
        &self.nl
    }

    pub fn components(&self) -> usize {
        self.nl.components()
    }

    pub fn check_state(&self, u: &SolutionState) -> Result<(), SolverError> {
        if u.components() != self.components() || u.nodes() != self.grid.node_count() {
            return Err(SolverError::ComponentMismatch {
                expected: self.components(),
                got: u.components(),
            });
        }
        if let Some(k) = u.flat().iter().position(|v| !v.is_finite()) {
            return Err(crate::error::DiscretizationError::NonFinite(k % u.nodes()).into());
        }
        Ok(())
    }

    /// `∂_j H_i(u(a))` for every node `a`, at `a * m * m + i * m + j`.
    pub fn jacobians(&self, u: &SolutionState) -> Vec<f64> {
        let m = self.components();
        let nodes = u.nodes();
        let mut out = vec![0.0; nodes * m * m];
        let mut s = vec![0.0; m];
        let mut jac = DMatrix::zeros(m, m);
        for a in 0..nodes {
            u.at(a, &mut s);
            self.nl.jacobian(&s, &mut jac);
            for i in 0..m {
                for j in 0..m {
                    out[a * m * m + i * m + j] = jac[(i, j)];
                }
            }
        }
        out
    }

    /// Discrete energy `Σ_i ½⟨−L u_i, u_i⟩_w + Σ_a w_a W(u(a))`, when `H = −∇W`.
    pub fn energy(&self, u: &SolutionState) -> Option<f64> {
        let w = self.grid.weights();
        let m = self.components();
        let mut s = vec![0.0; m];
        u.at(0, &mut s);
        self.nl.potential(&s)?;
        let mut total = 0.0;
        for i in 0..m {
            let ui = u.component(i);
            let lu = self.laplacian.mul(ui);
            total -= 0.5 * pairwise_sum_by(ui.len(), &|a| w[a] * lu[a] * ui[a]);
        }
        let pot: Vec<f64> = (0..u.nodes())
            .map(|a| {
                let mut s = vec![0.0; m];
                u.at(a, &mut s);
                self.nl.potential(&s).unwrap_or(0.0)
            })
            .collect();
        total += pairwise_sum_by(pot.len(), &|a| w[a] * pot[a]);
        Some(total)
    }

    /// Weighted `L²` norm of a component-major vector.
    pub fn weighted_norm(&self, v: &[f64]) -> f64 {
        let w = self.grid.weights();
        let n = w.len();
        pairwise_sum_by(v.len(), &|k| w[k % n] * v[k] * v[k]).sqrt()
    }
}

/// `r_i = −L u_i − H_i(u)` at every free node (zero on constrained nodes).
pub fn residual(problem: &Problem, u: &SolutionState) -> Result<SolutionState, SolverError> {
    problem.check_state(u)?;
    Ok(residual_unchecked(problem, u))
}

fn residual_unchecked(problem: &Problem, u: &SolutionState) -> SolutionState {
    let m = problem.components();
    let nodes = u.nodes();
    let grid = problem.grid();
    let mut out = vec![0.0; m * nodes];
    for i in 0..m {
        problem
            .laplacian
            .apply(u.component(i), &mut out[i * nodes..(i + 1) * nodes]);
    }
    let mut s = vec![0.0; m];
    let mut h = vec![0.0; m];
    for a in 0..nodes {
        if grid.is_constrained(a) {
            for i in 0..m {
                out[i * nodes + a] = 0.0;
            }
            continue;
        }
        u.at(a, &mut s);
        problem.nl.eval(&s, &mut h);
        for i in 0..m {
            out[i * nodes + a] = -out[i * nodes + a] - h[i];
        }
    }
    SolutionState::from_flat(nodes, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    /// Sup-norm residual target.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Remove the weighted mean of components whose Jacobian column vanishes
    /// identically (constants in the kernel) instead of failing.
    pub pin_mean: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-9,
            max_iter: 50,
            max_halvings: 30,
            pin_mean: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: usize,
    /// Final sup-norm residual.
    pub residual: f64,
    /// Accepted step length per iteration.
    pub damping: Vec<f64>,
    pub linear_iterations: Vec<usize>,
}

/// Damped Newton with default options and the given tolerance / iteration cap.
pub fn newton_solve(
    problem: &Problem,
    u0: &SolutionState,
    tol: f64,
    max_iter: usize,
) -> Result<(SolutionState, SolveReport), SolverError> {
    newton_solve_with(
        problem,
        u0,
        &NewtonOptions {
            tol,
            max_iter,
            ..NewtonOptions::default()
        },
    )
}

/// Damped Newton for `F(u) = −Lu − H(u) = 0`.
///
/// Steps solve `J δ = −F` with `J = −L − ℍ(u)`: MINRES on the weighted
/// symmetric form when `ℍ` is symmetric, BiCGSTAB otherwise, both with a
/// diagonal preconditioner. Step lengths are halved until the weighted `L²`
/// residual decreases.
pub fn newton_solve_with(
    problem: &Problem,
    u0: &SolutionState,
    opts: &NewtonOptions,
) -> Result<(SolutionState, SolveReport), SolverError> {
    problem.check_state(u0)?;
    let grid = problem.grid();
    let m = problem.components();
    let nodes = grid.node_count();
    let w = grid.weights();
    let lap = problem.laplacian();
    let ldiag = lap.diagonal();

    let mut u = u0.clone();
    u.apply_constraints(grid);
    let mut f = residual_unchecked(problem, &u);
    let mut sup = sup_norm(f.flat());
    let mut merit = problem.weighted_norm(f.flat());
    let mut report = SolveReport {
        converged: false,
        iterations: 0,
        residual: sup,
        damping: Vec::new(),
        linear_iterations: Vec::new(),
    };
    if sup <= opts.tol {
        report.converged = true;
        return Ok((u, report));
    }
    for iter in 1..=opts.max_iter {
        let jac = problem.jacobians(&u);
        let scale = jac.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(1.0);
        let symmetric = (0..nodes).all(|a| {
            let b = &jac[a * m * m..(a + 1) * m * m];
            (0..m).all(|i| (0..i).all(|j| (b[i * m + j] - b[j * m + i]).abs() <= 1e-12 * scale))
        });
        let kernel: Vec<usize> = if grid.has_constraints() {
            Vec::new()
        } else {
            (0..m)
                .filter(|&c| (0..nodes).all(|a| (0..m).all(|r| jac[a * m * m + r * m + c] == 0.0)))
                .collect()
        };
        if !kernel.is_empty() && !opts.pin_mean {
            return Err(SolverError::SingularJacobian(format!(
                "components {kernel:?} are decoupled with no reaction; constants lie in the kernel"
            )));
        }

        // right-hand side −F, with pinned components projected to mean zero
        let mut rhs: Vec<f64> = f.flat().iter().map(|x| -x).collect();
        let total_w: f64 = pairwise_sum_by(nodes, &|a| w[a]);
        let project = |v: &mut [f64]| {
            for &c in &kernel {
                let block = &mut v[c * nodes..(c + 1) * nodes];
                let mean = pairwise_sum_by(nodes, &|a| w[a] * block[a]) / total_w;
                block.iter_mut().for_each(|x| *x -= mean);
            }
        };
        project(&mut rhs);

        let apply_j = |x: &[f64], y: &mut [f64]| {
            for i in 0..m {
                lap.apply(
                    &x[i * nodes..(i + 1) * nodes],
                    &mut y[i * nodes..(i + 1) * nodes],
                );
            }
            for a in 0..nodes {
                if grid.is_constrained(a) {
                    for i in 0..m {
                        y[i * nodes + a] = x[i * nodes + a];
                    }
                    continue;
                }
                let b = &jac[a * m * m..(a + 1) * m * m];
                for i in 0..m {
                    let mut acc = -y[i * nodes + a];
                    for j in 0..m {
                        acc -= b[i * m + j] * x[j * nodes + a];
                    }
                    y[i * nodes + a] = acc;
                }
            }
        };
        let mut diag = vec![1.0; m * nodes];
        for i in 0..m {
            for a in 0..nodes {
                if !grid.is_constrained(a) {
                    let d = (-ldiag[a] - jac[a * m * m + i * m + i]).abs();
                    diag[i * nodes + a] = d.max(1e-3 * ldiag[a].abs()).max(1e-300);
                }
            }
        }
        let rtol = (1e-3 * sup.min(1.0)).max(1e-13);
        let mut delta = vec![0.0; m * nodes];
        let outcome = if symmetric {
            // W·J is symmetric; constrained rows are identity on both sides
            let wk = |k: usize| {
                if grid.is_constrained(k % nodes) {
                    1.0
                } else {
                    w[k % nodes]
                }
            };
            let apply_wj = |x: &[f64], y: &mut [f64]| {
                apply_j(x, y);
                for (k, v) in y.iter_mut().enumerate() {
                    *v *= wk(k);
                }
            };
            let wb: Vec<f64> = rhs.iter().enumerate().map(|(k, v)| v * wk(k)).collect();
            let wd: Vec<f64> = diag.iter().enumerate().map(|(k, v)| v * wk(k)).collect();
            minres(
                &apply_wj,
                Some(&wd),
                &wb,
                &mut delta,
                rtol,
                20 * m * nodes + 1000,
            )
        } else {
            bicgstab(
                &apply_j,
                Some(&diag),
                &rhs,
                &mut delta,
                rtol,
                20 * m * nodes + 1000,
            )
        };
        if !delta.iter().all(|x| x.is_finite())
            || (outcome.status == KrylovStatus::Breakdown && outcome.relative_residual > 0.5)
        {
            return Err(SolverError::SingularJacobian(format!(
                "linear solve failed at iteration {iter} (relative residual {:e})",
                outcome.relative_residual
            )));
        }
        project(&mut delta);
        report.linear_iterations.push(outcome.iterations);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = u.clone();
            crate::linalg::axpy(alpha, &delta, trial.flat_mut());
            trial.apply_constraints(grid);
            if trial.is_finite() {
                let ft = residual_unchecked(problem, &trial);
                let mt = problem.weighted_norm(ft.flat());
                let st = sup_norm(ft.flat());
                if mt < merit || st <= opts.tol {
                    accepted = Some((trial, ft, mt, st));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((un, fnew, mn, sn)) = accepted else {
            report.iterations = iter;
            return Err(SolverError::LineSearchFailed {
                iteration: iter,
                halvings: opts.max_halvings,
            });
        };
        u = un;
        f = fnew;
        merit = mn;
        sup = sn;
        report.iterations = iter;
        report.damping.push(alpha);
        report.residual = sup;
        log::debug!("newton {iter}: step {alpha}, residual {sup:e}");
        if sup <= opts.tol {
            report.converged = true;
            return Ok((u, report));
        }
    }
    Err(SolverError::MaxIterExceeded {
        iterations: opts.max_iter,
        residual: sup,
    })
}

/// Largest explicit step `0.9 / max|L_aa|` (equal to `0.9 h²/(2n)` on a flat grid).
pub fn stable_step_bound(problem: &Problem) -> f64 {
    let d = problem
        .laplacian()
        .diagonal()
        .iter()
        .fold(0.0f64, |s, x| s.max(x.abs()));
    0.9 / d
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    /// Time step; defaults to [`stable_step_bound`].
    pub dt: Option<f64>,
    pub steps: usize,
    /// Sup-norm beyond which the flow is declared blown up.
    pub blowup: f64,
    /// Energy sampling interval in steps (0 disables).
    pub energy_every: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            dt: None,
            steps: 1000,
            blowup: 1e6,
            energy_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowReport {
    pub state: SolutionState,
    pub dt: f64,
    pub steps: usize,
    /// `(step, energy)` samples, including the first and last step.
    pub energy: Vec<(usize, f64)>,
}

/// `steps` explicit Euler steps of `u ← u + dt (L u + H(u))`.
pub fn gradient_flow(
    problem: &Problem,
    u0: &SolutionState,
    dt: f64,
    steps: usize,
) -> Result<SolutionState, SolverError> {
    let opts = FlowOptions {
        dt: Some(dt),
        steps,
        ..FlowOptions::default()
    };
    Ok(gradient_flow_with(problem, u0, &opts)?.state)
}

pub fn gradient_flow_with(
    problem: &Problem,
    u0: &SolutionState,
    opts: &FlowOptions,
) -> Result<FlowReport, SolverError> {
    problem.check_state(u0)?;
    let bound = stable_step_bound(problem);
    let dt = opts.dt.unwrap_or(bound);
    if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(SolverError::StepTooLarge { dt, bound });
    }
    let grid = problem.grid();
    let m = problem.components();
    let nodes = grid.node_count();
    let mut u = u0.clone();
    u.apply_constraints(grid);
    let mut lu = vec![0.0; nodes];
    let mut next = u.flat().to_vec();
    let mut s = vec![0.0; m];
    let mut h = vec![0.0; m];
    let mut energy = Vec::new();
    let sample = |u: &SolutionState, step: usize, energy: &mut Vec<(usize, f64)>| {
        if opts.energy_every > 0 {
            if let Some(e) = problem.energy(u) {
                energy.push((step, e));
            }
        }
    };
    sample(&u, 0, &mut energy);
    for step in 1..=opts.steps {
        for i in 0..m {
            problem.laplacian().apply(u.component(i), &mut lu);
            let block = &mut next[i * nodes..(i + 1) * nodes];
            for a in 0..nodes {
                block[a] = u.component(i)[a] + dt * lu[a];
            }
        }
        for a in 0..nodes {
            if grid.is_constrained(a) {
                continue;
            }
            u.at(a, &mut s);
            problem.nonlinearity().eval(&s, &mut h);
            for i in 0..m {
                next[i * nodes + a] += dt * h[i];
            }
        }
        u.flat_mut().copy_from_slice(&next);
        let sup = u.sup_norm();
        if !(sup <= opts.blowup) {
            return Err(SolverError::BlowUp { step, sup });
        }
        if opts.energy_every > 0 && (step % opts.energy_every == 0 || step == opts.steps) {
            sample(&u, step, &mut energy);
        }
    }
    Ok(FlowReport {
        state: u,
        dt,
        steps: opts.steps,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::discretization::Boundary;
    use crate::geometry::ChartSpec;
    use crate::system::nonlinearity::{AllenCahn, Bose, Zero};
    use crate::system::state::InitialData;

    fn torus(n: usize) -> Grid {
        Grid::new(ChartSpec::standard_torus(2).unwrap(), &[n, n]).unwrap()
    }

    #[test]
    fn residual_examples() {
        let g = torus(32);
        let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
        let one = SolutionState::constant(&g, &[1.0]);
        assert_eq!(residual(&p, &one).unwrap().sup_norm(), 0.0);

        let z = Problem::new(g.clone(), Arc::new(Zero { m: 1 })).unwrap();
        let s = SolutionState::new(&g, vec![g.sample_with(|x| x[0].sin())]).unwrap();
        let r = residual(&z, &s).unwrap();
        for a in 0..g.node_count() {
            assert!((r.component(0)[a] - g.coord(a, 0).sin()).abs() < 5e-3);
        }
        let b = Problem::new(g.clone(), Arc::new(Bose { g: 1.0 })).unwrap();
        assert_eq!(
            residual(&b, &SolutionState::constant(&g, &[0.0, 0.0]))
                .unwrap()
                .sup_norm(),
            0.0
        );
    }

    #[test]
    fn newton_reaches_constant_root() {
        let g = torus(32);
        let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
        let u0 = InitialData::Random {
            seed: 1,
            amplitude: 0.05,
            mean: vec![0.9],
        }
        .build(&g, 1)
        .unwrap();
        let (u, rep) = newton_solve(&p, &u0, 1e-9, 30).unwrap();
        assert!(rep.converged && rep.iterations > 0);
        assert!(u.flat().iter().all(|v| (v - 1.0).abs() < 1e-9));
        let again = residual(&p, &u).unwrap().sup_norm();
        assert!((again - rep.residual).abs() <= 1e-12);

        let (_, rep0) = newton_solve(&p, &u, 1e-9, 30).unwrap();
        assert_eq!(rep0.iterations, 0);
    }

    #[test]
    fn newton_commutes_with_torus_shifts() {
        let g = Grid::new(ChartSpec::flat_torus(&[20.0, 4.0]).unwrap(), &[40, 8]).unwrap();
        let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
        let u0 = SolutionState::new(
            &g,
            vec![g.sample_with(|x| 1.2 * (0.1 * PI * x[0]).sin() + 0.05 * (0.5 * PI * x[1]).cos())],
        )
        .unwrap();
        let opts = NewtonOptions::default();
        let (u, rep) = newton_solve_with(&p, &u0, &opts).unwrap();
        assert!(rep.converged && u.field(0).oscillation() > 1.0);

        // a full period is the identity on the grid: bitwise
        let (v, rep_v) = newton_solve_with(&p, &u0.shifted(&g, 0, 40).unwrap(), &opts).unwrap();
        assert_eq!(v, u);
        assert_eq!(rep_v.iterations, rep.iterations);

        // one node: same iteration path, reductions reassociate
        let (w, rep_w) = newton_solve_with(&p, &u0.shifted(&g, 0, 1).unwrap(), &opts).unwrap();
        assert_eq!(rep_w.iterations, rep.iterations);
        let back = w.shifted(&g, 0, -1).unwrap();
        let err = back
            .flat()
            .iter()
            .zip(u.flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "{err}");
    }

    #[test]
    fn pure_neumann_kernel_is_singular_unless_pinned() {
        let g = torus(16);
        let p = Problem::new(g.clone(), Arc::new(Zero { m: 1 })).unwrap();
        let u0 = SolutionState::new(&g, vec![g.sample_with(|x| x[0].sin() + 0.3)]).unwrap();
        assert!(matches!(
            newton_solve(&p, &u0, 1e-9, 10),
            Err(SolverError::SingularJacobian(_))
        ));
        let opts = NewtonOptions {
            pin_mean: true,
            ..NewtonOptions::default()
        };
        let (u, rep) = newton_solve_with(&p, &u0, &opts).unwrap();
        assert!(rep.converged);
        assert!(u.constancy_defect() < 1e-8);
    }

    #[test]
    fn flow_fixed_points_and_departures() {
        let g = torus(24);
        let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
        let dt = stable_step_bound(&p);
        let one = SolutionState::constant(&g, &[1.0]);
        let out = gradient_flow(&p, &one, dt, 200).unwrap();
        assert!(out.flat().iter().all(|v| (v - 1.0).abs() <= 1e-12));

        let noisy = InitialData::Random {
            seed: 2,
            amplitude: 0.05,
            mean: vec![0.6],
        }
        .build(&g, 1)
        .unwrap();
        let t = 8.0;
        let out = gradient_flow(&p, &noisy, dt, (t / dt) as usize).unwrap();
        // u' = u − u³ from 0.6 reaches 1 − 2e-4 by t = 8
        assert!(out.flat().iter().all(|v| (v - 1.0).abs() < 1e-3));

        let near_zero = InitialData::Random {
            seed: 4,
            amplitude: 1e-4,
            mean: vec![1e-4],
        }
        .build(&g, 1)
        .unwrap();
        let out = gradient_flow(&p, &near_zero, dt, (3.0 / dt) as usize).unwrap();
        assert!(out.sup_norm() > 5.0 * near_zero.sup_norm());

        assert!(matches!(
            gradient_flow(&p, &one, 2.0 * dt, 1),
            Err(SolverError::StepTooLarge { .. })
        ));
    }

    #[test]
    fn energy_decreases_along_flow() {
        let g = torus(24);
        let p = Problem::new(g.clone(), Arc::new(Bose { g: 1.0 })).unwrap();
        let u0 = InitialData::Random {
            seed: 9,
            amplitude: 0.5,
            mean: vec![0.8, 0.6],
        }
        .build(&g, 2)
        .unwrap();
        let rep = gradient_flow_with(
            &p,
            &u0,
            &FlowOptions {
                steps: 2000,
                energy_every: 100,
                ..FlowOptions::default()
            },
        )
        .unwrap();
        assert!(rep.energy.len() > 5);
        assert!(rep.energy.windows(2).all(|e| e[1].1 <= e[0].1 + 1e-14));
    }

    #[test]
    fn dirichlet_problem_converges() {
        let g = Grid::with_boundary(
            ChartSpec::rectangle(vec![(0.0, 10.0), (0.0, 10.0)]).unwrap(),
            &[40, 40],
            Boundary::Dirichlet,
        )
        .unwrap();
        let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
        let u0 = InitialData::Constant { values: vec![0.8] }
            .build(&g, 1)
            .unwrap();
        let flowed = gradient_flow(&p, &u0, stable_step_bound(&p), 3000).unwrap();
        let (u, rep) = newton_solve(&p, &flowed, 1e-9, 30).unwrap();
        assert!(rep.converged);
        let c = g.nearest_node(&[5.0, 5.0]);
        assert!(u.component(0)[c] > 0.9 && u.component(0)[c] < 1.0);
    }
}
