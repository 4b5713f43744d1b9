//! Nonlinearities, solution states, residuals and solvers for
//! `−Δ_g u_i = H_i(u)`.

mod nonlinearity;
mod solve;
mod state;

pub use nonlinearity::{
    check_coupling, check_symmetric, jacobian_consistency, sample_states, AllenCahn, Bose,
    CouplingMode, CouplingReport, DoubleWell, Linear, Nonlinearity, PairProduct, ParamValue,
    Params, Registry, Shifted, SymmetryReport, Zero,
};
pub use solve::{
    gradient_flow, gradient_flow_with, newton_solve, newton_solve_with, residual,
    stable_step_bound, FlowOptions, FlowReport, NewtonOptions, Problem, SolveReport,
};
pub use state::{InitialData, SolutionState};
