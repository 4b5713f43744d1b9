use thiserror::Error;

/// Errors raised by pointwise metric calculus.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error(
        "metric is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue:e})"
    )]
    NonPositiveDefinite {
        point: Vec<f64>,
        min_eigenvalue: f64,
    },
    #[error("point has dimension {got}, chart has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid chart: {0}")]
    InvalidChart(String),
    #[error("unknown metric preset `{0}`")]
    UnknownPreset(String),
    #[error("bad parameters for preset `{preset}`: {reason}")]
    BadParameters { preset: String, reason: String },
}

/// Errors raised by grids, fields and discrete operators.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizationError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field has {got} values, grid has {expected} nodes")]
    FieldSize { expected: usize, got: usize },
    #[error("field contains a non-finite value at node {0}")]
    NonFinite(usize),
    #[error("metric has off-diagonal inverse entries at {0:?}; the flux stencil supports diagonal metrics only")]
    OffDiagonalMetric(Vec<f64>),
    #[error("ball of radius {radius} around node {center} is clipped by a non-periodic boundary")]
    BallExceedsDomain { center: usize, radius: f64 },
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DiscretizationError {
    fn from(e: std::io::Error) -> Self {
        DiscretizationError::Io(e.to_string())
    }
}

impl From<csv::Error> for DiscretizationError {
    fn from(e: csv::Error) -> Self {
        DiscretizationError::Io(e.to_string())
    }
}

/// Errors from the nonlinear solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error("unknown nonlinearity preset `{0}`")]
    UnknownPreset(String),
    #[error("bad parameters for nonlinearity `{preset}`: {reason}")]
    BadParameters { preset: String, reason: String },
    #[error("state has {got} components, nonlinearity expects {expected}")]
    ComponentMismatch { expected: usize, got: usize },
    #[error("Jacobian is singular: {0}")]
    SingularJacobian(String),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },
    #[error("line search failed after {halvings} halvings at iteration {iteration}")]
    LineSearchFailed { iteration: usize, halvings: usize },
    #[error("time step {dt:e} exceeds the explicit stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("gradient flow blew up at step {step} (sup-norm {sup:e})")]
    BlowUp { step: usize, sup: f64 },
}

/// Errors from spectral stability analysis and inequality checks.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error("linearized operator is not self-adjoint (relative defect {0:e})")]
    NotSelfAdjoint(f64),
    #[error("eigensolver did not converge (residual {residual:e} after {iterations} iterations)")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error(
        "coupling product d_j H_i * d_i H_j = {value:e} < 0 at node {node} for pair ({i}, {j})"
    )]
    NegativeCouplingProduct {
        node: usize,
        i: usize,
        j: usize,
        value: f64,
    },
    #[error("solution is not classified stable: {0}")]
    NotStable(String),
}

/// Errors from lab experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Discretization(#[from] DiscretizationError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("level set u = {level} is empty")]
    EmptyLevelSet { level: f64 },
    #[error("gradient is below the floor {floor:e} along every level curve")]
    GradientBelowFloor { floor: f64 },
    #[error("invalid experiment input: {0}")]
    InvalidInput(String),
}
