//! Structured grids, the discrete Laplace–Beltrami operator, quadrature,
//! graph distances and test-function families.

mod calculus;
mod distance;
mod export;
mod grid;
mod operator;
mod testfn;

pub use calculus::{
    grad_norm_sq, integrate, nodal_derivatives, partial, partials, second_partial, second_partials,
    NodalDerivatives,
};
pub use distance::{
    ball_volume, ball_volume_from, cutoff_from_distance, cutoff_zeta_r, geodesic_distance,
    geodesic_distance_with, stencil_offsets, zeta_profile, DEFAULT_STENCIL_RADIUS,
};
pub use export::{read_binary, write_binary, write_csv};
pub use grid::{Boundary, DiscreteScalarField, Grid};
pub use operator::{assemble_laplacian, SparseOperator};
pub use testfn::{FamilyKind, TestFunctionFamily};
