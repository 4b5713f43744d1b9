//! End-to-end numerical experiments producing [`ExperimentReport`]s.

mod bochner;
mod growth;
mod levelset;
mod liouville;
mod report;

pub use bochner::{bochner_discrete_residual, bochner_sweep, hessian_inequality_scan};
pub use growth::{annulus_capacity, parabolicity_capacity, volume_growth};
pub use levelset::{
    extract_level_curves, level_set_geodesic_check, LevelCurve, LevelSetOptions, MIN_CURVE_POINTS,
};
pub use liouville::{liouville_compact, liouville_start, LiouvilleOptions, StartOutcome};
pub use report::{digest, fitted_order, ExperimentReport, Verdict};
