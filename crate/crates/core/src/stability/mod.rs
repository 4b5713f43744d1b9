//! Linearized stability of solutions to `−Δ_g u = H(u)`.

mod classify;
mod eigen;
mod inequalities;
mod operator;

pub use classify::{
    classify_stability, classify_stability_with, verify_certificate, ClassifyOptions,
    ComponentSign, IndeterminateReport, PairCheck, PairStatus, StabilityCertificate,
    StabilityClass,
};
pub use eigen::{principal_eigenpair, principal_eigenpair_with, EigenOptions, SpectrumReport};
pub use inequalities::{
    poincare_check, poincare_margin, poincare_margins, stability_inequality_check,
    stability_margin, stability_margins, MarginReport, MarginRow, ROUNDOFF_OSCILLATION,
};
pub use operator::{assemble_linearized, LinearizedOperator};
