use rayon::prelude::*;
use serde::Serialize;

use crate::discretization::{
    grad_norm_sq, nodal_derivatives, DiscreteScalarField, FamilyKind, TestFunctionFamily,
};
use crate::error::StabilityError;
use crate::geometry::kato_sides;
use crate::linalg::pairwise_sum_by;
use crate::stability::classify::{classify_stability_with, ClassifyOptions, StabilityClass};
use crate::system::{Problem, SolutionState};

/// One test function: `margin = rhs − lhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginRow {
    pub seed: u64,
    pub kind: FamilyKind,
    pub index: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// Same with `|∂_i H_i|` on the diagonal (stability inequality only).
    pub lhs_literal: Option<f64>,
    pub margin_literal: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginReport {
    pub rows: Vec<MarginRow>,
    pub min_margin: f64,
    /// `min margin / rhs` over rows with `rhs > 0`.
    pub min_relative: f64,
    pub min_margin_literal: Option<f64>,
}

impl MarginReport {
    fn from_rows(rows: Vec<MarginRow>) -> Self {
        let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        let min_relative = rows
            .iter()
            .filter(|r| r.rhs > 0.0)
            .map(|r| r.margin / r.rhs)
            .fold(f64::INFINITY, f64::min);
        let min_margin_literal = rows
            .iter()
            .filter_map(|r| r.margin_literal)
            .reduce(f64::min);
        MarginReport {
            rows,
            min_margin: if min_margin.is_finite() {
                min_margin
            } else {
                0.0
            },
            min_relative: if min_relative.is_finite() {
                min_relative
            } else {
                0.0
            },
            min_margin_literal,
        }
    }

    /// True when every row has `margin ≥ −rel · rhs`.
    pub fn within(&self, rel: f64) -> bool {
        self.rows.iter().all(|r| r.margin >= -rel * r.rhs.abs())
    }
}

/// Per-node coupling data: signed diagonal and `√(∂_j H_i ∂_i H_j)` off it.
struct Coupling {
    m: usize,
    diag: Vec<f64>,
    geo: Vec<f64>,
}

fn coupling(problem: &Problem, u: &SolutionState) -> Result<Coupling, StabilityError> {
    problem.check_state(u)?;
    let m = problem.components();
    let n = u.nodes();
    let jac = problem.jacobians(u);
    let scale = jac.iter().fold(0.0f64, |s, x| s.max(x.abs()));
    let floor = 1e-12 * (1.0 + scale * scale);
    let grid = problem.grid();
    let mut diag = vec![0.0; n * m];
    let mut geo = vec![0.0; n * m * m];
    for a in 0..n {
        let b = &jac[a * m * m..(a + 1) * m * m];
        for i in 0..m {
            diag[a * m + i] = b[i * m + i];
            for j in 0..m {
                if i == j {
                    continue;
                }
                let prod = b[i * m + j] * b[j * m + i];
                if prod < -floor && !grid.is_constrained(a) {
                    return Err(StabilityError::NegativeCouplingProduct {
                        node: a,
                        i,
                        j,
                        value: prod,
                    });
                }
                geo[a * m * m + i * m + j] = prod.max(0.0).sqrt();
            }
        }
    }
    Ok(Coupling { m, diag, geo })
}

fn members(families: &[TestFunctionFamily]) -> Vec<(usize, usize)> {
    families
        .iter()
        .enumerate()
        .flat_map(|(f, fam)| (0..fam.count).map(move |k| (f, k)))
        .collect()
}

fn masked(problem: &Problem, mut fields: Vec<DiscreteScalarField>) -> Vec<DiscreteScalarField> {
    let grid = problem.grid();
    if grid.has_constraints() {
        for f in &mut fields {
            for (a, v) in f.values_mut().iter_mut().enumerate() {
                if grid.is_constrained(a) {
                    *v = 0.0;
                }
            }
        }
    }
    fields
}

/// `(signed LHS, literal LHS, RHS)` of the stability inequality for one `φ`.
fn stability_sides(
    problem: &Problem,
    c: &Coupling,
    phi: &[DiscreteScalarField],
) -> (f64, f64, f64) {
    let grid = problem.grid();
    let w = grid.weights();
    let m = c.m;
    let n = grid.node_count();
    let mut rhs = 0.0;
    for p in phi {
        let lp = problem.laplacian().mul(p.values());
        rhs -= pairwise_sum_by(n, &|a| w[a] * lp[a] * p.values()[a]);
    }
    let cross = |a: usize| {
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    s += c.geo[a * m * m + i * m + j] * phi[i].values()[a] * phi[j].values()[a];
                }
            }
        }
        s
    };
    let signed = pairwise_sum_by(n, &|a| {
        let d: f64 = (0..m)
            .map(|i| c.diag[a * m + i] * phi[i].values()[a].powi(2))
            .sum();
        w[a] * (d + cross(a))
    });
    let literal = pairwise_sum_by(n, &|a| {
        let d: f64 = (0..m)
            .map(|i| c.diag[a * m + i].abs() * phi[i].values()[a].powi(2))
            .sum();
        w[a] * (d + cross(a))
    });
    (signed, literal, rhs)
}

/// Margin of the stability inequality for a single vector test function.
pub fn stability_margin(
    problem: &Problem,
    u: &SolutionState,
    phi: &[DiscreteScalarField],
) -> Result<MarginRow, StabilityError> {
    let c = coupling(problem, u)?;
    let phi = masked(problem, phi.to_vec());
    for p in &phi {
        problem.grid().check_field(p)?;
    }
    let (lhs, lit, rhs) = stability_sides(problem, &c, &phi);
    Ok(MarginRow {
        seed: 0,
        kind: FamilyKind::TrigMix,
        index: 0,
        lhs,
        rhs,
        margin: rhs - lhs,
        lhs_literal: Some(lit),
        margin_literal: Some(rhs - lit),
    })
}

/// Stability-inequality margins over test-function families, without classifying `u`.
pub fn stability_margins(
    problem: &Problem,
    u: &SolutionState,
    families: &[TestFunctionFamily],
) -> Result<MarginReport, StabilityError> {
    let c = coupling(problem, u)?;
    let m = problem.components();
    let rows = members(families)
        .into_par_iter()
        .map(|(f, k)| {
            let fam = &families[f];
            let phi = masked(problem, fam.member(problem.grid(), k, m));
            let (lhs, lit, rhs) = stability_sides(problem, &c, &phi);
            MarginRow {
                seed: fam.seed,
                kind: fam.kind,
                index: k,
                lhs,
                rhs,
                margin: rhs - lhs,
                lhs_literal: Some(lit),
                margin_literal: Some(rhs - lit),
            }
        })
        .collect();
    Ok(MarginReport::from_rows(rows))
}

fn require_stable(
    problem: &Problem,
    u: &SolutionState,
    opts: &ClassifyOptions,
) -> Result<(), StabilityError> {
    match classify_stability_with(problem, u, opts)? {
        StabilityClass::Stable(_) => Ok(()),
        other => Err(StabilityError::NotStable(match other.mu1() {
            Some(mu) => format!("{} (mu1 = {mu:.6e})", other.label()),
            None => other.label().to_string(),
        })),
    }
}

/// Classifies `u`, then evaluates the stability inequality on every family member.
pub fn stability_inequality_check(
    problem: &Problem,
    u: &SolutionState,
    families: &[TestFunctionFamily],
    opts: &ClassifyOptions,
) -> Result<MarginReport, StabilityError> {
    require_stable(problem, u, opts)?;
    stability_margins(problem, u, families)
}

/// Relative oscillation below which a component counts as constant.
pub const ROUNDOFF_OSCILLATION: f64 = 1e3 * f64::EPSILON;

/// Nodal integrands of the weighted Poincaré inequality.
struct PoincareData {
    m: usize,
    /// `Ric(∇u_i, ∇u_i) + |H_{u_i}|² − |∇|∇u_i||²` at `a * m + i`
    a_term: Vec<f64>,
    /// `|∇u_i|²` at `a * m + i`
    grad_sq: Vec<f64>,
    /// `√(∂_j H_i ∂_i H_j) |∇u_i| |∇u_j|` at `a * m * m + i * m + j`
    p_term: Vec<f64>,
    /// `∂_j H_i ⟨∇u_i, ∇u_j⟩` at `a * m * m + i * m + j`
    q_term: Vec<f64>,
}

fn poincare_data(problem: &Problem, u: &SolutionState) -> Result<PoincareData, StabilityError> {
    let c = coupling(problem, u)?;
    let grid = problem.grid();
    let m = problem.components();
    let n = grid.node_count();
    let jac = problem.jacobians(u);
    let derivs: Vec<_> = (0..m)
        .map(|i| nodal_derivatives(grid, u.component(i)))
        .collect::<Result<_, _>>()?;
    // components constant to working precision carry no gradient
    let flat: Vec<bool> = (0..m)
        .map(|i| {
            let v = u.component(i);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            hi - lo <= ROUNDOFF_OSCILLATION * (1.0 + hi.abs().max(lo.abs()))
        })
        .collect();
    let mut a_term = vec![0.0; n * m];
    let mut grad_sq = vec![0.0; n * m];
    let mut p_term = vec![0.0; n * m * m];
    let mut q_term = vec![0.0; n * m * m];
    for a in 0..n {
        let pg = &derivs[0][a].geometry;
        let ric = pg.ricci();
        for i in 0..m {
            if flat[i] {
                continue;
            }
            let d = &derivs[i][a];
            let g2 = pg.co_dot(&d.df, &d.df);
            grad_sq[a * m + i] = g2;
            if g2 > 0.0 {
                let up = pg.raise(&d.df);
                let r = (up.transpose() * &ric * &up)[(0, 0)];
                let (kato, h2) = kato_sides(pg, &d.df, &d.hess);
                a_term[a * m + i] = r + h2 - kato;
            }
            for j in 0..m {
                if i == j || flat[j] {
                    continue;
                }
                let dj = &derivs[j][a];
                let gj = pg.co_dot(&dj.df, &dj.df);
                p_term[a * m * m + i * m + j] = c.geo[a * m * m + i * m + j] * (g2 * gj).sqrt();
                q_term[a * m * m + i * m + j] =
                    jac[a * m * m + i * m + j] * pg.co_dot(&d.df, &dj.df);
            }
        }
    }
    Ok(PoincareData {
        m,
        a_term,
        grad_sq,
        p_term,
        q_term,
    })
}

fn poincare_sides(
    problem: &Problem,
    d: &PoincareData,
    eta: &[DiscreteScalarField],
) -> Result<(f64, f64), StabilityError> {
    let grid = problem.grid();
    let w = grid.weights();
    let m = d.m;
    let n = grid.node_count();
    let lhs = pairwise_sum_by(n, &|a| {
        let mut s = 0.0;
        for i in 0..m {
            let ei = eta[i].values()[a];
            s += d.a_term[a * m + i] * ei * ei;
            for j in 0..m {
                if i != j {
                    let ej = eta[j].values()[a];
                    let k = a * m * m + i * m + j;
                    s += d.p_term[k] * ei * ej - d.q_term[k] * ei * ei;
                }
            }
        }
        w[a] * s
    });
    let mut rhs = 0.0;
    for (i, e) in eta.iter().enumerate() {
        let ge = grad_norm_sq(grid, e)?;
        rhs += pairwise_sum_by(n, &|a| w[a] * d.grad_sq[a * m + i] * ge.values()[a]);
    }
    Ok((lhs, rhs))
}

/// Weighted Poincaré margins over families of cutoffs `η`, without classifying `u`.
pub fn poincare_margins(
    problem: &Problem,
    u: &SolutionState,
    families: &[TestFunctionFamily],
) -> Result<MarginReport, StabilityError> {
    let d = poincare_data(problem, u)?;
    let m = problem.components();
    let rows: Result<Vec<MarginRow>, StabilityError> = members(families)
        .into_par_iter()
        .map(|(f, k)| {
            let fam = &families[f];
            let eta = masked(problem, fam.member(problem.grid(), k, m));
            let (lhs, rhs) = poincare_sides(problem, &d, &eta)?;
            Ok(MarginRow {
                seed: fam.seed,
                kind: fam.kind,
                index: k,
                lhs,
                rhs,
                margin: rhs - lhs,
                lhs_literal: None,
                margin_literal: None,
            })
        })
        .collect();
    Ok(MarginReport::from_rows(rows?))
}

/// Poincaré margin for a single `η`.
pub fn poincare_margin(
    problem: &Problem,
    u: &SolutionState,
    eta: &[DiscreteScalarField],
) -> Result<MarginRow, StabilityError> {
    let d = poincare_data(problem, u)?;
    let eta = masked(problem, eta.to_vec());
    let (lhs, rhs) = poincare_sides(problem, &d, &eta)?;
    Ok(MarginRow {
        seed: 0,
        kind: FamilyKind::RandomBump,
        index: 0,
        lhs,
        rhs,
        margin: rhs - lhs,
        lhs_literal: None,
        margin_literal: None,
    })
}

/// Classifies `u`, then evaluates the weighted Poincaré inequality on every family member.
pub fn poincare_check(
    problem: &Problem,
    u: &SolutionState,
    families: &[TestFunctionFamily],
    opts: &ClassifyOptions,
) -> Result<MarginReport, StabilityError> {
    require_stable(problem, u, opts)?;
    poincare_margins(problem, u, families)
}
