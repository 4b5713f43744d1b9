use serde::{Deserialize, Serialize};

use crate::discretization::DiscreteScalarField;
use crate::error::StabilityError;
use crate::linalg::sup_norm;
use crate::stability::eigen::{principal_eigenpair_with, EigenOptions, SpectrumReport};
use crate::stability::operator::{assemble_linearized, LinearizedOperator};
use crate::system::{Problem, SolutionState};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyOptions {
    /// Absolute eigenvalue tolerance; defaults to `1e-7 · ‖A‖_∞`.
    pub tol: Option<f64>,
    pub eigen: EigenOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCheck {
    /// `∂_j H_i ζ_i ζ_j > 0` wherever both fields are nonzero.
    Positive,
    /// The coupling vanishes where both fields are nonzero, or one field is zero.
    Vacuous,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStatus {
    pub i: usize,
    pub j: usize,
    pub status: PairCheck,
    /// Smallest `∂_j H_i ζ_i ζ_j` over nodes where both fields are nonzero.
    pub min_product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentSign {
    pub component: usize,
    /// `1`, `-1`, or `0` for a component below the zero threshold.
    pub sign: i8,
    pub sup: f64,
    /// Largest magnitude of the minority sign above the threshold (0 when none).
    pub opposite: f64,
    pub threshold: f64,
    pub single_sign: bool,
}

/// Sign-constant `ζ` and `λ ≥ 0` with `−Lζ_i = Σ_j ∂_j H_i ζ_j + λ ζ_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    #[serde(skip)]
    pub zeta: Vec<DiscreteScalarField>,
    pub lambda: f64,
    pub mu1: f64,
    /// Sup norm of the defining residual, with `max_i ‖ζ_i‖_∞ = 1`.
    pub residual: f64,
    pub tolerance: f64,
    pub signs: Vec<ComponentSign>,
    /// Pairs `i < j` (and `i = j` for the all-pairs reading).
    pub off_diagonal: Vec<PairStatus>,
    pub all_pairs: Vec<PairStatus>,
}

impl StabilityCertificate {
    pub fn signs_ok(&self) -> bool {
        self.signs.iter().all(|s| s.single_sign)
    }

    pub fn pairs_ok(&self) -> bool {
        self.off_diagonal
            .iter()
            .all(|p| p.status != PairCheck::Violated)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndeterminateReport {
    pub reason: String,
    pub mu1: Option<f64>,
    pub tol: f64,
    /// The failed candidate, when the spectral route produced one.
    pub candidate: Option<StabilityCertificate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum StabilityClass {
    Stable(StabilityCertificate),
    Unstable {
        mu1: f64,
        tol: f64,
        spectrum: SpectrumReport,
    },
    Indeterminate(IndeterminateReport),
}

impl StabilityClass {
    pub fn is_stable(&self) -> bool {
        matches!(self, StabilityClass::Stable(_))
    }

    pub fn label(&self) -> &'static str {
        match self {
            StabilityClass::Stable(_) => "stable",
            StabilityClass::Unstable { .. } => "unstable",
            StabilityClass::Indeterminate(_) => "indeterminate",
        }
    }

    pub fn mu1(&self) -> Option<f64> {
        match self {
            StabilityClass::Stable(c) => Some(c.mu1),
            StabilityClass::Unstable { mu1, .. } => Some(*mu1),
            StabilityClass::Indeterminate(r) => r.mu1,
        }
    }
}

pub fn classify_stability(
    problem: &Problem,
    u: &SolutionState,
) -> Result<StabilityClass, StabilityError> {
    classify_stability_with(problem, u, &ClassifyOptions::default())
}

pub fn classify_stability_with(
    problem: &Problem,
    u: &SolutionState,
    opts: &ClassifyOptions,
) -> Result<StabilityClass, StabilityError> {
    let a = assemble_linearized(problem, u)?;
    let tol = opts.tol.unwrap_or(1e-7 * a.inf_norm());
    let asym = a.weighted_asymmetry();
    if !(asym <= opts.eigen.symmetry_tol) {
        return Ok(StabilityClass::Indeterminate(IndeterminateReport {
            reason: format!(
                "coupling is not symmetric (weighted defect {asym:.3e}); no spectral witness"
            ),
            mu1: None,
            tol,
            candidate: None,
        }));
    }
    let spec = principal_eigenpair_with(&a, &opts.eigen)?;
    if spec.mu < -tol {
        return Ok(StabilityClass::Unstable {
            mu1: spec.mu,
            tol,
            spectrum: spec,
        });
    }
    let cert = build_certificate(&a, &spec, tol);
    if cert.signs_ok() && cert.pairs_ok() {
        Ok(StabilityClass::Stable(cert))
    } else {
        let mut why = Vec::new();
        if !cert.signs_ok() {
            why.push("principal vector changes sign");
        }
        if !cert.pairs_ok() {
            why.push("pair positivity fails");
        }
        Ok(StabilityClass::Indeterminate(IndeterminateReport {
            reason: why.join("; "),
            mu1: Some(spec.mu),
            tol,
            candidate: Some(cert),
        }))
    }
}

fn build_certificate(
    a: &LinearizedOperator,
    spec: &SpectrumReport,
    tol: f64,
) -> StabilityCertificate {
    let (m, n) = (a.components(), a.nodes());
    let mut v = spec.vector.clone();
    // one global sign and scale: the eigen relation couples components
    let peak = v.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, x)| {
        if x.abs() > bv.abs() {
            (i, *x)
        } else {
            (bi, bv)
        }
    });
    let scale = if peak.1 != 0.0 { 1.0 / peak.1 } else { 1.0 };
    v.iter_mut().for_each(|x| *x *= scale);
    let lambda = spec.mu.max(0.0);
    let residual = certificate_residual(a, &v, lambda);

    // eigenvector error is about residual / gap; flag nothing inside that noise
    let gap = if spec.gap.is_finite() && spec.gap > 0.0 {
        spec.gap
    } else {
        f64::INFINITY
    };
    let rel = (100.0 * spec.residual / gap).clamp(1e-8, 1e-3);

    let mut signs = Vec::with_capacity(m);
    let mut thresholds = Vec::with_capacity(m);
    for i in 0..m {
        let c = &v[i * n..(i + 1) * n];
        let sup = sup_norm(c);
        let threshold = rel.max(rel * sup);
        thresholds.push(threshold);
        let (mut pos, mut neg) = (0.0f64, 0.0f64);
        for &x in c {
            if x > threshold {
                pos = pos.max(x);
            } else if x < -threshold {
                neg = neg.max(-x);
            }
        }
        let (sign, opposite) = if pos == 0.0 && neg == 0.0 {
            (0, 0.0)
        } else if pos >= neg {
            (1, neg)
        } else {
            (-1, pos)
        };
        signs.push(ComponentSign {
            component: i,
            sign,
            sup,
            opposite,
            threshold,
            single_sign: opposite == 0.0,
        });
    }

    let coup_scale = (0..n)
        .flat_map(|p| (0..m * m).map(move |k| (p, k)))
        .fold(0.0f64, |s, (p, k)| s.max(a.coupling(p, k / m, k % m).abs()));
    let coup_floor = 1e-12 * (1.0 + coup_scale);
    let pair = |i: usize, j: usize| {
        let mut min_product = f64::INFINITY;
        let mut coupled = false;
        let mut violated = false;
        for p in (0..n).filter(|&p| !a.is_constrained(p)) {
            let (zi, zj) = (v[i * n + p], v[j * n + p]);
            if zi.abs() <= thresholds[i] || zj.abs() <= thresholds[j] {
                continue;
            }
            let h = a.coupling(p, i, j);
            let prod = h * zi * zj;
            min_product = min_product.min(prod);
            if h.abs() > coup_floor {
                coupled = true;
            }
            if !(prod > 0.0) && h.abs() > coup_floor {
                violated = true;
            }
        }
        let status = if violated {
            PairCheck::Violated
        } else if !coupled {
            PairCheck::Vacuous
        } else {
            PairCheck::Positive
        };
        PairStatus {
            i,
            j,
            status,
            min_product: if min_product.is_finite() {
                min_product
            } else {
                0.0
            },
        }
    };
    let mut off_diagonal = Vec::new();
    let mut all_pairs = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let s = pair(i, j);
            if i != j {
                off_diagonal.push(s.clone());
            }
            all_pairs.push(s);
        }
    }

    let zeta = (0..m)
        .map(|i| DiscreteScalarField::from_values(v[i * n..(i + 1) * n].to_vec()))
        .collect();
    StabilityCertificate {
        zeta,
        lambda,
        mu1: spec.mu,
        residual,
        tolerance: 2.0 * residual + tol,
        signs,
        off_diagonal,
        all_pairs,
    }
}

fn certificate_residual(a: &LinearizedOperator, v: &[f64], lambda: f64) -> f64 {
    let mut r = a.mul(v);
    for (k, ri) in r.iter_mut().enumerate() {
        *ri = if a.is_free(k) {
            *ri - lambda * v[k]
        } else {
            0.0
        };
    }
    sup_norm(&r)
}

/// Recomputes the certificate residual at `u`; `Ok(residual)` when it is within
/// the certificate tolerance and the sign report still holds.
pub fn verify_certificate(
    problem: &Problem,
    u: &SolutionState,
    cert: &StabilityCertificate,
) -> Result<f64, StabilityError> {
    let a = assemble_linearized(problem, u)?;
    if cert.zeta.len() != a.components() || cert.lambda < 0.0 {
        return Err(StabilityError::NotStable(
            "certificate shape or λ < 0".into(),
        ));
    }
    let v: Vec<f64> = cert
        .zeta
        .iter()
        .flat_map(|z| z.values().iter().copied())
        .collect();
    if v.len() != a.len() {
        return Err(StabilityError::NotStable(
            "certificate size mismatch".into(),
        ));
    }
    let r = certificate_residual(&a, &v, cert.lambda);
    for (z, s) in cert.zeta.iter().zip(&cert.signs) {
        let bad = z.values().iter().any(|&x| match s.sign {
            1 => x < -s.threshold,
            -1 => x > s.threshold,
            _ => x.abs() > s.threshold,
        });
        if bad {
            return Err(StabilityError::NotStable(format!(
                "component {} changes sign",
                s.component
            )));
        }
    }
    if r <= cert.tolerance {
        Ok(r)
    } else {
        Err(StabilityError::NotStable(format!(
            "residual {r:.3e} exceeds {:.3e}",
            cert.tolerance
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Grid;
    use crate::geometry::ChartSpec;
    use crate::system::{AllenCahn, Bose, Linear, Zero};
    use std::sync::Arc;

    fn torus(n: usize) -> Grid {
        Grid::new(ChartSpec::standard_torus(2).unwrap(), &[n, n]).unwrap()
    }

    #[test]
    fn allen_cahn_constants() {
        let g = torus(24);
        let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
        let one = SolutionState::constant(&g, &[1.0]);
        match classify_stability(&p, &one).unwrap() {
            StabilityClass::Stable(c) => {
                assert!((c.lambda - 2.0).abs() < 1e-10);
                assert!(c.zeta[0].values().iter().all(|x| (x - 1.0).abs() < 1e-8));
                assert!(c.off_diagonal.is_empty());
                assert_eq!(c.all_pairs[0].status, PairCheck::Violated);
                verify_certificate(&p, &one, &c).unwrap();
            }
            other => panic!("{other:?}"),
        }
        let zero = SolutionState::constant(&g, &[0.0]);
        let c = classify_stability(&p, &zero).unwrap();
        assert_eq!(c.label(), "unstable");
        assert!((c.mu1().unwrap() + 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_nonlinearity_is_stable_with_zero_shift() {
        let g = torus(12);
        for m in [1, 2] {
            let p = Problem::new(g.clone(), Arc::new(Zero { m })).unwrap();
            let u = SolutionState::constant(&g, &vec![0.7; m]);
            match classify_stability(&p, &u).unwrap() {
                StabilityClass::Stable(c) => {
                    assert_eq!(c.lambda, 0.0);
                    assert!(c.residual < 1e-8);
                }
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn bose_constants() {
        let g = torus(16);
        let p = Problem::new(g.clone(), Arc::new(Bose { g: 1.0 })).unwrap();
        // one species present: stable, decoupled
        let c = classify_stability(&p, &SolutionState::constant(&g, &[1.0, 0.0])).unwrap();
        assert!(c.is_stable(), "{c:?}");
        // coexistence is unstable
        let c = classify_stability(&p, &SolutionState::constant(&g, &[1.0, 1.0])).unwrap();
        assert_eq!(c.label(), "unstable");
    }

    #[test]
    fn asymmetric_coupling_is_indeterminate() {
        let g = torus(8);
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, -1.0, -1.0]);
        let p = Problem::new(g.clone(), Arc::new(Linear::new(m))).unwrap();
        let c = classify_stability(&p, &SolutionState::constant(&g, &[0.0, 0.0])).unwrap();
        assert_eq!(c.label(), "indeterminate");
    }

    #[test]
    fn cooperative_coupling_gives_positive_pairs() {
        let g = torus(12);
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 1.0, -2.0]);
        let p = Problem::new(g.clone(), Arc::new(Linear::symmetric(m).unwrap())).unwrap();
        match classify_stability(&p, &SolutionState::constant(&g, &[0.0, 0.0])).unwrap() {
            StabilityClass::Stable(c) => {
                assert!((c.lambda - 1.0).abs() < 1e-10);
                assert!(c
                    .off_diagonal
                    .iter()
                    .all(|s| s.status == PairCheck::Positive));
            }
            other => panic!("{other:?}"),
        }
    }
}
