use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::StabilityError;
use crate::linalg::{cg, KrylovStatus};
use crate::stability::operator::LinearizedOperator;

/// Eigensolver controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenOptions {
    /// Problems with at most this many free unknowns are solved densely.
    pub dense_limit: usize,
    /// Relative residual target `‖Av − μv‖_w ≤ tol · ‖v‖_w`.
    pub tol: f64,
    /// Lanczos steps per pass.
    pub krylov_dim: usize,
    /// Shift-invert passes.
    pub max_passes: usize,
    /// Relative tolerance of the inner solves.
    pub inner_rtol: f64,
    pub inner_max_iter: usize,
    /// Allowed weighted asymmetry of `A`.
    pub symmetry_tol: f64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            dense_limit: 600,
            tol: 1e-8,
            krylov_dim: 60,
            max_passes: 8,
            inner_rtol: 1e-13,
            inner_max_iter: 20_000,
            symmetry_tol: 1e-10,
        }
    }
}

/// Smallest eigenpair of `A` in the weighted inner product.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub mu: f64,
    /// Component-major, unit weighted norm, zero on constrained nodes.
    #[serde(skip)]
    pub vector: Vec<f64>,
    /// Lanczos steps (0 on the dense path).
    pub iterations: usize,
    /// `‖Av − μv‖_w / ‖v‖_w`
    pub residual: f64,
    /// Distance to the next eigenvalue estimate (infinite when unknown).
    pub gap: f64,
}

pub fn principal_eigenpair(a: &LinearizedOperator) -> Result<SpectrumReport, StabilityError> {
    principal_eigenpair_with(a, &EigenOptions::default())
}

pub fn principal_eigenpair_with(
    a: &LinearizedOperator,
    opts: &EigenOptions,
) -> Result<SpectrumReport, StabilityError> {
    let asym = a.weighted_asymmetry();
    if !(asym <= opts.symmetry_tol) {
        return Err(StabilityError::NotSelfAdjoint(asym));
    }
    let free: Vec<usize> = (0..a.len()).filter(|&k| a.is_free(k)).collect();
    if free.is_empty() {
        return Err(StabilityError::NoConvergence {
            iterations: 0,
            residual: f64::NAN,
        });
    }
    if free.len() <= opts.dense_limit {
        dense(a, &free)
    } else {
        lanczos(a, opts)
    }
}

fn residual_of(a: &LinearizedOperator, v: &[f64], mu: f64) -> f64 {
    let mut r = a.mul(v);
    for (ri, vi) in r.iter_mut().zip(v) {
        *ri -= mu * vi;
    }
    a.norm(&r) / a.norm(v)
}

fn rayleigh(a: &LinearizedOperator, v: &[f64]) -> f64 {
    a.inner(&a.mul(v), v) / a.inner(v, v)
}

fn dense(a: &LinearizedOperator, free: &[usize]) -> Result<SpectrumReport, StabilityError> {
    let nf = free.len();
    let sw: Vec<f64> = free.iter().map(|&k| a.weight(k).sqrt()).collect();
    let mut b = DMatrix::zeros(nf, nf);
    let mut e = vec![0.0; a.len()];
    let mut col = vec![0.0; a.len()];
    for (c, &k) in free.iter().enumerate() {
        e[k] = 1.0;
        a.apply(&e, &mut col);
        e[k] = 0.0;
        for (r, &kr) in free.iter().enumerate() {
            b[(r, c)] = sw[r] * col[kr] / sw[c];
        }
    }
    let b = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..nf).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let i0 = order[0];
    let gap = if nf > 1 {
        eig.eigenvalues[order[1]] - eig.eigenvalues[i0]
    } else {
        f64::INFINITY
    };
    let mut v = vec![0.0; a.len()];
    for (r, &k) in free.iter().enumerate() {
        v[k] = eig.eigenvectors[(r, i0)] / sw[r];
    }
    let s = a.norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mu = rayleigh(a, &v);
    Ok(SpectrumReport {
        mu,
        residual: residual_of(a, &v, mu),
        vector: v,
        iterations: 0,
        gap,
    })
}

/// Solves `(A − σ) y = v` through CG on the weighted form; constrained
/// unknowns are carried as identity rows.
struct ShiftedSolver<'a> {
    a: &'a LinearizedOperator,
    sigma: f64,
    w: Vec<f64>,
    diag: Vec<f64>,
    rtol: f64,
    max_iter: usize,
}

impl<'a> ShiftedSolver<'a> {
    fn new(a: &'a LinearizedOperator, sigma: f64, opts: &EigenOptions) -> Self {
        let w = a.weights();
        let d = a.diagonal();
        let diag = (0..a.len())
            .map(|k| {
                if w[k] > 0.0 {
                    w[k] * (d[k] - sigma)
                } else {
                    1.0
                }
            })
            .collect();
        ShiftedSolver {
            a,
            sigma,
            w,
            diag,
            rtol: opts.inner_rtol,
            max_iter: opts.inner_max_iter,
        }
    }

    fn solve(&self, v: &[f64], y: &mut [f64]) -> Result<(), StabilityError> {
        let apply = |x: &[f64], out: &mut [f64]| {
            self.a.apply(x, out);
            for k in 0..x.len() {
                out[k] = if self.w[k] > 0.0 {
                    self.w[k] * (out[k] - self.sigma * x[k])
                } else {
                    x[k]
                };
            }
        };
        let rhs: Vec<f64> = v.iter().zip(&self.w).map(|(x, w)| x * w).collect();
        y.fill(0.0);
        let out = cg(&apply, Some(&self.diag), &rhs, y, self.rtol, self.max_iter);
        match out.status {
            KrylovStatus::Converged => Ok(()),
            // stagnation just above the target still leaves a usable direction
            KrylovStatus::MaxIterations if out.relative_residual < 1e-9 => Ok(()),
            _ => Err(StabilityError::NoConvergence {
                iterations: out.iterations,
                residual: out.relative_residual,
            }),
        }
    }
}

fn lanczos(a: &LinearizedOperator, opts: &EigenOptions) -> Result<SpectrumReport, StabilityError> {
    let n = a.len();
    let low = a.spectrum_lower_bound();
    let mut sigma = low - 0.1 * (1.0 + low.abs());
    // deterministic start with no symmetry that a constant or a single mode could hide in
    let mut start: Vec<f64> = (0..n)
        .map(|k| {
            if a.is_free(k) {
                1.0 + 0.1 * ((k as f64) * 0.618_034).sin()
            } else {
                0.0
            }
        })
        .collect();
    let mut total = 0;
    let mut best: Option<SpectrumReport> = None;
    for _ in 0..opts.max_passes {
        let solver = ShiftedSolver::new(a, sigma, opts);
        let pass = lanczos_pass(a, &solver, &start, opts)?;
        total += pass.iterations;
        let mut rep = pass;
        rep.iterations = total;
        if rep.residual <= opts.tol {
            return Ok(rep);
        }
        // restart from the Ritz vector with a shift closer to (but still below) μ₁
        let gap = if rep.gap.is_finite() { rep.gap } else { 1.0 };
        let candidate = rep.mu - rep.residual - 0.1 * gap.max(1e-6);
        if candidate > sigma {
            sigma = candidate;
        }
        start = rep.vector.clone();
        if best.as_ref().map_or(true, |b| rep.residual < b.residual) {
            best = Some(rep);
        }
    }
    let b = best.expect("at least one pass");
    Err(StabilityError::NoConvergence {
        iterations: b.iterations,
        residual: b.residual,
    })
}

fn lanczos_pass(
    a: &LinearizedOperator,
    solver: &ShiftedSolver,
    start: &[f64],
    opts: &EigenOptions,
) -> Result<SpectrumReport, StabilityError> {
    let n = a.len();
    let mut q: Vec<Vec<f64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let s = a.norm(start);
    q.push(start.iter().map(|x| x / s).collect());
    let mut y = vec![0.0; n];
    let mut last: Option<SpectrumReport> = None;
    for j in 0..opts.krylov_dim {
        solver.solve(&q[j], &mut y)?;
        let aj = a.inner(&y, &q[j]);
        alpha.push(aj);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for qi in &q {
                let c = a.inner(&y, qi);
                for k in 0..n {
                    y[k] -= c * qi[k];
                }
            }
        }
        let bj = a.norm(&y);
        let k = j + 1;
        let check = k >= 4 && (k % 4 == 0 || k == opts.krylov_dim || bj < 1e-14);
        if check {
            let rep = ritz(a, &q, &alpha, &beta, solver.sigma);
            if rep.residual <= opts.tol {
                return Ok(SpectrumReport {
                    iterations: k,
                    ..rep
                });
            }
            last = Some(SpectrumReport {
                iterations: k,
                ..rep
            });
        }
        if bj < 1e-14 || k == opts.krylov_dim {
            break;
        }
        beta.push(bj);
        q.push(y.iter().map(|x| x / bj).collect());
    }
    Ok(match last {
        Some(r) => r,
        None => {
            let rep = ritz(a, &q[..alpha.len()], &alpha, &beta, solver.sigma);
            SpectrumReport {
                iterations: alpha.len(),
                ..rep
            }
        }
    })
}

/// Ritz pair for the largest eigenvalue of the projected shift-inverted operator.
fn ritz(
    a: &LinearizedOperator,
    q: &[Vec<f64>],
    alpha: &[f64],
    beta: &[f64],
    sigma: f64,
) -> SpectrumReport {
    let k = alpha.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let top = order[0];
    let n = a.len();
    let mut v = vec![0.0; n];
    for (i, qi) in q.iter().enumerate().take(k) {
        let c = eig.eigenvectors[(i, top)];
        for r in 0..n {
            v[r] += c * qi[r];
        }
    }
    let s = a.norm(&v);
    v.iter_mut().for_each(|x| *x /= s);
    let mu = rayleigh(a, &v);
    let gap = if k > 1 && eig.eigenvalues[order[1]] > 0.0 {
        (sigma + 1.0 / eig.eigenvalues[order[1]]) - mu
    } else {
        f64::INFINITY
    };
    SpectrumReport {
        mu,
        residual: residual_of(a, &v, mu),
        vector: v,
        iterations: k,
        gap,
    }
}
