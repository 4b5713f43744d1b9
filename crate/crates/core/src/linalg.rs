//! Deterministic reductions and matrix-free Krylov solvers.
//!
//! All reductions use a fixed pairwise tree so results are bitwise
//! reproducible regardless of thread count.

const LEAF: usize = 32;

/// Pairwise (tree) summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..n`.
pub fn pairwise_sum_by(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= LEAF {
            return (lo..hi).map(f).sum();
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, f)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), &|i| a[i] * b[i])
}

pub fn weighted_dot(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    pairwise_sum_by(a.len(), &|i| w[i] * a[i] * b[i])
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Why a Krylov iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovStatus {
    Converged,
    MaxIterations,
    /// CG met a direction with `pᵀAp ≤ 0`.
    NonPositiveCurvature,
    /// A recurrence coefficient vanished.
    Breakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOutcome {
    pub status: KrylovStatus,
    pub iterations: usize,
    /// Final true residual `‖b − Ax‖ / ‖b‖`.
    pub relative_residual: f64,
}

impl KrylovOutcome {
    pub fn converged(&self) -> bool {
        self.status == KrylovStatus::Converged
    }
}

fn true_residual(apply: &dyn Fn(&[f64], &mut [f64]), b: &[f64], x: &[f64]) -> f64 {
    let mut ax = vec![0.0; b.len()];
    apply(x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let bn = norm(b);
    if bn == 0.0 {
        norm(&r)
    } else {
        norm(&r) / bn
    }
}

fn precondition(diag: Option<&[f64]>, r: &[f64], z: &mut [f64]) {
    match diag {
        Some(d) => {
            for i in 0..r.len() {
                z[i] = r[i] / d[i];
            }
        }
        None => z.copy_from_slice(r),
    }
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive definite `A`.
pub fn cg(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            status: KrylovStatus::Converged,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    precondition(diag, &r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut status = KrylovStatus::MaxIterations;
    let mut it = 0;
    while it < max_iter {
        if norm(&r) <= rtol * bnorm {
            status = KrylovStatus::Converged;
            break;
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            status = KrylovStatus::NonPositiveCurvature;
            break;
        }
        let alpha = rz / pap;
        axpy(alpha, &p, x);
        axpy(-alpha, &ap, &mut r);
        precondition(diag, &r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    if status == KrylovStatus::MaxIterations && norm(&r) <= rtol * bnorm {
        status = KrylovStatus::Converged;
    }
    KrylovOutcome {
        status,
        iterations: it,
        relative_residual: true_residual(apply, b, x),
    }
}

/// Preconditioned MINRES (Paige–Saunders) for symmetric, possibly indefinite `A`.
///
/// `diag` must be positive. Restarts from the current iterate when the
/// recurrence estimate and the true residual disagree.
pub fn minres(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let mut total = 0;
    let mut outcome = minres_cycle(apply, diag, b, x, rtol, max_iter);
    total += outcome.iterations;
    for _ in 0..4 {
        if outcome.relative_residual <= rtol || total >= max_iter {
            break;
        }
        if outcome.status == KrylovStatus::Breakdown && outcome.iterations == 0 {
            break;
        }
        outcome = minres_cycle(apply, diag, b, x, rtol, max_iter - total);
        total += outcome.iterations;
    }
    let status = if outcome.relative_residual <= rtol {
        KrylovStatus::Converged
    } else if outcome.status == KrylovStatus::Converged {
        KrylovStatus::MaxIterations
    } else {
        outcome.status
    };
    KrylovOutcome {
        status,
        iterations: total,
        relative_residual: outcome.relative_residual,
    }
}

fn minres_cycle(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            status: KrylovStatus::Converged,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut r1 = vec![0.0; n];
    apply(x, &mut r1);
    for i in 0..n {
        r1[i] = b[i] - r1[i];
    }
    let mut y = vec![0.0; n];
    precondition(diag, &r1, &mut y);
    let beta1_sq = dot(&r1, &y);
    if beta1_sq <= 0.0 {
        let status = if beta1_sq == 0.0 {
            KrylovStatus::Converged
        } else {
            KrylovStatus::Breakdown
        };
        return KrylovOutcome {
            status,
            iterations: 0,
            relative_residual: true_residual(apply, b, x),
        };
    }
    let beta1 = beta1_sq.sqrt();
    // stopping is judged on the unpreconditioned scale via the ratio to beta1
    let target = rtol * beta1 * bnorm / norm(&r1);

    let mut r2 = r1.clone();
    let mut oldb = 0.0;
    let mut beta = beta1;
    let mut dbar = 0.0;
    let mut epsln = 0.0;
    let mut phibar = beta1;
    let mut cs = -1.0;
    let mut sn = 0.0;
    let mut w = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut status = KrylovStatus::MaxIterations;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let s = 1.0 / beta;
        for i in 0..n {
            v[i] = s * y[i];
        }
        apply(&v, &mut y);
        if it >= 2 {
            axpy(-beta / oldb, &r1, &mut y);
        }
        let alfa = dot(&v, &y);
        axpy(-alfa / beta, &r2, &mut y);
        std::mem::swap(&mut r1, &mut r2);
        r2.copy_from_slice(&y);
        precondition(diag, &r2, &mut y);
        oldb = beta;
        let bsq = dot(&r2, &y);
        if bsq < 0.0 {
            status = KrylovStatus::Breakdown;
            break;
        }
        beta = bsq.sqrt();

        let oldeps = epsln;
        let delta = cs * dbar + sn * alfa;
        let gbar = sn * dbar - cs * alfa;
        epsln = sn * beta;
        dbar = -cs * beta;
        let gamma = gbar.hypot(beta).max(f64::EPSILON);
        cs = gbar / gamma;
        sn = beta / gamma;
        let phi = cs * phibar;
        phibar *= sn;

        let denom = 1.0 / gamma;
        for i in 0..n {
            let w1 = w2[i];
            w2[i] = w[i];
            w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
            x[i] += phi * w[i];
        }
        if phibar <= target {
            status = KrylovStatus::Converged;
            break;
        }
        if beta == 0.0 {
            status = KrylovStatus::Breakdown;
            break;
        }
    }
    KrylovOutcome {
        status,
        iterations: it,
        relative_residual: true_residual(apply, b, x),
    }
}

/// Jacobi-preconditioned BiCGSTAB for general square `A`.
pub fn bicgstab(
    apply: &dyn Fn(&[f64], &mut [f64]),
    diag: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    rtol: f64,
    max_iter: usize,
) -> KrylovOutcome {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return KrylovOutcome {
            status: KrylovStatus::Converged,
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut phat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut shat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut status = KrylovStatus::MaxIterations;
    let mut it = 0;
    while it < max_iter {
        if norm(&r) <= rtol * bnorm {
            status = KrylovStatus::Converged;
            break;
        }
        it += 1;
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || omega == 0.0 {
            status = KrylovStatus::Breakdown;
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precondition(diag, &p, &mut phat);
        apply(&phat, &mut v);
        let r0v = dot(&r0, &v);
        if r0v == 0.0 {
            status = KrylovStatus::Breakdown;
            break;
        }
        alpha = rho / r0v;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) <= rtol * bnorm {
            axpy(alpha, &phat, x);
            r.copy_from_slice(&s);
            status = KrylovStatus::Converged;
            break;
        }
        precondition(diag, &s, &mut shat);
        apply(&shat, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
    }
    let relative_residual = true_residual(apply, b, x);
    if relative_residual > rtol && status == KrylovStatus::Converged {
        status = KrylovStatus::MaxIterations;
    }
    KrylovOutcome {
        status,
        iterations: it,
        relative_residual,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Dirichlet Laplacian shifted by `shift`: SPD for shift > −λ_min.
    fn laplace_1d(shift: f64) -> impl Fn(&[f64], &mut [f64]) {
        move |x: &[f64], y: &mut [f64]| {
            let n = x.len();
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 2.0 * x[i] - l - r + shift * x[i];
            }
        }
    }

    fn rhs(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7 % 11) as f64) - 5.0).collect()
    }

    #[test]
    fn pairwise_sum_is_order_fixed_and_accurate() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
        assert_eq!(pairwise_sum(&xs).to_bits(), pairwise_sum(&xs).to_bits());
        assert_eq!(dot(&xs, &xs), pairwise_sum_by(xs.len(), &|i| xs[i] * xs[i]));
    }

    #[test]
    fn cg_solves_spd() {
        let a = laplace_1d(0.1);
        let b = rhs(200);
        let mut x = vec![0.0; 200];
        let out = cg(&a, None, &b, &mut x, 1e-12, 2000);
        assert!(out.converged(), "{out:?}");
        assert!(out.relative_residual < 1e-11);
    }

    #[test]
    fn cg_flags_indefinite() {
        let a = laplace_1d(-1.0);
        let b = rhs(50);
        let mut x = vec![0.0; 50];
        let out = cg(&a, None, &b, &mut x, 1e-12, 500);
        assert_eq!(out.status, KrylovStatus::NonPositiveCurvature);
    }

    #[test]
    fn minres_solves_indefinite_with_preconditioner() {
        let a = laplace_1d(-1.0);
        let b = rhs(120);
        let d = vec![1.5; 120];
        let mut x = vec![0.0; 120];
        let out = minres(&a, Some(&d), &b, &mut x, 1e-12, 5000);
        assert!(out.converged(), "{out:?}");
    }

    #[test]
    fn bicgstab_solves_nonsymmetric() {
        let a = |x: &[f64], y: &mut [f64]| {
            let n = x.len();
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 3.0 * x[i] - 1.5 * l - 0.5 * r;
            }
        };
        let b = rhs(100);
        let mut x = vec![0.0; 100];
        let out = bicgstab(&a, None, &b, &mut x, 1e-12, 1000);
        assert!(out.converged(), "{out:?}");
    }
}
