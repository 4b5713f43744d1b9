//! Pointwise metric calculus on a single chart.
//!
//! Everything here is evaluated from analytic metric jets (no numerical
//! differentiation of `g`), so the only error left in a discrete experiment is
//! the one introduced by the grid stencils.
//!
//! Index conventions: `Γ^k_{ij}` is stored at `(k * n + i) * n + j`, the Ricci
//! tensor uses `Ric_ij = ∂_k Γ^k_ij − ∂_j Γ^k_ik + Γ^k_kl Γ^l_ij − Γ^k_jl Γ^l_ik`,
//! which gives `Ric = (n − 1) g` on the unit round sphere.

pub mod chart;
pub mod function;
pub mod metric;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

pub use chart::{ChartSpec, DEFAULT_THETA_MIN};
pub use function::{PlaneWave, ScalarFunction, ScalarJet, TrigSum};
pub use metric::{MetricField, MetricJet, MetricPreset};

use crate::error::GeometryError;

/// Christoffel symbols of the second kind at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelSymbols {
    n: usize,
    data: Vec<f64>,
}

impl ChristoffelSymbols {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Γ^k_{ij}`
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.n + i) * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(g: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(g.clone()).eigenvalues.min()
}

/// Inverse metric and determinant at `p`.
pub fn metric_inverse_det(
    m: &dyn MetricField,
    p: &[f64],
) -> Result<(DMatrix<f64>, f64), GeometryError> {
    check_dim(m, p)?;
    invert_checked(&m.g(p), p)
}

fn invert_checked(g: &DMatrix<f64>, p: &[f64]) -> Result<(DMatrix<f64>, f64), GeometryError> {
    let lam = min_eigenvalue(g);
    let non_pd = || GeometryError::NonPositiveDefinite {
        point: p.to_vec(),
        min_eigenvalue: lam,
    };
    if !(lam > 0.0) {
        return Err(non_pd());
    }
    let det = g.determinant();
    let inv = g.clone().try_inverse().ok_or_else(non_pd)?;
    Ok((inv, det))
}

fn check_dim(m: &dyn MetricField, p: &[f64]) -> Result<(), GeometryError> {
    if p.len() != m.dim() {
        return Err(GeometryError::DimensionMismatch {
            expected: m.dim(),
            got: p.len(),
        });
    }
    Ok(())
}

/// Every metric-derived quantity needed at one point, computed once.
#[derive(Debug, Clone)]
pub struct PointGeometry {
    pub n: usize,
    pub jet: MetricJet,
    pub ginv: DMatrix<f64>,
    pub det: f64,
    /// `∂_l g^{ij}` at index `l`.
    pub dginv: Vec<DMatrix<f64>>,
    pub gamma: ChristoffelSymbols,
    /// `∂_l Γ^k_{ij}` at `((l * n + k) * n + i) * n + j`.
    pub dgamma: Vec<f64>,
}

impl PointGeometry {
    pub fn at(m: &dyn MetricField, p: &[f64]) -> Result<Self, GeometryError> {
        check_dim(m, p)?;
        let jet = m.jet(p);
        let n = jet.dim();
        let (ginv, det) = invert_checked(&jet.g, p)?;
        let dginv: Vec<DMatrix<f64>> = jet.dg.iter().map(|d| -(&ginv * d * &ginv)).collect();

        // S_hij = ∂_i g_hj + ∂_j g_ih − ∂_h g_ij (first-kind symbols, doubled)
        let s = |h: usize, i: usize, j: usize| {
            jet.dg[i][(h, j)] + jet.dg[j][(i, h)] - jet.dg[h][(i, j)]
        };
        let ds = |l: usize, h: usize, i: usize, j: usize| {
            jet.d2(l, i)[(h, j)] + jet.d2(l, j)[(i, h)] - jet.d2(l, h)[(i, j)]
        };

        let mut gamma = vec![0.0; n * n * n];
        for k in 0..n {
            for i in 0..n {
                // fill the lower triangle and mirror so symmetry is exact
                for j in 0..=i {
                    let mut acc = 0.0;
                    for h in 0..n {
                        acc += ginv[(k, h)] * s(h, i, j);
                    }
                    gamma[(k * n + i) * n + j] = 0.5 * acc;
                    gamma[(k * n + j) * n + i] = 0.5 * acc;
                }
            }
        }
        let mut dgamma = vec![0.0; n * n * n * n];
        for l in 0..n {
            for k in 0..n {
                for i in 0..n {
                    for j in 0..=i {
                        let mut acc = 0.0;
                        for h in 0..n {
                            acc += dginv[l][(k, h)] * s(h, i, j) + ginv[(k, h)] * ds(l, h, i, j);
                        }
                        dgamma[((l * n + k) * n + i) * n + j] = 0.5 * acc;
                        dgamma[((l * n + k) * n + j) * n + i] = 0.5 * acc;
                    }
                }
            }
        }
        Ok(PointGeometry {
            n,
            jet,
            ginv,
            det,
            dginv,
            gamma: ChristoffelSymbols { n, data: gamma },
            dgamma,
        })
    }

    pub fn dgamma(&self, l: usize, k: usize, i: usize, j: usize) -> f64 {
        let n = self.n;
        self.dgamma[((l * n + k) * n + i) * n + j]
    }

    pub fn ricci(&self) -> DMatrix<f64> {
        let n = self.n;
        let g = &self.gamma;
        let mut ric = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.dgamma(k, k, i, j) - self.dgamma(j, k, i, k);
                    for l in 0..n {
                        acc += g.get(k, k, l) * g.get(l, i, j) - g.get(k, j, l) * g.get(l, i, k);
                    }
                }
                ric[(i, j)] = acc;
                ric[(j, i)] = acc;
            }
        }
        ric
    }

    /// `∂_l ∂_m g^{ij}` at index `l * n + m`.
    pub fn d2ginv(&self) -> Vec<DMatrix<f64>> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for l in 0..n {
            for m in 0..n {
                let t = &self.dginv[m] * &self.jet.dg[l] * &self.ginv
                    + &self.ginv * self.jet.d2(l, m) * &self.ginv
                    + &self.ginv * &self.jet.dg[l] * &self.dginv[m];
                out.push(-t);
            }
        }
        out
    }

    /// Contravariant gradient `g^{ij} ∂_j f`.
    pub fn raise(&self, df: &[f64]) -> DVector<f64> {
        &self.ginv * DVector::from_column_slice(df)
    }

    /// `g^{ij} a_i b_j`
    pub fn co_dot(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += self.ginv[(i, j)] * a[i] * b[j];
            }
        }
        acc
    }

    /// `g_{ij} v^i w^j`
    pub fn contra_dot(&self, v: &[f64], w: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                acc += self.jet.g[(i, j)] * v[i] * w[j];
            }
        }
        acc
    }

    /// Covariant Hessian `∂_ij f − Γ^k_ij ∂_k f` from coordinate partials.
    pub fn hessian_from_partials(&self, df: &[f64], d2f: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut h = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut v = 0.5 * (d2f[(i, j)] + d2f[(j, i)]);
                for k in 0..n {
                    v -= self.gamma.get(k, i, j) * df[k];
                }
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        h
    }

    /// Divergence form `|g|^{-1/2} ∂_i(|g|^{1/2} g^{ij} ∂_j f)` expanded with
    /// `∂_i ln|g|^{1/2} = ½ g^{ab} ∂_i g_ab`.
    pub fn divergence_laplacian(&self, df: &[f64], d2f: &DMatrix<f64>) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let dlog = 0.5 * self.trace(&self.jet.dg[i]);
            for j in 0..n {
                acc += self.ginv[(i, j)] * d2f[(i, j)]
                    + (self.dginv[i][(i, j)] + self.ginv[(i, j)] * dlog) * df[j];
            }
        }
        acc
    }

    /// `g^{ia} g^{jb} A_ij B_ab`
    pub fn tensor_dot(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let ra = &self.ginv * a * &self.ginv;
        ra.component_mul(b).sum()
    }

    /// `g^{ij} A_ij`
    pub fn trace(&self, a: &DMatrix<f64>) -> f64 {
        self.ginv.component_mul(a).sum()
    }
}

pub fn christoffel(m: &dyn MetricField, p: &[f64]) -> Result<ChristoffelSymbols, GeometryError> {
    Ok(PointGeometry::at(m, p)?.gamma)
}

pub fn ricci(m: &dyn MetricField, p: &[f64]) -> Result<DMatrix<f64>, GeometryError> {
    Ok(PointGeometry::at(m, p)?.ricci())
}

/// Contravariant gradient and its squared length `|∇_g f|²`.
pub fn gradient(
    m: &dyn MetricField,
    f: &dyn ScalarFunction,
    p: &[f64],
) -> Result<(DVector<f64>, f64), GeometryError> {
    let pg = PointGeometry::at(m, p)?;
    let jet = f.jet(p);
    let v = pg.raise(&jet.grad);
    let norm2 = pg.co_dot(&jet.grad, &jet.grad).max(0.0);
    Ok((v, norm2))
}

pub fn laplace_beltrami(
    m: &dyn MetricField,
    f: &dyn ScalarFunction,
    p: &[f64],
) -> Result<f64, GeometryError> {
    let pg = PointGeometry::at(m, p)?;
    Ok(laplacian_at(&pg, &f.jet(p)))
}

fn laplacian_at(pg: &PointGeometry, jet: &ScalarJet) -> f64 {
    pg.divergence_laplacian(&jet.grad, &jet.hess)
}

pub fn hessian(
    m: &dyn MetricField,
    f: &dyn ScalarFunction,
    p: &[f64],
) -> Result<DMatrix<f64>, GeometryError> {
    let pg = PointGeometry::at(m, p)?;
    let jet = f.jet(p);
    Ok(pg.hessian_from_partials(&jet.grad, &jet.hess))
}

/// The four terms of the Bochner–Weitzenböck identity at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BochnerTerms {
    /// `½ Δ_g |∇_g f|²`
    pub half_lap_grad_sq: f64,
    /// `|H_f|²`
    pub hessian_sq: f64,
    /// `∇_g Δ_g f · ∇_g f`
    pub grad_lap_dot_grad: f64,
    /// `Ric_g(∇_g f, ∇_g f)`
    pub ricci_term: f64,
}

impl BochnerTerms {
    pub fn residual(&self) -> f64 {
        self.half_lap_grad_sq - (self.hessian_sq + self.grad_lap_dot_grad + self.ricci_term)
    }
}

pub fn bochner_terms(
    m: &dyn MetricField,
    f: &dyn ScalarFunction,
    p: &[f64],
) -> Result<BochnerTerms, GeometryError> {
    let pg = PointGeometry::at(m, p)?;
    let jet = f.jet(p);
    let n = pg.n;
    let fi = &jet.grad;
    let fij = &jet.hess;
    let d2ginv = pg.d2ginv();

    // h = g^{ij} f_i f_j and its first and second partials
    let mut dh = vec![0.0; n];
    let mut d2h = DMatrix::zeros(n, n);
    for l in 0..n {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += pg.dginv[l][(i, j)] * fi[i] * fi[j]
                    + 2.0 * pg.ginv[(i, j)] * fij[(i, l)] * fi[j];
            }
        }
        dh[l] = acc;
        for mm in 0..n {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += d2ginv[l * n + mm][(i, j)] * fi[i] * fi[j]
                        + 2.0 * pg.dginv[l][(i, j)] * fij[(i, mm)] * fi[j]
                        + 2.0 * pg.dginv[mm][(i, j)] * fij[(i, l)] * fi[j]
                        + 2.0 * pg.ginv[(i, j)] * jet.d3(i, l, mm) * fi[j]
                        + 2.0 * pg.ginv[(i, j)] * fij[(i, l)] * fij[(j, mm)];
                }
            }
            d2h[(l, mm)] = acc;
        }
    }
    let lap_h = pg.divergence_laplacian(&dh, &d2h);

    // ∂_l Δf with Δf = g^{ij}(f_ij − Γ^k_ij f_k)
    let mut dlap = vec![0.0; n];
    for (l, out) in dlap.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut cov = fij[(i, j)];
                let mut dcov = jet.d3(i, j, l);
                for k in 0..n {
                    cov -= pg.gamma.get(k, i, j) * fi[k];
                    dcov -= pg.dgamma(l, k, i, j) * fi[k] + pg.gamma.get(k, i, j) * fij[(k, l)];
                }
                acc += pg.dginv[l][(i, j)] * cov + pg.ginv[(i, j)] * dcov;
            }
        }
        *out = acc;
    }

    let hess = pg.hessian_from_partials(fi, fij);
    let grad_up = pg.raise(fi);
    let ric = pg.ricci();
    let ricci_term = (grad_up.transpose() * &ric * &grad_up)[(0, 0)];
    Ok(BochnerTerms {
        half_lap_grad_sq: 0.5 * lap_h,
        hessian_sq: pg.tensor_dot(&hess, &hess),
        grad_lap_dot_grad: pg.co_dot(&dlap, fi),
        ricci_term,
    })
}

/// `½Δ|∇f|² − (|H_f|² + ∇Δf·∇f + Ric(∇f, ∇f))`, zero up to roundoff for smooth `f`.
pub fn bochner_residual(
    m: &dyn MetricField,
    f: &dyn ScalarFunction,
    p: &[f64],
) -> Result<f64, GeometryError> {
    Ok(bochner_terms(m, f, p)?.residual())
}

/// Both sides of `|∇|∇f||² ≤ |H_f|²` at a point where `∇f ≠ 0`, from the gradient and
/// covariant Hessian: `∇|∇f| = H_f(∇f, ·) / |∇f|`.
pub fn kato_sides(pg: &PointGeometry, df: &[f64], hess: &DMatrix<f64>) -> (f64, f64) {
    let grad_sq = pg.co_dot(df, df);
    let rhs = pg.tensor_dot(hess, hess);
    if grad_sq <= 0.0 {
        return (0.0, rhs);
    }
    // covector H_ij (∇f)^j
    let up = pg.raise(df);
    let w: Vec<f64> = (0..pg.n)
        .map(|i| (0..pg.n).map(|j| hess[(i, j)] * up[j]).sum())
        .collect();
    (pg.co_dot(&w, &w) / grad_sq, rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// A non-diagonal, position-dependent 2D metric for exercising general index paths.
    struct Skewed;

    impl MetricField for Skewed {
        fn dim(&self) -> usize {
            2
        }
        fn jet(&self, p: &[f64]) -> MetricJet {
            // g = [[2 + sin x, 0.3 cos y], [0.3 cos y, 1.5 + 0.5 sin(x + y)]]
            let (x, y) = (p[0], p[1]);
            let g = DMatrix::from_row_slice(
                2,
                2,
                &[
                    2.0 + x.sin(),
                    0.3 * y.cos(),
                    0.3 * y.cos(),
                    1.5 + 0.5 * (x + y).sin(),
                ],
            );
            let c = 0.5 * (x + y).cos();
            let s = 0.5 * (x + y).sin();
            let dx = DMatrix::from_row_slice(2, 2, &[x.cos(), 0.0, 0.0, c]);
            let dy = DMatrix::from_row_slice(2, 2, &[0.0, -0.3 * y.sin(), -0.3 * y.sin(), c]);
            let dxx = DMatrix::from_row_slice(2, 2, &[-x.sin(), 0.0, 0.0, -s]);
            let dxy = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -s]);
            let dyy = DMatrix::from_row_slice(2, 2, &[0.0, -0.3 * y.cos(), -0.3 * y.cos(), -s]);
            MetricJet {
                g,
                dg: vec![dx, dy],
                d2g: vec![dxx, dxy.clone(), dxy, dyy],
            }
        }
    }

    #[test]
    fn sphere_inverse_at_equator() {
        let m = MetricPreset::Sphere { radius: 1.0 };
        let (inv, det) = metric_inverse_det(&m, &[PI / 2.0, 0.0]).unwrap();
        assert!((inv - DMatrix::identity(2, 2)).abs().max() < 1e-15);
        assert!((det - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_positive_definite_is_rejected() {
        let m = MetricPreset::Sphere { radius: 1.0 };
        let err = metric_inverse_det(&m, &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, GeometryError::NonPositiveDefinite { .. }));
        assert!(christoffel(&m, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn sphere_christoffel_closed_form() {
        let m = MetricPreset::Sphere { radius: 1.0 };
        let th: f64 = 0.8;
        let gm = christoffel(&m, &[th, 2.0]).unwrap();
        assert!((gm.get(0, 1, 1) + th.sin() * th.cos()).abs() < 1e-14);
        assert!((gm.get(1, 0, 1) - th.cos() / th.sin()).abs() < 1e-14);
        assert!((gm.get(1, 1, 0) - th.cos() / th.sin()).abs() < 1e-14);
        for (k, i, j) in [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 1, 1)] {
            assert_eq!(gm.get(k, i, j), 0.0);
        }
    }

    #[test]
    fn sphere_ricci_scales_with_radius() {
        for (a, factor) in [(1.0, 1.0), (2.0, 0.25)] {
            let m = MetricPreset::Sphere { radius: a };
            let p = [1.1, 0.3];
            let ric = ricci(&m, &p).unwrap();
            assert!((ric - m.g(&p) * factor).abs().max() < 1e-13);
        }
    }

    #[test]
    fn warped_torus_gauss_curvature() {
        // K = −w''/w and Ric = K g in 2D
        let (b, c) = (3.0, 1.0);
        let m = MetricPreset::Warped { base: b, amp: c };
        let th: f64 = 0.7;
        let k = c * th.cos() / (b + c * th.cos());
        let ric = ricci(&m, &[th, 0.0]).unwrap();
        assert!((ric - m.g(&[th, 0.0]) * k).abs().max() < 1e-13);
    }

    #[test]
    fn christoffel_general_metric_matches_finite_difference_definition() {
        // Γ^k_ij = ½ g^{kh}(∂_i g_hj + ∂_j g_ih − ∂_h g_ij) with g partials by
        // centered differences of g itself
        let m = Skewed;
        let p = [0.3, 1.2];
        let gm = christoffel(&m, &p).unwrap();
        let h = 1e-6;
        let dg: Vec<DMatrix<f64>> = (0..2)
            .map(|k| {
                let mut a = p;
                let mut b = p;
                a[k] += h;
                b[k] -= h;
                (m.g(&a) - m.g(&b)) / (2.0 * h)
            })
            .collect();
        let ginv = m.g(&p).try_inverse().unwrap();
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut v = 0.0;
                    for hh in 0..2 {
                        v += 0.5
                            * ginv[(k, hh)]
                            * (dg[i][(hh, j)] + dg[j][(i, hh)] - dg[hh][(i, j)]);
                    }
                    assert!((v - gm.get(k, i, j)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn general_metric_ricci_is_symmetric_and_bochner_holds() {
        let m = Skewed;
        let f = TrigSum::random_family(2, 3, 2, 11);
        for (t, p) in [[0.3, 1.2], [2.0, -0.4], [-1.0, 0.5]].iter().enumerate() {
            let ric = ricci(&m, p).unwrap();
            assert!((ric.clone() - ric.transpose()).abs().max() < 1e-14);
            // in 2D, Ric = K g
            let g = m.g(p);
            let k = ric[(0, 0)] / g[(0, 0)];
            assert!((ric - g * k).abs().max() < 1e-10);
            let r = bochner_residual(&m, &f[t], p).unwrap();
            assert!(r.abs() < 1e-10, "residual {r}");
        }
    }

    #[test]
    fn gradient_laplacian_hessian_on_sphere() {
        let m = MetricPreset::Sphere { radius: 1.0 };
        let f = TrigSum::cos_axis(2, 0);
        let p = [PI / 2.0, 0.0];
        let (v, n2) = gradient(&m, &f, &p).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-15 && v[1].abs() < 1e-15);
        assert!((n2 - 1.0).abs() < 1e-15);
        for th in [0.4, 1.3, 2.5] {
            let q = [th, 0.7];
            let lap = laplace_beltrami(&m, &f, &q).unwrap();
            assert!((lap + 2.0 * th.cos()).abs() < 1e-13);
            // H = diag(−cosθ, −sin²θ cosθ) for cosθ on the unit sphere
            let h = hessian(&m, &f, &q).unwrap();
            assert!((h[(0, 0)] + th.cos()).abs() < 1e-14);
            assert!((h[(1, 1)] + th.sin().powi(2) * th.cos()).abs() < 1e-14);
            assert!(h[(0, 1)].abs() < 1e-15);
        }
        assert!(bochner_residual(&m, &f, &[1.0, 0.2]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn flat_torus_sin_x() {
        let m = MetricPreset::Flat { dim: 2, scale: 1.0 };
        let f = TrigSum::sin_axis(2, 0);
        let (v, n2) = gradient(&m, &f, &[0.0, 0.0]).unwrap();
        assert_eq!((v[0], v[1], n2), (1.0, 0.0, 1.0));
        let x: f64 = 0.9;
        assert!((laplace_beltrami(&m, &f, &[x, 0.1]).unwrap() + x.sin()).abs() < 1e-15);
        let h = hessian(&m, &f, &[PI / 2.0, 0.0]).unwrap();
        assert!(
            (h - DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 0.0])))
                .abs()
                .max()
                < 1e-15
        );
        let t = bochner_terms(&m, &f, &[x, 0.0]).unwrap();
        assert!((t.half_lap_grad_sq + (2.0 * x).cos()).abs() < 1e-14);
        assert!(t.residual().abs() < 1e-14);
    }

    #[test]
    fn constant_function_has_vanishing_terms() {
        let m = MetricPreset::Sphere { radius: 1.3 };
        let f = TrigSum::constant(2, 4.0);
        let p = [1.0, 1.0];
        assert_eq!(laplace_beltrami(&m, &f, &p).unwrap(), 0.0);
        assert_eq!(hessian(&m, &f, &p).unwrap().abs().max(), 0.0);
        assert_eq!(gradient(&m, &f, &p).unwrap().1, 0.0);
        assert_eq!(bochner_residual(&m, &f, &p).unwrap(), 0.0);
    }

    #[test]
    fn kato_inequality_example() {
        // f = sin x + sin y at (π/4, π/2): both sides 0.5 and 1.5
        let m = MetricPreset::Flat { dim: 2, scale: 1.0 };
        let f = TrigSum::sin_axis(2, 0).plus(TrigSum::sin_axis(2, 1));
        let p = [PI / 4.0, PI / 2.0];
        let pg = PointGeometry::at(&m, &p).unwrap();
        let jet = f.jet(&p);
        let h = pg.hessian_from_partials(&jet.grad, &jet.hess);
        let (lhs, rhs) = kato_sides(&pg, &jet.grad, &h);
        assert!((lhs - 0.5).abs() < 1e-14 && (rhs - 1.5).abs() < 1e-14);
    }
}
