use nalgebra::DMatrix;

use crate::discretization::grid::{DiscreteScalarField, Grid};
use crate::error::DiscretizationError;
use crate::geometry::{metric_inverse_det, MetricField, PointGeometry};
use crate::linalg::pairwise_sum_by;

/// `∫ f dV_g` by the nodal rule `Σ w_a f_a`, summed pairwise.
pub fn integrate(grid: &Grid, f: &DiscreteScalarField) -> Result<f64, DiscretizationError> {
    grid.check_field(f)?;
    Ok(integrate_values(grid, f.values()))
}

pub(crate) fn integrate_values(grid: &Grid, f: &[f64]) -> f64 {
    let w = grid.weights();
    pairwise_sum_by(f.len(), &|a| w[a] * f[a])
}

/// `∂_axis f` at `node`: centered in the interior and on periodic axes,
/// second-order one-sided on non-periodic faces.
pub fn partial(grid: &Grid, f: &[f64], node: usize, axis: usize) -> f64 {
    let h = grid.spacing()[axis];
    match (grid.step(node, axis, -1), grid.step(node, axis, 1)) {
        (Some(m), Some(p)) => (f[p] - f[m]) / (2.0 * h),
        (None, Some(p)) => {
            let p2 = grid.step(node, axis, 2).unwrap_or(p);
            (-3.0 * f[node] + 4.0 * f[p] - f[p2]) / (2.0 * h)
        }
        (Some(m), None) => {
            let m2 = grid.step(node, axis, -2).unwrap_or(m);
            (3.0 * f[node] - 4.0 * f[m] + f[m2]) / (2.0 * h)
        }
        (None, None) => 0.0,
    }
}

/// All first partials, one field per axis.
pub fn partials(grid: &Grid, f: &[f64]) -> Vec<Vec<f64>> {
    (0..grid.dim())
        .map(|k| (0..f.len()).map(|a| partial(grid, f, a, k)).collect())
        .collect()
}

/// `∂_axis² f` at `node`; one-sided four-point formula on non-periodic faces.
pub fn second_partial(grid: &Grid, f: &[f64], node: usize, axis: usize) -> f64 {
    let h2 = grid.spacing()[axis].powi(2);
    let s = |o: isize| grid.step(node, axis, o).map(|b| f[b]);
    match (s(-1), s(1)) {
        (Some(m), Some(p)) => (p - 2.0 * f[node] + m) / h2,
        (None, Some(p)) => match (s(2), s(3)) {
            (Some(p2), Some(p3)) => (2.0 * f[node] - 5.0 * p + 4.0 * p2 - p3) / h2,
            _ => 0.0,
        },
        (Some(m), None) => match (s(-2), s(-3)) {
            (Some(m2), Some(m3)) => (2.0 * f[node] - 5.0 * m + 4.0 * m2 - m3) / h2,
            _ => 0.0,
        },
        (None, None) => 0.0,
    }
}

/// Coordinate second partials `∂_i∂_j f`, stored at index `i * n + j`.
/// Mixed entries difference the first-partial fields.
pub fn second_partials(grid: &Grid, f: &[f64]) -> Vec<Vec<f64>> {
    let n = grid.dim();
    let d1 = partials(grid, f);
    let mut out = vec![Vec::new(); n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                out[i * n + i] = (0..f.len())
                    .map(|a| second_partial(grid, f, a, i))
                    .collect();
            } else if j > i {
                let a: Vec<f64> = (0..f.len()).map(|a| partial(grid, &d1[j], a, i)).collect();
                let b: Vec<f64> = (0..f.len()).map(|a| partial(grid, &d1[i], a, j)).collect();
                out[i * n + j] = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            out[i * n + j] = out[j * n + i].clone();
        }
    }
    out
}

/// Nodal `g^{ij} ∂_i f ∂_j f` with the difference formulas of [`partial`].
pub fn grad_norm_sq(
    grid: &Grid,
    f: &DiscreteScalarField,
) -> Result<DiscreteScalarField, DiscretizationError> {
    grid.check_field(f)?;
    let n = grid.dim();
    let d = partials(grid, f.values());
    let metric = grid.metric();
    let fixed = if metric.is_constant() {
        Some(metric_inverse_det(metric, &grid.point(0))?.0)
    } else {
        None
    };
    let mut p = vec![0.0; n];
    let mut out = Vec::with_capacity(f.len());
    for a in 0..f.len() {
        let ginv = match &fixed {
            Some(g) => g.clone(),
            None => {
                grid.point_into(a, &mut p);
                metric_inverse_det(metric, &p)?.0
            }
        };
        let mut s: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += ginv[(i, j)] * d[i][a] * d[j][a];
            }
        }
        out.push(s.max(0.0));
    }
    Ok(DiscreteScalarField::from_values(out))
}

/// Nodal covariant data of a discrete scalar: coordinate gradient, covariant
/// Hessian `∂_ij f − Γ^k_ij ∂_k f`, and the metric at the node.
#[derive(Debug, Clone)]
pub struct NodalDerivatives {
    pub df: Vec<f64>,
    pub hess: DMatrix<f64>,
    pub geometry: PointGeometry,
}

/// Difference-based derivatives of `f` at every node, with analytic geometry.
pub fn nodal_derivatives(
    grid: &Grid,
    f: &[f64],
) -> Result<Vec<NodalDerivatives>, DiscretizationError> {
    let n = grid.dim();
    let d1 = partials(grid, f);
    let d2 = second_partials(grid, f);
    let mut out = Vec::with_capacity(f.len());
    let mut p = vec![0.0; n];
    for a in 0..f.len() {
        grid.point_into(a, &mut p);
        let geometry = PointGeometry::at(grid.metric(), &p)?;
        let df: Vec<f64> = (0..n).map(|k| d1[k][a]).collect();
        let d2f = DMatrix::from_fn(n, n, |i, j| d2[i * n + j][a]);
        let hess = geometry.hessian_from_partials(&df, &d2f);
        out.push(NodalDerivatives { df, hess, geometry });
    }
    Ok(out)
}
