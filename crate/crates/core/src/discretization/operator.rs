use sprs::{CsMat, TriMat};

use crate::discretization::grid::Grid;
use crate::error::DiscretizationError;
use crate::geometry::{metric_inverse_det, MetricField};

/// Square or rectangular sparse matrix in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    mat: CsMat<f64>,
}

impl SparseOperator {
    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self, DiscretizationError> {
        let mut tri = TriMat::with_capacity((rows, cols), entries.len());
        for &(r, c, v) in entries {
            if r >= rows || c >= cols {
                return Err(DiscretizationError::InvalidGrid(format!(
                    "entry ({r}, {c}) outside a {rows}x{cols} operator"
                )));
            }
            tri.add_triplet(r, c, v);
        }
        Ok(SparseOperator { mat: tri.to_csr() })
    }

    pub fn rows(&self) -> usize {
        self.mat.rows()
    }

    pub fn cols(&self) -> usize {
        self.mat.cols()
    }

    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn matrix(&self) -> &CsMat<f64> {
        &self.mat
    }

    /// Deduplicated `(row, col, value)` entries in row-major order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for (r, row) in self.mat.outer_iterator().enumerate() {
            for (c, &v) in row.iter() {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.mat.get(row, col).copied().unwrap_or(0.0)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows()).map(|r| self.get(r, r)).collect()
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols());
        for (r, row) in self.mat.outer_iterator().enumerate() {
            let mut acc = 0.0;
            for (c, &v) in row.iter() {
                acc += v * x[c];
            }
            y[r] = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows()];
        self.apply(x, &mut y);
        y
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        self.mat
            .outer_iterator()
            .map(|row| row.iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `max |w_r A_rc − w_c A_cr| / max |w_r A_rc|`, zero for a
    /// `w`-self-adjoint operator.
    pub fn weighted_asymmetry(&self, w: &[f64]) -> f64 {
        let mut defect: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (r, row) in self.mat.outer_iterator().enumerate() {
            for (c, &v) in row.iter() {
                let a = w[r] * v;
                let b = w[c] * self.get(c, r);
                defect = defect.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            defect / scale
        }
    }
}

/// Assembles the divergence-form Laplace–Beltrami operator on `grid`.
///
/// Each grid edge `a–b` along axis `k` carries the flux coefficient
/// `κ = (√|g| g^{kk})(mid) / h_k · Π_{j≠k} h_j θ_j`, with `θ_j = ½` on faces of
/// non-periodic axes, and `(Lf)_a = w_a⁻¹ Σ κ (f_b − f_a)`. The result
/// annihilates constants and is self-adjoint for the nodal weights. With a
/// Dirichlet boundary, rows and columns of constrained nodes are dropped.
pub fn assemble_laplacian(grid: &Grid) -> Result<SparseOperator, DiscretizationError> {
    let n = grid.dim();
    let nodes = grid.node_count();
    let metric = grid.metric();
    let h = grid.spacing();
    let w = grid.weights();
    let constant = metric.is_constant();
    let mut cached: Option<(nalgebra::DMatrix<f64>, f64)> = None;
    let mut entries = Vec::with_capacity(nodes * (2 * n + 1));
    let mut diag = vec![0.0; nodes];
    let mut mid = vec![0.0; n];
    for a in 0..nodes {
        for k in 0..n {
            let Some(b) = grid.step(a, k, 1) else {
                continue;
            };
            grid.point_into(a, &mut mid);
            mid[k] += 0.5 * h[k];
            let (ginv, det) = match (&cached, constant) {
                (Some(c), true) => c.clone(),
                _ => {
                    let r = metric_inverse_det(metric, &mid)?;
                    if constant {
                        cached = Some(r.clone());
                    }
                    r
                }
            };
            for i in 0..n {
                for j in 0..n {
                    if i != j && ginv[(i, j)].abs() > 1e-13 * ginv[(i, i)].abs() {
                        return Err(DiscretizationError::OffDiagonalMetric(mid.clone()));
                    }
                }
            }
            let mut kappa = det.sqrt() * ginv[(k, k)] / h[k];
            for j in (0..n).filter(|&j| j != k) {
                kappa *= h[j];
                if grid.on_face(a, j) {
                    kappa *= 0.5;
                }
            }
            if grid.is_constrained(a) || grid.is_constrained(b) {
                // the constrained end is held at zero: keep only the free diagonal part
                if !grid.is_constrained(a) {
                    diag[a] -= kappa / w[a];
                }
                if !grid.is_constrained(b) {
                    diag[b] -= kappa / w[b];
                }
                continue;
            }
            entries.push((a, b, kappa / w[a]));
            entries.push((b, a, kappa / w[b]));
            diag[a] -= kappa / w[a];
            diag[b] -= kappa / w[b];
        }
    }
    for (a, &d) in diag.iter().enumerate() {
        if !grid.is_constrained(a) {
            entries.push((a, a, d));
        }
    }
    SparseOperator::from_triplets(nodes, nodes, &entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::grid::{Boundary, DiscreteScalarField};
    use crate::geometry::ChartSpec;
    use crate::linalg::{sup_norm, weighted_dot};
    use std::f64::consts::PI;

    fn torus(n: usize) -> Grid {
        Grid::new(ChartSpec::standard_torus(2).unwrap(), &[n, n]).unwrap()
    }

    fn sphere(n: usize) -> Grid {
        Grid::new(ChartSpec::sphere_band(1.0, 0.15).unwrap(), &[n, n]).unwrap()
    }

    #[test]
    fn annihilates_constants() {
        for g in [torus(16), sphere(16)] {
            let l = assemble_laplacian(&g).unwrap();
            let y = l.mul(&vec![3.5; g.node_count()]);
            assert!(sup_norm(&y) < 1e-12 * l.inf_norm());
        }
    }

    #[test]
    fn weighted_self_adjoint() {
        for g in [sphere(12), torus(12)] {
            let l = assemble_laplacian(&g).unwrap();
            assert!(l.weighted_asymmetry(g.weights()) < 1e-13);
            let f = g.sample_with(|p| p[0].sin() * (2.0 * p[1]).cos() + p[0]);
            let h = g.sample_with(|p| (p[1] + 0.3).sin() * p[0]);
            let lf = l.mul(f.values());
            let lh = l.mul(h.values());
            let a = weighted_dot(&lf, h.values(), g.weights());
            let b = weighted_dot(f.values(), &lh, g.weights());
            let scale = f.sup_norm() * h.sup_norm() * l.inf_norm();
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn torus_sine_second_order() {
        let err = |n: usize| {
            let g = torus(n);
            let l = assemble_laplacian(&g).unwrap();
            let f = g.sample_with(|p| p[0].sin());
            let lf = l.mul(f.values());
            lf.iter()
                .zip(f.values())
                .map(|(a, b)| (a + b).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 / e2 > 3.6, "ratio {}", e1 / e2);
    }

    #[test]
    fn sphere_cos_theta_interior() {
        let err = |n: usize| {
            let g = sphere(n);
            let l = assemble_laplacian(&g).unwrap();
            let f = g.sample_with(|p| p[0].cos());
            let lf = l.mul(f.values());
            (0..g.node_count())
                .filter(|&a| !g.on_any_face(a))
                .map(|a| (lf[a] + 2.0 * f.values()[a]).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e1 < 1e-2 && e1 / e2 > 3.6, "{e1} {e2}");
    }

    #[test]
    fn dirichlet_drops_constrained_rows() {
        let g = Grid::with_boundary(
            ChartSpec::rectangle(vec![(0.0, PI), (0.0, PI)]).unwrap(),
            &[33, 33],
            Boundary::Dirichlet,
        )
        .unwrap();
        let l = assemble_laplacian(&g).unwrap();
        let f = g.sample_with(|p| p[0].sin() * p[1].sin());
        let lf = l.mul(f.values());
        for a in 0..g.node_count() {
            if g.is_constrained(a) {
                assert_eq!(lf[a], 0.0);
            } else {
                assert!((lf[a] + 2.0 * f.values()[a]).abs() < 5e-3);
            }
        }
        let _ = DiscreteScalarField::zeros(&g);
    }
}
