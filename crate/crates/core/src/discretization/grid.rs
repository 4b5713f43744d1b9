use crate::error::DiscretizationError;
use crate::geometry::{metric_inverse_det, ChartSpec, MetricField, MetricPreset, ScalarFunction};

/// Treatment of the faces of non-periodic axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Zero flux through the face (default).
    #[default]
    Neumann,
    /// Boundary nodes are held at zero and eliminated from the operator.
    Dirichlet,
}

/// Tensor-product grid over a chart.
///
/// Nodes are numbered row-major (last axis fastest). Periodic axes carry
/// `N` nodes with spacing `L/N` and no duplicated endpoint; non-periodic axes
/// carry `N` nodes including both endpoints, spacing `L/(N−1)`.
#[derive(Debug, Clone)]
pub struct Grid {
    chart: ChartSpec,
    counts: Vec<usize>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    boundary: Boundary,
    sqrt_det: Vec<f64>,
    weights: Vec<f64>,
    constrained: Vec<bool>,
}

impl Grid {
    pub fn new(chart: ChartSpec, counts: &[usize]) -> Result<Self, DiscretizationError> {
        Self::with_boundary(chart, counts, Boundary::Neumann)
    }

    pub fn with_boundary(
        chart: ChartSpec,
        counts: &[usize],
        boundary: Boundary,
    ) -> Result<Self, DiscretizationError> {
        chart.validate()?;
        let n = chart.dim();
        if counts.len() != n {
            return Err(DiscretizationError::InvalidGrid(format!(
                "{} node counts for a {n}-dimensional chart",
                counts.len()
            )));
        }
        if let Some(k) = counts.iter().position(|&c| c < 4) {
            return Err(DiscretizationError::InvalidGrid(format!(
                "axis {k} has {} nodes, at least 4 are required",
                counts[k]
            )));
        }
        let spacing: Vec<f64> = (0..n)
            .map(|k| {
                let len = chart.length(k);
                if chart.periodic[k] {
                    len / counts[k] as f64
                } else {
                    len / (counts[k] - 1) as f64
                }
            })
            .collect();
        let mut strides = vec![1; n];
        for k in (0..n.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * counts[k + 1];
        }
        let mut grid = Grid {
            chart,
            counts: counts.to_vec(),
            spacing,
            strides,
            boundary,
            sqrt_det: Vec::new(),
            weights: Vec::new(),
            constrained: Vec::new(),
        };
        let total = grid.node_count();
        let mut sqrt_det = Vec::with_capacity(total);
        let mut weights = Vec::with_capacity(total);
        let mut constrained = Vec::with_capacity(total);
        let mut p = vec![0.0; n];
        let cell: f64 = grid.spacing.iter().product();
        for a in 0..total {
            grid.point_into(a, &mut p);
            let (_, det) = metric_inverse_det(&grid.chart.metric, &p)?;
            let s = det.sqrt();
            let mut w = s * cell;
            let mut on_face = false;
            for k in 0..n {
                if grid.on_face(a, k) {
                    w *= 0.5;
                    on_face = true;
                }
            }
            sqrt_det.push(s);
            weights.push(w);
            constrained.push(boundary == Boundary::Dirichlet && on_face);
        }
        grid.sqrt_det = sqrt_det;
        grid.weights = weights;
        grid.constrained = constrained;
        Ok(grid)
    }

    pub fn chart(&self) -> &ChartSpec {
        &self.chart
    }

    pub fn metric(&self) -> &MetricPreset {
        &self.chart.metric
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn node_count(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn index_along(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.counts[axis]
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dim()).map(|k| self.index_along(node, k)).collect()
    }

    pub fn node_at(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coord(&self, node: usize, axis: usize) -> f64 {
        self.chart.ranges[axis].0 + self.index_along(node, axis) as f64 * self.spacing[axis]
    }

    pub fn point(&self, node: usize) -> Vec<f64> {
        (0..self.dim()).map(|k| self.coord(node, k)).collect()
    }

    pub fn point_into(&self, node: usize, out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.coord(node, k);
        }
    }

    /// Node `offset` steps from `node` along `axis`; wraps on periodic axes,
    /// `None` past a non-periodic face.
    pub fn step(&self, node: usize, axis: usize, offset: isize) -> Option<usize> {
        let i = self.index_along(node, axis) as isize;
        let n = self.counts[axis] as isize;
        let j = i + offset;
        let j = if self.chart.periodic[axis] {
            j.rem_euclid(n)
        } else if (0..n).contains(&j) {
            j
        } else {
            return None;
        };
        Some((node as isize + (j - i) * self.strides[axis] as isize) as usize)
    }

    /// True when `node` sits on a face of the non-periodic `axis`.
    pub fn on_face(&self, node: usize, axis: usize) -> bool {
        if self.chart.periodic[axis] {
            return false;
        }
        let i = self.index_along(node, axis);
        i == 0 || i + 1 == self.counts[axis]
    }

    pub fn on_any_face(&self, node: usize) -> bool {
        (0..self.dim()).any(|k| self.on_face(node, k))
    }

    /// Nodes held at zero by a Dirichlet boundary.
    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    pub fn is_constrained(&self, node: usize) -> bool {
        self.constrained[node]
    }

    pub fn has_constraints(&self) -> bool {
        self.constrained.iter().any(|&c| c)
    }

    /// `√|g|` at every node.
    pub fn sqrt_det(&self) -> &[f64] {
        &self.sqrt_det
    }

    /// Nodal quadrature weights `√|g| Π h_k`, halved per non-periodic face the
    /// node lies on (exact for constants on flat charts).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn volume(&self) -> f64 {
        crate::linalg::pairwise_sum(&self.weights)
    }

    /// Smallest metric edge length `√g_kk h_k` over nodes and axes.
    pub fn min_metric_spacing(&self) -> f64 {
        let mut p = vec![0.0; self.dim()];
        let mut best = f64::INFINITY;
        let nodes: Box<dyn Iterator<Item = usize>> = if self.metric().is_constant() {
            Box::new(std::iter::once(0))
        } else {
            Box::new(0..self.node_count())
        };
        for a in nodes {
            self.point_into(a, &mut p);
            let g = self.metric().g(&p);
            for k in 0..self.dim() {
                best = best.min(g[(k, k)].sqrt() * self.spacing[k]);
            }
        }
        best
    }

    /// Node closest to `p` in coordinates (clamped to the grid).
    pub fn nearest_node(&self, p: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.dim())
            .map(|k| {
                let t = ((p[k] - self.chart.ranges[k].0) / self.spacing[k]).round() as isize;
                let n = self.counts[k] as isize;
                if self.chart.periodic[k] {
                    t.rem_euclid(n) as usize
                } else {
                    t.clamp(0, n - 1) as usize
                }
            })
            .collect();
        self.node_at(&idx)
    }

    /// Node at the centre of the grid.
    pub fn center_node(&self) -> usize {
        let idx: Vec<usize> = self.counts.iter().map(|c| c / 2).collect();
        self.node_at(&idx)
    }

    /// Samples an analytic scalar at every node.
    pub fn sample(&self, f: &dyn ScalarFunction) -> DiscreteScalarField {
        self.sample_with(|p| f.value(p))
    }

    pub fn sample_with(&self, f: impl Fn(&[f64]) -> f64) -> DiscreteScalarField {
        let mut p = vec![0.0; self.dim()];
        let values = (0..self.node_count())
            .map(|a| {
                self.point_into(a, &mut p);
                f(&p)
            })
            .collect();
        DiscreteScalarField { values }
    }

    pub(crate) fn check_field(&self, f: &DiscreteScalarField) -> Result<(), DiscretizationError> {
        if f.len() != self.node_count() {
            return Err(DiscretizationError::FieldSize {
                expected: self.node_count(),
                got: f.len(),
            });
        }
        Ok(())
    }
}

/// Nodal values of a scalar on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScalarField {
    values: Vec<f64>,
}

impl DiscreteScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, DiscretizationError> {
        if values.len() != grid.node_count() {
            return Err(DiscretizationError::FieldSize {
                expected: grid.node_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(DiscretizationError::NonFinite(i));
        }
        Ok(DiscreteScalarField { values })
    }

    /// Wraps values without grid validation.
    pub fn from_values(values: Vec<f64>) -> Self {
        DiscreteScalarField { values }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        DiscreteScalarField {
            values: vec![c; grid.node_count()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        crate::linalg::sup_norm(&self.values)
    }

    /// `max − min`
    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if self.values.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DiscreteScalarField {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn periodic_axes_have_no_duplicate_endpoint() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[8, 4]).unwrap();
        assert_eq!(g.node_count(), 32);
        assert!((g.spacing()[0] - 2.0 * PI / 8.0).abs() < 1e-15);
        let last = g.node_at(&[7, 3]);
        assert!(g.coord(last, 0) < 2.0 * PI - 1e-9);
        assert_eq!(g.step(last, 0, 1), Some(g.node_at(&[0, 3])));
        assert_eq!(g.step(0, 1, -1), Some(g.node_at(&[0, 3])));
    }

    #[test]
    fn non_periodic_axes_include_endpoints() {
        let g = Grid::new(
            ChartSpec::rectangle(vec![(0.0, 1.0), (0.0, 2.0)]).unwrap(),
            &[5, 9],
        )
        .unwrap();
        assert_eq!(g.spacing(), &[0.25, 0.25]);
        let corner = g.node_at(&[4, 8]);
        assert_eq!(g.point(corner), vec![1.0, 2.0]);
        assert_eq!(g.step(corner, 0, 1), None);
        assert!((g.volume() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_small_counts_and_bad_fields() {
        let chart = ChartSpec::standard_torus(2).unwrap();
        assert!(Grid::new(chart.clone(), &[3, 8]).is_err());
        assert!(Grid::new(chart.clone(), &[8]).is_err());
        let g = Grid::new(chart, &[4, 4]).unwrap();
        assert!(DiscreteScalarField::new(&g, vec![0.0; 15]).is_err());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert_eq!(
            DiscreteScalarField::new(&g, v),
            Err(DiscretizationError::NonFinite(3))
        );
    }

    #[test]
    fn dirichlet_marks_faces() {
        let g = Grid::with_boundary(
            ChartSpec::sphere_band(1.0, 0.2).unwrap(),
            &[6, 8],
            Boundary::Dirichlet,
        )
        .unwrap();
        let n = g.constrained().iter().filter(|&&c| c).count();
        assert_eq!(n, 2 * 8);
    }
}
