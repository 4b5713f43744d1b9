use std::f64::consts::PI;

use crate::error::GeometryError;
use crate::geometry::metric::{MetricField, MetricPreset};

/// Default polar cut-off for sphere charts, in radians.
pub const DEFAULT_THETA_MIN: f64 = 0.15;

/// A single coordinate chart: box-shaped parameter domain plus metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSpec {
    pub name: String,
    pub ranges: Vec<(f64, f64)>,
    pub periodic: Vec<bool>,
    pub metric: MetricPreset,
}

impl ChartSpec {
    pub fn new(
        name: impl Into<String>,
        ranges: Vec<(f64, f64)>,
        periodic: Vec<bool>,
        metric: MetricPreset,
    ) -> Result<Self, GeometryError> {
        let chart = ChartSpec {
            name: name.into(),
            ranges,
            periodic,
            metric,
        };
        chart.validate()?;
        Ok(chart)
    }

    /// Flat torus `[0, L_k)` with all axes periodic.
    pub fn flat_torus(lengths: &[f64]) -> Result<Self, GeometryError> {
        Self::new(
            "flat_torus",
            lengths.iter().map(|&l| (0.0, l)).collect(),
            vec![true; lengths.len()],
            MetricPreset::Flat {
                dim: lengths.len(),
                scale: 1.0,
            },
        )
    }

    /// The standard `[0, 2π)^n` flat torus.
    pub fn standard_torus(dim: usize) -> Result<Self, GeometryError> {
        Self::flat_torus(&vec![2.0 * PI; dim])
    }

    /// Flat box with non-periodic axes.
    pub fn rectangle(ranges: Vec<(f64, f64)>) -> Result<Self, GeometryError> {
        let dim = ranges.len();
        Self::new(
            "rectangle",
            ranges,
            vec![false; dim],
            MetricPreset::Flat { dim, scale: 1.0 },
        )
    }

    /// Sphere of radius `radius` with polar caps `θ < theta_min`, `θ > π − theta_min` removed.
    pub fn sphere_band(radius: f64, theta_min: f64) -> Result<Self, GeometryError> {
        if !(theta_min > 0.0 && theta_min < PI / 2.0) {
            return Err(GeometryError::InvalidChart(format!(
                "theta_min must lie in (0, π/2), got {theta_min}"
            )));
        }
        Self::new(
            "sphere",
            vec![(theta_min, PI - theta_min), (0.0, 2.0 * PI)],
            vec![false, true],
            MetricPreset::Sphere { radius },
        )
    }

    /// Torus of revolution `dθ² + (base + amp cos θ)² dφ²`, periodic in both angles.
    pub fn warped_torus(base: f64, amp: f64) -> Result<Self, GeometryError> {
        Self::new(
            "warped",
            vec![(0.0, 2.0 * PI), (0.0, 2.0 * PI)],
            vec![true, true],
            MetricPreset::Warped { base, amp },
        )
    }

    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.ranges[axis].1 - self.ranges[axis].0
    }

    /// Checks the structural invariants: positive dimension and interval lengths,
    /// matching metric dimension, and metric periodicity across periodic axes.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let n = self.ranges.len();
        if n == 0 {
            return Err(GeometryError::InvalidChart(
                "dimension must be at least 1".into(),
            ));
        }
        if self.periodic.len() != n {
            return Err(GeometryError::InvalidChart(format!(
                "{} periodicity flags for {n} axes",
                self.periodic.len()
            )));
        }
        for (k, &(a, b)) in self.ranges.iter().enumerate() {
            if !(a.is_finite() && b.is_finite() && b > a) {
                return Err(GeometryError::InvalidChart(format!(
                    "axis {k} has empty or invalid range [{a}, {b}]"
                )));
            }
        }
        self.metric.validate()?;
        if self.metric.dim() != n {
            return Err(GeometryError::InvalidChart(format!(
                "metric `{}` is {}-dimensional, chart has {n} axes",
                self.metric.name(),
                self.metric.dim()
            )));
        }
        for k in (0..n).filter(|&k| self.periodic[k]) {
            // sample a few transverse positions
            for s in [0.13, 0.5, 0.87] {
                let mut lo: Vec<f64> = self.ranges.iter().map(|&(a, b)| a + s * (b - a)).collect();
                let mut hi = lo.clone();
                lo[k] = self.ranges[k].0;
                hi[k] = self.ranges[k].1;
                let diff = (self.metric.g(&lo) - self.metric.g(&hi)).abs().max();
                if diff > 1e-12 {
                    return Err(GeometryError::InvalidChart(format!(
                        "axis {k} is periodic but the metric differs by {diff:e} across it"
                    )));
                }
            }
        }
        Ok(())
    }

    /// True when `p` lies in the closed coordinate box.
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(&self.ranges)
                .all(|(&x, &(a, b))| x >= a && x <= b)
    }
}
