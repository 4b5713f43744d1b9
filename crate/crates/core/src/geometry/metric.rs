use nalgebra::DMatrix;

use crate::error::GeometryError;

/// Metric components and their first and second coordinate partials at one point.
///
/// `dg[k]` holds `∂_k g_ij`; `d2g[k * n + l]` holds `∂_k ∂_l g_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
    pub d2g: Vec<DMatrix<f64>>,
}

impl MetricJet {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// A jet with constant metric `g` (all partials zero).
    pub fn constant(g: DMatrix<f64>) -> Self {
        let n = g.nrows();
        MetricJet {
            dg: vec![DMatrix::zeros(n, n); n],
            d2g: vec![DMatrix::zeros(n, n); n * n],
            g,
        }
    }

    pub fn d2(&self, k: usize, l: usize) -> &DMatrix<f64> {
        &self.d2g[k * self.dim() + l]
    }
}

/// A Riemannian metric on a single chart, with analytic derivatives.
pub trait MetricField: Send + Sync {
    fn dim(&self) -> usize;

    fn jet(&self, p: &[f64]) -> MetricJet;

    /// Metric components only.
    fn g(&self, p: &[f64]) -> DMatrix<f64> {
        self.jet(p).g
    }

    /// True when `g` does not depend on position.
    fn is_constant(&self) -> bool {
        false
    }
}

/// Built-in metrics with hand-coded derivative formulas.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricPreset {
    /// `scale * δ_ij` in `dim` dimensions.
    Flat { dim: usize, scale: f64 },
    /// Round sphere of radius `radius` in polar coordinates `(θ, φ)`:
    /// `a²(dθ² + sin²θ dφ²)`.
    Sphere { radius: f64 },
    /// Warped product `dθ² + w(θ)² dφ²` with `w(θ) = base + amp·cos θ`
    /// (a torus of revolution with tube radius 1 when `base > amp > 0`).
    Warped { base: f64, amp: f64 },
}

impl MetricPreset {
    pub fn name(&self) -> &'static str {
        match self {
            MetricPreset::Flat { .. } => "flat",
            MetricPreset::Sphere { .. } => "sphere",
            MetricPreset::Warped { .. } => "warped",
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match *self {
            MetricPreset::Flat { scale, .. } => vec![scale],
            MetricPreset::Sphere { radius } => vec![radius],
            MetricPreset::Warped { base, amp } => vec![base, amp],
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |reason: &str| GeometryError::BadParameters {
            preset: self.name().to_string(),
            reason: reason.to_string(),
        };
        match *self {
            MetricPreset::Flat { dim, scale } => {
                if dim == 0 {
                    return Err(bad("dimension must be positive"));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(bad("scale must be positive"));
                }
            }
            MetricPreset::Sphere { radius } => {
                if !(radius > 0.0 && radius.is_finite()) {
                    return Err(bad("radius must be positive"));
                }
            }
            MetricPreset::Warped { base, amp } => {
                if !(base.is_finite() && amp.is_finite()) || base <= amp.abs() {
                    return Err(bad("warping function must stay positive (base > |amp|)"));
                }
            }
        }
        Ok(())
    }
}

impl MetricField for MetricPreset {
    fn dim(&self) -> usize {
        match *self {
            MetricPreset::Flat { dim, .. } => dim,
            MetricPreset::Sphere { .. } | MetricPreset::Warped { .. } => 2,
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, MetricPreset::Flat { .. })
    }

    fn jet(&self, p: &[f64]) -> MetricJet {
        match *self {
            MetricPreset::Flat { dim, scale } => {
                MetricJet::constant(DMatrix::from_diagonal_element(dim, dim, scale))
            }
            MetricPreset::Sphere { radius } => {
                let a2 = radius * radius;
                let th = p[0];
                let (s, c) = th.sin_cos();
                warped_jet(a2, a2 * s * s, 2.0 * a2 * s * c, 2.0 * a2 * (c * c - s * s))
            }
            MetricPreset::Warped { base, amp } => {
                let th = p[0];
                let (s, c) = th.sin_cos();
                let w = base + amp * c;
                let dw = -amp * s;
                let d2w = -amp * c;
                warped_jet(1.0, w * w, 2.0 * w * dw, 2.0 * (dw * dw + w * d2w))
            }
        }
    }
}

/// Jet of `diag(a, q(θ))` on coordinates `(θ, φ)` given `q`, `q'`, `q''`.
fn warped_jet(a: f64, q: f64, dq: f64, d2q: f64) -> MetricJet {
    let g = DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, q]);
    let dtheta = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, dq]);
    let d2theta = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, d2q]);
    let z = DMatrix::zeros(2, 2);
    MetricJet {
        g,
        dg: vec![dtheta, z.clone()],
        d2g: vec![d2theta, z.clone(), z.clone(), z],
    }
}
