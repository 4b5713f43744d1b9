use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;

use crate::discretization::calculus::integrate_values;
use crate::discretization::grid::{DiscreteScalarField, Grid};
use crate::error::DiscretizationError;
use crate::geometry::MetricField;

/// Default stencil radius for shortest-path distances.
pub const DEFAULT_STENCIL_RADIUS: usize = 2;

/// Integer offsets `o` with `0 < max|o_k| ≤ radius` and `gcd(o) = 1`.
///
/// Radius 1 is the 8-neighbour (2D) / 26-neighbour (3D) graph; radius 2 has
/// 16 directions in 2D and caps the metrication error near 2.7%.
pub fn stencil_offsets(dim: usize, radius: usize) -> Vec<Vec<isize>> {
    let r = radius as isize;
    let mut out = Vec::new();
    let mut cur = vec![-r; dim];
    loop {
        if cur.iter().any(|&c| c != 0) && cur.iter().fold(0, |g, &c| gcd(g, c.unsigned_abs())) == 1
        {
            out.push(cur.clone());
        }
        let mut k = 0;
        loop {
            if k == dim {
                return out;
            }
            cur[k] += 1;
            if cur[k] <= r {
                break;
            }
            cur[k] = -r;
            k += 1;
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Copy, Clone, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on distance, ties broken by node index
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances from `source` with the default stencil.
pub fn geodesic_distance(
    grid: &Grid,
    source: usize,
) -> Result<DiscreteScalarField, DiscretizationError> {
    geodesic_distance_with(grid, source, DEFAULT_STENCIL_RADIUS)
}

/// Dijkstra over the grid graph whose edges are the stencil offsets, each of
/// length `√(δᵀ ḡ δ)` with `ḡ` the mean of the endpoint metrics. Distances
/// over-estimate `d_g` by the stencil's metrication factor (about 8% for
/// radius 1, under 3% for radius 2 in 2D).
pub fn geodesic_distance_with(
    grid: &Grid,
    source: usize,
    radius: usize,
) -> Result<DiscreteScalarField, DiscretizationError> {
    let nodes = grid.node_count();
    if source >= nodes {
        return Err(DiscretizationError::InvalidGrid(format!(
            "source node {source} outside a grid of {nodes} nodes"
        )));
    }
    if radius == 0 {
        return Err(DiscretizationError::InvalidGrid(
            "stencil radius must be positive".into(),
        ));
    }
    let n = grid.dim();
    let h = grid.spacing();
    let offsets = stencil_offsets(n, radius);
    let metric = grid.metric();
    let metrics: Vec<DMatrix<f64>> = if metric.is_constant() {
        vec![metric.g(&grid.point(0))]
    } else {
        (0..nodes).map(|a| metric.g(&grid.point(a))).collect()
    };
    let g_at = |a: usize| {
        if metrics.len() == 1 {
            &metrics[0]
        } else {
            &metrics[a]
        }
    };

    let mut dist = vec![f64::INFINITY; nodes];
    let mut done = vec![false; nodes];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Entry(0.0, source));
    let mut delta = vec![0.0; n];
    while let Some(Entry(d, a)) = heap.pop() {
        if done[a] {
            continue;
        }
        done[a] = true;
        'offsets: for o in &offsets {
            let mut b = a;
            for k in 0..n {
                if o[k] != 0 {
                    match grid.step(b, k, o[k]) {
                        Some(next) => b = next,
                        None => continue 'offsets,
                    }
                }
                delta[k] = o[k] as f64 * h[k];
            }
            if done[b] {
                continue;
            }
            let (ga, gb) = (g_at(a), g_at(b));
            let mut len2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    len2 += 0.5 * (ga[(i, j)] + gb[(i, j)]) * delta[i] * delta[j];
                }
            }
            let nd = d + len2.sqrt();
            if nd < dist[b] {
                dist[b] = nd;
                heap.push(Entry(nd, b));
            }
        }
    }
    if let Some(a) = dist.iter().position(|d| !d.is_finite()) {
        return Err(DiscretizationError::InvalidGrid(format!(
            "node {a} is unreachable from {source}"
        )));
    }
    Ok(DiscreteScalarField::from_values(dist))
}

/// `|{d ≤ R}|` integrated against the nodal weights. Below one spacing the
/// ball degenerates to the source node's own cell.
pub fn ball_volume(grid: &Grid, center: usize, radius: f64) -> Result<f64, DiscretizationError> {
    let d = geodesic_distance(grid, center)?;
    ball_volume_from(grid, &d, radius)
}

/// Ball volume from a precomputed distance field.
pub fn ball_volume_from(
    grid: &Grid,
    dist: &DiscreteScalarField,
    radius: f64,
) -> Result<f64, DiscretizationError> {
    grid.check_field(dist)?;
    if !(radius > 0.0) {
        return Err(DiscretizationError::InvalidGrid(format!(
            "ball radius must be positive, got {radius}"
        )));
    }
    let ind: Vec<f64> = dist
        .values()
        .iter()
        .map(|&d| if d <= radius { 1.0 } else { 0.0 })
        .collect();
    Ok(integrate_values(grid, &ind))
}

/// Radial profile `ζ(t)`: 1 on `[0, 1]`, cubic smoothstep `1 − 3s² + 2s³`
/// with `s = t − 1` on `(1, 2)`, 0 beyond.
pub fn zeta_profile(t: f64) -> f64 {
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let s = t - 1.0;
        1.0 - 3.0 * s * s + 2.0 * s * s * s
    }
}

/// `ζ(d_g(center, ·) / R)` on the grid.
pub fn cutoff_zeta_r(
    grid: &Grid,
    center: usize,
    radius: f64,
) -> Result<DiscreteScalarField, DiscretizationError> {
    let d = geodesic_distance(grid, center)?;
    cutoff_from_distance(grid, &d, center, radius)
}

pub fn cutoff_from_distance(
    grid: &Grid,
    dist: &DiscreteScalarField,
    center: usize,
    radius: f64,
) -> Result<DiscreteScalarField, DiscretizationError> {
    grid.check_field(dist)?;
    if !(radius > 0.0) {
        return Err(DiscretizationError::InvalidGrid(format!(
            "cutoff radius must be positive, got {radius}"
        )));
    }
    let clipped =
        (0..grid.node_count()).any(|a| grid.on_any_face(a) && dist.values()[a] < 2.0 * radius);
    if clipped {
        return Err(DiscretizationError::BallExceedsDomain { center, radius });
    }
    Ok(dist.map(|d| zeta_profile(d / radius)))
}
