use rayon::prelude::*;
use serde_json::json;

use crate::discretization::{assemble_laplacian, ball_volume_from, geodesic_distance, Grid};
use crate::error::{DiscretizationError, LabError};
use crate::geometry::{ChartSpec, MetricField};
use crate::lab::report::{num, ExperimentReport, Verdict};
use crate::linalg::{cg, pairwise_sum_by};

/// Cube `[−k h, k h]^dim` with `2k + 1` nodes per axis, so the origin is a node.
fn centered_box(dim: usize, half_width: f64, h: f64) -> Result<Grid, LabError> {
    let k = (half_width / h).ceil() as usize;
    let s = k as f64 * h;
    let chart = ChartSpec::rectangle(vec![(-s, s); dim])?;
    Ok(Grid::new(chart, &vec![2 * k + 1; dim])?)
}

fn check_dim(dim: usize) -> Result<(), LabError> {
    if dim == 2 || dim == 3 {
        Ok(())
    } else {
        Err(LabError::InvalidInput(format!(
            "flat chart dimension must be 2 or 3, got {dim}"
        )))
    }
}

/// `R⁻⁴|B_R|` on a flat `dim`-dimensional box with spacing `h`, using graph
/// geodesic balls around the centre node.
///
/// Rows with `R < 10 h` are flagged unresolved and excluded from the verdict.
pub fn volume_growth(dim: usize, radii: &[f64], h: f64) -> Result<ExperimentReport, LabError> {
    check_dim(dim)?;
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) || !(h > 0.0) {
        return Err(LabError::InvalidInput(
            "radii and spacing must be positive".into(),
        ));
    }
    let mut rep = ExperimentReport::new(
        "volume_growth",
        json!({"dim": dim, "radii": radii, "spacing": h}),
    );
    let resolved_min = 10.0 * h;
    rep.tolerance("resolved_radius_min", resolved_min);
    rep.columns(&[
        "radius",
        "volume",
        "ratio",
        "exact_ratio",
        "factor",
        "resolved",
    ]);
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let grid = centered_box(dim, 1.05 * rmax + 2.0 * h, h)?;
    let d = geodesic_distance(&grid, grid.center_node())?;
    let omega = if dim == 2 {
        std::f64::consts::PI
    } else {
        4.0 * std::f64::consts::PI / 3.0
    };
    let mut prev: Option<(f64, f64)> = None;
    let mut trend_ok = true;
    let mut factors = Vec::new();
    for &r in radii {
        let v = ball_volume_from(&grid, &d, r)?;
        let ratio = v / r.powi(4);
        let resolved = r >= resolved_min;
        let mut factor = f64::NAN;
        if resolved {
            if let Some((pr, pratio)) = prev {
                // normalized to a doubling of R
                factor = (pratio / ratio).powf(std::f64::consts::LN_2 / (r / pr).ln());
                factors.push(factor);
                if !(ratio < pratio) {
                    trend_ok = false;
                }
            }
            prev = Some((r, ratio));
        }
        rep.push(vec![
            num(r),
            num(v),
            num(ratio),
            num(omega * r.powi(dim as i32) / r.powi(4)),
            num(factor),
            json!(resolved),
        ]);
    }
    rep.note("expected_factor", 2f64.powi(4 - dim as i32));
    if let Some(f) = factors.last() {
        rep.note("last_factor", num(*f));
    }
    rep.verdict = if factors.is_empty() {
        Verdict::Inconclusive
    } else if trend_ok {
        Verdict::Consistent
    } else {
        rep.replay.push(rep.inputs.clone());
        Verdict::Violation
    };
    Ok(rep)
}

/// Exact `d_g` for a constant metric on a chart without periodic axes,
/// graph distance otherwise.
fn distance_from(grid: &Grid, center: usize) -> Result<Vec<f64>, LabError> {
    let chart = grid.chart();
    if !chart.metric.is_constant() || chart.periodic.iter().any(|&p| p) {
        return Ok(geodesic_distance(grid, center)?.values().to_vec());
    }
    let c = grid.point(center);
    let g = chart.metric.g(&c);
    let n = grid.dim();
    let mut p = vec![0.0; n];
    Ok((0..grid.node_count())
        .map(|a| {
            grid.point_into(a, &mut p);
            let mut q = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    q += g[(i, j)] * (p[i] - c[i]) * (p[j] - c[j]);
                }
            }
            q.sqrt()
        })
        .collect())
}

/// Discrete capacity of `(B_1, B_R)`: minimum of `⟨−L f, f⟩_w` over nodal
/// fields equal to 1 on `B_1` and 0 outside `B_R`. `None` for an empty annulus.
pub fn annulus_capacity(grid: &Grid, center: usize, r: f64) -> Result<Option<f64>, LabError> {
    if r <= 1.0 {
        return Ok(None);
    }
    let dv = distance_from(grid, center)?;
    let clipped = (0..grid.node_count()).any(|a| grid.on_any_face(a) && dv[a] <= r);
    if clipped {
        return Err(DiscretizationError::BallExceedsDomain { center, radius: r }.into());
    }
    let lap = assemble_laplacian(grid)?;
    let w = grid.weights();
    let n = grid.node_count();
    let free: Vec<bool> = dv.iter().map(|&x| x > 1.0 && x <= r).collect();
    if !free.iter().any(|&f| f) {
        return Ok(None);
    }
    let fixed: Vec<f64> = dv
        .iter()
        .map(|&x| if x <= 1.0 { 1.0 } else { 0.0 })
        .collect();
    // W(−L) restricted to the annulus, identity elsewhere
    let apply = |x: &[f64], y: &mut [f64]| {
        let mut xm = x.to_vec();
        for a in 0..n {
            if !free[a] {
                xm[a] = 0.0;
            }
        }
        lap.apply(&xm, y);
        for a in 0..n {
            y[a] = if free[a] { -w[a] * y[a] } else { x[a] };
        }
    };
    let lb = lap.mul(&fixed);
    let b: Vec<f64> = (0..n)
        .map(|a| if free[a] { w[a] * lb[a] } else { 0.0 })
        .collect();
    let ld = lap.diagonal();
    let diag: Vec<f64> = (0..n)
        .map(|a| if free[a] { -w[a] * ld[a] } else { 1.0 })
        .collect();
    let mut x = vec![0.0; n];
    let out = cg(&apply, Some(&diag), &b, &mut x, 1e-10, 20 * n);
    if !out.converged() {
        return Err(LabError::InvalidInput(format!(
            "capacity solve stalled at relative residual {:e}",
            out.relative_residual
        )));
    }
    let f: Vec<f64> = (0..n)
        .map(|a| if free[a] { x[a] } else { fixed[a] })
        .collect();
    let lf = lap.mul(&f);
    Ok(Some(-pairwise_sum_by(n, &|a| w[a] * lf[a] * f[a])))
}

/// Annulus capacities `cap(B_1, B_R)` on flat boxes of dimension 2 or 3,
/// reported against the closed forms `2π / ln R` and `4π / (1 − 1/R)`.
///
/// The verdict checks the structural properties (positive, nonincreasing in
/// `R`); `summary.capacity_criterion` states whether the trend is toward zero.
pub fn parabolicity_capacity(
    dim: usize,
    radii: &[f64],
    h: f64,
) -> Result<ExperimentReport, LabError> {
    check_dim(dim)?;
    if !(h > 0.0) || radii.is_empty() {
        return Err(LabError::InvalidInput(
            "need radii and a positive spacing".into(),
        ));
    }
    let mut rep = ExperimentReport::new(
        "parabolicity_capacity",
        json!({"dim": dim, "radii": radii, "spacing": h}),
    );
    rep.columns(&[
        "radius",
        "capacity",
        "closed_form",
        "rel_error",
        "degenerate",
    ]);
    rep.tolerance("monotone_slack", 1e-9);
    let caps: Vec<Result<Option<f64>, LabError>> = radii
        .par_iter()
        .map(|&r| {
            if r <= 1.0 {
                return Ok(None);
            }
            let grid = centered_box(dim, r + 3.0 * h, h)?;
            annulus_capacity(&grid, grid.center_node(), r)
        })
        .collect();
    let tau = 2.0 * std::f64::consts::PI;
    let mut seen = Vec::new();
    for (&r, c) in radii.iter().zip(caps) {
        let c = c?;
        let exact = if r <= 1.0 {
            f64::INFINITY
        } else if dim == 2 {
            tau / r.ln()
        } else {
            2.0 * tau / (1.0 - 1.0 / r)
        };
        let (cap, degenerate) = match c {
            Some(c) => (c, false),
            None => (f64::INFINITY, true),
        };
        rep.push(vec![
            num(r),
            num(cap),
            num(exact),
            num((cap - exact) / exact),
            json!(degenerate),
        ]);
        if !degenerate {
            seen.push((r, cap));
        }
    }
    seen.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positive = seen.iter().all(|s| s.1 > 0.0);
    let monotone = seen.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9));
    if let (Some(first), Some(last)) = (seen.first(), seen.last()) {
        // R ↦ cap·ln R stays bounded in 2D; the 3D plateau is cap·(1 − 1/R)
        let plateau: Vec<f64> = seen.iter().map(|(r, c)| c * (1.0 - 1.0 / r)).collect();
        rep.note("plateau_estimate", num(*plateau.last().unwrap()));
        let decaying = seen.len() >= 2 && last.1 < 0.75 * first.1 && {
            let p0 = plateau[0];
            let p1 = *plateau.last().unwrap();
            p1 < 0.9 * p0
        };
        rep.note(
            "capacity_criterion",
            if decaying {
                "parabolic"
            } else {
                "non-parabolic"
            },
        );
    }
    rep.verdict = if seen.is_empty() {
        Verdict::Inconclusive
    } else if positive && monotone {
        Verdict::Consistent
    } else {
        rep.replay.push(rep.inputs.clone());
        Verdict::Violation
    };
    Ok(rep)
}
