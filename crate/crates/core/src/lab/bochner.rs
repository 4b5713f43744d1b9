use serde_json::json;

use crate::discretization::{grad_norm_sq, nodal_derivatives, partials, Grid};
use crate::error::LabError;
use crate::geometry::{kato_sides, ChartSpec, PointGeometry, ScalarFunction, TrigSum};
use crate::lab::report::{chart_json, fitted_order, num, ExperimentReport, Verdict};

/// Fraction of each non-periodic axis excluded at both ends when measuring
/// residuals; one-sided differences at faces converge at lower order.
const FACE_MARGIN: f64 = 0.25;

fn interior(grid: &Grid, a: usize) -> bool {
    let chart = grid.chart();
    (0..grid.dim()).all(|k| {
        if chart.periodic[k] {
            return true;
        }
        let (lo, hi) = chart.ranges[k];
        let d = FACE_MARGIN * (hi - lo);
        let x = grid.coord(a, k);
        x >= lo + d - 1e-12 && x <= hi - d + 1e-12
    })
}

/// Max-norm, over interior nodes, of the discrete Bochner residual
/// `½L|∇f|² − (|H_f|² + ∇(Lf)·∇f + Ric(∇f, ∇f))` built from nodal samples of `f`.
pub fn bochner_discrete_residual(grid: &Grid, f: &dyn ScalarFunction) -> Result<f64, LabError> {
    let lap = crate::discretization::assemble_laplacian(grid)?;
    let fv = grid.sample(f);
    let g2 = grad_norm_sq(grid, &fv)?;
    let half: Vec<f64> = lap.mul(g2.values()).iter().map(|x| 0.5 * x).collect();
    let lf = lap.mul(fv.values());
    let dlf = partials(grid, &lf);
    let derivs = nodal_derivatives(grid, fv.values())?;
    let mut worst: f64 = 0.0;
    for (a, d) in derivs.iter().enumerate() {
        if !interior(grid, a) {
            continue;
        }
        let pg = &d.geometry;
        let dl: Vec<f64> = (0..grid.dim()).map(|k| dlf[k][a]).collect();
        let up = pg.raise(&d.df);
        let ric = (up.transpose() * pg.ricci() * &up)[(0, 0)];
        let r = half[a] - (pg.tensor_dot(&d.hess, &d.hess) + pg.co_dot(&dl, &d.df) + ric);
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Discrete Bochner residual at each `n × … × n` resolution and the fitted order.
pub fn bochner_sweep(
    chart: &ChartSpec,
    f: &TrigSum,
    resolutions: &[usize],
) -> Result<ExperimentReport, LabError> {
    if resolutions.len() < 3 {
        return Err(LabError::InvalidInput(format!(
            "need at least 3 resolutions, got {}",
            resolutions.len()
        )));
    }
    let mut rep = ExperimentReport::new(
        "bochner_sweep",
        json!({"chart": chart_json(chart), "function": f, "resolutions": resolutions}),
    );
    rep.columns(&["resolution", "h", "max_residual"]);
    let (lo, hi) = (1.8, 2.2);
    rep.tolerance("order_min", lo);
    rep.tolerance("order_max", hi);
    rep.tolerance("roundoff_floor", 1e-11);
    let mut hs = Vec::new();
    let mut es = Vec::new();
    for &n in resolutions {
        let grid = Grid::new(chart.clone(), &vec![n; chart.dim()])?;
        let h = grid.spacing().iter().map(|h| h.ln()).sum::<f64>() / grid.dim() as f64;
        let h = h.exp();
        let e = bochner_discrete_residual(&grid, f)?;
        rep.push(vec![json!(n), num(h), num(e)]);
        hs.push(h);
        es.push(e);
    }
    let order = fitted_order(&hs, &es);
    let scale = 1.0 + f.waves.iter().map(|w| w.amp.abs()).sum::<f64>();
    let negligible = es.iter().all(|&e| e <= 1e-11 * scale.powi(2));
    rep.note("order", order.map_or(serde_json::Value::Null, num));
    rep.verdict = match order {
        _ if negligible => Verdict::Consistent,
        Some(p) if (lo..=hi).contains(&p) => Verdict::Consistent,
        Some(p) if p < 1.0 => Verdict::Violation,
        _ => Verdict::Inconclusive,
    };
    if rep.verdict == Verdict::Violation {
        rep.replay.push(rep.inputs.clone());
    }
    Ok(rep)
}

/// Sine of the angle between two covectors in the metric (0 if either vanishes).
fn angle_sine(pg: &PointGeometry, a: &[f64], b: &[f64]) -> f64 {
    let (aa, bb) = (pg.co_dot(a, a), pg.co_dot(b, b));
    if aa <= 0.0 || bb <= 0.0 {
        return 0.0;
    }
    let c = pg.co_dot(a, b) / (aa * bb).sqrt();
    (1.0 - c * c).max(0.0).sqrt()
}

/// Scans `|∇|∇f||² ≤ |H_f|²` with analytic jets at the nodes of an
/// `n × … × n` grid where `|∇f| > eps_grad`.
///
/// At near-equality nodes the rows `∇(∇f)_k` of the Hessian should be parallel to
/// `∇f`; the largest sine of the angle between them is reported as the
/// collinearity defect.
pub fn hessian_inequality_scan(
    chart: &ChartSpec,
    fields: &[TrigSum],
    eps_grad: f64,
    resolution: usize,
) -> Result<ExperimentReport, LabError> {
    if !(eps_grad > 0.0) {
        return Err(LabError::InvalidInput(format!(
            "eps_grad must be positive, got {eps_grad}"
        )));
    }
    let grid = Grid::new(chart.clone(), &vec![resolution; chart.dim()])?;
    let mut rep = ExperimentReport::new(
        "hessian_inequality_scan",
        json!({"chart": chart_json(chart), "fields": fields, "eps_grad": eps_grad, "resolution": resolution}),
    );
    let excess_tol = 1e-8;
    let equality_tol = 1e-8;
    let collinear_tol = 1e-6;
    rep.tolerance("excess_rel", excess_tol);
    rep.tolerance("equality_rel", equality_tol);
    rep.tolerance("collinearity", collinear_tol);
    rep.columns(&[
        "field",
        "nodes_scanned",
        "max_excess",
        "max_rel_excess",
        "equality_nodes",
        "max_collinearity_defect",
    ]);
    let n = grid.dim();
    let mut verdict = Verdict::Consistent;
    for (fi, f) in fields.iter().enumerate() {
        let mut scanned = 0usize;
        let mut max_excess = f64::NEG_INFINITY;
        let mut max_rel = f64::NEG_INFINITY;
        let mut eq_nodes = 0usize;
        let mut max_defect: f64 = 0.0;
        let mut worst_node = None;
        for a in 0..grid.node_count() {
            let p = grid.point(a);
            let pg = PointGeometry::at(grid.metric(), &p)?;
            let jet = f.jet(&p);
            if pg.co_dot(&jet.grad, &jet.grad).sqrt() <= eps_grad {
                continue;
            }
            scanned += 1;
            let hess = pg.hessian_from_partials(&jet.grad, &jet.hess);
            let (lhs, rhs) = kato_sides(&pg, &jet.grad, &hess);
            let excess = lhs - rhs;
            let rel = excess / (1.0 + rhs);
            max_excess = max_excess.max(excess);
            if rel > max_rel {
                max_rel = rel;
                worst_node = Some(p.clone());
            }
            if (rhs - lhs) <= equality_tol * (1.0 + rhs) {
                eq_nodes += 1;
                for k in 0..n {
                    let row: Vec<f64> = (0..n).map(|j| hess[(k, j)]).collect();
                    max_defect = max_defect.max(angle_sine(&pg, &row, &jet.grad));
                }
            }
        }
        let bad = max_rel > excess_tol || max_defect > collinear_tol;
        if bad {
            verdict = Verdict::Violation;
            rep.replay
                .push(json!({"field": f, "node": worst_node, "chart": chart_json(chart)}));
        }
        rep.push(vec![
            json!(fi),
            json!(scanned),
            num(if scanned > 0 { max_excess } else { 0.0 }),
            num(if scanned > 0 { max_rel } else { 0.0 }),
            json!(eq_nodes),
            num(max_defect),
        ]);
    }
    rep.verdict = verdict;
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn torus_sine_converges_at_second_order() {
        let chart = ChartSpec::standard_torus(2).unwrap();
        let rep = bochner_sweep(&chart, &TrigSum::sin_axis(2, 0), &[16, 32, 64]).unwrap();
        let p = rep.summary_f64("order").unwrap();
        assert!((1.8..=2.2).contains(&p), "{p}");
        assert_eq!(rep.verdict, Verdict::Consistent);

        let c = bochner_sweep(&chart, &TrigSum::constant(2, 3.0), &[8, 16, 32]).unwrap();
        assert!(c.column("max_residual").unwrap().iter().all(|&e| e == 0.0));
        assert_eq!(c.verdict, Verdict::Consistent);
        assert!(bochner_sweep(&chart, &TrigSum::constant(2, 0.0), &[8, 16]).is_err());
    }

    #[test]
    fn sphere_band_cosine() {
        let chart = ChartSpec::sphere_band(1.0, 0.15).unwrap();
        let rep = bochner_sweep(&chart, &TrigSum::cos_axis(2, 0), &[32, 64, 128]).unwrap();
        let p = rep.summary_f64("order").unwrap();
        assert!((1.8..=2.2).contains(&p), "{p}");
    }

    #[test]
    fn hessian_scan_examples() {
        let chart = ChartSpec::standard_torus(2).unwrap();
        let s = TrigSum::sin_axis(2, 0);
        let rep = hessian_inequality_scan(&chart, &[s.clone()], 1e-3, 32).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        assert!(rep.column("max_excess").unwrap()[0] <= 1e-8);
        assert!(rep.column("max_collinearity_defect").unwrap()[0] <= 1e-6);
        assert!(rep.column("equality_nodes").unwrap()[0] > 0.0);

        // sin x + sin y at (π/4, π/2): LHS 0.5, RHS 1.5
        let f = s.plus(TrigSum::sin_axis(2, 1));
        let p = [PI / 4.0, PI / 2.0];
        let pg = PointGeometry::at(&chart.metric, &p).unwrap();
        let jet = f.jet(&p);
        let hess = pg.hessian_from_partials(&jet.grad, &jet.hess);
        let (l, r) = kato_sides(&pg, &jet.grad, &hess);
        assert!((l - 0.5).abs() < 1e-12 && (r - 1.5).abs() < 1e-12);

        let c = hessian_inequality_scan(&chart, &[TrigSum::constant(2, 1.0)], 1e-3, 16).unwrap();
        assert_eq!(c.column("nodes_scanned").unwrap()[0], 0.0);
        assert_eq!(c.verdict, Verdict::Consistent);
    }
}
