use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::discretization::{grad_norm_sq, DiscreteScalarField, Grid};
use crate::error::LabError;
use crate::geometry::{MetricField, PointGeometry};
use crate::lab::report::{grid_json, num, ExperimentReport, Verdict};

/// Curves with fewer points cannot be differenced twice reliably.
pub const MIN_CURVE_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LevelSetOptions {
    /// Points with `|∇u|_g ≤ eps_grad` split curves.
    pub eps_grad: f64,
    /// Geodesic-defect tolerance.
    pub tol: f64,
    /// `false` for negative controls, where a defect above `tol` is expected.
    pub expect_geodesic: bool,
}

impl Default for LevelSetOptions {
    fn default() -> Self {
        LevelSetOptions {
            eps_grad: 1e-3,
            tol: 2e-3,
            expect_geodesic: true,
        }
    }
}

/// A level curve resampled to (nearly) unit `g`-speed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelCurve {
    /// Chart points, unwrapped across periodic axes.
    pub points: Vec<Vec<f64>>,
    /// Parameter step between consecutive points.
    pub ds: f64,
    pub length: f64,
    pub closed: bool,
    pub floor: f64,
    /// `max ||γ̇|_g − 1|` over interior points.
    pub speed_defect: f64,
    /// `|γ̈ + Γ(γ̇, γ̇)|_g` at interior points (index `j` is point `j + 1`).
    pub defect: Vec<f64>,
}

impl LevelCurve {
    pub fn max_defect(&self) -> f64 {
        self.defect.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean_defect(&self) -> f64 {
        if self.defect.is_empty() {
            0.0
        } else {
            self.defect.iter().sum::<f64>() / self.defect.len() as f64
        }
    }
}

/// Crossing on the grid edge from `node` along `axis`.
#[derive(Debug, Clone, Copy)]
struct Crossing {
    node: usize,
    axis: usize,
    t: f64,
}

fn edge_id(node: usize, axis: usize) -> usize {
    2 * node + axis
}

fn crossing(grid: &Grid, f: &[f64], c: f64, node: usize, axis: usize) -> Option<Crossing> {
    let b = grid.step(node, axis, 1)?;
    let (fa, fb) = (f[node], f[b]);
    if (fa >= c) == (fb >= c) {
        return None;
    }
    Some(Crossing {
        node,
        axis,
        t: (c - fa) / (fb - fa),
    })
}

/// Marching squares on a 2D grid, wrapping across periodic axes. Returns
/// chains of crossings and whether each chain closes on itself.
fn march(grid: &Grid, f: &[f64], c: f64) -> Vec<(Vec<Crossing>, bool)> {
    let counts = grid.counts();
    let periodic = &grid.chart().periodic;
    let cells = |k: usize| {
        if periodic[k] {
            counts[k]
        } else {
            counts[k] - 1
        }
    };
    let mut cross: BTreeMap<usize, Crossing> = BTreeMap::new();
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let link = |a: usize, b: usize, adj: &mut BTreeMap<usize, Vec<usize>>| {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    };
    for i in 0..cells(0) {
        for j in 0..cells(1) {
            let v0 = grid.node_at(&[i, j]);
            let v1 = grid.step(v0, 0, 1).unwrap();
            let v3 = grid.step(v0, 1, 1).unwrap();
            let v2 = grid.step(v1, 1, 1).unwrap();
            let edges = [(v0, 0), (v1, 1), (v3, 0), (v0, 1)];
            let mut hit = Vec::new();
            for (e, &(node, axis)) in edges.iter().enumerate() {
                if let Some(x) = crossing(grid, f, c, node, axis) {
                    cross.insert(edge_id(node, axis), x);
                    hit.push(e);
                }
            }
            let id = |e: usize| edge_id(edges[e].0, edges[e].1);
            match hit.len() {
                2 => link(id(hit[0]), id(hit[1]), &mut adj),
                4 => {
                    let centre = 0.25 * (f[v0] + f[v1] + f[v2] + f[v3]);
                    if (centre >= c) == (f[v0] >= c) {
                        link(id(0), id(1), &mut adj);
                        link(id(2), id(3), &mut adj);
                    } else {
                        link(id(3), id(0), &mut adj);
                        link(id(1), id(2), &mut adj);
                    }
                }
                _ => {}
            }
        }
    }
    let mut used: BTreeMap<usize, bool> = cross.keys().map(|&k| (k, false)).collect();
    let mut chains = Vec::new();
    let walk = |start: usize, used: &mut BTreeMap<usize, bool>| {
        let mut chain = vec![start];
        used.insert(start, true);
        let mut cur = start;
        let mut closed = false;
        loop {
            let next = adj
                .get(&cur)
                .and_then(|ns| ns.iter().find(|n| !used[n]).copied());
            match next {
                Some(n) => {
                    used.insert(n, true);
                    chain.push(n);
                    cur = n;
                }
                None => {
                    if chain.len() > 2 && adj.get(&cur).is_some_and(|ns| ns.contains(&start)) {
                        closed = true;
                    }
                    break;
                }
            }
        }
        (chain, closed)
    };
    // open chains start at their ends
    let ends: Vec<usize> = cross
        .keys()
        .copied()
        .filter(|k| adj.get(k).map_or(0, |v| v.len()) == 1)
        .collect();
    for e in ends {
        if !used[&e] {
            chains.push(walk(e, &mut used));
        }
    }
    let rest: Vec<usize> = cross.keys().copied().collect();
    for e in rest {
        if !used[&e] {
            chains.push(walk(e, &mut used));
        }
    }
    chains
        .into_iter()
        .map(|(ids, closed)| (ids.iter().map(|id| cross[id]).collect(), closed))
        .collect()
}

fn seg_len(metric: &dyn MetricField, a: &[f64], b: &[f64]) -> f64 {
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let g = metric.g(&mid);
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let mut s = 0.0;
    for i in 0..d.len() {
        for j in 0..d.len() {
            s += g[(i, j)] * d[i] * d[j];
        }
    }
    s.max(0.0).sqrt()
}

/// Cubic Lagrange interpolation of the polyline at parameter `s`.
fn interpolate(knots: &[f64], pts: &[Vec<f64>], s: f64) -> Vec<f64> {
    let n = knots.len();
    let k = knots.partition_point(|&x| x <= s).clamp(1, n - 1);
    let lo = k.saturating_sub(2).min(n.saturating_sub(4));
    let hi = (lo + 4).min(n);
    let mut out = vec![0.0; pts[0].len()];
    for i in lo..hi {
        let mut l = 1.0;
        for j in lo..hi {
            if i != j {
                l *= (s - knots[j]) / (knots[i] - knots[j]);
            }
        }
        for (o, x) in out.iter_mut().zip(&pts[i]) {
            *o += l * x;
        }
    }
    out
}

fn build_curve(
    grid: &Grid,
    pts: Vec<Vec<f64>>,
    closed: bool,
    floor: f64,
) -> Result<LevelCurve, LabError> {
    let metric = grid.metric();
    let mut knots = vec![0.0];
    for w in pts.windows(2) {
        let last = *knots.last().unwrap();
        knots.push(last + seg_len(metric, &w[0], &w[1]));
    }
    // drop repeated points (crossings that sit exactly on shared nodes)
    let mut kk = vec![knots[0]];
    let mut pp = vec![pts[0].clone()];
    for i in 1..pts.len() {
        if knots[i] > *kk.last().unwrap() + 1e-14 {
            kk.push(knots[i]);
            pp.push(pts[i].clone());
        }
    }
    let (knots, pts) = (kk, pp);
    let length = *knots.last().unwrap();
    let segments = (pts.len() - 1).max(1);
    let m = segments.max(4);
    let ds = length / m as f64;
    let samples: Vec<Vec<f64>> = (0..=m)
        .map(|j| interpolate(&knots, &pts, j as f64 * ds))
        .collect();
    let n = grid.dim();
    let mut defect = Vec::new();
    let mut speed_defect: f64 = 0.0;
    for j in 1..m {
        let (a, x, b) = (&samples[j - 1], &samples[j], &samples[j + 1]);
        let v: Vec<f64> = (0..n).map(|k| (b[k] - a[k]) / (2.0 * ds)).collect();
        let acc: Vec<f64> = (0..n)
            .map(|k| (b[k] - 2.0 * x[k] + a[k]) / (ds * ds))
            .collect();
        let pg = PointGeometry::at(metric, x)?;
        speed_defect = speed_defect.max((pg.contra_dot(&v, &v).sqrt() - 1.0).abs());
        let d: Vec<f64> = (0..n)
            .map(|k| {
                let mut s = acc[k];
                for l in 0..n {
                    for mu in 0..n {
                        s += pg.gamma.get(k, l, mu) * v[l] * v[mu];
                    }
                }
                s
            })
            .collect();
        defect.push(pg.contra_dot(&d, &d).max(0.0).sqrt());
    }
    Ok(LevelCurve {
        points: samples,
        ds,
        length,
        closed,
        floor,
        speed_defect,
        defect,
    })
}

/// Level curves `{u = c}` of a nodal field on a 2D grid, split where
/// `|∇u|_g ≤ eps_grad` and resampled to unit speed.
pub fn extract_level_curves(
    grid: &Grid,
    u: &DiscreteScalarField,
    c: f64,
    eps_grad: f64,
) -> Result<Vec<LevelCurve>, LabError> {
    if grid.dim() != 2 {
        return Err(LabError::InvalidInput(format!(
            "level curves need a 2D chart, got dimension {}",
            grid.dim()
        )));
    }
    let gn = grad_norm_sq(grid, u)?;
    let f = u.values();
    let chains = march(grid, f, c);
    if chains.is_empty() {
        return Err(LabError::EmptyLevelSet { level: c });
    }
    let h = grid.spacing();
    let chart = grid.chart();
    let mut curves = Vec::new();
    let mut any_above = false;
    for (chain, closed) in chains {
        let mut runs: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
        let mut prev: Option<Vec<f64>> = None;
        let mut split = false;
        for x in &chain {
            let b = grid.step(x.node, x.axis, 1).unwrap();
            let g = ((1.0 - x.t) * gn.values()[x.node] + x.t * gn.values()[b]).sqrt();
            let mut p = grid.point(x.node);
            p[x.axis] += x.t * h[x.axis];
            if let Some(q) = &prev {
                for k in 0..2 {
                    if chart.periodic[k] {
                        let l = chart.length(k);
                        p[k] -= l * ((p[k] - q[k]) / l).round();
                    }
                }
            }
            prev = Some(p.clone());
            if g > eps_grad {
                any_above = true;
                runs.last_mut().unwrap().push(p);
            } else {
                split = true;
                if !runs.last().unwrap().is_empty() {
                    runs.push(Vec::new());
                }
            }
        }
        if closed && !split {
            // close the loop with the first point carried across the wrap
            let first = runs[0][0].clone();
            let last = runs[0].last().unwrap().clone();
            let mut p = first;
            for k in 0..2 {
                if chart.periodic[k] {
                    let l = chart.length(k);
                    p[k] -= l * ((p[k] - last[k]) / l).round();
                }
            }
            runs[0].push(p);
        }
        for run in runs {
            if run.len() >= MIN_CURVE_POINTS {
                curves.push(build_curve(grid, run, closed && !split, eps_grad)?);
            }
        }
    }
    if !any_above {
        return Err(LabError::GradientBelowFloor { floor: eps_grad });
    }
    if curves.is_empty() {
        return Err(LabError::InvalidInput(format!(
            "every level curve at {c} has fewer than {MIN_CURVE_POINTS} points above the gradient floor"
        )));
    }
    Ok(curves)
}

/// Geodesic defect of the level set `{u = c}`.
pub fn level_set_geodesic_check(
    grid: &Grid,
    u: &DiscreteScalarField,
    c: f64,
    opts: &LevelSetOptions,
) -> Result<ExperimentReport, LabError> {
    let mut rep = ExperimentReport::new(
        "level_set_geodesic_check",
        json!({
            "grid": grid_json(grid),
            "level": c,
            "options": opts,
            "field_digest": crate::lab::report::digest(&json!(u.values())),
        }),
    );
    rep.tolerance("defect", opts.tol);
    rep.tolerance("eps_grad", opts.eps_grad);
    rep.columns(&[
        "curve",
        "points",
        "length",
        "closed",
        "speed_defect",
        "max_defect",
        "mean_defect",
    ]);
    let curves = extract_level_curves(grid, u, c, opts.eps_grad)?;
    let mut worst: f64 = 0.0;
    let mut mean_acc = 0.0;
    let mut count = 0usize;
    for (k, cv) in curves.iter().enumerate() {
        worst = worst.max(cv.max_defect());
        mean_acc += cv.defect.iter().sum::<f64>();
        count += cv.defect.len();
        rep.push(vec![
            json!(k),
            json!(cv.points.len()),
            num(cv.length),
            json!(cv.closed),
            num(cv.speed_defect),
            num(cv.max_defect()),
            num(cv.mean_defect()),
        ]);
    }
    rep.note("max_defect", num(worst));
    rep.note(
        "mean_defect",
        num(if count > 0 {
            mean_acc / count as f64
        } else {
            0.0
        }),
    );
    rep.note("expect_geodesic", opts.expect_geodesic);
    let geodesic = worst <= opts.tol;
    rep.verdict = if geodesic == opts.expect_geodesic {
        Verdict::Consistent
    } else {
        let mut case = rep.inputs.clone();
        case["field"] = json!(u.values());
        rep.replay.push(case);
        Verdict::Violation
    };
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ChartSpec;
    use std::f64::consts::PI;

    #[test]
    fn straight_line_on_rectangle() {
        let g = Grid::new(
            ChartSpec::rectangle(vec![(0.0, 1.0), (0.0, 1.0)]).unwrap(),
            &[33, 33],
        )
        .unwrap();
        let u = g.sample_with(|p| p[1]);
        let rep = level_set_geodesic_check(&g, &u, 0.5, &LevelSetOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Consistent);
        assert!(rep.summary_f64("max_defect").unwrap() <= 1e-6);
        let cv = extract_level_curves(&g, &u, 0.5, 1e-3).unwrap();
        assert_eq!(cv.len(), 1);
        assert!(cv[0].speed_defect < 1e-3);
        assert!((cv[0].length - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sphere_equator_and_latitude() {
        let g = Grid::new(ChartSpec::sphere_band(1.0, 0.15).unwrap(), &[64, 64]).unwrap();
        let u = g.sample_with(|p| p[0].cos());
        let eq = extract_level_curves(&g, &u, 0.0, 1e-3).unwrap();
        assert_eq!(eq.len(), 1);
        assert!(eq[0].closed);
        assert!((eq[0].length - 2.0 * PI).abs() < 1e-6);
        assert!(eq[0].max_defect() < 2e-3, "{}", eq[0].max_defect());

        let lat = extract_level_curves(&g, &u, (PI / 3.0).cos(), 1e-3).unwrap();
        let d = lat[0].mean_defect();
        assert!((d - 1.0 / 3f64.sqrt()).abs() < 0.05 / 3f64.sqrt(), "{d}");
    }

    #[test]
    fn empty_and_flat_levels() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[16, 16]).unwrap();
        let u = g.sample_with(|p| p[0].sin());
        assert!(matches!(
            extract_level_curves(&g, &u, 2.0, 1e-3),
            Err(LabError::EmptyLevelSet { .. })
        ));
        assert!(matches!(
            extract_level_curves(&g, &u, 0.3, 10.0),
            Err(LabError::GradientBelowFloor { .. })
        ));
    }
}
