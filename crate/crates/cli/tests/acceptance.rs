//! Acceptance suite. Each test prints one `criterion N ... PASS|FAIL` line to
//! stderr (bypassing the test harness capture) and then asserts it.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riemstab_cli::RunConfig;
use riemstab_core::discretization::{
    assemble_laplacian, Boundary, DiscreteScalarField, Grid, TestFunctionFamily,
};
use riemstab_core::geometry::{christoffel, ricci, ChartSpec, MetricField, MetricPreset, TrigSum};
use riemstab_core::lab::{
    bochner_sweep, extract_level_curves, liouville_compact, parabolicity_capacity, volume_growth,
    LiouvilleOptions,
};
use riemstab_core::stability::{
    classify_stability, poincare_margins, stability_margin, stability_margins, StabilityClass,
};
use riemstab_core::system::{
    gradient_flow_with, newton_solve_with, stable_step_bound, AllenCahn, Bose, DoubleWell,
    FlowOptions, InitialData, NewtonOptions, Nonlinearity, Problem, SolutionState,
};

fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {n:>2} {name:<28} {} {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn torus(n: usize) -> Grid {
    Grid::new(ChartSpec::standard_torus(2).unwrap(), &[n, n]).unwrap()
}

fn sphere(n: usize) -> Grid {
    Grid::new(ChartSpec::sphere_band(1.0, 0.15).unwrap(), &[n, n]).unwrap()
}

/// Gradient flow then Newton, repeated while Newton stalls at a degenerate root.
fn settle(problem: &Problem, init: &InitialData) -> SolutionState {
    let mut u = init.build(problem.grid(), problem.components()).unwrap();
    let dt = stable_step_bound(problem);
    for _ in 0..4 {
        let flow = FlowOptions {
            dt: Some(dt),
            steps: (10.0 / dt) as usize,
            ..FlowOptions::default()
        };
        u = gradient_flow_with(problem, &u, &flow).unwrap().state;
        let newton = NewtonOptions {
            pin_mean: true,
            ..NewtonOptions::default()
        };
        if let Ok((v, rep)) = newton_solve_with(problem, &u, &newton) {
            assert!(rep.converged);
            return v;
        }
    }
    panic!("no converged solution from {init:?}");
}

/// Positive solution of Allen–Cahn on a Dirichlet square of side 10.
fn dirichlet_allen_cahn() -> (Problem, SolutionState) {
    let chart = ChartSpec::rectangle(vec![(0.0, 10.0), (0.0, 10.0)]).unwrap();
    let g = Grid::with_boundary(chart, &[40, 40], Boundary::Dirichlet).unwrap();
    let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
    let u0 = InitialData::Constant { values: vec![0.9] }
        .build(&g, 1)
        .unwrap();
    let (u, rep) = newton_solve_with(&p, &u0, &NewtonOptions::default()).unwrap();
    assert!(rep.converged);
    (p, u)
}

#[test]
fn criterion_01_geometry_oracles() {
    let t = Instant::now();
    let m = MetricPreset::Sphere { radius: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = [rng.gen_range(0.15..PI - 0.15), rng.gen_range(0.0..2.0 * PI)];
        let (s, c) = p[0].sin_cos();
        let gm = christoffel(&m, &p).unwrap();
        worst = worst.max((gm.get(0, 1, 1) + s * c).abs());
        worst = worst.max((gm.get(1, 0, 1) - c / s).abs());
        worst = worst.max((gm.get(1, 1, 0) - c / s).abs());
        for (k, i, j) in [(0, 0, 0), (0, 0, 1), (0, 1, 0), (1, 0, 0), (1, 1, 1)] {
            worst = worst.max(gm.get(k, i, j).abs());
        }
        worst = worst.max((ricci(&m, &p).unwrap() - m.g(&p)).abs().max());
    }
    let mut flat_nonzero = 0usize;
    for (dim, scale) in [(2, 1.0), (3, 1.0), (2, 2.5), (3, 0.4)] {
        let f = MetricPreset::Flat { dim, scale };
        for _ in 0..100 {
            let p: Vec<f64> = (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let gm = christoffel(&f, &p).unwrap();
            let ric = ricci(&f, &p).unwrap();
            flat_nonzero += gm.as_slice().iter().filter(|x| **x != 0.0).count();
            flat_nonzero += ric.iter().filter(|x| **x != 0.0).count();
        }
    }
    let dt = t.elapsed();
    verdict(
        1,
        "geometry oracles",
        worst <= 1e-10 && flat_nonzero == 0 && dt < Duration::from_secs(1),
        format!("sphere max error {worst:.1e}, flat nonzero entries {flat_nonzero}, {dt:.2?}"),
    );
}

#[test]
fn criterion_02_bochner_convergence() {
    let t = Instant::now();
    let mut orders = Vec::new();
    for chart in [
        ChartSpec::standard_torus(2).unwrap(),
        ChartSpec::sphere_band(1.0, 0.15).unwrap(),
    ] {
        for f in TrigSum::random_family(2, 10, 2, 11) {
            let rep = bochner_sweep(&chart, &f, &[32, 64, 128]).unwrap();
            orders.push(rep.summary_f64("order").unwrap_or(f64::NAN));
        }
    }
    let dt = t.elapsed();
    let lo = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = orders.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ok = orders.iter().all(|p| (1.8..=2.2).contains(p));
    verdict(
        2,
        "bochner identity order",
        ok && dt < Duration::from_secs(30),
        format!("20 fitted orders in [{lo:.3}, {hi:.3}], {dt:.2?}"),
    );
}

#[test]
fn criterion_03_eigenfunctions() {
    let torus_err = |n: usize| {
        let g = torus(n);
        let l = assemble_laplacian(&g).unwrap();
        let f = g.sample_with(|p| p[0].sin());
        let lf = l.mul(f.values());
        let e = (0..g.node_count())
            .map(|a| (lf[a] + f.values()[a]).abs())
            .fold(0.0, f64::max);
        (e, g.spacing()[0])
    };
    let sphere_err = |n: usize| {
        let g = sphere(n);
        let l = assemble_laplacian(&g).unwrap();
        let f = g.sample_with(|p| p[0].cos());
        let lf = l.mul(f.values());
        let e = (0..g.node_count())
            .filter(|&a| !g.on_any_face(a))
            .map(|a| (lf[a] + 2.0 * f.values()[a]).abs())
            .fold(0.0, f64::max);
        (e, g.spacing().iter().cloned().fold(0.0, f64::max))
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, errs) in [
        ("torus", [32, 64, 128].map(torus_err)),
        ("sphere", [32, 64, 128].map(sphere_err)),
    ] {
        let c = errs.iter().map(|(e, h)| e / (h * h)).fold(0.0, f64::max);
        let ratios: Vec<f64> = errs.windows(2).map(|w| w[0].0 / w[1].0).collect();
        ok &= ratios.iter().all(|r| *r >= 3.6);
        detail.push(format!(
            "{name} C={c:.3} ratios={:.2}/{:.2}",
            ratios[0], ratios[1]
        ));
    }
    verdict(3, "laplacian eigenfunctions", ok, detail.join(", "));
}

#[test]
fn criterion_04_stability_inequality() {
    let t = Instant::now();
    let g = torus(128);
    let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
    let one = SolutionState::constant(&g, &[1.0]);
    let phi = g.sample_with(|x| x[0].sin());
    let analytic = stability_margin(&p, &one, &[phi]).unwrap().margin;
    let target = 6.0 * PI * PI;
    let analytic_ok = (analytic - target).abs() <= 0.01 * target;

    let g = torus(64);
    let fam = [TestFunctionFamily::bumps(2024, 1000)];
    let mut worst = f64::INFINITY;
    let mut all_stable = true;
    let presets: [(Arc<dyn Nonlinearity>, Vec<f64>); 2] = [
        (Arc::new(Bose { g: 1.0 }), vec![1.0, 0.2]),
        (Arc::new(DoubleWell { beta: 1.0 }), vec![0.9, 0.1]),
    ];
    for (nl, mean) in presets {
        let p = Problem::new(g.clone(), nl).unwrap();
        let init = InitialData::Random {
            seed: 5,
            amplitude: 0.1,
            mean,
        };
        let u = settle(&p, &init);
        all_stable &= classify_stability(&p, &u).unwrap().is_stable();
        let m = stability_margins(&p, &u, &fam).unwrap();
        for r in &m.rows {
            worst = worst.min(r.margin / r.rhs.abs().max(f64::MIN_POSITIVE));
        }
    }
    let dt = t.elapsed();
    verdict(
        4,
        "stability inequality",
        analytic_ok && all_stable && worst >= -1e-6 && dt < Duration::from_secs(120),
        format!(
            "sine margin {analytic:.4} vs 6π² = {target:.4}, 2000 seeded margins min relative {worst:.3e}, {dt:.2?}"
        ),
    );
}

#[test]
fn criterion_05_poincare_inequality() {
    let g = torus(48);
    let fam = [TestFunctionFamily::bumps(77, 100)];
    let mut cases: Vec<(&str, Problem, SolutionState)> = Vec::new();
    let ac = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
    cases.push(("allen_cahn u=1", ac, SolutionState::constant(&g, &[1.0])));
    let bose = Problem::new(g.clone(), Arc::new(Bose { g: 1.0 })).unwrap();
    let u = settle(
        &bose,
        &InitialData::Random {
            seed: 5,
            amplitude: 0.1,
            mean: vec![1.0, 0.2],
        },
    );
    cases.push(("bose", bose, u));
    let dw = Problem::new(g.clone(), Arc::new(DoubleWell { beta: 1.0 })).unwrap();
    let u = settle(
        &dw,
        &InitialData::Random {
            seed: 5,
            amplitude: 0.1,
            mean: vec![0.9, 0.1],
        },
    );
    cases.push(("gradient_double_well", dw, u));
    let (p, u) = dirichlet_allen_cahn();
    cases.push(("allen_cahn dirichlet profile", p, u));

    let mut ok = true;
    let mut detail = Vec::new();
    for (name, p, u) in &cases {
        let class = classify_stability(p, u).unwrap();
        if !class.is_stable() {
            ok = false;
            detail.push(format!("{name}: not stable"));
            continue;
        }
        let m = poincare_margins(p, u, &fam).unwrap();
        let bad = m
            .rows
            .iter()
            .filter(|r| r.margin < -1e-5 * r.rhs.abs())
            .count();
        ok &= bad == 0;
        let rel = if m.min_relative.is_finite() {
            format!("{:.3}", m.min_relative)
        } else {
            "n/a".into()
        };
        detail.push(format!("{name}: min relative {rel}, {bad} below"));
    }
    verdict(5, "poincare inequality", ok, detail.join("; "));
}

#[test]
fn criterion_06_liouville() {
    let t = Instant::now();
    let opts = LiouvilleOptions::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, grid) in [("T²", torus(48)), ("S²", sphere(32))] {
        let rep = liouville_compact(&grid, Arc::new(Bose { g: 1.0 }), 20, 2024, &opts).unwrap();
        let bad = rep.summary_f64("stable_nonconstant").unwrap();
        let stable = rep.summary_f64("stable").unwrap();
        ok &= bad == 0.0;
        detail.push(format!("{name}: {stable} stable, {bad} stable-nonconstant"));
    }
    let g = torus(64);
    let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
    let control = classify_stability(&p, &SolutionState::constant(&g, &[0.0])).unwrap();
    let mu = match control {
        StabilityClass::Unstable { mu1, .. } => mu1,
        _ => f64::NAN,
    };
    ok &= (mu + 1.0).abs() <= 0.05;
    let dt = t.elapsed();
    verdict(
        6,
        "liouville consistency",
        ok && dt < Duration::from_secs(300),
        format!(
            "{}; control μ₁ = {mu:.4} unstable, {dt:.2?}",
            detail.join(", ")
        ),
    );
}

#[test]
fn criterion_07_volume_growth() {
    let mut ok = true;
    let mut detail = Vec::new();
    for (dim, radii, h, expected) in [
        (2, vec![4.0, 8.0, 16.0, 32.0], 0.25, 4.0),
        (3, vec![3.0, 6.0, 12.0], 0.3, 2.0),
    ] {
        let rep = volume_growth(dim, &radii, h).unwrap();
        let factors: Vec<f64> = rep
            .column("factor")
            .unwrap()
            .into_iter()
            .filter(|f| f.is_finite())
            .collect();
        ok &= !factors.is_empty()
            && factors
                .iter()
                .all(|f| (f - expected).abs() <= 0.15 * expected);
        detail.push(format!("{dim}D factors {factors:.3?} (expect {expected})"));
    }
    verdict(7, "volume growth", ok, detail.join(", "));
}

#[test]
fn criterion_08_parabolicity() {
    let rep2 = parabolicity_capacity(2, &[8.0, 16.0, 32.0], 0.125).unwrap();
    let e2 = rep2.column("rel_error").unwrap();
    let ok2 = e2.iter().all(|e| e.abs() <= 0.05);
    let rep3 = parabolicity_capacity(3, &[2.0, 3.0, 4.0], 0.1).unwrap();
    let plateau = rep3.summary_f64("plateau_estimate").unwrap();
    let target = 4.0 * PI;
    let ok3 = (plateau - target).abs() <= 0.05 * target;
    verdict(
        8,
        "parabolicity capacity",
        ok2 && ok3,
        format!(
            "2D rel errors {e2:.4?}; 3D plateau {plateau:.3} vs 4π = {target:.3} ({:+.2}%)",
            100.0 * (plateau - target) / target
        ),
    );
}

#[test]
fn criterion_09_level_set_geodesy() {
    let g = sphere(128);
    let u: DiscreteScalarField = g.sample_with(|p| p[0].cos());
    let eq = extract_level_curves(&g, &u, 0.0, 1e-3).unwrap();
    let eq_defect = eq.iter().map(|c| c.max_defect()).fold(0.0, f64::max);
    let lat = extract_level_curves(&g, &u, (PI / 3.0).cos(), 1e-3).unwrap();
    let lat_defect = lat.iter().map(|c| c.mean_defect()).sum::<f64>() / lat.len() as f64;
    let expected = 1.0 / 3f64.sqrt();
    verdict(
        9,
        "level-set geodesy",
        eq_defect <= 2e-3 && (lat_defect - expected).abs() <= 0.05 * expected,
        format!("equator defect {eq_defect:.2e}, latitude π/3 defect {lat_defect:.4} (cot π/3 = {expected:.4})"),
    );
}

const DETERMINISM_CONFIG: &str = r#"
seed = 99

[chart]
preset = "flat_torus"

[grid]
resolution = 24

[nonlinearity]
name = "gradient_double_well"
params = { beta = 0.5 }

[[experiments]]
kind = "liouville"
n_starts = 6
options = { flow_time = 8.0 }

[[experiments]]
kind = "stability"
initial = { kind = "random", seed = 3, amplitude = 0.05, mean = [1.0, 0.0] }
bumps = 200
trig = 8
poincare = 40

[[experiments]]
kind = "bochner"
functions = 3
resolutions = [16, 32, 64]

[[experiments]]
kind = "hessian_scan"
functions = 3
resolution = 24

[[experiments]]
kind = "capacity"
dim = 2
radii = [2.0, 4.0]
spacing = 0.25

[[experiments]]
kind = "level_set"
level = 0.3
field = { kind = "axis", function = "sin", axis = 0 }
"#;

#[test]
fn criterion_10_determinism() {
    let resolved = RunConfig::from_toml(DETERMINISM_CONFIG)
        .unwrap()
        .resolve(true)
        .unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let a = riemstab_cli::run(&resolved, Some(1), dirs[0].path()).unwrap();
    let b = riemstab_cli::run(&resolved, Some(3), dirs[1].path()).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let identical = names.iter().all(|n| {
        std::fs::read(dirs[0].path().join(n)).unwrap()
            == std::fs::read(dirs[1].path().join(n)).unwrap_or_default()
    });
    verdict(
        10,
        "determinism",
        identical && a == b && a.failures.is_empty() && a.experiments.len() == 6,
        format!(
            "{} files byte-identical across --jobs 1 and 3: {identical}",
            names.len()
        ),
    );
}
