use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SolverError;

/// A reaction term `H: ℝ^m → ℝ^m` with its Jacobian `(∂_j H_i)`.
pub trait Nonlinearity: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn components(&self) -> usize;
    fn eval(&self, u: &[f64], out: &mut [f64]);
    /// Entry `(i, j)` is `∂_j H_i(u)`.
    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>);
    /// `W` with `H = −∇W`, when one exists.
    fn potential(&self, _u: &[f64]) -> Option<f64> {
        None
    }
    /// Box `[lo, hi]^m` where structural checks sample states.
    fn sample_box(&self) -> (f64, f64) {
        (-2.0, 2.0)
    }
    fn params(&self) -> BTreeMap<String, ParamValue> {
        BTreeMap::new()
    }

    fn h(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components()];
        self.eval(u, &mut out);
        out
    }

    fn jac(&self, u: &[f64]) -> DMatrix<f64> {
        let m = self.components();
        let mut out = DMatrix::zeros(m, m);
        self.jacobian(u, &mut out);
        out
    }
}

/// A preset parameter: a number or a list of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    List(Vec<f64>),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(x) => write!(f, "{x}"),
            ParamValue::List(xs) => {
                let items: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
                write!(f, "[{}]", items.join(", "))
            }
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

fn number(params: &Params, preset: &str, key: &str, default: f64) -> Result<f64, SolverError> {
    match params.get(key) {
        None => Ok(default),
        Some(ParamValue::Number(x)) if x.is_finite() => Ok(*x),
        Some(_) => Err(SolverError::BadParameters {
            preset: preset.into(),
            reason: format!("`{key}` must be a finite number"),
        }),
    }
}

fn matrix(params: &Params, preset: &str) -> Result<DMatrix<f64>, SolverError> {
    let bad = |reason: String| SolverError::BadParameters {
        preset: preset.into(),
        reason,
    };
    let list = match params.get("a") {
        Some(ParamValue::List(v)) => v,
        Some(ParamValue::Number(x)) => return Ok(DMatrix::from_element(1, 1, *x)),
        None => return Err(bad("missing matrix `a` (row-major list)".into())),
    };
    let m = (list.len() as f64).sqrt().round() as usize;
    if m == 0 || m * m != list.len() || list.iter().any(|x| !x.is_finite()) {
        return Err(bad(format!(
            "`a` has {} entries, expected a square count",
            list.len()
        )));
    }
    Ok(DMatrix::from_row_slice(m, m, list))
}

fn check_params(params: &Params, preset: &str, allowed: &[&str]) -> Result<(), SolverError> {
    if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(SolverError::BadParameters {
            preset: preset.into(),
            reason: format!("unknown parameter `{k}` (allowed: {})", allowed.join(", ")),
        });
    }
    Ok(())
}

/// `H_1 = −g u v²`, `H_2 = −g v u²`; `W = g u² v² / 2`.
#[derive(Debug, Clone)]
pub struct Bose {
    pub g: f64,
}

impl Nonlinearity for Bose {
    fn name(&self) -> &str {
        "bose"
    }
    fn components(&self) -> usize {
        2
    }
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        let (a, b) = (u[0], u[1]);
        out[0] = -self.g * a * b * b;
        out[1] = -self.g * b * a * a;
    }
    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        let (a, b) = (u[0], u[1]);
        out[(0, 0)] = -self.g * b * b;
        out[(0, 1)] = -2.0 * self.g * a * b;
        out[(1, 0)] = -2.0 * self.g * a * b;
        out[(1, 1)] = -self.g * a * a;
    }
    fn potential(&self, u: &[f64]) -> Option<f64> {
        Some(0.5 * self.g * u[0] * u[0] * u[1] * u[1])
    }
    fn params(&self) -> Params {
        BTreeMap::from([("g".into(), ParamValue::Number(self.g))])
    }
}

/// `H(u) = u − u³`; `W = (1 − u²)² / 4`.
#[derive(Debug, Clone)]
pub struct AllenCahn;

impl Nonlinearity for AllenCahn {
    fn name(&self) -> &str {
        "allen_cahn_scalar"
    }
    fn components(&self) -> usize {
        1
    }
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        out[0] = u[0] - u[0].powi(3);
    }
    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        out[(0, 0)] = 1.0 - 3.0 * u[0] * u[0];
    }
    fn potential(&self, u: &[f64]) -> Option<f64> {
        Some(0.25 * (1.0 - u[0] * u[0]).powi(2))
    }
}

/// `H = −∇W` with `W = Σ (1 − u_i²)² / 4 + β u_1² u_2²` (two components).
#[derive(Debug, Clone)]
pub struct DoubleWell {
    pub beta: f64,
}

impl Nonlinearity for DoubleWell {
    fn name(&self) -> &str {
        "gradient_double_well"
    }
    fn components(&self) -> usize {
        2
    }
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..2 {
            let j = 1 - i;
            out[i] = u[i] * (1.0 - u[i] * u[i]) - 2.0 * self.beta * u[i] * u[j] * u[j];
        }
    }
    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        for i in 0..2 {
            let j = 1 - i;
            out[(i, i)] = 1.0 - 3.0 * u[i] * u[i] - 2.0 * self.beta * u[j] * u[j];
            out[(i, j)] = -4.0 * self.beta * u[i] * u[j];
        }
    }
    fn potential(&self, u: &[f64]) -> Option<f64> {
        let w: f64 = u.iter().map(|x| 0.25 * (1.0 - x * x).powi(2)).sum();
        Some(w + self.beta * u[0] * u[0] * u[1] * u[1])
    }
    fn params(&self) -> Params {
        BTreeMap::from([("beta".into(), ParamValue::Number(self.beta))])
    }
}

/// `H(u) = A u`. The potential `−½ uᵀAu` exists only for symmetric `A`.
#[derive(Debug, Clone)]
pub struct Linear {
    name: &'static str,
    pub a: DMatrix<f64>,
}

impl Linear {
    pub fn new(a: DMatrix<f64>) -> Self {
        Linear { name: "linear", a }
    }

    pub fn symmetric(a: DMatrix<f64>) -> Result<Self, SolverError> {
        let asym = (&a - a.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + a.abs().max()) {
            return Err(SolverError::BadParameters {
                preset: "linear_symmetric".into(),
                reason: format!("matrix is not symmetric (defect {asym:e})"),
            });
        }
        Ok(Linear {
            name: "linear_symmetric",
            a,
        })
    }
}

impl Nonlinearity for Linear {
    fn name(&self) -> &str {
        self.name
    }
    fn components(&self) -> usize {
        self.a.nrows()
    }
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.components() {
            out[i] = (0..self.components()).map(|j| self.a[(i, j)] * u[j]).sum();
        }
    }
    fn jacobian(&self, _u: &[f64], out: &mut DMatrix<f64>) {
        out.copy_from(&self.a);
    }
    fn potential(&self, u: &[f64]) -> Option<f64> {
        if (&self.a - self.a.transpose()).abs().max() > 1e-12 * (1.0 + self.a.abs().max()) {
            return None;
        }
        let mut w = 0.0;
        for i in 0..u.len() {
            for j in 0..u.len() {
                w -= 0.5 * self.a[(i, j)] * u[i] * u[j];
            }
        }
        Some(w)
    }
    fn params(&self) -> Params {
        let m = self.components();
        let list = (0..m * m).map(|k| self.a[(k / m, k % m)]).collect();
        BTreeMap::from([("a".into(), ParamValue::List(list))])
    }
}

/// `H ≡ 0` in `m` components.
#[derive(Debug, Clone)]
pub struct Zero {
    pub m: usize,
}

impl Nonlinearity for Zero {
    fn name(&self) -> &str {
        "zero"
    }
    fn components(&self) -> usize {
        self.m
    }
    fn eval(&self, _u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn jacobian(&self, _u: &[f64], out: &mut DMatrix<f64>) {
        out.fill(0.0);
    }
    fn potential(&self, _u: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn params(&self) -> Params {
        BTreeMap::from([("m".into(), ParamValue::Number(self.m as f64))])
    }
}

/// `H(u) − c u`; shifts the linearized spectrum up by `c`.
#[derive(Debug, Clone)]
pub struct Shifted {
    pub inner: Arc<dyn Nonlinearity>,
    pub c: f64,
}

impl Nonlinearity for Shifted {
    fn name(&self) -> &str {
        "shifted"
    }
    fn components(&self) -> usize {
        self.inner.components()
    }
    fn eval(&self, u: &[f64], out: &mut [f64]) {
        self.inner.eval(u, out);
        for (o, x) in out.iter_mut().zip(u) {
            *o -= self.c * x;
        }
    }
    fn jacobian(&self, u: &[f64], out: &mut DMatrix<f64>) {
        self.inner.jacobian(u, out);
        for i in 0..self.components() {
            out[(i, i)] -= self.c;
        }
    }
    fn potential(&self, u: &[f64]) -> Option<f64> {
        let w = self.inner.potential(u)?;
        Some(w + 0.5 * self.c * u.iter().map(|x| x * x).sum::<f64>())
    }
    fn sample_box(&self) -> (f64, f64) {
        self.inner.sample_box()
    }
}

type Factory = fn(&Params) -> Result<Arc<dyn Nonlinearity>, SolverError>;

#[derive(Clone)]
struct Entry {
    doc: &'static str,
    factory: Factory,
}

/// Named nonlinearity presets plus user aliases (`name → base preset + params`).
#[derive(Clone, Default)]
pub struct Registry {
    builtins: BTreeMap<String, Entry>,
    aliases: BTreeMap<String, (String, Params)>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("builtins", &self.builtins.keys().collect::<Vec<_>>())
            .field("aliases", &self.aliases)
            .finish()
    }
}

impl Registry {
    /// Registry without any presets.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.add(
            "bose",
            "H = (−g·u·v², −g·v·u²); params: g (default 1)",
            |p| {
                check_params(p, "bose", &["g"])?;
                Ok(Arc::new(Bose {
                    g: number(p, "bose", "g", 1.0)?,
                }))
            },
        );
        r.add("allen_cahn_scalar", "H(u) = u − u³; no params", |p| {
            check_params(p, "allen_cahn_scalar", &[])?;
            Ok(Arc::new(AllenCahn))
        });
        r.add(
            "gradient_double_well",
            "H = −∇W, W = Σ(1−u_i²)²/4 + β·u₁²u₂²; params: beta (default 1)",
            |p| {
                check_params(p, "gradient_double_well", &["beta"])?;
                Ok(Arc::new(DoubleWell {
                    beta: number(p, "gradient_double_well", "beta", 1.0)?,
                }))
            },
        );
        r.add(
            "linear_symmetric",
            "H(u) = A·u with A symmetric; params: a (row-major list)",
            |p| {
                check_params(p, "linear_symmetric", &["a"])?;
                Ok(Arc::new(Linear::symmetric(matrix(p, "linear_symmetric")?)?))
            },
        );
        r.add(
            "linear",
            "H(u) = A·u, any square A; params: a (row-major list)",
            |p| {
                check_params(p, "linear", &["a"])?;
                Ok(Arc::new(Linear::new(matrix(p, "linear")?)))
            },
        );
        r.add("zero", "H ≡ 0; params: m (default 1)", |p| {
            check_params(p, "zero", &["m"])?;
            let m = number(p, "zero", "m", 1.0)?;
            if !(m >= 1.0 && m.fract() == 0.0) {
                return Err(SolverError::BadParameters {
                    preset: "zero".into(),
                    reason: "`m` must be a positive integer".into(),
                });
            }
            Ok(Arc::new(Zero { m: m as usize }))
        });
        r
    }

    fn add(&mut self, name: &str, doc: &'static str, factory: Factory) {
        self.builtins.insert(name.into(), Entry { doc, factory });
    }

    /// Registers `alias` as `base` with fixed parameters. The base must resolve.
    pub fn register_alias(
        &mut self,
        alias: &str,
        base: &str,
        params: Params,
    ) -> Result<(), SolverError> {
        if self.builtins.contains_key(alias) {
            return Err(SolverError::BadParameters {
                preset: alias.into(),
                reason: "alias shadows a built-in preset".into(),
            });
        }
        self.build(base, &params)?;
        self.aliases.insert(alias.into(), (base.into(), params));
        Ok(())
    }

    /// Instantiates a preset. Alias parameters are overridden by `params`.
    pub fn build(&self, name: &str, params: &Params) -> Result<Arc<dyn Nonlinearity>, SolverError> {
        if let Some(e) = self.builtins.get(name) {
            return (e.factory)(params);
        }
        if let Some((base, fixed)) = self.aliases.get(name) {
            let mut merged = fixed.clone();
            merged.extend(params.clone());
            return self.build(base, &merged);
        }
        Err(SolverError::UnknownPreset(name.into()))
    }

    /// `(name, description)` for every preset and alias, sorted by name.
    pub fn list(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self
            .builtins
            .iter()
            .map(|(k, e)| (k.clone(), e.doc.to_string()))
            .collect();
        for (k, (base, p)) in &self.aliases {
            let params: Vec<String> = p.iter().map(|(name, v)| format!("{name} = {v}")).collect();
            let doc = if params.is_empty() {
                format!("alias of `{base}`")
            } else {
                format!("alias of `{base}` with {}", params.join(", "))
            };
            out.push((k.clone(), doc));
        }
        out.sort();
        out
    }
}

/// `count` reproducible states uniform in the nonlinearity's sample box.
pub fn sample_states(nl: &dyn Nonlinearity, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let (lo, hi) = nl.sample_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (0..nl.components())
                .map(|_| rng.gen_range(lo..hi))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub symmetric: bool,
    pub max_asymmetry: f64,
}

/// `max |∂_j H_i − ∂_i H_j|` over `states`, compared with `tol`.
pub fn check_symmetric(nl: &dyn Nonlinearity, states: &[Vec<f64>], tol: f64) -> SymmetryReport {
    let m = nl.components();
    let mut jac = DMatrix::zeros(m, m);
    let mut worst: f64 = 0.0;
    for u in states {
        nl.jacobian(u, &mut jac);
        for i in 0..m {
            for j in 0..i {
                worst = worst.max((jac[(i, j)] - jac[(j, i)]).abs());
            }
        }
    }
    SymmetryReport {
        symmetric: worst <= tol,
        max_asymmetry: worst,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    /// Pairs `i ≠ j` only (default).
    #[default]
    OffDiagonal,
    /// Every pair including `i = j`.
    AllPairs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairProduct {
    pub i: usize,
    pub j: usize,
    /// `min ∂_i H_j · ∂_j H_i` over the sampled states.
    pub min_product: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub mode: CouplingMode,
    pub pairs: Vec<PairProduct>,
}

impl CouplingReport {
    /// True when no pair is flagged (vacuously true with no pairs).
    pub fn all_positive(&self) -> bool {
        self.pairs.iter().all(|p| !p.flagged)
    }
}

/// Minimum of `∂_i H_j · ∂_j H_i` per pair `i ≤ j`; flags products `≤ 0`.
pub fn check_coupling(
    nl: &dyn Nonlinearity,
    states: &[Vec<f64>],
    mode: CouplingMode,
) -> CouplingReport {
    let m = nl.components();
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in i..m {
            if i == j && mode == CouplingMode::OffDiagonal {
                continue;
            }
            pairs.push(PairProduct {
                i,
                j,
                min_product: f64::INFINITY,
                flagged: false,
            });
        }
    }
    let mut jac = DMatrix::zeros(m, m);
    for u in states {
        nl.jacobian(u, &mut jac);
        for p in &mut pairs {
            p.min_product = p.min_product.min(jac[(p.j, p.i)] * jac[(p.i, p.j)]);
        }
    }
    for p in &mut pairs {
        p.flagged = !(p.min_product > 0.0);
    }
    CouplingReport { mode, pairs }
}

/// Largest relative deviation of the Jacobian from central differences of `H`.
pub fn jacobian_consistency(nl: &dyn Nonlinearity, states: &[Vec<f64>]) -> f64 {
    let m = nl.components();
    let mut worst: f64 = 0.0;
    for u in states {
        let jac = nl.jac(u);
        let scale = 1.0 + jac.abs().max();
        for j in 0..m {
            let eps = 1e-6 * (1.0 + u[j].abs());
            let mut up = u.clone();
            let mut dn = u.clone();
            up[j] += eps;
            dn[j] -= eps;
            let (hp, hd) = (nl.h(&up), nl.h(&dn));
            for i in 0..m {
                let fd = (hp[i] - hd[i]) / (2.0 * eps);
                worst = worst.max((fd - jac[(i, j)]).abs() / scale);
            }
        }
    }
    worst
}
