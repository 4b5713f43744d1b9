use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use riemstab_core::discretization::{Boundary, Grid};
use riemstab_core::geometry::{ChartSpec, TrigSum, DEFAULT_THETA_MIN};
use riemstab_core::lab::{LevelSetOptions, LiouvilleOptions};
use riemstab_core::stability::ClassifyOptions;
use riemstab_core::system::{InitialData, Nonlinearity, ParamValue, Registry};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Top-level run configuration, read from a TOML document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<NonlinearityConfig>,
    /// Extra nonlinearity presets: a built-in with fixed parameters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub presets: Vec<AliasConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub experiments: Vec<ExperimentConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartConfig {
    FlatTorus {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lengths: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dim: Option<usize>,
    },
    Rectangle {
        ranges: Vec<[f64; 2]>,
    },
    Sphere {
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "theta_min")]
        theta_min: f64,
    },
    Warped {
        #[serde(default = "three")]
        base: f64,
        #[serde(default = "one")]
        amp: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn three() -> f64 {
    3.0
}

fn theta_min() -> f64 {
    DEFAULT_THETA_MIN
}

/// Chart presets and their parameter docs.
pub const CHART_PRESETS: &[(&str, &str)] = &[
    (
        "flat_torus",
        "flat [0, L_k) with periodic axes; params: lengths (default 2π each), dim (default 2)",
    ),
    (
        "rectangle",
        "flat box with non-periodic axes; params: ranges = [[lo, hi], ...]",
    ),
    (
        "sphere",
        "round sphere band θ ∈ [θ_min, π − θ_min]; params: radius (1), theta_min (0.15)",
    ),
    (
        "warped",
        "torus of revolution dθ² + (base + amp·cos θ)² dφ²; params: base (3), amp (1)",
    ),
];

impl ChartConfig {
    pub fn build(&self) -> Result<ChartSpec, CliError> {
        let chart = match self {
            ChartConfig::FlatTorus { lengths, dim } => match (lengths, dim) {
                (Some(l), Some(d)) if l.len() != *d => {
                    return Err(CliError::invalid(
                        "chart",
                        format!("{} lengths given for dim = {d}", l.len()),
                    ))
                }
                (Some(l), _) => ChartSpec::flat_torus(l),
                (None, d) => ChartSpec::flat_torus(&vec![2.0 * PI; d.unwrap_or(2)]),
            },
            ChartConfig::Rectangle { ranges } => {
                ChartSpec::rectangle(ranges.iter().map(|r| (r[0], r[1])).collect())
            }
            ChartConfig::Sphere { radius, theta_min } => {
                ChartSpec::sphere_band(*radius, *theta_min)
            }
            ChartConfig::Warped { base, amp } => ChartSpec::warped_torus(*base, *amp),
        };
        chart.map_err(|e| CliError::invalid("chart", e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Uniform(usize),
    PerAxis(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryConfig {
    #[default]
    Neumann,
    Dirichlet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: Resolution,
    #[serde(default)]
    pub boundary: BoundaryConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearityConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AliasConfig {
    pub name: String,
    pub base: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamValue>,
}

/// Run-wide tolerance overrides; unset entries keep the experiment defaults.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Stability inequality: margins must be ≥ `−stability_rel · RHS` (1e-6).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability_rel: Option<f64>,
    /// Poincaré inequality slack (1e-5).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poincare_rel: Option<f64>,
    /// Constancy defect relative to `1 + ‖u‖_∞` (1e-6).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub const_rel: Option<f64>,
    /// Geodesic defect bound for level curves (2e-3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_set: Option<f64>,
    /// Absolute eigenvalue tolerance for stability classification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalue: Option<f64>,
}

impl Tolerances {
    pub fn stability_rel(&self) -> f64 {
        self.stability_rel.unwrap_or(1e-6)
    }

    pub fn poincare_rel(&self) -> f64 {
        self.poincare_rel.unwrap_or(1e-5)
    }

    fn validate(&self) -> Result<(), CliError> {
        let all = [
            ("stability_rel", self.stability_rel),
            ("poincare_rel", self.poincare_rel),
            ("const_rel", self.const_rel),
            ("level_set", self.level_set),
            ("eigenvalue", self.eigenvalue),
        ];
        for (k, v) in all {
            if let Some(x) = v {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(CliError::invalid(
                        format!("tolerances.{k}"),
                        format!("must be a finite nonnegative number, got {x}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// Classify the initial data as given.
    None,
    #[default]
    Newton,
    /// Gradient flow for `flow_time`, then Newton with mean pinning.
    FlowNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Stable,
    Unstable,
    Indeterminate,
}

impl Expectation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Expectation::Stable => "stable",
            Expectation::Unstable => "unstable",
            Expectation::Indeterminate => "indeterminate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisFunction {
    Sin,
    Cos,
}

/// Analytic scalar field sampled on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Axis { function: AxisFunction, axis: usize },
    Trig { offset: f64, waves: Vec<WaveConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveConfig {
    pub amp: f64,
    pub k: Vec<f64>,
    #[serde(default)]
    pub phase: f64,
}

impl FieldConfig {
    pub fn build(&self, dim: usize) -> Result<TrigSum, String> {
        match self {
            FieldConfig::Axis { function, axis } => {
                if *axis >= dim {
                    return Err(format!("axis {axis} out of range for dimension {dim}"));
                }
                Ok(match function {
                    AxisFunction::Sin => TrigSum::sin_axis(dim, *axis),
                    AxisFunction::Cos => TrigSum::cos_axis(dim, *axis),
                })
            }
            FieldConfig::Trig { offset, waves } => {
                let mut f = TrigSum::constant(dim, *offset);
                for w in waves {
                    if w.k.len() != dim {
                        return Err(format!(
                            "wave vector has {} entries, expected {dim}",
                            w.k.len()
                        ));
                    }
                    f = f.plus(TrigSum::wave(w.amp, &w.k, w.phase));
                }
                Ok(f)
            }
        }
    }
}

fn bumps_default() -> usize {
    1000
}

fn trig_default() -> usize {
    16
}

fn poincare_default() -> usize {
    100
}

fn starts_default() -> usize {
    20
}

fn functions_default() -> usize {
    10
}

fn max_freq_default() -> i32 {
    2
}

fn resolutions_default() -> Vec<usize> {
    vec![32, 64, 128]
}

fn eps_grad_default() -> f64 {
    1e-3
}

fn scan_resolution_default() -> usize {
    64
}

fn flow_time_default() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityExperiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub initial: InitialData,
    #[serde(default)]
    pub solve: SolveMode,
    #[serde(default = "flow_time_default")]
    pub flow_time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
    /// Random bumps tested against the stability inequality.
    #[serde(default = "bumps_default")]
    pub bumps: usize,
    /// Trigonometric modes tested against the stability inequality.
    #[serde(default = "trig_default")]
    pub trig: usize,
    /// Random bumps `η` tested against the Poincaré inequality.
    #[serde(default = "poincare_default")]
    pub poincare: usize,
    #[serde(default)]
    pub classify: ClassifyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiouvilleExperiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default = "starts_default")]
    pub n_starts: usize,
    #[serde(default)]
    pub options: LiouvilleOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BochnerExperiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default = "functions_default")]
    pub functions: usize,
    #[serde(default = "max_freq_default")]
    pub max_freq: i32,
    #[serde(default = "resolutions_default")]
    pub resolutions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HessianExperiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default = "functions_default")]
    pub functions: usize,
    #[serde(default = "max_freq_default")]
    pub max_freq: i32,
    #[serde(default = "eps_grad_default")]
    pub eps_grad: f64,
    #[serde(default = "scan_resolution_default")]
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatExperiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub dim: usize,
    pub radii: Vec<f64>,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelSetExperiment {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub field: FieldConfig,
    pub level: f64,
    #[serde(default)]
    pub options: LevelSetOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Stability(StabilityExperiment),
    Liouville(LiouvilleExperiment),
    Bochner(BochnerExperiment),
    HessianScan(HessianExperiment),
    VolumeGrowth(FlatExperiment),
    Capacity(FlatExperiment),
    LevelSet(LevelSetExperiment),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::Stability(_) => "stability",
            ExperimentConfig::Liouville(_) => "liouville",
            ExperimentConfig::Bochner(_) => "bochner",
            ExperimentConfig::HessianScan(_) => "hessian_scan",
            ExperimentConfig::VolumeGrowth(_) => "volume_growth",
            ExperimentConfig::Capacity(_) => "capacity",
            ExperimentConfig::LevelSet(_) => "level_set",
        }
    }

    fn explicit_id(&self) -> Option<&str> {
        match self {
            ExperimentConfig::Stability(e) => e.id.as_deref(),
            ExperimentConfig::Liouville(e) => e.id.as_deref(),
            ExperimentConfig::Bochner(e) => e.id.as_deref(),
            ExperimentConfig::HessianScan(e) => e.id.as_deref(),
            ExperimentConfig::VolumeGrowth(e) | ExperimentConfig::Capacity(e) => e.id.as_deref(),
            ExperimentConfig::LevelSet(e) => e.id.as_deref(),
        }
    }

    fn needs_grid(&self) -> bool {
        matches!(
            self,
            ExperimentConfig::Stability(_)
                | ExperimentConfig::Liouville(_)
                | ExperimentConfig::LevelSet(_)
        )
    }

    fn needs_chart(&self) -> bool {
        self.needs_grid()
            || matches!(
                self,
                ExperimentConfig::Bochner(_) | ExperimentConfig::HessianScan(_)
            )
    }

    fn needs_nonlinearity(&self) -> bool {
        matches!(
            self,
            ExperimentConfig::Stability(_) | ExperimentConfig::Liouville(_)
        )
    }
}

/// A config that passed validation, with its presets resolved.
#[derive(Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub chart: Option<ChartSpec>,
    pub grid: Option<Grid>,
    pub nonlinearity: Option<Arc<dyn Nonlinearity>>,
    pub registry: Registry,
    /// Report id per experiment, in order.
    pub ids: Vec<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Parse(m) => CliError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    /// Semantic validation; builds the chart, grid and nonlinearity once.
    pub fn resolve(self, builtins: bool) -> Result<Resolved, CliError> {
        self.tolerances.validate()?;
        let mut registry = if builtins {
            Registry::with_builtins()
        } else {
            Registry::empty()
        };
        for (k, a) in self.presets.iter().enumerate() {
            registry
                .register_alias(&a.name, &a.base, a.params.clone())
                .map_err(|e| CliError::invalid(format!("presets[{k}]"), e.to_string()))?;
        }
        let chart = self.chart.as_ref().map(ChartConfig::build).transpose()?;
        let grid = match (&self.grid, &chart) {
            (Some(g), Some(c)) => {
                let counts = match &g.resolution {
                    Resolution::Uniform(n) => vec![*n; c.dim()],
                    Resolution::PerAxis(v) => v.clone(),
                };
                let boundary = match g.boundary {
                    BoundaryConfig::Neumann => Boundary::Neumann,
                    BoundaryConfig::Dirichlet => Boundary::Dirichlet,
                };
                Some(
                    Grid::with_boundary(c.clone(), &counts, boundary)
                        .map_err(|e| CliError::invalid("grid", e.to_string()))?,
                )
            }
            (Some(_), None) => return Err(CliError::invalid("grid", "a grid needs a [chart]")),
            _ => None,
        };
        let nonlinearity = self
            .nonlinearity
            .as_ref()
            .map(|n| {
                registry
                    .build(&n.name, &n.params)
                    .map_err(|e| CliError::invalid("nonlinearity", e.to_string()))
            })
            .transpose()?;

        let mut ids = Vec::new();
        let mut seen = BTreeSet::new();
        for (k, e) in self.experiments.iter().enumerate() {
            let at = format!("experiments[{k}] ({})", e.kind());
            if e.needs_chart() && chart.is_none() {
                return Err(CliError::invalid(at, "requires a [chart] section"));
            }
            if e.needs_grid() && grid.is_none() {
                return Err(CliError::invalid(at, "requires a [grid] section"));
            }
            if e.needs_nonlinearity() && nonlinearity.is_none() {
                return Err(CliError::invalid(at, "requires a [nonlinearity] section"));
            }
            check_experiment(e, chart.as_ref(), nonlinearity.as_deref())
                .map_err(|m| CliError::invalid(&at, m))?;
            let id = match e.explicit_id() {
                Some(id) => {
                    if id.is_empty()
                        || !id
                            .chars()
                            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
                    {
                        return Err(CliError::invalid(
                            at,
                            format!("id `{id}` must be [A-Za-z0-9_-]+"),
                        ));
                    }
                    if !seen.insert(id.to_string()) {
                        return Err(CliError::invalid(at, format!("duplicate id `{id}`")));
                    }
                    id.to_string()
                }
                None => {
                    let mut id = e.kind().to_string();
                    let mut n = 2;
                    while seen.contains(&id) {
                        id = format!("{}-{n}", e.kind());
                        n += 1;
                    }
                    seen.insert(id.clone());
                    id
                }
            };
            ids.push(id);
        }
        Ok(Resolved {
            config: self,
            chart,
            grid,
            nonlinearity,
            registry,
            ids,
        })
    }
}

fn check_experiment(
    e: &ExperimentConfig,
    chart: Option<&ChartSpec>,
    nl: Option<&dyn Nonlinearity>,
) -> Result<(), String> {
    match e {
        ExperimentConfig::Stability(s) => {
            if !(s.flow_time >= 0.0 && s.flow_time.is_finite()) {
                return Err(format!(
                    "flow_time must be nonnegative, got {}",
                    s.flow_time
                ));
            }
            let m = nl.map_or(0, |n| n.components());
            let got = match &s.initial {
                InitialData::Constant { values } => Some(values.len()),
                InitialData::Random { mean, .. } => Some(mean.len()),
                InitialData::Bump { amplitude, .. } => Some(amplitude.len()),
                InitialData::File { paths } => Some(paths.len()),
            };
            if got != Some(m) {
                return Err(format!(
                    "initial data has {} components, the nonlinearity has {m}",
                    got.unwrap_or(0)
                ));
            }
        }
        ExperimentConfig::Liouville(l) => {
            if l.n_starts == 0 {
                return Err("n_starts must be positive".into());
            }
        }
        ExperimentConfig::Bochner(b) => {
            if b.resolutions.len() < 3 || b.resolutions.iter().any(|&n| n < 8) {
                return Err("need at least 3 resolutions, each ≥ 8".into());
            }
            if b.functions == 0 || b.max_freq < 1 {
                return Err("functions and max_freq must be positive".into());
            }
        }
        ExperimentConfig::HessianScan(h) => {
            if h.functions == 0 || h.max_freq < 1 || h.resolution < 4 || !(h.eps_grad > 0.0) {
                return Err(
                    "functions, max_freq, eps_grad must be positive and resolution ≥ 4".into(),
                );
            }
        }
        ExperimentConfig::VolumeGrowth(f) | ExperimentConfig::Capacity(f) => {
            if f.dim != 2 && f.dim != 3 {
                return Err(format!("dim must be 2 or 3, got {}", f.dim));
            }
            if f.radii.is_empty() || f.radii.iter().any(|r| !(*r > 0.0)) || !(f.spacing > 0.0) {
                return Err("radii and spacing must be positive".into());
            }
        }
        ExperimentConfig::LevelSet(l) => {
            let dim = chart.map_or(0, ChartSpec::dim);
            if dim != 2 {
                return Err(format!("level sets need a 2D chart, got dimension {dim}"));
            }
            l.field.build(dim)?;
        }
    }
    Ok(())
}
