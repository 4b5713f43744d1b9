use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretization::{read_binary, DiscreteScalarField, Grid};
use crate::error::{DiscretizationError, SolverError};

/// `m` nodal fields on one grid, stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    nodes: usize,
    data: Vec<f64>,
}

impl SolutionState {
    pub fn new(grid: &Grid, components: Vec<DiscreteScalarField>) -> Result<Self, SolverError> {
        let nodes = grid.node_count();
        if components.is_empty() {
            return Err(SolverError::ComponentMismatch {
                expected: 1,
                got: 0,
            });
        }
        let mut data = Vec::with_capacity(nodes * components.len());
        for c in components {
            let c = DiscreteScalarField::new(grid, c.into_values())?;
            data.extend_from_slice(c.values());
        }
        Ok(SolutionState { nodes, data })
    }

    /// Wraps a component-major vector of length `m · nodes`.
    pub fn from_flat(nodes: usize, data: Vec<f64>) -> Self {
        assert!(nodes > 0 && data.len() % nodes == 0);
        SolutionState { nodes, data }
    }

    pub fn constant(grid: &Grid, values: &[f64]) -> Self {
        let nodes = grid.node_count();
        let mut data = Vec::with_capacity(nodes * values.len());
        for &v in values {
            data.extend(std::iter::repeat(v).take(nodes));
        }
        SolutionState { nodes, data }
    }

    pub fn components(&self) -> usize {
        self.data.len() / self.nodes
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn component(&self, i: usize) -> &[f64] {
        &self.data[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.nodes..(i + 1) * self.nodes]
    }

    pub fn field(&self, i: usize) -> DiscreteScalarField {
        DiscreteScalarField::from_values(self.component(i).to_vec())
    }

    /// Values of every component at `node`.
    pub fn at(&self, node: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.data[i * self.nodes + node];
        }
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sup_norm(&self) -> f64 {
        crate::linalg::sup_norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `max_i (max u_i − min u_i)`
    pub fn constancy_defect(&self) -> f64 {
        (0..self.components())
            .map(|i| self.field(i).oscillation())
            .fold(0.0, f64::max)
    }

    /// Zeroes every component on constrained nodes.
    pub fn apply_constraints(&mut self, grid: &Grid) {
        for i in 0..self.components() {
            let c = self.component_mut(i);
            for (a, v) in c.iter_mut().enumerate() {
                if grid.is_constrained(a) {
                    *v = 0.0;
                }
            }
        }
    }

    /// Cyclic shift by `offset` nodes along `axis` (periodic axes only).
    pub fn shifted(&self, grid: &Grid, axis: usize, offset: isize) -> Option<Self> {
        if !grid.chart().periodic[axis] {
            return None;
        }
        let mut out = self.clone();
        for i in 0..self.components() {
            let src = self.component(i);
            let dst = out.component_mut(i);
            for a in 0..self.nodes {
                dst[grid.step(a, axis, offset)?] = src[a];
            }
        }
        Some(out)
    }
}

/// Initial data presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// One value per component.
    Constant { values: Vec<f64> },
    /// `mean_i +` a random smooth field of sup-norm about `amplitude`.
    Random {
        seed: u64,
        amplitude: f64,
        mean: Vec<f64>,
    },
    /// `amplitude_i (1 − s²)³` around `center` with coordinate radius `radius`.
    Bump {
        center: Vec<f64>,
        radius: f64,
        amplitude: Vec<f64>,
    },
    /// One binary field dump per component.
    File { paths: Vec<PathBuf> },
}

impl InitialData {
    pub fn build(&self, grid: &Grid, components: usize) -> Result<SolutionState, SolverError> {
        let check = |got: usize| {
            if got == components {
                Ok(())
            } else {
                Err(SolverError::ComponentMismatch {
                    expected: components,
                    got,
                })
            }
        };
        let mut state = match self {
            InitialData::Constant { values } => {
                check(values.len())?;
                SolutionState::constant(grid, values)
            }
            InitialData::Random {
                seed,
                amplitude,
                mean,
            } => {
                check(mean.len())?;
                let fields = mean
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| random_smooth(grid, *seed, i as u64, m, *amplitude))
                    .collect();
                SolutionState::new(grid, fields)?
            }
            InitialData::Bump {
                center,
                radius,
                amplitude,
            } => {
                check(amplitude.len())?;
                if center.len() != grid.dim() || !(*radius > 0.0) {
                    return Err(SolverError::BadParameters {
                        preset: "bump".into(),
                        reason: "center must match the chart dimension and radius be positive"
                            .into(),
                    });
                }
                let fields = amplitude
                    .iter()
                    .map(|&amp| {
                        grid.sample_with(|p| {
                            let s2: f64 = p
                                .iter()
                                .zip(center)
                                .map(|(x, c)| ((x - c) / radius).powi(2))
                                .sum();
                            if s2 < 1.0 {
                                amp * (1.0 - s2).powi(3)
                            } else {
                                0.0
                            }
                        })
                    })
                    .collect();
                SolutionState::new(grid, fields)?
            }
            InitialData::File { paths } => {
                check(paths.len())?;
                let mut fields = Vec::new();
                for p in paths {
                    let file = std::fs::File::open(p).map_err(DiscretizationError::from)?;
                    let (counts, values) = read_binary(std::io::BufReader::new(file))?;
                    if counts != grid.counts() {
                        return Err(DiscretizationError::InvalidGrid(format!(
                            "{} holds a {counts:?} field, grid is {:?}",
                            p.display(),
                            grid.counts()
                        ))
                        .into());
                    }
                    fields.push(DiscreteScalarField::from_values(values));
                }
                SolutionState::new(grid, fields)?
            }
        };
        state.apply_constraints(grid);
        Ok(state)
    }
}

/// `mean + amplitude · Σ c_q cos(2π k_q·t + φ_q) / Σ|c_q|` with `t` the
/// normalized chart coordinates and `|k_q|_∞ ≤ 3`.
fn random_smooth(
    grid: &Grid,
    seed: u64,
    stream: u64,
    mean: f64,
    amplitude: f64,
) -> DiscreteScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let n = grid.dim();
    let modes: Vec<(Vec<f64>, f64, f64)> = (0..8)
        .map(|_| {
            let k = (0..n).map(|_| rng.gen_range(-3..=3) as f64).collect();
            (
                k,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let norm: f64 = modes.iter().map(|m| m.1.abs()).sum::<f64>().max(1e-12);
    let chart = grid.chart().clone();
    grid.sample_with(|p| {
        let mut v = 0.0;
        for (k, c, phase) in &modes {
            let mut arg = *phase;
            for d in 0..n {
                let t = (p[d] - chart.ranges[d].0) / chart.length(d);
                arg += std::f64::consts::TAU * k[d] * t;
            }
            v += c * arg.cos();
        }
        mean + amplitude * v / norm
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ChartSpec;

    #[test]
    fn initial_data_presets() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[16, 16]).unwrap();
        let c = InitialData::Constant {
            values: vec![1.0, -2.0],
        }
        .build(&g, 2)
        .unwrap();
        assert_eq!(c.component(1)[7], -2.0);
        assert_eq!(c.constancy_defect(), 0.0);

        let r = InitialData::Random {
            seed: 3,
            amplitude: 0.1,
            mean: vec![0.5],
        };
        let a = r.build(&g, 1).unwrap();
        assert_eq!(a, r.build(&g, 1).unwrap());
        assert!((a.sup_norm() - 0.5).abs() <= 0.1 + 1e-12);
        assert!(a.constancy_defect() > 0.0);
        assert!(matches!(
            r.build(&g, 2),
            Err(SolverError::ComponentMismatch { .. })
        ));
    }

    #[test]
    fn shift_round_trip() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[8, 8]).unwrap();
        let s = SolutionState::new(&g, vec![g.sample_with(|p| p[0] + 10.0 * p[1])]).unwrap();
        let t = s.shifted(&g, 0, 3).unwrap();
        assert_ne!(s, t);
        assert_eq!(t.shifted(&g, 0, -3).unwrap(), s);
        assert_eq!(s.shifted(&g, 1, 8).unwrap(), s);
    }
}
