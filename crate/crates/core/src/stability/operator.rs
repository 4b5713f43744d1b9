use crate::discretization::SparseOperator;
use crate::error::StabilityError;
use crate::system::{Problem, SolutionState};

/// `A = −L ⊗ I − ℍ(u)` acting on component-major vectors of length `m · N`.
///
/// Rows and columns of constrained nodes are removed: `A` maps vectors that
/// vanish there to vectors that vanish there.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    m: usize,
    nodes: usize,
    laplacian: SparseOperator,
    weights: Vec<f64>,
    constrained: Vec<bool>,
    /// `∂_j H_i(u(a))` at `a * m * m + i * m + j`.
    coupling: Vec<f64>,
}

/// Assembles the linearization of `−Δ_g u − H(u)` at `u`.
pub fn assemble_linearized(
    problem: &Problem,
    u: &SolutionState,
) -> Result<LinearizedOperator, StabilityError> {
    problem.check_state(u)?;
    let grid = problem.grid();
    Ok(LinearizedOperator {
        m: problem.components(),
        nodes: grid.node_count(),
        laplacian: problem.laplacian().clone(),
        weights: grid.weights().to_vec(),
        constrained: grid.constrained().to_vec(),
        coupling: problem.jacobians(u),
    })
}

impl LinearizedOperator {
    pub fn components(&self) -> usize {
        self.m
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.m * self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn laplacian(&self) -> &SparseOperator {
        &self.laplacian
    }

    pub fn coupling(&self, node: usize, i: usize, j: usize) -> f64 {
        self.coupling[node * self.m * self.m + i * self.m + j]
    }

    pub fn is_constrained(&self, node: usize) -> bool {
        self.constrained[node]
    }

    /// True for degrees of freedom on free nodes.
    pub fn is_free(&self, dof: usize) -> bool {
        !self.constrained[dof % self.nodes]
    }

    /// Quadrature weight of a degree of freedom (zero on constrained nodes).
    pub fn weight(&self, dof: usize) -> f64 {
        if self.is_free(dof) {
            self.weights[dof % self.nodes]
        } else {
            0.0
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.weight(k)).collect()
    }

    /// `y = A x`
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (m, n) = (self.m, self.nodes);
        for i in 0..m {
            self.laplacian
                .apply(&x[i * n..(i + 1) * n], &mut y[i * n..(i + 1) * n]);
        }
        for a in 0..n {
            if self.constrained[a] {
                for i in 0..m {
                    y[i * n + a] = 0.0;
                }
                continue;
            }
            let b = &self.coupling[a * m * m..(a + 1) * m * m];
            for i in 0..m {
                let mut acc = -y[i * n + a];
                for j in 0..m {
                    acc -= b[i * m + j] * x[j * n + a];
                }
                y[i * n + a] = acc;
            }
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        self.apply(x, &mut y);
        y
    }

    /// Diagonal entries `−L_aa − ∂_i H_i`.
    pub fn diagonal(&self) -> Vec<f64> {
        let ld = self.laplacian.diagonal();
        (0..self.len())
            .map(|k| {
                let (i, a) = (k / self.nodes, k % self.nodes);
                if self.constrained[a] {
                    0.0
                } else {
                    -ld[a] - self.coupling(a, i, i)
                }
            })
            .collect()
    }

    /// Max absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        let lrow: Vec<f64> = self
            .laplacian
            .matrix()
            .outer_iterator()
            .map(|r| r.iter().map(|(_, v)| v.abs()).sum())
            .collect();
        let mut best: f64 = 0.0;
        for a in (0..self.nodes).filter(|&a| !self.constrained[a]) {
            for i in 0..self.m {
                let c: f64 = (0..self.m).map(|j| self.coupling(a, i, j).abs()).sum();
                best = best.max(lrow[a] + c);
            }
        }
        best
    }

    /// Relative defect of `W A` from symmetry: the Laplacian part and the
    /// pointwise coupling blocks.
    pub fn weighted_asymmetry(&self) -> f64 {
        let lap = self.laplacian.weighted_asymmetry(&self.weights);
        let scale = self.coupling.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        let mut coup: f64 = 0.0;
        for a in 0..self.nodes {
            for i in 0..self.m {
                for j in 0..i {
                    coup = coup.max((self.coupling(a, i, j) - self.coupling(a, j, i)).abs());
                }
            }
        }
        let coup = if scale > 0.0 { coup / scale } else { 0.0 };
        lap.max(coup)
    }

    /// Gershgorin lower bound on the spectrum:
    /// `min_{a,i} (−∂_i H_i − Σ_{j≠i} |∂_j H_i|)` (the Laplacian rows contribute
    /// a nonnegative amount).
    pub fn spectrum_lower_bound(&self) -> f64 {
        let mut low = f64::INFINITY;
        for a in (0..self.nodes).filter(|&a| !self.constrained[a]) {
            for i in 0..self.m {
                let off: f64 = (0..self.m)
                    .filter(|&j| j != i)
                    .map(|j| self.coupling(a, i, j).abs())
                    .sum();
                low = low.min(-self.coupling(a, i, i) - off);
            }
        }
        low
    }

    /// `⟨x, y⟩_w` over free degrees of freedom.
    pub fn inner(&self, x: &[f64], y: &[f64]) -> f64 {
        crate::linalg::pairwise_sum_by(x.len(), &|k| self.weight(k) * x[k] * y[k])
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.inner(x, x).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::Grid;
    use crate::geometry::ChartSpec;
    use crate::system::{AllenCahn, Bose, Zero};
    use std::sync::Arc;

    #[test]
    fn block_structure() {
        let g = Grid::new(ChartSpec::standard_torus(2).unwrap(), &[12, 12]).unwrap();
        let p = Problem::new(g.clone(), Arc::new(AllenCahn)).unwrap();
        let a = assemble_linearized(&p, &SolutionState::constant(&g, &[1.0])).unwrap();
        let x: Vec<f64> = (0..a.len()).map(|k| (k as f64 * 0.37).sin()).collect();
        let lx = p.laplacian().mul(&x);
        let ax = a.mul(&x);
        for k in 0..a.len() {
            assert!((ax[k] - (-lx[k] + 2.0 * x[k])).abs() < 1e-12);
        }
        assert_eq!(a.spectrum_lower_bound(), 2.0);

        let z = Problem::new(g.clone(), Arc::new(Zero { m: 2 })).unwrap();
        let az = assemble_linearized(&z, &SolutionState::constant(&g, &[0.0, 0.0])).unwrap();
        let x2: Vec<f64> = (0..az.len()).map(|k| (k as f64).cos()).collect();
        let y = az.mul(&x2);
        let n = g.node_count();
        assert_eq!(
            &y[..n],
            &p.laplacian()
                .mul(&x2[..n])
                .iter()
                .map(|v| -v)
                .collect::<Vec<_>>()[..]
        );
    }

    #[test]
    fn symmetric_presets_give_weighted_self_adjoint_operators() {
        let g = Grid::new(ChartSpec::sphere_band(1.0, 0.15).unwrap(), &[16, 16]).unwrap();
        let p = Problem::new(g.clone(), Arc::new(Bose { g: 1.0 })).unwrap();
        let u = SolutionState::new(
            &g,
            vec![g.sample_with(|x| x[0].sin()), g.sample_with(|x| x[1].cos())],
        )
        .unwrap();
        let a = assemble_linearized(&p, &u).unwrap();
        assert!(a.weighted_asymmetry() < 1e-10);
    }
}
