use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Value and coordinate partials up to third order of a scalar at one point.
///
/// `third[(i * n + j) * n + k]` holds `∂_i ∂_j ∂_k f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarJet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: DMatrix<f64>,
    pub third: Vec<f64>,
}

impl ScalarJet {
    pub fn zero(n: usize) -> Self {
        ScalarJet {
            value: 0.0,
            grad: vec![0.0; n],
            hess: DMatrix::zeros(n, n),
            third: vec![0.0; n * n * n],
        }
    }

    pub fn d3(&self, i: usize, j: usize, k: usize) -> f64 {
        let n = self.grad.len();
        self.third[(i * n + j) * n + k]
    }
}

/// A smooth scalar on a chart with analytic partials.
pub trait ScalarFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn jet(&self, p: &[f64]) -> ScalarJet;
    fn value(&self, p: &[f64]) -> f64 {
        self.jet(p).value
    }
}

/// `amp · sin(k·x + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneWave {
    pub amp: f64,
    pub phase: f64,
    pub k: Vec<f64>,
}

/// `offset + Σ waves`; closed under differentiation, so every partial is exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigSum {
    pub dim: usize,
    pub offset: f64,
    pub waves: Vec<PlaneWave>,
}

impl TrigSum {
    pub fn constant(dim: usize, c: f64) -> Self {
        TrigSum {
            dim,
            offset: c,
            waves: Vec::new(),
        }
    }

    /// `amp · sin(k·x + phase)`
    pub fn wave(amp: f64, k: &[f64], phase: f64) -> Self {
        TrigSum {
            dim: k.len(),
            offset: 0.0,
            waves: vec![PlaneWave {
                amp,
                phase,
                k: k.to_vec(),
            }],
        }
    }

    /// `sin x_axis` in `dim` dimensions.
    pub fn sin_axis(dim: usize, axis: usize) -> Self {
        let mut k = vec![0.0; dim];
        k[axis] = 1.0;
        Self::wave(1.0, &k, 0.0)
    }

    /// `cos x_axis` in `dim` dimensions.
    pub fn cos_axis(dim: usize, axis: usize) -> Self {
        let mut k = vec![0.0; dim];
        k[axis] = 1.0;
        Self::wave(1.0, &k, std::f64::consts::FRAC_PI_2)
    }

    pub fn plus(mut self, other: TrigSum) -> Self {
        assert_eq!(self.dim, other.dim);
        self.offset += other.offset;
        self.waves.extend(other.waves);
        self
    }

    /// `count` reproducible sums of 1–3 waves with integer wavenumbers in
    /// `[-max_freq, max_freq]` (periodic on any `2π`-periodic axis).
    pub fn random_family(dim: usize, count: usize, max_freq: i32, seed: u64) -> Vec<TrigSum> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| {
                let terms = rng.gen_range(1..=3);
                let waves = (0..terms)
                    .map(|_| {
                        let mut k: Vec<f64> = (0..dim)
                            .map(|_| rng.gen_range(-max_freq..=max_freq) as f64)
                            .collect();
                        if k.iter().all(|&x| x == 0.0) {
                            k[rng.gen_range(0..dim)] = 1.0;
                        }
                        PlaneWave {
                            amp: rng.gen_range(0.3..1.2),
                            phase: rng.gen_range(0.0..std::f64::consts::TAU),
                            k,
                        }
                    })
                    .collect();
                TrigSum {
                    dim,
                    offset: rng.gen_range(-0.5..0.5),
                    waves,
                }
            })
            .collect()
    }
}

impl ScalarFunction for TrigSum {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, p: &[f64]) -> f64 {
        self.offset
            + self
                .waves
                .iter()
                .map(|w| w.amp * (dot(&w.k, p) + w.phase).sin())
                .sum::<f64>()
    }

    fn jet(&self, p: &[f64]) -> ScalarJet {
        let n = self.dim;
        let mut jet = ScalarJet::zero(n);
        jet.value = self.offset;
        for w in &self.waves {
            let (s, c) = (dot(&w.k, p) + w.phase).sin_cos();
            jet.value += w.amp * s;
            for i in 0..n {
                jet.grad[i] += w.amp * w.k[i] * c;
                for j in 0..n {
                    jet.hess[(i, j)] -= w.amp * w.k[i] * w.k[j] * s;
                    for k in 0..n {
                        jet.third[(i * n + j) * n + k] -= w.amp * w.k[i] * w.k[j] * w.k[k] * c;
                    }
                }
            }
        }
        jet
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_matches_finite_differences() {
        let f = TrigSum::random_family(2, 1, 2, 9).pop().unwrap();
        let p = [0.4, -1.1];
        let jet = f.jet(&p);
        let h = 1e-5;
        for i in 0..2 {
            let mut a = p;
            let mut b = p;
            a[i] += h;
            b[i] -= h;
            let (ja, jb) = (f.jet(&a), f.jet(&b));
            assert!(((f.value(&a) - f.value(&b)) / (2.0 * h) - jet.grad[i]).abs() < 1e-8);
            for j in 0..2 {
                assert!(((ja.grad[j] - jb.grad[j]) / (2.0 * h) - jet.hess[(i, j)]).abs() < 1e-8);
                for k in 0..2 {
                    let fd = (ja.hess[(j, k)] - jb.hess[(j, k)]) / (2.0 * h);
                    assert!((fd - jet.d3(i, j, k)).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn family_is_reproducible() {
        assert_eq!(
            TrigSum::random_family(2, 5, 2, 3),
            TrigSum::random_family(2, 5, 2, 3)
        );
        assert_ne!(
            TrigSum::random_family(2, 5, 2, 3),
            TrigSum::random_family(2, 5, 2, 4)
        );
    }
}
