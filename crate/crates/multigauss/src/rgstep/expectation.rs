//! Expectation functionals over a fluctuation field.

use std::sync::Mutex;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::lattice::LatticeField;
use crate::multiscale::{kernel, sample_scale};
use crate::rng::{self, Rng};
use crate::spectral::DiagonalOperator;

/// How an [`ExpectationFunctional`] produces its values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationKind {
    /// Weighted average over a fixed sample set.
    EmpiricalFixedSamples,
    /// Fresh Gaussian samples on every call.
    GaussianMc,
    /// Tensor Gauss–Hermite rule along the covariance eigenvectors.
    GaussianExactSmall,
}

struct MonteCarlo {
    gamma: DiagonalOperator,
    fft: Fft2,
    count: usize,
    rng: Mutex<Rng>,
}

/// `E[F(ζ)]` for a linear functional `E`.
pub struct ExpectationFunctional {
    kind: ExpectationKind,
    samples: Vec<LatticeField>,
    weights: Vec<f64>,
    mc: Option<MonteCarlo>,
}

impl std::fmt::Debug for ExpectationFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExpectationFunctional")
            .field("kind", &self.kind)
            .field("points", &self.samples.len())
            .finish()
    }
}

impl ExpectationFunctional {
    /// Uniform average over `samples`.
    pub fn empirical(samples: Vec<LatticeField>) -> Result<Self> {
        let n = samples.len();
        Self::weighted(samples, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn weighted(samples: Vec<LatticeField>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() || samples.len() != weights.len() {
            return Err(Error::Expectation(format!(
                "{} samples with {} weights",
                samples.len(),
                weights.len()
            )));
        }
        let side = samples[0].side();
        if samples.iter().any(|s| s.side() != side) {
            return Err(Error::Expectation("samples live on different tori".into()));
        }
        Ok(Self {
            kind: ExpectationKind::EmpiricalFixedSamples,
            samples,
            weights,
            mc: None,
        })
    }

    /// `count` Gaussian samples with covariance `gamma`, drawn once.
    pub fn gaussian_fixed(gamma: &DiagonalOperator, count: usize, seed: u64) -> Result<Self> {
        let fft = Fft2::new(gamma.side());
        let mut rng = rng::stream(seed, 0);
        Self::empirical(
            (0..count)
                .map(|_| sample_scale(gamma, &fft, &mut rng))
                .collect(),
        )
    }

    /// Monte Carlo average over `count` fresh samples per call.
    pub fn gaussian_mc(gamma: &DiagonalOperator, count: usize, seed: u64) -> Self {
        Self {
            kind: ExpectationKind::GaussianMc,
            samples: Vec::new(),
            weights: Vec::new(),
            mc: Some(MonteCarlo {
                gamma: gamma.clone(),
                fft: Fft2::new(gamma.side()),
                count: count.max(1),
                rng: Mutex::new(rng::stream(seed, 0)),
            }),
        }
    }

    /// Product Gauss–Hermite rule with `nodes` points per nonzero eigenvalue
    /// of the covariance; exact for polynomials of degree `< 2·nodes`.
    pub fn gaussian_exact_small(
        gamma: &DiagonalOperator,
        nodes: usize,
        budget: usize,
    ) -> Result<Self> {
        let side = gamma.side();
        let n = side * side;
        if n > 64 {
            return Err(Error::Budget {
                count: n,
                limit: 64,
            });
        }
        let k = kernel(gamma, &Fft2::new(side));
        let cov = DMatrix::from_fn(n, n, |a, b| {
            let (ax, ay) = ((a % side) as i64, (a / side) as i64);
            let (bx, by) = ((b % side) as i64, (b / side) as i64);
            k.get(ax - bx, ay - by)
        });
        let eig = SymmetricEigen::new(cov);
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let modes: Vec<usize> = (0..n)
            .filter(|&i| eig.eigenvalues[i] > 1e-12 * top.max(1e-300))
            .collect();
        let count = (nodes as f64).powi(modes.len() as i32);
        if count > budget as f64 {
            return Err(Error::Budget {
                count: count.min(usize::MAX as f64) as usize,
                limit: budget,
            });
        }
        let (x, w) = hermite_rule(nodes)?;
        let count = count as usize;
        let mut samples = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        for idx in 0..count {
            let mut rest = idx;
            let mut weight = 1.0;
            let mut values = vec![0.0; n];
            for &m in &modes {
                let d = rest % nodes;
                rest /= nodes;
                weight *= w[d];
                let amp = eig.eigenvalues[m].sqrt() * x[d];
                for (v, e) in values.iter_mut().zip(eig.eigenvectors.column(m).iter()) {
                    *v += amp * e;
                }
            }
            samples.push(LatticeField::from_values(side, values)?);
            weights.push(weight);
        }
        Ok(Self {
            kind: ExpectationKind::GaussianExactSmall,
            samples,
            weights,
            mc: None,
        })
    }

    pub fn kind(&self) -> ExpectationKind {
        self.kind
    }

    /// Whether repeated calls see the same sample set.
    pub fn is_fixed(&self) -> bool {
        self.kind != ExpectationKind::GaussianMc
    }

    pub fn require_fixed(&self) -> Result<()> {
        if self.is_fixed() {
            Ok(())
        } else {
            Err(Error::Expectation(
                "identity checks need a fixed, linear expectation".into(),
            ))
        }
    }

    /// Weighted sample set; empty for Monte Carlo.
    pub fn points(&self) -> impl Iterator<Item = (f64, &LatticeField)> {
        self.weights.iter().copied().zip(self.samples.iter())
    }

    pub fn len(&self) -> usize {
        self.mc.as_ref().map_or(self.samples.len(), |m| m.count)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn side(&self) -> usize {
        self.mc
            .as_ref()
            .map_or_else(|| self.samples[0].side(), |m| m.gamma.side())
    }

    pub fn expect(&self, f: impl FnMut(&LatticeField) -> f64) -> f64 {
        let mut f = f;
        self.try_expect(|z| Ok(f(z))).expect("infallible")
    }

    pub fn try_expect(&self, mut f: impl FnMut(&LatticeField) -> Result<f64>) -> Result<f64> {
        match &self.mc {
            Some(mc) => {
                let mut rng = mc
                    .rng
                    .lock()
                    .map_err(|_| Error::Expectation("poisoned sampler".into()))?;
                let mut total = 0.0;
                for _ in 0..mc.count {
                    total += f(&sample_scale(&mc.gamma, &mc.fft, &mut rng))?;
                }
                Ok(total / mc.count as f64)
            }
            None => {
                let mut total = 0.0;
                for (w, z) in self.points() {
                    total += w * f(z)?;
                }
                Ok(total)
            }
        }
    }
}

/// Nodes and weights of the `n`-point rule for the standard normal density
/// (Golub–Welsch).
pub fn hermite_rule(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Expectation(
            "quadrature needs at least one node".into(),
        ));
    }
    let jacobi = DMatrix::from_fn(n, n, |a, b| {
        if a.abs_diff(b) == 1 {
            (a.max(b) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| (eig.eigenvalues[i], eig.eigenvectors[(0, i)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs.into_iter().unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{FourierMultiplier, ZeroMode};

    fn small_gamma() -> DiagonalOperator {
        let m = FourierMultiplier::from_fn(2, |p1, p2| 1.0 / (1.0 + 2.0 - p1.cos() - p2.cos()));
        DiagonalOperator::new(m, ZeroMode::Finite)
    }

    #[test]
    fn hermite_moments() {
        let (x, w) = hermite_rule(5).unwrap();
        let m = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!(m(1).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
        assert!((m(8) - 105.0).abs() < 1e-9);
    }

    #[test]
    fn exact_small_reproduces_covariance() {
        let gamma = small_gamma();
        let e = ExpectationFunctional::gaussian_exact_small(&gamma, 3, 1000).unwrap();
        let k = kernel(&gamma, &Fft2::new(2));
        for a in 0..4 {
            for b in 0..4 {
                let got = e.expect(|z| z.at(a) * z.at(b));
                let want = k.get(a as i64 % 2 - b as i64 % 2, a as i64 / 2 - b as i64 / 2);
                assert!((got - want).abs() < 1e-12, "{a} {b}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn exact_small_budget() {
        assert!(matches!(
            ExpectationFunctional::gaussian_exact_small(&small_gamma(), 6, 100),
            Err(Error::Budget { .. })
        ));
    }

    #[test]
    fn monte_carlo_is_rejected_and_fixed_is_deterministic() {
        let gamma = small_gamma();
        assert!(ExpectationFunctional::gaussian_mc(&gamma, 4, 1)
            .require_fixed()
            .is_err());
        let a = ExpectationFunctional::gaussian_fixed(&gamma, 8, 3).unwrap();
        let b = ExpectationFunctional::gaussian_fixed(&gamma, 8, 3).unwrap();
        let f = |z: &LatticeField| z.at(1).cos() + z.at(2);
        assert_eq!(a.expect(f), b.expect(f));
        assert!(a.require_fixed().is_ok());
    }

    #[test]
    fn linearity() {
        let e = ExpectationFunctional::gaussian_fixed(&small_gamma(), 16, 9).unwrap();
        let f = |z: &LatticeField| (z.at(0) * 0.7).sin();
        let g = |z: &LatticeField| z.at(3).powi(2);
        let lhs = e.expect(|z| 2.5 * f(z) - 0.3 * g(z));
        let rhs = 2.5 * e.expect(f) - 0.3 * e.expect(g);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
