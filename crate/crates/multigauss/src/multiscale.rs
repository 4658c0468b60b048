//! Per-scale decomposition of `C(s, m²)` by a smooth dyadic partition in `|p|`.
//!
//! `Φ_t(p) = 1 - S((log_L(|p|/π) + t)/w + 1/2)` for `0 < t < N`, with `S` the
//! C^∞ step built from `exp(-1/x)`; `Φ_t ≡ 1` for `t ≤ 0` and `Φ_t = 1_{p=0}`
//! for `t ≥ N`. Piece `j` carries `χ_j = Φ_{j-1} - Φ_j`, so the pieces telescope
//! exactly. Finite range is only approximate and is measured by [`range_profile`].

use rand::Rng as _;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{momentum_centred, Fft2};
use crate::lattice::{LatticeField, TorusLattice};
use crate::rng::Rng;
use crate::spectral::{DiagonalOperator, FourierMultiplier, ZeroMode};

/// C^∞ step: 0 for `x ≤ 0`, 1 for `x ≥ 1`.
pub fn smooth_step(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// Dyadic partition profile.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Partition {
    pub base: usize,
    pub scales: u32,
    /// Transition width in units of `log_L |p|`.
    pub width: f64,
}

impl Partition {
    pub fn new(base: usize, scales: u32, width: f64) -> Result<Self> {
        if base < 2 || scales < 1 {
            return Err(Error::InvalidLattice(format!("L = {base}, N = {scales}")));
        }
        if !(width > 0.0) {
            return Err(Error::Config(format!(
                "partition width {width} must be positive"
            )));
        }
        Ok(Self {
            base,
            scales,
            width,
        })
    }

    /// `Φ_t` at a momentum of Euclidean norm `p_norm`.
    pub fn phi(&self, t: f64, p_norm: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        if p_norm == 0.0 {
            return 1.0;
        }
        if t >= self.scales as f64 {
            return 0.0;
        }
        let log = (p_norm / std::f64::consts::PI).ln() / (self.base as f64).ln();
        1.0 - smooth_step((log + t) / self.width + 0.5)
    }

    /// `Φ_t` on the dual grid of a torus of side `side`.
    pub fn phi_grid(&self, t: f64, side: usize) -> Vec<f64> {
        (0..side * side)
            .map(|k| {
                let (p1, p2) = momentum_centred(side, k);
                self.phi(t, (p1 * p1 + p2 * p2).sqrt())
            })
            .collect()
    }
}

/// `Γ_1, …, Γ_N` and the zero-mode coefficient `t_N`.
#[derive(Debug, Clone)]
pub struct CovarianceDecomposition {
    lattice: TorusLattice,
    partition: Partition,
    cs: DiagonalOperator,
    gammas: Vec<DiagonalOperator>,
    t_n: f64,
    divergent: bool,
}

/// Splits `cs` into `N` pieces with the default or a given transition width.
pub fn decompose(
    cs: &DiagonalOperator,
    lattice: &TorusLattice,
    width: f64,
) -> Result<CovarianceDecomposition> {
    let side = lattice.side();
    if cs.side() != side {
        return Err(Error::SizeMismatch {
            expected: side,
            got: cs.side(),
        });
    }
    if !cs.is_psd() {
        return Err(Error::Precondition(
            "covariance is not positive semidefinite".into(),
        ));
    }
    let partition = Partition::new(lattice.base(), lattice.scales(), width)?;
    let c = cs.multiplier().values();
    let mut gammas = Vec::with_capacity(lattice.scales() as usize);
    let mut upper = partition.phi_grid(0.0, side);
    for j in 1..=lattice.scales() {
        let lower = partition.phi_grid(j as f64, side);
        let mut values: Vec<f64> = (0..side * side)
            .map(|k| c[k] * (upper[k] - lower[k]))
            .collect();
        values[0] = 0.0;
        if let Some(k) = values.iter().position(|&v| v < -1e-12) {
            return Err(Error::NegativePiece {
                piece: j as usize,
                mode: k,
                value: values[k],
            });
        }
        gammas.push(DiagonalOperator::new(
            FourierMultiplier::from_values(side, values)?,
            ZeroMode::Finite,
        ));
        upper = lower;
    }
    let divergent = cs.zero_mode() == ZeroMode::Excluded;
    let t_n = if divergent { f64::INFINITY } else { c[0] };
    Ok(CovarianceDecomposition {
        lattice: *lattice,
        partition,
        cs: cs.clone(),
        gammas,
        t_n,
        divergent,
    })
}

impl CovarianceDecomposition {
    pub fn lattice(&self) -> &TorusLattice {
        &self.lattice
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn covariance(&self) -> &DiagonalOperator {
        &self.cs
    }

    pub fn scales(&self) -> u32 {
        self.gammas.len() as u32
    }

    /// `Γ_j` for `1 ≤ j ≤ N`.
    pub fn gamma(&self, j: u32) -> Result<&DiagonalOperator> {
        if j == 0 || j > self.scales() {
            return Err(Error::ScaleOutOfRange {
                scale: j,
                scales: self.scales(),
            });
        }
        Ok(&self.gammas[j as usize - 1])
    }

    pub fn gammas(&self) -> &[DiagonalOperator] {
        &self.gammas
    }

    /// Coefficient of the zero-mode projector; infinite when the mass vanishes.
    pub fn t_n(&self) -> f64 {
        self.t_n
    }

    pub fn is_divergent(&self) -> bool {
        self.divergent
    }

    /// `Γ_{≤j} = Γ_1 + … + Γ_j`; `j = 0` gives the zero operator.
    pub fn partial_sum(&self, j: u32) -> Result<DiagonalOperator> {
        if j > self.scales() {
            return Err(Error::ScaleOutOfRange {
                scale: j,
                scales: self.scales(),
            });
        }
        let side = self.lattice.side();
        let mut acc = vec![0.0; side * side];
        for g in &self.gammas[..j as usize] {
            acc.iter_mut()
                .zip(g.multiplier().values())
                .for_each(|(a, v)| *a += v);
        }
        Ok(DiagonalOperator::new(
            FourierMultiplier::from_values(side, acc)?,
            ZeroMode::Finite,
        ))
    }

    /// `max_p |Σ_j Γ̂_j(p) + t_N 1_{p=0} - Ĉ_s(p)|`, skipping an infinite `t_N`.
    pub fn reconstruction_error(&self) -> f64 {
        let c = self.cs.multiplier().values();
        let mut err = 0.0_f64;
        for k in 0..c.len() {
            let mut s: f64 = self.gammas.iter().map(|g| g.multiplier().at(k)).sum();
            if k == 0 {
                if self.divergent {
                    continue;
                }
                s += self.t_n;
            }
            err = err.max((s - c[k]).abs());
        }
        err
    }

    /// Splits `Γ_{j+1}` into `M` pieces on the fractional scales `j + k/M`.
    /// Requires `L = ℓ^M` for an integer `ℓ ≥ 2`.
    pub fn subdecompose(&self, j: u32, m: u32) -> Result<Vec<DiagonalOperator>> {
        if j >= self.scales() {
            return Err(Error::ScaleOutOfRange {
                scale: j + 1,
                scales: self.scales(),
            });
        }
        if m == 0 {
            return Err(Error::Config("M must be at least 1".into()));
        }
        let base = self.lattice.base();
        let ell = (base as f64).powf(1.0 / m as f64).round() as usize;
        if ell < 2 || ell.checked_pow(m) != Some(base) {
            return Err(Error::NotAPower { base, power: m });
        }
        let target = &self.gammas[j as usize];
        if m == 1 {
            return Ok(vec![target.clone()]);
        }
        let side = self.lattice.side();
        let c = self.cs.multiplier().values();
        let mut pieces = Vec::with_capacity(m as usize);
        let mut upper = self.partition.phi_grid(j as f64, side);
        for k in 1..=m {
            let lower = self
                .partition
                .phi_grid(j as f64 + k as f64 / m as f64, side);
            let mut values: Vec<f64> = (0..side * side)
                .map(|i| c[i] * (upper[i] - lower[i]))
                .collect();
            values[0] = 0.0;
            if let Some(i) = values.iter().position(|&v| v < -1e-12) {
                return Err(Error::NegativePiece {
                    piece: k as usize,
                    mode: i,
                    value: values[i],
                });
            }
            pieces.push(DiagonalOperator::new(
                FourierMultiplier::from_values(side, values)?,
                ZeroMode::Finite,
            ));
            upper = lower;
        }
        Ok(pieces)
    }
}

/// Kernel column `Γ(·, 0)`.
pub fn kernel(gamma: &DiagonalOperator, fft: &Fft2) -> LatticeField {
    gamma.multiplier().kernel(fft)
}

/// `Γ ∗ f` by FFT.
pub fn convolve_kernel(gamma: &DiagonalOperator, fft: &Fft2, f: &LatticeField) -> LatticeField {
    fft.apply_multiplier(gamma.multiplier().values(), f)
}

/// Fraction of `Σ_x |Γ(0,x)|` carried by `|x|_∞ > ¼ L^j`.
pub fn range_profile(gamma: &DiagonalOperator, fft: &Fft2, lattice: &TorusLattice, j: u32) -> f64 {
    let k = kernel(gamma, fft);
    let radius = lattice.block_side(j) as f64 / 4.0;
    let mut tail = 0.0;
    let mut total = 0.0;
    for (i, &v) in k.values().iter().enumerate() {
        let (x, y) = lattice.coords(i);
        let d = lattice.centred(x).abs().max(lattice.centred(y).abs()) as f64;
        total += v.abs();
        if d > radius {
            tail += v.abs();
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

/// Gaussian field with covariance `Γ`: white noise coloured by `√Γ̂` in Fourier space.
pub fn sample_scale(gamma: &DiagonalOperator, fft: &Fft2, rng: &mut Rng) -> LatticeField {
    let side = fft.side();
    let mut data: Vec<Complex64> = (0..side * side)
        .map(|_| Complex64::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .collect();
    fft.forward(&mut data);
    let m = gamma.multiplier().values();
    let excluded = gamma.zero_mode() == ZeroMode::Excluded;
    for (k, z) in data.iter_mut().enumerate() {
        let v = if k == 0 && excluded {
            0.0
        } else {
            m[k].max(0.0)
        };
        *z *= v.sqrt();
    }
    fft.inverse_real(data).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::StepDistribution;
    use crate::spectral::{covariance_cs, CovarianceParams};

    fn setup(base: usize, scales: u32, p: CovarianceParams) -> CovarianceDecomposition {
        let lat = TorusLattice::new(base, scales).unwrap();
        let cs = covariance_cs(&StepDistribution::nearest_neighbour(), lat.side(), p).unwrap();
        decompose(&cs, &lat, 1.0).unwrap()
    }

    #[test]
    fn telescopes_with_zero_mode() {
        let d = setup(
            4,
            3,
            CovarianceParams {
                s: 0.0,
                m2: 1.0,
                gamma: 0.1,
            },
        );
        assert!(d.reconstruction_error() < 1e-12);
        assert!(
            (d.t_n()
                + d.gammas()
                    .iter()
                    .map(|g| g.multiplier().zero_mode())
                    .sum::<f64>()
                - 0.9)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn single_scale_is_whole_covariance() {
        let d = setup(
            4,
            1,
            CovarianceParams {
                s: 0.05,
                m2: 0.5,
                gamma: 0.1,
            },
        );
        let c = d.covariance().multiplier().values();
        for k in 1..c.len() {
            assert!((d.gammas()[0].multiplier().at(k) - c[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn massless_flags_divergence() {
        let d = setup(
            2,
            3,
            CovarianceParams {
                s: 0.0,
                m2: 0.0,
                gamma: 0.1,
            },
        );
        assert!(d.is_divergent());
        assert!(d.t_n().is_infinite());
        assert!(d.reconstruction_error() < 1e-12);
    }

    #[test]
    fn subdecomposition_requires_power() {
        let d = setup(
            8,
            2,
            CovarianceParams {
                s: 0.0,
                m2: 1.0,
                gamma: 0.1,
            },
        );
        assert!(matches!(d.subdecompose(0, 2), Err(Error::NotAPower { .. })));
        let parts = d.subdecompose(0, 3).unwrap();
        let g = d.gamma(1).unwrap().multiplier().values();
        for k in 0..g.len() {
            let s: f64 = parts.iter().map(|p| p.multiplier().at(k)).sum();
            assert!((s - g[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_step_is_symmetric() {
        for x in [0.1, 0.3, 0.5, 0.77] {
            assert!((smooth_step(x) + smooth_step(1.0 - x) - 1.0).abs() < 1e-15);
        }
    }
}
