//! Fourier multipliers of translation-invariant operators and the covariances
//! built from them.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{momentum, negate, Fft2};
use crate::lattice::{LatticeField, StepDistribution};

/// Real multiplier on the dual torus, indexed like [`crate::fft`].
#[derive(Debug, Clone, PartialEq)]
pub struct FourierMultiplier {
    side: usize,
    values: Vec<f64>,
}

impl FourierMultiplier {
    pub fn from_fn(side: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..side * side)
            .map(|k| {
                let (p1, p2) = momentum(side, k);
                f(p1, p2)
            })
            .collect();
        Self { side, values }
    }

    pub fn from_values(side: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != side * side {
            return Err(Error::SizeMismatch {
                expected: side * side,
                got: values.len(),
            });
        }
        Ok(Self { side, values })
    }

    pub fn constant(side: usize, c: f64) -> Self {
        Self {
            side,
            values: vec![c; side * side],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn zero_mode(&self) -> f64 {
        self.values[0]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            side: self.side,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.side, other.side);
        Self {
            side: self.side,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest `|m(p) - m(-p)|`.
    pub fn asymmetry(&self) -> f64 {
        (0..self.values.len())
            .map(|k| (self.values[k] - self.values[negate(self.side, k)]).abs())
            .fold(0.0, f64::max)
    }

    /// Rows `(p1, p2, value)` for export.
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.values.len()).map(move |k| {
            let (p1, p2) = momentum(self.side, k);
            (p1, p2, self.values[k])
        })
    }

    /// Real-space kernel `K(x) = |Λ|^{-1} Σ_p m(p) e^{ip·x}`, i.e. the column `K(·, 0)`.
    pub fn kernel(&self, fft: &Fft2) -> LatticeField {
        let mut data: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft.inverse(&mut data);
        LatticeField::from_values(self.side, data.into_iter().map(|z| z.re).collect())
            .expect("square")
    }
}

/// How the `p = 0` mode is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroMode {
    Finite,
    /// The operator acts only on mean-zero fields.
    Excluded,
}

/// Translation-invariant operator given by its multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalOperator {
    multiplier: FourierMultiplier,
    zero_mode: ZeroMode,
}

impl DiagonalOperator {
    pub fn new(multiplier: FourierMultiplier, zero_mode: ZeroMode) -> Self {
        Self {
            multiplier,
            zero_mode,
        }
    }

    pub fn identity(side: usize) -> Self {
        Self::new(FourierMultiplier::constant(side, 1.0), ZeroMode::Finite)
    }

    pub fn multiplier(&self) -> &FourierMultiplier {
        &self.multiplier
    }

    pub fn zero_mode(&self) -> ZeroMode {
        self.zero_mode
    }

    pub fn side(&self) -> usize {
        self.multiplier.side
    }

    /// Positive semidefinite up to `-1e-12`, ignoring an excluded zero mode.
    pub fn is_psd(&self) -> bool {
        self.multiplier
            .values
            .iter()
            .enumerate()
            .all(|(k, &v)| (k == 0 && self.zero_mode == ZeroMode::Excluded) || v >= -1e-12)
    }

    fn effective(&self) -> Vec<f64> {
        let mut m = self.multiplier.values.clone();
        if self.zero_mode == ZeroMode::Excluded {
            m[0] = 0.0;
        }
        m
    }

    fn check_mean(&self, f: &LatticeField) -> Result<()> {
        if self.zero_mode == ZeroMode::Excluded {
            let s = f.sum();
            if s.abs() > 1e-10 * (1.0 + f.max_abs() * f.len() as f64).sqrt().max(1.0) {
                return Err(Error::NonzeroMean(s / f.len() as f64));
            }
        }
        Ok(())
    }

    pub fn apply(&self, fft: &Fft2, f: &LatticeField) -> Result<LatticeField> {
        self.check_mean(f)?;
        Ok(fft.apply_multiplier(&self.effective(), f))
    }

    /// Applies the inverse operator; modes with vanishing multiplier are dropped.
    pub fn apply_inverse(&self, fft: &Fft2, f: &LatticeField) -> Result<LatticeField> {
        self.check_mean(f)?;
        let inv: Vec<f64> = self
            .effective()
            .iter()
            .map(|&v| if v == 0.0 { 0.0 } else { 1.0 / v })
            .collect();
        Ok(fft.apply_multiplier(&inv, f))
    }

    /// `(f, A f)` computed in Fourier space.
    pub fn quadratic_form(&self, fft: &Fft2, f: &LatticeField) -> Result<f64> {
        self.check_mean(f)?;
        let hat = fft.forward_real(f);
        let m = self.effective();
        let s: f64 = hat.iter().zip(&m).map(|(z, v)| z.norm_sqr() * v).sum();
        Ok(s / f.len() as f64)
    }
}

/// `λ(p) = Σ_i 2(1 - cos p_i)`, the multiplier of `-Δ`.
pub fn multiplier_nn(side: usize) -> FourierMultiplier {
    FourierMultiplier::from_fn(side, |p1, p2| {
        2.0 * (1.0 - p1.cos()) + 2.0 * (1.0 - p2.cos())
    })
}

/// `λ_J(p) = |J|^{-1} Σ_{y∈J} (1 - cos p·y)`, the multiplier of `-Δ_J`.
pub fn multiplier_j(j: &StepDistribution, side: usize) -> Result<FourierMultiplier> {
    let n = j.size() as f64;
    let m = FourierMultiplier::from_fn(side, |p1, p2| {
        j.points()
            .iter()
            .map(|&(a, b)| 1.0 - (p1 * a as f64 + p2 * b as f64).cos())
            .sum::<f64>()
            / n
    });
    if let Some(k) = (0..m.values.len()).find(|&k| m.values[k] < -1e-12) {
        let (p1, p2) = momentum(side, k);
        return Err(Error::NotPositive {
            p1,
            p2,
            value: m.values[k],
        });
    }
    Ok(m)
}

/// Range of `λ_J(p) / (v_J² |p|²)` over nonzero momenta in `(-π, π]²`.
pub fn quadratic_bracket(j: &StepDistribution, side: usize) -> Result<(f64, f64)> {
    let m = multiplier_j(j, side)?;
    let v2 = j.v_squared();
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for k in 1..side * side {
        let (p1, p2) = crate::fft::momentum_centred(side, k);
        let r = m.values[k] / (v2 * (p1 * p1 + p2 * p2));
        lo = lo.min(r);
        hi = hi.max(r);
    }
    Ok((lo, hi))
}

/// Parameters of the regularised covariances.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CovarianceParams {
    pub s: f64,
    pub m2: f64,
    pub gamma: f64,
}

/// `C(m²) = (-Δ_J + m²)^{-1} - γ`. The flag reports positive semidefiniteness;
/// a non-psd operator is still returned. `m² = 0` excludes the zero mode.
pub fn covariance_c(
    j: &StepDistribution,
    side: usize,
    m2: f64,
    gamma: f64,
) -> Result<(DiagonalOperator, bool)> {
    if m2 < 0.0 {
        return Err(Error::Precondition(format!(
            "m² = {m2} must be nonnegative"
        )));
    }
    let lam = multiplier_j(j, side)?;
    let mult = lam.map(|l| {
        if l + m2 == 0.0 {
            0.0
        } else {
            1.0 / (l + m2) - gamma
        }
    });
    let zero = if m2 == 0.0 {
        ZeroMode::Excluded
    } else {
        ZeroMode::Finite
    };
    let op = DiagonalOperator::new(mult, zero);
    let psd = op.is_psd();
    Ok((op, psd))
}

/// `C(s, m²) = (C(m²)^{-1} - sΔ)^{-1}`.
pub fn covariance_cs(
    j: &StepDistribution,
    side: usize,
    p: CovarianceParams,
) -> Result<DiagonalOperator> {
    let (c, _) = covariance_c(j, side, p.m2, p.gamma)?;
    let lam = multiplier_nn(side);
    let mut values = Vec::with_capacity(side * side);
    for k in 0..side * side {
        if k == 0 && c.zero_mode == ZeroMode::Excluded {
            values.push(0.0);
            continue;
        }
        let ck = c.multiplier.values[k];
        let denom = 1.0 / ck + p.s * lam.values[k];
        if !(ck > 0.0) || !(denom > 0.0) {
            let (p1, p2) = momentum(side, k);
            return Err(Error::NotPositive {
                p1,
                p2,
                value: if ck > 0.0 { denom } else { ck },
            });
        }
        values.push(1.0 / denom);
    }
    Ok(DiagonalOperator::new(
        FourierMultiplier { side, values },
        c.zero_mode,
    ))
}

/// Smallest value of `Ĉ(p)^{-1} + sλ(p)` over the dual torus: the margin left
/// before `C(s, m²)` stops being positive.
pub fn positivity_margin(j: &StepDistribution, side: usize, p: CovarianceParams) -> Result<f64> {
    let (c, _) = covariance_c(j, side, p.m2, p.gamma)?;
    let lam = multiplier_nn(side);
    let start = if c.zero_mode == ZeroMode::Excluded {
        1
    } else {
        0
    };
    Ok((start..side * side)
        .map(|k| 1.0 / c.multiplier.values[k] + p.s * lam.values[k])
        .fold(f64::INFINITY, f64::min))
}

/// `C̃ = γ(1 + sγΔ) + (1 + sγΔ) C(s, m²) (1 + sγΔ)`.
pub fn covariance_ctilde(
    j: &StepDistribution,
    side: usize,
    p: CovarianceParams,
) -> Result<DiagonalOperator> {
    let cs = covariance_cs(j, side, p)?;
    let lam = multiplier_nn(side);
    let mult = cs.multiplier.zip(&lam, |c, l| {
        let a = 1.0 - p.s * p.gamma * l;
        p.gamma * a + a * a * c
    });
    Ok(DiagonalOperator::new(mult, cs.zero_mode))
}

/// `(-Δ_J)^{-1}` on mean-zero fields.
pub fn inverse_laplacian_j(j: &StepDistribution, side: usize) -> Result<DiagonalOperator> {
    let lam = multiplier_j(j, side)?;
    Ok(DiagonalOperator::new(
        lam.map(|l| if l == 0.0 { 0.0 } else { 1.0 / l }),
        ZeroMode::Excluded,
    ))
}

/// Smooth radial profile `g` entering `f = ∂_i g`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RadialBump {
    /// `exp(-|x|²/(2w²))`.
    Gaussian { width: f64 },
    /// `(1 - |x|²/R²)^k` inside the disc of radius `R`.
    Polynomial { radius: f64, power: u32 },
}

impl RadialBump {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            RadialBump::Gaussian { width } => (-r * r / (2.0 * width * width)).exp(),
            RadialBump::Polynomial { radius, power } => {
                let t = 1.0 - (r / radius).powi(2);
                if t > 0.0 {
                    t.powi(power as i32)
                } else {
                    0.0
                }
            }
        }
    }

    /// Radius beyond which `|g| < threshold`.
    pub fn cutoff_radius(&self, threshold: f64) -> f64 {
        match *self {
            RadialBump::Gaussian { width } => width * (2.0 * (1.0 / threshold).ln()).sqrt(),
            RadialBump::Polynomial { radius, .. } => radius,
        }
    }
}

/// `(f, (-Δ_{R²})^{-1} f)` for `f = c ∂_i g` with radial `g`, with its quadrature
/// error estimate. For radial `g` the form equals `c² π ∫_0^∞ g(r)² r dr`.
pub fn continuum_green_form(
    bump: &RadialBump,
    amplitude: f64,
    tolerance: f64,
) -> Result<(f64, f64)> {
    let upper = bump.cutoff_radius(1e-170);
    let res = crate::quadrature::integrate(
        |r| bump.value(r).powi(2) * r,
        0.0,
        upper,
        tolerance * 1e-2,
        60,
    );
    let scale = std::f64::consts::PI * amplitude * amplitude;
    let (value, err) = (scale * res.value, scale * res.error);
    if err > tolerance * value.abs().max(1e-300) && value != 0.0 {
        return Err(Error::Quadrature {
            estimate: err,
            tolerance,
        });
    }
    Ok((value, err))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multiplier_values() {
        let m = multiplier_nn(8);
        assert_eq!(m.zero_mode(), 0.0);
        assert!((m.at(4) - 4.0).abs() < 1e-14);
        let mj = multiplier_j(&StepDistribution::nearest_neighbour(), 8).unwrap();
        assert!((mj.at(4 * 8 + 4) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn covariance_c_hand_value() {
        let (c, psd) = covariance_c(&StepDistribution::nearest_neighbour(), 8, 1.0, 0.0).unwrap();
        assert!(psd);
        assert!((c.multiplier().at(4 * 8 + 4) - 1.0 / 3.0).abs() < 1e-14);
        assert!((c.multiplier().zero_mode() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ctilde_at_zero_s() {
        let j = StepDistribution::linf_ball(1).unwrap();
        let p = CovarianceParams {
            s: 0.0,
            m2: 0.5,
            gamma: 0.2,
        };
        let ct = covariance_ctilde(&j, 8, p).unwrap();
        let lam = multiplier_j(&j, 8).unwrap();
        for k in 0..64 {
            assert!((ct.multiplier().at(k) - 1.0 / (lam.at(k) + 0.5)).abs() < 1e-13);
        }
    }

    #[test]
    fn cs_rejects_large_negative_s() {
        let p = CovarianceParams {
            s: -5.0,
            m2: 1.0,
            gamma: 0.1,
        };
        assert!(matches!(
            covariance_cs(&StepDistribution::nearest_neighbour(), 8, p),
            Err(Error::NotPositive { .. })
        ));
    }

    #[test]
    fn excluded_zero_mode_rejects_nonzero_mean() {
        let op = inverse_laplacian_j(&StepDistribution::nearest_neighbour(), 4).unwrap();
        let fft = Fft2::new(4);
        assert!(op.quadratic_form(&fft, &LatticeField::delta(4, 0)).is_err());
    }

    #[test]
    fn green_form_of_unit_gaussian() {
        let (v, err) =
            continuum_green_form(&RadialBump::Gaussian { width: 1.0 }, 1.0, 1e-10).unwrap();
        assert!((v - std::f64::consts::FRAC_PI_2).abs() < 1e-12, "{v}");
        assert!(err < 1e-10);
    }
}
