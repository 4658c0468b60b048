//! The Discrete Gaussian measure `∝ e^{-(2β)^{-1}(σ,(-Δ_J+m²)σ)}` on `(2πZ)^Λ`.
//!
//! Spins are stored as integer heights `n` with `σ = spacing·n`, so actions
//! are accumulated exactly in integer arithmetic.

mod chain;
mod exact;
mod experiments;
mod inequalities;

pub use chain::{
    mcmc_sample, transition_probability, Chain, ChainConfig, ChainDiagnostics, Estimate, Observable,
};
pub use exact::{exact_enumerate, ExactResult, STATE_LIMIT_LOG2};
pub use experiments::{
    gaussian_control, scaling_and_zn, scaling_limit_experiment, sign_test, zn_ratio_experiment,
    GaussianControl, ScalingConfig, ScalingRow, SignTest, ZnReport, ZnRow,
};
pub use inequalities::{
    check_ginibre, check_monotonicity, check_zero_tilt, segment_means, tilt_observable,
    GinibreMode, GinibreReport, MonotonicityReport, TiltReport,
};

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::lattice::{LatticeField, StepDistribution};

/// Spin configuration `σ = spacing·n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfiguration {
    side: usize,
    heights: Vec<i64>,
}

impl SpinConfiguration {
    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            heights: vec![0; side * side],
        }
    }

    pub fn from_heights(side: usize, heights: Vec<i64>) -> Result<Self> {
        if heights.len() != side * side {
            return Err(Error::SizeMismatch {
                expected: side * side,
                got: heights.len(),
            });
        }
        Ok(Self { side, heights })
    }

    /// Heights of `σ / spacing`; fails unless every value is a multiple of `spacing`.
    pub fn from_field(sigma: &LatticeField, spacing: f64) -> Result<Self> {
        let heights = sigma
            .values()
            .iter()
            .map(|&v| {
                let n = (v / spacing).round();
                if (v - n * spacing).abs() > 1e-9 * spacing.max(v.abs()) {
                    Err(Error::Precondition(format!(
                        "spin value {v} is not a multiple of {spacing}"
                    )))
                } else {
                    Ok(n as i64)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            side: sigma.side(),
            heights,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn heights(&self) -> &[i64] {
        &self.heights
    }

    pub fn to_field(&self, spacing: f64) -> LatticeField {
        let values = self.heights.iter().map(|&n| spacing * n as f64).collect();
        LatticeField::from_values(self.side, values).expect("square")
    }
}

/// Model parameters plus the periodic neighbour table of `J`.
#[derive(Debug, Clone)]
pub struct DgModel {
    j: StepDistribution,
    beta: f64,
    m2: f64,
    side: usize,
    pinned: bool,
    spacing: f64,
    neighbours: Vec<usize>,
}

impl DgModel {
    /// Spins in `2πZ`. With `pinned` the gauge `σ_0 = 0` is imposed; otherwise
    /// `m² > 0` is required.
    pub fn new(j: StepDistribution, beta: f64, side: usize, m2: f64, pinned: bool) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Precondition(format!("β = {beta} must be positive")));
        }
        if !(m2 >= 0.0 && m2.is_finite()) {
            return Err(Error::Precondition(format!(
                "m² = {m2} must be nonnegative"
            )));
        }
        if !pinned && m2 == 0.0 {
            return Err(Error::Precondition(
                "m² = 0 without pinning σ_0: the zero mode is not normalisable".into(),
            ));
        }
        if side < 2 {
            return Err(Error::InvalidLattice(format!("side {side} < 2")));
        }
        let s = side as i64;
        let mut neighbours = Vec::with_capacity(side * side * j.size());
        for x in 0..side * side {
            let (a, b) = ((x % side) as i64, (x / side) as i64);
            for &(dx, dy) in j.points() {
                neighbours.push(((a + dx).rem_euclid(s) + (b + dy).rem_euclid(s) * s) as usize);
            }
        }
        Ok(Self {
            j,
            beta,
            m2,
            side,
            pinned,
            spacing: TAU,
            neighbours,
        })
    }

    /// Replaces the spin spacing `2π` by `spacing`.
    pub fn with_spacing(mut self, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Precondition(format!(
                "spacing {spacing} must be positive"
            )));
        }
        self.spacing = spacing;
        Ok(self)
    }

    pub fn j(&self) -> &StepDistribution {
        &self.j
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn volume(&self) -> usize {
        self.side * self.side
    }

    pub fn pinned(&self) -> bool {
        self.pinned
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub(crate) fn neighbours(&self, x: usize) -> &[usize] {
        let k = self.j.size();
        &self.neighbours[x * k..(x + 1) * k]
    }

    /// Sites that move (all but the origin when pinned).
    pub(crate) fn free_sites(&self) -> Vec<usize> {
        (usize::from(self.pinned)..self.volume()).collect()
    }

    /// `Σ_x Σ_{y∈J} (n_x - n_{x+y})²` and `Σ_x n_x²`.
    pub(crate) fn integer_sums(&self, h: &[i64]) -> (i64, i64) {
        let mut edges = 0;
        let mut mass = 0;
        for (x, &n) in h.iter().enumerate() {
            edges += self
                .neighbours(x)
                .iter()
                .map(|&z| (n - h[z]).pow(2))
                .sum::<i64>();
            mass += n * n;
        }
        (edges, mass)
    }

    /// Change of the integer sums when site `x` moves to `new`.
    pub(crate) fn integer_delta(&self, h: &[i64], x: usize, new: i64) -> (i64, i64) {
        let old = h[x];
        let d: i64 = self
            .neighbours(x)
            .iter()
            .filter(|&&z| z != x)
            .map(|&z| (new - h[z]).pow(2) - (old - h[z]).pow(2))
            .sum();
        (2 * d, new * new - old * old)
    }

    /// `(σ,(-Δ_J+m²)σ)/2` from the integer sums.
    pub(crate) fn action_from(&self, edges: i64, mass: i64) -> f64 {
        let s2 = self.spacing * self.spacing;
        s2 * (edges as f64 / (4.0 * self.j.size() as f64) + 0.5 * self.m2 * mass as f64)
    }

    /// `β·energy`, i.e. `(σ,(-Δ_J+m²)σ)/2`.
    pub fn action(&self, sigma: &SpinConfiguration) -> f64 {
        let (e, m) = self.integer_sums(&sigma.heights);
        self.action_from(e, m)
    }

    pub fn energy(&self, sigma: &SpinConfiguration) -> f64 {
        self.action(sigma) / self.beta
    }

    /// Whether `σ` has the right size and respects the gauge.
    pub fn check(&self, sigma: &SpinConfiguration) -> Result<()> {
        if sigma.side != self.side {
            return Err(Error::SizeMismatch {
                expected: self.volume(),
                got: sigma.heights.len(),
            });
        }
        if self.pinned && sigma.heights[0] != 0 {
            return Err(Error::Precondition("gauge σ_0 = 0 violated".into()));
        }
        Ok(())
    }
}

/// `(4β|J|)^{-1} Σ_x Σ_{y∈J} (σ_x - σ_{x+y})² + (2β)^{-1} m² ‖σ‖²`, neighbours
/// taken periodically (coinciding images counted with multiplicity).
pub fn energy(j: &StepDistribution, beta: f64, sigma: &LatticeField, m2: f64) -> f64 {
    let side = sigma.side() as i64;
    let mut edges = 0.0;
    for y in 0..side {
        for x in 0..side {
            let s = sigma.get(x, y);
            edges += j
                .points()
                .iter()
                .map(|&(a, b)| (s - sigma.get(x + a, y + b)).powi(2))
                .sum::<f64>();
        }
    }
    edges / (4.0 * beta * j.size() as f64) + m2 * sigma.norm_sq() / (2.0 * beta)
}

/// The same energy as the quadratic form `(2β)^{-1}(σ,(-Δ_J+m²)σ)`.
pub fn energy_quadratic_form(
    j: &StepDistribution,
    beta: f64,
    sigma: &LatticeField,
    m2: f64,
) -> Result<f64> {
    let lap = crate::lattice::laplacian_j(j, sigma)?;
    Ok((-sigma.dot(&lap) + m2 * sigma.norm_sq()) / (2.0 * beta))
}

#[cfg(test)]
mod tests;
