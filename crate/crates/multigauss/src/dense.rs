//! Dense-matrix oracles for small tori.
//!
//! These build operators entry by entry in position space and are used only to
//! cross-check the Fourier implementations.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lattice::{StepDistribution, DIRECTIONS};

/// Largest side accepted by the dense routines.
pub const MAX_SIDE: usize = 16;

fn guard(side: usize) -> Result<()> {
    if side > MAX_SIDE {
        return Err(Error::Budget {
            count: side,
            limit: MAX_SIDE,
        });
    }
    Ok(())
}

fn wrap(side: usize, x: i64, y: i64) -> usize {
    let s = side as i64;
    (y.rem_euclid(s) * s + x.rem_euclid(s)) as usize
}

/// Matrix of `-Δ_J`.
pub fn neg_laplacian_j(j: &StepDistribution, side: usize) -> Result<DMatrix<f64>> {
    guard(side)?;
    let n = side * side;
    let w = 1.0 / j.size() as f64;
    let mut m = DMatrix::zeros(n, n);
    for y in 0..side as i64 {
        for x in 0..side as i64 {
            let i = wrap(side, x, y);
            for &(a, b) in j.points() {
                m[(i, i)] += w;
                m[(i, wrap(side, x + a, y + b))] -= w;
            }
        }
    }
    Ok(m)
}

/// Matrix of `-Δ` with unit nearest-neighbour weights.
pub fn neg_laplacian_nn(side: usize) -> Result<DMatrix<f64>> {
    guard(side)?;
    let n = side * side;
    let mut m = DMatrix::zeros(n, n);
    for y in 0..side as i64 {
        for x in 0..side as i64 {
            let i = wrap(side, x, y);
            for &(a, b) in &DIRECTIONS {
                m[(i, i)] += 1.0;
                m[(i, wrap(side, x + a, y + b))] -= 1.0;
            }
        }
    }
    Ok(m)
}

/// `(-Δ_J + m²)^{-1} - γ` on the full space, `m² > 0`.
pub fn covariance_c(
    j: &StepDistribution,
    side: usize,
    m2: f64,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let mut a = neg_laplacian_j(j, side)?;
    for i in 0..a.nrows() {
        a[(i, i)] += m2;
    }
    let inv = a
        .try_inverse()
        .ok_or_else(|| Error::Precondition("singular operator".into()))?;
    Ok(inv - gamma_matrix(side, gamma))
}

/// `γ` times the identity.
fn gamma_matrix(side: usize, gamma: f64) -> DMatrix<f64> {
    DMatrix::identity(side * side, side * side) * gamma
}

/// `(C^{-1} - sΔ)^{-1}` for an invertible `C`.
pub fn covariance_cs(c: &DMatrix<f64>, side: usize, s: f64) -> Result<DMatrix<f64>> {
    let cinv = c
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("singular covariance".into()))?;
    let a = cinv + neg_laplacian_nn(side)? * s;
    a.try_inverse()
        .ok_or_else(|| Error::Precondition("singular operator".into()))
}

/// `γ(1 + sγΔ) + (1 + sγΔ) C_s (1 + sγΔ)`.
pub fn covariance_ctilde(
    cs: &DMatrix<f64>,
    side: usize,
    s: f64,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let n = side * side;
    let a = DMatrix::identity(n, n) - neg_laplacian_nn(side)? * (s * gamma);
    Ok(&a * gamma + &a * cs * &a)
}
