//! Two-dimensional FFT on square tori.
//!
//! Forward transform uses `e^{-ip·x}` and is unnormalised; the inverse carries
//! the factor `1/|Λ|`. Momentum index `k = k2 * side + k1` pairs with
//! `p = (2π k1 / side, 2π k2 / side)`.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::lattice::LatticeField;

/// Planned row transforms for one side length.
pub struct Fft2 {
    side: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(side: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            side,
            forward: planner.plan_fft_forward(side),
            inverse: planner.plan_fft_inverse(side),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn rows(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let side = self.side;
        if side * side >= 1 << 14 {
            data.par_chunks_mut(side * 8)
                .for_each(|chunk| plan.process(chunk));
        } else {
            plan.process(data);
        }
    }

    fn transpose(&self, data: &mut [Complex64]) {
        let n = self.side;
        for i in 0..n {
            for j in (i + 1)..n {
                data.swap(i * n + j, j * n + i);
            }
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        assert_eq!(
            data.len(),
            self.side * self.side,
            "buffer does not match the torus"
        );
        self.rows(data, plan);
        self.transpose(data);
        self.rows(data, plan);
        self.transpose(data);
    }

    /// In-place unnormalised forward transform.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.transform(data, &self.forward);
    }

    /// In-place inverse transform including the `1/|Λ|` factor.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.transform(data, &self.inverse);
        let norm = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|z| *z *= norm);
    }

    pub fn forward_real(&self, f: &LatticeField) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Inverse transform returning the real part and the largest imaginary residue.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> (LatticeField, f64) {
        self.inverse(&mut data);
        let imag = data.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
        let values = data.into_iter().map(|z| z.re).collect();
        (
            LatticeField::from_values(self.side, values).expect("square buffer"),
            imag,
        )
    }

    /// `x ↦ |Λ|^{-1} Σ_p m(p) f̂(p) e^{ip·x}` for a real multiplier `m`.
    pub fn apply_multiplier(&self, multiplier: &[f64], f: &LatticeField) -> LatticeField {
        let mut data = self.forward_real(f);
        data.iter_mut().zip(multiplier).for_each(|(z, m)| *z *= *m);
        self.inverse_real(data).0
    }
}

/// Momentum `(p1, p2) ∈ [0, 2π)²` of index `k`.
pub fn momentum(side: usize, k: usize) -> (f64, f64) {
    let w = 2.0 * std::f64::consts::PI / side as f64;
    ((k % side) as f64 * w, (k / side) as f64 * w)
}

/// Momentum wrapped to `(-π, π]²`.
pub fn momentum_centred(side: usize, k: usize) -> (f64, f64) {
    let w = 2.0 * std::f64::consts::PI / side as f64;
    let c = |i: usize| {
        let i = i as i64;
        let s = side as i64;
        (if 2 * i > s { i - s } else { i }) as f64 * w
    };
    (c(k % side), c(k / side))
}

/// Index of `-p`.
pub fn negate(side: usize, k: usize) -> usize {
    let (k1, k2) = (k % side, k / side);
    ((side - k2) % side) * side + (side - k1) % side
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let f = LatticeField::from_fn(8, |x, y| (x as f64 * 0.3).sin() + (y * y) as f64);
        let t = Fft2::new(8);
        let (g, imag) = t.inverse_real(t.forward_real(&f));
        assert!(imag < 1e-12);
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_of_delta_is_phase() {
        let t = Fft2::new(4);
        let f = LatticeField::delta(4, 1);
        let data = t.forward_real(&f);
        for (k, z) in data.iter().enumerate() {
            let (p1, _) = momentum(4, k);
            assert!((z.re - p1.cos()).abs() < 1e-12);
            assert!((z.im + p1.sin()).abs() < 1e-12);
        }
    }
}
