//! Exact summation over the truncated spin box `(2π{-K..K})^{free sites}`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DgModel;
use crate::error::{Error, Result};
use crate::lattice::LatticeField;

/// `log2` of the largest admissible state count.
pub const STATE_LIMIT_LOG2: f64 = 24.0;

/// Exact averages of `(f,σ)` observables in the truncated box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub k: u32,
    pub states: u64,
    pub partition: f64,
    /// `⟨(f,σ)⟩`
    pub linear: f64,
    /// `⟨(f,σ)²⟩`
    pub second: f64,
    /// `⟨e^{(f,σ)}⟩`
    pub mgf: f64,
    /// `Re⟨e^{i(f,σ)}⟩`
    pub characteristic: f64,
    /// `Im⟨e^{i(f,σ)}⟩`
    pub characteristic_im: f64,
    /// Largest relative change of the partition value, second moment, MGF
    /// and characteristic function between the `K-1` and `K` boxes.
    pub truncation: f64,
    /// `truncation` exceeds the requested tolerance.
    pub flagged: bool,
}

#[derive(Clone, Copy, Default)]
struct Sums {
    z: f64,
    x: f64,
    x2: f64,
    e: f64,
    c: f64,
    s: f64,
}

impl Sums {
    fn add(&mut self, w: f64, x: f64) {
        self.z += w;
        self.x += w * x;
        self.x2 += w * x * x;
        self.e += w * x.exp();
        let (s, c) = x.sin_cos();
        self.c += w * c;
        self.s += w * s;
    }

    fn merge(&mut self, o: &Sums) {
        self.z += o.z;
        self.x += o.x;
        self.x2 += o.x2;
        self.e += o.e;
        self.c += o.c;
        self.s += o.s;
    }
}

/// Enumerates every configuration with heights in `{-K..K}` on the free
/// sites. Parallel over the first free height; partial sums are reduced in a
/// fixed order, so the result does not depend on the thread count.
pub fn exact_enumerate(
    model: &DgModel,
    k: u32,
    f: &LatticeField,
    tolerance: f64,
) -> Result<ExactResult> {
    if f.side() != model.side() {
        return Err(Error::SizeMismatch {
            expected: model.volume(),
            got: f.len(),
        });
    }
    if k == 0 {
        return Err(Error::Precondition(
            "truncation K must be at least 1".into(),
        ));
    }
    let free = model.free_sites();
    let n = free.len();
    let kk = i64::from(k);
    let log2 = n as f64 * ((2 * kk + 1) as f64).log2();
    if log2 > STATE_LIMIT_LOG2 + 1e-9 {
        return Err(Error::Precondition(format!(
            "{n} free sites at K = {k} give 2^{log2:.2} states, above 2^{STATE_LIMIT_LOG2}"
        )));
    }
    let coef: Vec<f64> = free.iter().map(|&x| model.spacing() * f.at(x)).collect();
    let dot = |h: &[i64]| {
        free.iter()
            .zip(&coef)
            .map(|(&x, c)| c * h[x] as f64)
            .sum::<f64>()
    };

    let partials: Vec<(Sums, Sums)> = (-kk..=kk)
        .into_par_iter()
        .map(|lead| {
            let mut h = vec![0i64; model.volume()];
            for &x in &free {
                h[x] = -kk;
            }
            h[free[0]] = lead;
            let (mut edges, mut mass) = model.integer_sums(&h);
            let mut x = dot(&h);
            let mut at_edge = free.iter().filter(|&&s| h[s].abs() == kk).count();
            let (mut full, mut inner) = (Sums::default(), Sums::default());
            loop {
                let w = (-model.action_from(edges, mass) / model.beta()).exp();
                full.add(w, x);
                if at_edge == 0 {
                    inner.add(w, x);
                }
                let mut i = n - 1;
                let mut carried = false;
                let done = loop {
                    if i == 0 {
                        break true;
                    }
                    let site = free[i];
                    let old = h[site];
                    let new = if old < kk { old + 1 } else { -kk };
                    let (de, dm) = model.integer_delta(&h, site, new);
                    edges += de;
                    mass += dm;
                    x += coef[i] * (new - old) as f64;
                    at_edge = at_edge + usize::from(new.abs() == kk) - usize::from(old.abs() == kk);
                    h[site] = new;
                    if new != -kk {
                        break false;
                    }
                    carried = true;
                    i -= 1;
                };
                if done {
                    break;
                }
                if carried {
                    x = dot(&h);
                }
            }
            (full, inner)
        })
        .collect();

    let (mut full, mut inner) = (Sums::default(), Sums::default());
    for (a, b) in &partials {
        full.merge(a);
        inner.merge(b);
    }
    let rel = |a: f64, b: f64| {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(f64::MIN_POSITIVE)
        }
    };
    let truncation = [
        rel(full.z, inner.z),
        rel(full.x2 / full.z, inner.x2 / inner.z),
        rel(full.e / full.z, inner.e / inner.z),
        rel(full.c / full.z, inner.c / inner.z),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    Ok(ExactResult {
        k,
        states: ((2 * kk + 1) as u64).pow(n as u32),
        partition: full.z,
        linear: full.x / full.z,
        second: full.x2 / full.z,
        mgf: full.e / full.z,
        characteristic: full.c / full.z,
        characteristic_im: full.s / full.z,
        truncation,
        flagged: truncation > tolerance,
    })
}
