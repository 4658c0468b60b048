//! Correlation inequalities and the tilt diagnostic.

use serde::{Deserialize, Serialize};

use super::{exact_enumerate, mcmc_sample, Chain, ChainConfig, DgModel};
use crate::error::{Error, Result};
use crate::fft::Fft2;
use crate::lattice::{LatticeField, StepDistribution};
use crate::rng;
use crate::spectral::inverse_laplacian_j;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GinibreMode {
    Oracle { k: u32 },
    Mcmc { chain: ChainConfig, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GinibreReport {
    /// `(f,(-Δ_J)^{-1}f)`
    pub green: f64,
    pub mgf: f64,
    pub mgf_se: f64,
    /// `exp((β/2)(f,(-Δ_J)^{-1}f))`
    pub mgf_bound: f64,
    pub second: f64,
    pub second_se: f64,
    /// `β(f,(-Δ_J)^{-1}f)`
    pub second_bound: f64,
    pub mgf_holds: bool,
    pub second_holds: bool,
}

impl GinibreReport {
    pub fn holds(&self) -> bool {
        self.mgf_holds && self.second_holds
    }
}

fn require_mean_zero(f: &LatticeField) -> Result<()> {
    let scale: f64 = f.values().iter().map(|v| v.abs()).sum();
    if f.sum().abs() > 1e-12 * scale.max(1.0) {
        return Err(Error::NonzeroMean(f.mean()));
    }
    Ok(())
}

/// Sparse `(f,·)`.
pub(crate) fn pairing(f: &LatticeField) -> impl Fn(&[f64]) -> f64 {
    let terms: Vec<(usize, f64)> = f.support().into_iter().map(|x| (x, f.at(x))).collect();
    move |s: &[f64]| terms.iter().map(|&(x, c)| c * s[x]).sum()
}

/// Compares `⟨e^{(f,σ)}⟩` and `⟨(f,σ)²⟩` with their Gaussian bounds. Oracle
/// mode checks exactly (up to rounding); MCMC mode allows three standard errors.
pub fn check_ginibre(
    model: &DgModel,
    f: &LatticeField,
    mode: GinibreMode,
) -> Result<GinibreReport> {
    require_mean_zero(f)?;
    if !model.pinned() || model.m2() != 0.0 {
        return Err(Error::Precondition(
            "the bounds concern the pinned massless measure".into(),
        ));
    }
    let fft = Fft2::new(model.side());
    let green = inverse_laplacian_j(model.j(), model.side())?.quadratic_form(&fft, f)?;
    let beta = model.beta();
    let mgf_bound = (0.5 * beta * green).exp();
    let second_bound = beta * green;
    let (mgf, mgf_se, second, second_se, slack) = match mode {
        GinibreMode::Oracle { k } => {
            let r = exact_enumerate(model, k, f, f64::INFINITY)?;
            (r.mgf, 0.0, r.second, 0.0, 1e-12)
        }
        GinibreMode::Mcmc { chain, seed } => {
            let x = pairing(f);
            let c = mcmc_sample(model, &chain, None, &[&x], &mut rng::stream(seed, 0))?;
            let m = c.estimate_map(0, f64::exp);
            let s = c.estimate_map(0, |v| v * v);
            (m.mean, m.se, s.mean, s.se, 0.0)
        }
    };
    Ok(GinibreReport {
        green,
        mgf,
        mgf_se,
        mgf_bound,
        second,
        second_se,
        second_bound,
        mgf_holds: mgf - 3.0 * mgf_se <= mgf_bound * (1.0 + slack),
        second_holds: second - 3.0 * second_se <= second_bound * (1.0 + slack),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub small_side: usize,
    pub large_side: usize,
    /// `Re⟨e^{i(f,σ)}⟩` on the smaller torus.
    pub small: f64,
    pub large: f64,
    pub holds: bool,
}

/// `⟨e^{i(f,σ)}⟩` on the tori of side `L^N` and `L^{N+1}` with `f` placed at
/// the same coordinates (which must lie in the smaller torus).
pub fn check_monotonicity(
    j: &StepDistribution,
    beta: f64,
    base: usize,
    scales: u32,
    f: &[((usize, usize), f64)],
    k: u32,
) -> Result<MonotonicityReport> {
    let small_side = base.pow(scales);
    let large_side = small_side * base;
    let total: f64 = f.iter().map(|t| t.1).sum();
    if total.abs() > 1e-12 {
        return Err(Error::NonzeroMean(total));
    }
    let place = |side: usize| -> Result<LatticeField> {
        let mut g = LatticeField::zeros(side);
        for &((x, y), v) in f {
            if x >= small_side || y >= small_side {
                return Err(Error::SupportTooLarge(format!(
                    "({x}, {y}) outside the side-{small_side} torus"
                )));
            }
            let i = x + side * y;
            g.set(i, g.at(i) + v);
        }
        Ok(g)
    };
    let value = |side: usize| -> Result<f64> {
        let model = DgModel::new(j.clone(), beta, side, 0.0, true)?;
        Ok(exact_enumerate(&model, k, &place(side)?, f64::INFINITY)?.characteristic)
    };
    let small = value(small_side)?;
    let large = value(large_side)?;
    Ok(MonotonicityReport {
        small_side,
        large_side,
        small,
        large,
        holds: small <= large,
    })
}

/// Mean of `σ(x+e_i) - σ(x)` over the `r×r` window with corner `corner`.
pub fn tilt_observable(
    side: usize,
    direction: usize,
    corner: (usize, usize),
    r: usize,
) -> impl Fn(&[f64]) -> f64 {
    let (dx, dy) = if direction == 0 { (1, 0) } else { (0, 1) };
    let pairs: Vec<(usize, usize)> = (0..r * r)
        .map(|i| {
            let (x, y) = (corner.0 + i % r, corner.1 + i / r);
            (
                x % side + side * (y % side),
                (x + dx) % side + side * ((y + dy) % side),
            )
        })
        .collect();
    let norm = 1.0 / (r * r) as f64;
    move |s: &[f64]| norm * pairs.iter().map(|&(a, b)| s[b] - s[a]).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltReport {
    pub mean: [f64; 2],
    pub se: [f64; 2],
    /// `|mean| ≤ 3 SE` in both directions.
    pub holds: bool,
    /// The two directions agree within three combined standard errors.
    pub isotropic: bool,
}

/// Tilt check on the series `series[0]` (direction 1) and `series[1]` (direction 2).
pub fn check_zero_tilt(chain: &Chain, series: [usize; 2]) -> TiltReport {
    let e = series.map(|k| chain.estimate(k));
    let within = |m: f64, s: f64| m.abs() <= 3.0 * s;
    TiltReport {
        mean: e.map(|v| v.mean),
        se: e.map(|v| v.se),
        holds: e.iter().all(|v| within(v.mean, v.se)),
        isotropic: within(e[0].mean - e[1].mean, e[0].se.hypot(e[1].se)),
    }
}

/// Means of `segments` consecutive equal pieces of a series.
pub fn segment_means(series: &[f64], segments: usize) -> Vec<f64> {
    let n = series.len();
    (0..segments)
        .map(|i| {
            let part = &series[i * n / segments..(i + 1) * n / segments];
            part.iter().sum::<f64>() / part.len().max(1) as f64
        })
        .collect()
}
