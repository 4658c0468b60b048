//! Moment-generating-function runs on mesoscopic test functions.

use serde::{Deserialize, Serialize};

use super::inequalities::pairing;
use super::{mcmc_sample, ChainConfig, DgModel, Observable};
use crate::error::{Error, Result};
use crate::extfield::{build_feps, slope, smoothness_scale, SmoothTestFunction};
use crate::fft::Fft2;
use crate::lattice::{LatticeField, StepDistribution, TorusLattice};
use crate::multiscale::sample_scale;
use crate::rng;
use crate::spectral::{covariance_ctilde, inverse_laplacian_j, CovarianceParams, DiagonalOperator};

/// Parameters shared by the scaling-limit and zn-ratio runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub j: StepDistribution,
    pub beta: f64,
    pub base: usize,
    pub scales: u32,
    pub test_function: SmoothTestFunction,
    pub eps: Vec<f64>,
    pub s: f64,
    pub gamma: f64,
    pub chain: ChainConfig,
    pub seed: u64,
    /// Gaussian prediction for the variance of the exponent after scaling.
    pub exponent_variance: f64,
    /// Smallest accepted Kish ESS fraction of the exponential estimator.
    pub min_ess_fraction: f64,
    pub green_tolerance: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            j: StepDistribution::nearest_neighbour(),
            beta: 6.0,
            base: 4,
            scales: 3,
            test_function: SmoothTestFunction::polynomial(1.0, 0),
            eps: vec![0.5, 0.25, 0.125],
            s: 0.0,
            gamma: 0.1,
            chain: ChainConfig {
                sweeps: 20_000,
                burn_in: 2_000,
                ..ChainConfig::default()
            },
            seed: 1,
            exponent_variance: 1.0,
            min_ess_fraction: 0.1,
            green_tolerance: 1e-10,
        }
    }
}

/// One estimated `log⟨e^{a(f_ε,σ)}⟩`.
struct MgfPoint {
    eps: f64,
    j_f: u32,
    amplitude: f64,
    field: LatticeField,
    green: f64,
    log_mgf: f64,
    se: f64,
    ess_fraction: f64,
    tau: f64,
}

/// Amplitude keeping the Gaussian exponent variance at `target`, capped at 1.
fn amplitude(beta: f64, green: f64, target: f64) -> f64 {
    if green > 0.0 {
        (target / (beta * green)).sqrt().min(1.0)
    } else {
        1.0
    }
}

/// One chain recording every `(f_ε,σ)` of the sweep.
fn mgf_sweep(cfg: &ScalingConfig) -> Result<(TorusLattice, Vec<MgfPoint>)> {
    let lattice = TorusLattice::new(cfg.base, cfg.scales)?;
    let side = lattice.side();
    if cfg.eps.is_empty() {
        return Err(Error::Config("empty ε sweep".into()));
    }
    let fft = Fft2::new(side);
    let inv = inverse_laplacian_j(&cfg.j, side)?;
    let mut points = Vec::with_capacity(cfg.eps.len());
    for &eps in &cfg.eps {
        if eps * (side as f64) < 8.0 {
            return Err(Error::Precondition(format!(
                "ε·L^N = {} below the mesoscopic window 8",
                eps * side as f64
            )));
        }
        let field = build_feps(&cfg.test_function, eps, side)?.field;
        let green = inv.quadratic_form(&fft, &field)?;
        let a = amplitude(cfg.beta, green, cfg.exponent_variance);
        points.push(MgfPoint {
            eps,
            j_f: smoothness_scale(&field, &lattice)?,
            amplitude: a,
            field: field.scale(a),
            green,
            log_mgf: 0.0,
            se: 0.0,
            ess_fraction: 1.0,
            tau: 0.5,
        });
    }
    let model = DgModel::new(cfg.j.clone(), cfg.beta, side, 0.0, true)?;
    let pairings: Vec<_> = points.iter().map(|p| pairing(&p.field)).collect();
    let obs: Vec<&Observable> = pairings.iter().map(|f| f as &Observable).collect();
    let chain = mcmc_sample(
        &model,
        &cfg.chain,
        None,
        &obs,
        &mut rng::stream(cfg.seed, 0),
    )?;
    for (k, p) in points.iter_mut().enumerate() {
        let m = chain.estimate_map(k, f64::exp);
        p.ess_fraction = chain.ess_fraction_map(k, f64::exp);
        if p.ess_fraction < cfg.min_ess_fraction {
            return Err(Error::Diagnostic(format!(
                "ε = {}: ESS fraction {:.3} below {}; use a smaller amplitude for f_ε",
                p.eps, p.ess_fraction, cfg.min_ess_fraction
            )));
        }
        p.log_mgf = m.mean.ln();
        p.se = m.se / m.mean;
        p.tau = m.tau;
    }
    Ok((lattice, points))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub j_f: u32,
    pub amplitude: f64,
    pub log_mgf: f64,
    pub se: f64,
    /// `a²(β/2)(f_ε,(-Δ_J)^{-1}f_ε)`
    pub lattice_target: f64,
    /// `a²(β/(2v_J²))(f,(-Δ_{R²})^{-1}f)`
    pub continuum_target: f64,
    pub ratio: f64,
    pub ratio_se: f64,
    /// `|lattice - continuum| / continuum`
    pub discretisation: f64,
    pub combined_error: f64,
    pub ess_fraction: f64,
    pub tau: f64,
}

/// `log⟨e^{(f_ε,σ)}⟩` against the continuum Gaussian prediction with `β_eff = β`.
pub fn scaling_limit_experiment(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    let (_, points) = mgf_sweep(cfg)?;
    scaling_rows(cfg, &points)
}

/// Both reports from a single chain.
pub fn scaling_and_zn(cfg: &ScalingConfig) -> Result<(Vec<ScalingRow>, ZnReport)> {
    let (lattice, points) = mgf_sweep(cfg)?;
    Ok((
        scaling_rows(cfg, &points)?,
        zn_report(cfg, &lattice, &points)?,
    ))
}

fn scaling_rows(cfg: &ScalingConfig, points: &[MgfPoint]) -> Result<Vec<ScalingRow>> {
    let (green_cont, _) = cfg.test_function.green_form(cfg.green_tolerance)?;
    let v2 = cfg.j.v_squared();
    Ok(points
        .iter()
        .map(|p| {
            let a2 = p.amplitude * p.amplitude;
            let lattice_target = 0.5 * cfg.beta * a2 * p.green;
            let continuum_target = cfg.beta * a2 * green_cont / (2.0 * v2);
            let ratio_se = p.se / continuum_target;
            let discretisation = (lattice_target - continuum_target).abs() / continuum_target;
            ScalingRow {
                eps: p.eps,
                j_f: p.j_f,
                amplitude: p.amplitude,
                log_mgf: p.log_mgf,
                se: p.se,
                lattice_target,
                continuum_target,
                ratio: p.log_mgf / continuum_target,
                ratio_se,
                discretisation,
                combined_error: ratio_se.hypot(discretisation),
                ess_fraction: p.ess_fraction,
                tau: p.tau,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZnRow {
    pub eps: f64,
    pub j_f: u32,
    pub amplitude: f64,
    pub log_mgf: f64,
    /// `a²(β/2)(f_ε, C̃ f_ε)`
    pub gaussian: f64,
    pub value: f64,
    pub se: f64,
}

/// One-sided sign test that `|value|` decreases with `j_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    /// Row pairs with distinct `j_f`.
    pub pairs: usize,
    pub decreasing: usize,
    pub p_value: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZnReport {
    pub rows: Vec<ZnRow>,
    pub sign_test: SignTest,
    /// `α` from a least-squares fit of `log|value| ≈ c - α j_f log L`, when
    /// at least two distinct `j_f` occur.
    pub decay_exponent: Option<f64>,
}

/// `P(Bin(n, ½) ≥ k)` against the level 0.05.
pub fn sign_test(values: &[(u32, f64)]) -> SignTest {
    let (mut pairs, mut decreasing) = (0, 0);
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            let (lo, hi) = if a.0 < b.0 { (a, b) } else { (b, a) };
            if lo.0 == hi.0 {
                continue;
            }
            pairs += 1;
            decreasing += usize::from(hi.1.abs() < lo.1.abs());
        }
    }
    let mut p_value = 0.0;
    for k in decreasing..=pairs {
        p_value += binomial(pairs, k) * 0.5f64.powi(pairs as i32);
    }
    SignTest {
        pairs,
        decreasing,
        p_value,
        passes: pairs > 0 && p_value < 0.05,
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `log⟨e^{(f_ε,σ)}⟩ - (β/2)(f_ε, C̃(s, 0) f_ε)` across the ε sweep.
pub fn zn_ratio_experiment(cfg: &ScalingConfig) -> Result<ZnReport> {
    let (lattice, points) = mgf_sweep(cfg)?;
    zn_report(cfg, &lattice, &points)
}

fn zn_report(cfg: &ScalingConfig, lattice: &TorusLattice, points: &[MgfPoint]) -> Result<ZnReport> {
    let side = lattice.side();
    let fft = Fft2::new(side);
    let ctilde = covariance_ctilde(
        &cfg.j,
        side,
        CovarianceParams {
            s: cfg.s,
            m2: 0.0,
            gamma: cfg.gamma,
        },
    )?;
    let rows = points
        .iter()
        .map(|p| {
            let gaussian = 0.5 * cfg.beta * ctilde.quadratic_form(&fft, &p.field)?;
            Ok(ZnRow {
                eps: p.eps,
                j_f: p.j_f,
                amplitude: p.amplitude,
                log_mgf: p.log_mgf,
                gaussian,
                value: p.log_mgf - gaussian,
                se: p.se,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sign = sign_test(&rows.iter().map(|r| (r.j_f, r.value)).collect::<Vec<_>>());
    let fit: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.value != 0.0)
        .map(|r| (f64::from(r.j_f), r.value.abs().ln()))
        .collect();
    let distinct = fit.iter().any(|p| p.0 != fit[0].0);
    let decay_exponent = distinct.then(|| -slope(&fit) / (cfg.base as f64).ln());
    Ok(ZnReport {
        rows,
        sign_test: sign,
        decay_exponent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianControl {
    pub amplitude: f64,
    pub samples: usize,
    pub log_mgf: f64,
    pub se: f64,
    /// `a²(β/2)(f,(-Δ_J)^{-1}f)`
    pub target: f64,
    /// `(log_mgf - target) / se`
    pub z: f64,
    pub holds: bool,
}

/// The MGF pipeline on exact samples of the Gaussian field with covariance
/// `β(-Δ_J)^{-1}`, where the answer is known in closed form.
pub fn gaussian_control(
    j: &StepDistribution,
    beta: f64,
    f: &LatticeField,
    samples: usize,
    exponent_variance: f64,
    seed: u64,
) -> Result<GaussianControl> {
    if samples < 2 {
        return Err(Error::Config("need at least two samples".into()));
    }
    let side = f.side();
    let fft = Fft2::new(side);
    let inv = inverse_laplacian_j(j, side)?;
    let green = inv.quadratic_form(&fft, f)?;
    let a = amplitude(beta, green, exponent_variance);
    let cov = DiagonalOperator::new(inv.multiplier().map(|v| beta * v), inv.zero_mode());
    let g = f.scale(a);
    let mut rng = rng::stream(seed, 0);
    let w: Vec<f64> = (0..samples)
        .map(|_| sample_scale(&cov, &fft, &mut rng).dot(&g).exp())
        .collect();
    let n = samples as f64;
    let mean = w.iter().sum::<f64>() / n;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let log_mgf = mean.ln();
    let se = (var / n).sqrt() / mean;
    let target = 0.5 * beta * a * a * green;
    let z = (log_mgf - target) / se;
    Ok(GaussianControl {
        amplitude: a,
        samples,
        log_mgf,
        se,
        target,
        z,
        holds: z.abs() <= 3.0,
    })
}
