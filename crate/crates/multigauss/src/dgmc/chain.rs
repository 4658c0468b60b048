//! Single-site Metropolis with geometric multi-step jumps.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{DgModel, SpinConfiguration};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Chain length, batching and proposal settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    /// Recorded sweeps after burn-in.
    pub sweeps: usize,
    pub burn_in: usize,
    /// Batches for the batch-means error bars.
    pub batches: usize,
    /// Initial success probability of the geometric jump length.
    pub jump_p: f64,
    /// Tune `jump_p` during burn-in towards 30-60% acceptance.
    pub adapt: bool,
    /// Sample at this β and reweight to the model β.
    pub sampling_beta: Option<f64>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            sweeps: 10_000,
            burn_in: 1_000,
            batches: 50,
            jump_p: 0.5,
            adapt: true,
            sampling_beta: None,
        }
    }
}

/// Self-normalised estimate with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    /// Integrated autocorrelation time implied by `se` (at least 0.5).
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub sweeps: usize,
    pub acceptance: f64,
    pub jump_p: f64,
    /// Kish effective sample size of the reweighting (equals `sweeps` without it).
    pub ess: f64,
    pub tau: Vec<f64>,
    pub se: Vec<f64>,
}

/// Recorded observables (one series per observable) and reweighting logs.
#[derive(Debug, Clone)]
pub struct Chain {
    series: Vec<Vec<f64>>,
    log_weights: Vec<f64>,
    batches: usize,
    acceptance: f64,
    jump_p: f64,
    state: SpinConfiguration,
}

fn jump(rng: &mut Rng, p: f64) -> i64 {
    let k = if p >= 1.0 {
        1
    } else {
        let u: f64 = 1.0 - rng.random::<f64>();
        1 + (u.ln() / (1.0 - p).ln()).floor() as i64
    };
    if rng.random::<bool>() {
        k
    } else {
        -k
    }
}

/// Probability that the update of site `x` moves `σ_x/spacing` to `new` (`≠ σ_x`).
pub fn transition_probability(
    model: &DgModel,
    sigma: &SpinConfiguration,
    x: usize,
    new: i64,
    jump_p: f64,
    sampling_beta: f64,
) -> f64 {
    let k = (new - sigma.heights[x]).unsigned_abs();
    if k == 0 {
        return f64::NAN;
    }
    let proposal = 0.5 * jump_p * (1.0 - jump_p).powi(k as i32 - 1);
    let (de, dm) = model.integer_delta(&sigma.heights, x, new);
    proposal * (-model.action_from(de, dm) / sampling_beta).exp().min(1.0)
}

/// Scalar function of the spin values.
pub type Observable = dyn Fn(&[f64]) -> f64;

/// Runs the chain from `start` (default `σ ≡ 0`) and records each observable
/// of the spin values once per sweep.
pub fn mcmc_sample(
    model: &DgModel,
    config: &ChainConfig,
    start: Option<&SpinConfiguration>,
    observables: &[&Observable],
    rng: &mut Rng,
) -> Result<Chain> {
    if config.batches < 2 || config.sweeps < config.batches {
        return Err(Error::Config(format!(
            "need sweeps ≥ batches ≥ 2 (sweeps {}, batches {})",
            config.sweeps, config.batches
        )));
    }
    if !(config.jump_p > 0.0 && config.jump_p <= 1.0) {
        return Err(Error::Config(format!(
            "jump_p = {} outside (0, 1]",
            config.jump_p
        )));
    }
    let beta_s = config.sampling_beta.unwrap_or(model.beta);
    if !(beta_s > 0.0 && beta_s.is_finite()) {
        return Err(Error::Config(format!(
            "sampling β = {beta_s} must be positive"
        )));
    }
    let mut state = start
        .cloned()
        .unwrap_or_else(|| SpinConfiguration::zeros(model.side));
    model.check(&state)?;
    let free = model.free_sites();
    let (mut edges, mut mass) = model.integer_sums(&state.heights);
    let reweight = (1.0 / model.beta - 1.0 / beta_s) * f64::from(config.sampling_beta.is_some());

    let mut p = config.jump_p;
    let mut series = vec![Vec::with_capacity(config.sweeps); observables.len()];
    let mut log_weights = Vec::with_capacity(if config.sampling_beta.is_some() {
        config.sweeps
    } else {
        0
    });
    let mut values = vec![0.0; model.volume()];
    let (mut accepted, mut tried) = (0u64, 0u64);
    let (mut window_acc, mut window_tried) = (0u64, 0u64);

    for sweep in 0..config.burn_in + config.sweeps {
        let recording = sweep >= config.burn_in;
        if sweep == config.burn_in {
            accepted = 0;
            tried = 0;
        }
        for &x in &free {
            let new = state.heights[x] + jump(rng, p);
            let (de, dm) = model.integer_delta(&state.heights, x, new);
            let da = model.action_from(de, dm);
            tried += 1;
            window_tried += 1;
            if da <= 0.0 || rng.random::<f64>() < (-da / beta_s).exp() {
                state.heights[x] = new;
                edges += de;
                mass += dm;
                accepted += 1;
                window_acc += 1;
            }
        }
        if !recording && config.adapt && (sweep + 1) % 50 == 0 {
            let rate = window_acc as f64 / window_tried.max(1) as f64;
            if rate > 0.6 {
                p = (p * 0.8).max(0.05);
            } else if rate < 0.3 {
                p = (p / 0.8).min(1.0);
            }
            window_acc = 0;
            window_tried = 0;
        }
        if recording {
            for (v, &n) in values.iter_mut().zip(&state.heights) {
                *v = model.spacing * n as f64;
            }
            for (s, obs) in series.iter_mut().zip(observables) {
                s.push(obs(&values));
            }
            if config.sampling_beta.is_some() {
                log_weights.push(-reweight * model.action_from(edges, mass));
            }
        }
    }
    Ok(Chain {
        series,
        log_weights,
        batches: config.batches,
        acceptance: accepted as f64 / tried.max(1) as f64,
        jump_p: p,
        state,
    })
}

impl Chain {
    pub fn len(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn series(&self, k: usize) -> &[f64] {
        &self.series[k]
    }

    pub fn final_state(&self) -> &SpinConfiguration {
        &self.state
    }

    pub fn acceptance(&self) -> f64 {
        self.acceptance
    }

    fn weights(&self, n: usize) -> Vec<f64> {
        if self.log_weights.is_empty() {
            return vec![1.0; n];
        }
        let top = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        self.log_weights.iter().map(|l| (l - top).exp()).collect()
    }

    /// `(Σw)² / Σw²`.
    pub fn ess(&self) -> f64 {
        let w = self.weights(self.len());
        let s: f64 = w.iter().sum();
        s * s / w.iter().map(|v| v * v).sum::<f64>()
    }

    /// Kish effective sample size of the weights `w_t·g(O_k(t))`, as a fraction of the length.
    pub fn ess_fraction_map(&self, k: usize, g: impl Fn(f64) -> f64) -> f64 {
        let w = self.weights(self.len());
        let v: Vec<f64> = self.series[k]
            .iter()
            .zip(&w)
            .map(|(&o, wt)| wt * g(o))
            .collect();
        let s: f64 = v.iter().sum();
        s * s / (v.len() as f64 * v.iter().map(|x| x * x).sum::<f64>())
    }

    pub fn estimate(&self, k: usize) -> Estimate {
        self.estimate_map(k, |v| v)
    }

    /// Estimate of `⟨g(O_k)⟩`.
    pub fn estimate_map(&self, k: usize, g: impl Fn(f64) -> f64) -> Estimate {
        let v: Vec<f64> = self.series[k].iter().map(|&o| g(o)).collect();
        let n = v.len();
        let w = self.weights(n);
        let b = self.batches.min(n);
        let mut num = vec![0.0; b];
        let mut den = vec![0.0; b];
        for (t, (vt, wt)) in v.iter().zip(&w).enumerate() {
            let i = t * b / n;
            num[i] += wt * vt;
            den[i] += wt;
        }
        let total: f64 = den.iter().sum();
        let mean = num.iter().sum::<f64>() / total;
        let dbar = total / b as f64;
        let ss: f64 = num
            .iter()
            .zip(&den)
            .map(|(a, d)| (a - mean * d).powi(2))
            .sum();
        let se = (ss / (b * (b - 1)) as f64).sqrt() / dbar;
        let var = v
            .iter()
            .zip(&w)
            .map(|(x, wt)| wt * (x - mean).powi(2))
            .sum::<f64>()
            / total;
        let tau = if var > 0.0 {
            (n as f64 * se * se / (2.0 * var)).max(0.5)
        } else {
            0.5
        };
        Estimate { mean, se, tau }
    }

    pub fn diagnostics(&self) -> ChainDiagnostics {
        let est: Vec<Estimate> = (0..self.series.len()).map(|k| self.estimate(k)).collect();
        ChainDiagnostics {
            sweeps: self.len(),
            acceptance: self.acceptance,
            jump_p: self.jump_p,
            ess: self.ess(),
            tau: est.iter().map(|e| e.tau).collect(),
            se: est.iter().map(|e| e.se).collect(),
        }
    }
}
