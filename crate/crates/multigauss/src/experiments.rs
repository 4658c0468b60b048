//! Configurable experiments behind the `multigauss` binary.
//!
//! A run resolves its configuration in three layers: per-experiment defaults,
//! then a JSON file (merged key by key), then command-line overrides. The
//! resolved configuration is echoed into every output file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::activities::{
    check_change_of_scale_instance, log_regulator_g, log_regulator_g_psi, log_regulator_g_psi_grid,
    RegulatorParams,
};
use crate::dgmc::{self, ChainConfig, DgModel, GinibreMode, ScalingConfig};
use crate::error::{Error, Result};
use crate::extfield::{
    build_feps, build_schedule_at, check_schedule_bounds, completeness_residual,
    quadform_ctilde_limit, smoothness_scale, SmoothTestFunction,
};
use crate::fft::Fft2;
use crate::lattice::{LatticeField, StepDistribution, TorusLattice};
use crate::multiscale::{decompose, kernel, range_profile};
use crate::output::{write_all, Cell, Plot, Series, Table};
use crate::polymer::{components, Adjacency, BlockLattice, Polymer};
use crate::rgstep::{
    check_reblocking, check_rg_consistency, random_fixture, ExpectationFunctional, FixtureOptions,
    LocKind,
};
use crate::rng::{normal_field, stream, Rng};
use crate::spectral::{covariance_cs, CovarianceParams};
use crate::VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Decompose,
    Schedule,
    CtildeLimit,
    ReblockingCheck,
    RgConsistency,
    Ginibre,
    ScalingLimit,
    ZnRatio,
    RegulatorFalsify,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Decompose,
        Experiment::Schedule,
        Experiment::CtildeLimit,
        Experiment::ReblockingCheck,
        Experiment::RgConsistency,
        Experiment::Ginibre,
        Experiment::ScalingLimit,
        Experiment::ZnRatio,
        Experiment::RegulatorFalsify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Decompose => "decompose",
            Experiment::Schedule => "schedule",
            Experiment::CtildeLimit => "ctilde-limit",
            Experiment::ReblockingCheck => "reblocking-check",
            Experiment::RgConsistency => "rg-consistency",
            Experiment::Ginibre => "ginibre",
            Experiment::ScalingLimit => "scaling-limit",
            Experiment::ZnRatio => "zn-ratio",
            Experiment::RegulatorFalsify => "regulator-falsify",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

/// `"nn"`, `"linf<R>"` or an explicit list of steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JSpec {
    Name(String),
    Steps(Vec<(i64, i64)>),
}

impl JSpec {
    pub fn resolve(&self) -> Result<StepDistribution> {
        match self {
            JSpec::Steps(points) => StepDistribution::new(points.clone()),
            JSpec::Name(name) => match name.as_str() {
                "nn" => Ok(StepDistribution::nearest_neighbour()),
                _ => match name.strip_prefix("linf").map(str::parse::<i64>) {
                    Some(Ok(r)) => StepDistribution::linf_ball(r),
                    _ => Err(Error::InvalidStepDistribution(format!(
                        "unknown name `{name}`; use nn, linf<R> or a step list"
                    ))),
                },
            },
        }
    }
}

fn is_zero(d: &usize) -> bool {
    *d == 0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunction {
    /// `a(δ_{e_1} - δ_{e_2})`.
    Dipole { amplitude: f64 },
    /// `∂_i` of `exp(-|x|²/2w²)`, sampled as `f_ε`.
    Gaussian {
        width: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        direction: usize,
    },
    /// `∂_i` of `(1-|x|²/R²)^4`, sampled as `f_ε`.
    Polynomial {
        radius: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        direction: usize,
    },
}

impl TestFunction {
    pub fn smooth(&self) -> Option<SmoothTestFunction> {
        match *self {
            TestFunction::Dipole { .. } => None,
            TestFunction::Gaussian { width, direction } => {
                Some(SmoothTestFunction::gaussian(width, direction))
            }
            TestFunction::Polynomial { radius, direction } => {
                Some(SmoothTestFunction::polynomial(radius, direction))
            }
        }
    }

    fn require_smooth(&self) -> Result<SmoothTestFunction> {
        self.smooth().ok_or_else(|| {
            Error::Config("this experiment needs a gaussian or polynomial test function".into())
        })
    }
}

/// Dipole `a(δ_{e_1} - δ_{e_2})` on a torus of side `side`.
pub fn dipole(side: usize, amplitude: f64) -> LatticeField {
    let mut f = LatticeField::zeros(side);
    f.set(1, amplitude);
    f.set(side, -amplitude);
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Oracle,
    Mcmc,
}

/// Fully resolved parameters of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(rename = "L")]
    pub base: usize,
    #[serde(rename = "N")]
    pub scales: u32,
    #[serde(rename = "J")]
    pub j: JSpec,
    pub beta: f64,
    pub s: f64,
    pub gamma: f64,
    pub m2: f64,
    /// Transition width of the scale partition.
    pub width: f64,
    pub f: TestFunction,
    pub eps: Vec<f64>,
    /// Height cut-off of exact enumeration.
    #[serde(rename = "K")]
    pub k: u32,
    pub mode: Mode,
    pub chain: ChainConfig,
    pub trials: usize,
    /// Gaussian samples (ζ count, control samples).
    pub samples: usize,
    /// Fields φ per trial.
    pub fields: usize,
    pub instances: usize,
    pub regulator: Option<RegulatorParams>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Default configuration of `experiment` as JSON.
pub fn defaults_for(experiment: Experiment) -> Value {
    let mut v = json!({
        "experiment": experiment,
        "L": 4, "N": 3, "J": "nn",
        "beta": 2.0, "s": 0.0, "gamma": 0.1, "m2": 0.0, "width": 1.0,
        "f": {"kind": "dipole", "amplitude": 0.3},
        "eps": [],
        "K": 3,
        "mode": "oracle",
        "chain": ChainConfig::default(),
        "trials": 0, "samples": 0, "fields": 0, "instances": 0,
        "regulator": null,
        "seed": 1,
    });
    let over = match experiment {
        Experiment::Decompose => json!({"m2": 1.0}),
        Experiment::Schedule => json!({
            "L": 2, "N": 10,
            "f": {"kind": "polynomial", "radius": 1.0},
            "eps": [0.125, 0.0625, 0.03125],
        }),
        Experiment::CtildeLimit => json!({
            "L": 2, "N": 10,
            "f": {"kind": "gaussian", "width": 1.0},
            "eps": [0.25, 0.125, 0.0625],
        }),
        Experiment::ReblockingCheck => {
            json!({"L": 2, "N": 2, "beta": std::f64::consts::TAU, "trials": 100, "fields": 20})
        }
        Experiment::RgConsistency => json!({
            "L": 2, "N": 2, "beta": std::f64::consts::TAU, "gamma": 0.0,
            "trials": 100, "samples": 20, "fields": 10,
        }),
        Experiment::Ginibre => {
            json!({"L": 3, "N": 1, "chain": {"sweeps": 1_000_000, "burn_in": 10_000, "sampling_beta": 4.0}})
        }
        Experiment::ScalingLimit | Experiment::ZnRatio => json!({
            "beta": 6.0,
            "f": {"kind": "polynomial", "radius": 0.5},
            "eps": [0.9, 0.45, 0.3, 0.2, 0.15, 0.125],
            "chain": {"sweeps": 100_000, "burn_in": 10_000},
            "samples": 20_000,
        }),
        Experiment::RegulatorFalsify => json!({"L": 8, "N": 2, "beta": 1.0, "instances": 10_000}),
    };
    merge(&mut v, over);
    v
}

/// Recursive merge of JSON objects; tagged objects (with `kind`) and
/// non-objects are replaced whole.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() && v.get("kind").is_none() => {
                        merge(slot, v)
                    }
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Keys accepted on the command line, with their place in the configuration.
pub const OVERRIDE_KEYS: [(&str, &[&str]); 20] = [
    ("L", &["L"]),
    ("N", &["N"]),
    ("J", &["J"]),
    ("beta", &["beta"]),
    ("s", &["s"]),
    ("gamma", &["gamma"]),
    ("m2", &["m2"]),
    ("width", &["width"]),
    ("f", &["f"]),
    ("eps", &["eps"]),
    ("K", &["K"]),
    ("mode", &["mode"]),
    ("trials", &["trials"]),
    ("samples", &["samples"]),
    ("fields", &["fields"]),
    ("instances", &["instances"]),
    ("sweeps", &["chain", "sweeps"]),
    ("burn-in", &["chain", "burn_in"]),
    ("sampling-beta", &["chain", "sampling_beta"]),
    ("seed", &["seed"]),
];

/// Parses a flag value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl ExperimentConfig {
    /// Defaults, then `file`, then `overrides` (keys from [`OVERRIDE_KEYS`]).
    pub fn resolve(
        experiment: Experiment,
        file: Option<Value>,
        overrides: &[(String, Value)],
    ) -> Result<Self> {
        let mut v = defaults_for(experiment);
        if let Some(file) = file {
            if !file.is_object() {
                return Err(Error::Config(
                    "the configuration file must hold a JSON object".into(),
                ));
            }
            merge(&mut v, file);
        }
        v["experiment"] = json!(experiment);
        for (key, value) in overrides {
            let path = OVERRIDE_KEYS
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, p)| *p)
                .ok_or_else(|| Error::Config(format!("unknown override `{key}`")))?;
            let mut slot = &mut v;
            for p in path {
                if !slot.is_object() {
                    *slot = Value::Object(Map::new());
                }
                slot = slot
                    .as_object_mut()
                    .expect("object")
                    .entry(p.to_string())
                    .or_insert(Value::Null);
            }
            *slot = value.clone();
        }
        let cfg: Self = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(
        experiment: Experiment,
        path: &Path,
        overrides: &[(String, Value)],
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::resolve(experiment, Some(file), overrides)
    }

    pub fn defaults(experiment: Experiment) -> Self {
        Self::resolve(experiment, None, &[]).expect("defaults are valid")
    }

    pub fn validate(&self) -> Result<()> {
        self.j.resolve()?;
        self.lattice()?;
        for (name, v) in [("beta", self.beta), ("width", self.width)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        for (name, v) in [("s", self.s), ("gamma", self.gamma), ("m2", self.m2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be nonnegative")));
            }
        }
        if let Some(e) = self.eps.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::Config(format!("ε = {e} must lie in (0, 1)")));
        }
        if let Some(p) = &self.regulator {
            p.validate()?;
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<TorusLattice> {
        TorusLattice::new(self.base, self.scales)
    }

    pub fn step(&self) -> Result<StepDistribution> {
        self.j.resolve()
    }

    fn params(&self) -> CovarianceParams {
        CovarianceParams {
            s: self.s,
            m2: self.m2,
            gamma: self.gamma,
        }
    }

    /// Configuration shared by the scaling-limit and zn-ratio runs.
    pub fn scaling(&self) -> Result<ScalingConfig> {
        Ok(ScalingConfig {
            j: self.step()?,
            beta: self.beta,
            base: self.base,
            scales: self.scales,
            test_function: self.f.require_smooth()?,
            eps: self.eps.clone(),
            s: self.s,
            gamma: self.gamma,
            chain: self.chain,
            seed: self.seed,
            ..ScalingConfig::default()
        })
    }

    /// `# multigauss <version> experiment=<name> config=<json>` without the output directory.
    pub fn header(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let json = serde_json::to_string(&c).expect("serialisable");
        format!(
            "multigauss {VERSION} experiment={} config={json}",
            self.experiment
        )
    }
}

/// Results of one run.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub config: ExperimentConfig,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
    /// Experiment-specific results.
    pub summary: Value,
    /// Whether the run's own acceptance check passed.
    pub passed: bool,
}

impl Artifact {
    /// Writes CSV tables, SVG plots and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut config = self.config.clone();
        config.out = None;
        let summary = json!({
            "version": VERSION,
            "experiment": config.experiment,
            "config": config,
            "passed": self.passed,
            "results": self.summary,
        });
        write_all(
            dir,
            &self.config.header(),
            &self.tables,
            &self.plots,
            &summary,
        )
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Artifact> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::Decompose => run_decompose(cfg),
        Experiment::Schedule => run_schedule(cfg),
        Experiment::CtildeLimit => run_ctilde_limit(cfg),
        Experiment::ReblockingCheck => run_reblocking(cfg),
        Experiment::RgConsistency => run_consistency(cfg),
        Experiment::Ginibre => run_ginibre(cfg),
        Experiment::ScalingLimit => run_scaling(cfg),
        Experiment::ZnRatio => run_zn(cfg),
        Experiment::RegulatorFalsify => run_regulator(cfg),
    }
}

fn artifact(
    cfg: &ExperimentConfig,
    tables: Vec<Table>,
    plots: Vec<Plot>,
    summary: Value,
    passed: bool,
) -> Artifact {
    Artifact {
        config: cfg.clone(),
        tables,
        plots,
        summary,
        passed,
    }
}

fn plot(name: &str, title: &str, x: &str, y: &str, log_x: bool) -> Plot {
    Plot {
        name: name.into(),
        title: title.into(),
        x_label: x.into(),
        y_label: y.into(),
        log_x,
        series: Vec::new(),
        reference: None,
    }
}

/// JSON number, or `null` when not finite.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn run_decompose(cfg: &ExperimentConfig) -> Result<Artifact> {
    let lattice = cfg.lattice()?;
    let side = lattice.side();
    let cs = covariance_cs(&cfg.step()?, side, cfg.params())?;
    let dec = decompose(&cs, &lattice, cfg.width)?;
    let fft = Fft2::new(side);
    let mut pieces = Table::new(
        "pieces",
        &["j", "min_multiplier", "max_multiplier", "range_profile"],
    );
    let mut kernels = Table::new("kernels", &["j", "x", "value"]);
    let mut p = plot("kernels", "Γ_j(0, (x, 0))", "x", "Γ_j", false);
    let mut min_piece = f64::INFINITY;
    let mut profiles = Vec::new();
    for (i, g) in dec.gammas().iter().enumerate() {
        let j = i as u32 + 1;
        let vals = g.multiplier().values();
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        min_piece = min_piece.min(lo);
        let range = range_profile(g, &fft, &lattice, j);
        profiles.push(json!({"j": j, "range_profile": range}));
        pieces.push(vec![j.into(), lo.into(), hi.into(), range.into()]);
        let k = kernel(g, &fft);
        let mut series = Series {
            label: format!("j = {j}"),
            points: Vec::new(),
        };
        for x in 0..=side / 2 {
            let v = k.at(x);
            kernels.push(vec![j.into(), x.into(), v.into()]);
            series.points.push((x as f64, v, 0.0));
        }
        p.series.push(series);
    }
    let err = dec.reconstruction_error();
    let passed = err <= 1e-10 && min_piece >= -1e-12;
    let summary = json!({
        "side": side,
        "reconstruction_error": err,
        "min_piece": min_piece,
        "t_n": num(dec.t_n()),
        "divergent": dec.is_divergent(),
        "range_profiles": profiles,
    });
    Ok(artifact(
        cfg,
        vec![pieces, kernels],
        vec![p],
        summary,
        passed,
    ))
}

fn run_schedule(cfg: &ExperimentConfig) -> Result<Artifact> {
    let lattice = cfg.lattice()?;
    let side = lattice.side();
    if lattice.scales() < 2 {
        return Err(Error::ScaleOutOfRange {
            scale: 1,
            scales: lattice.scales(),
        });
    }
    let cs = covariance_cs(&cfg.step()?, side, cfg.params())?;
    let dec = decompose(&cs, &lattice, cfg.width)?;
    let inputs: Vec<(f64, LatticeField)> = match cfg.f.smooth() {
        None => {
            let TestFunction::Dipole { amplitude } = cfg.f else {
                unreachable!()
            };
            vec![(f64::NAN, dipole(side, amplitude))]
        }
        Some(g) => {
            if cfg.eps.is_empty() {
                return Err(Error::Config("empty ε sweep".into()));
            }
            cfg.eps
                .iter()
                .map(|&e| Ok((e, build_feps(&g, e, side)?.field)))
                .collect::<Result<_>>()?
        }
    };
    let mut table = Table::new(
        "schedule",
        &[
            "eps",
            "j_f",
            "j",
            "rho",
            "c2_norm",
            "margin",
            "within_block",
        ],
    );
    let mut p = plot("rho", "ρ_j = ‖u_j‖ / (L^{2j_f}‖f‖)", "j", "ρ_j", false);
    let mut runs = Vec::new();
    let (mut worst_residual, mut worst_slope) = (0.0_f64, f64::NEG_INFINITY);
    let mut maxima = Vec::new();
    for (eps, f) in &inputs {
        let j_f = smoothness_scale(f, &lattice)?;
        let j_start = j_f.clamp(1, lattice.scales() - 1);
        let sched = build_schedule_at(f, &dec, cfg.s, cfg.gamma, j_start)?;
        let residual = completeness_residual(&sched, &dec)?;
        let bounds = check_schedule_bounds(&sched);
        worst_residual = worst_residual.max(residual);
        worst_slope = worst_slope.max(bounds.slope);
        maxima.push(bounds.max);
        let mut series = Series {
            label: format!("ε = {eps}"),
            points: Vec::new(),
        };
        for &(j, rho) in &bounds.ratios {
            let d = sched.diagnostics.iter().find(|d| d.scale == j);
            table.push(vec![
                (*eps).into(),
                j_f.into(),
                j.into(),
                rho.into(),
                d.map_or(f64::NAN, |d| d.c2_norm).into(),
                d.map_or(f64::NAN, |d| d.margin).into(),
                d.is_some_and(|d| d.within_block).into(),
            ]);
            series.points.push((j as f64, rho, 0.0));
        }
        p.series.push(series);
        runs.push(json!({
            "eps": num(*eps),
            "j_f": j_f,
            "j_start": j_start,
            "below_smoothness_scale": sched.below_smoothness_scale,
            "assumption_holds": sched.assumption_holds(),
            "m_u": sched.m_u,
            "residual": residual,
            "max_rho": bounds.max,
            "argmax": bounds.argmax,
            "slope": bounds.slope,
        }));
    }
    let spread = maxima.iter().copied().fold(0.0, f64::max)
        / maxima.iter().copied().fold(f64::INFINITY, f64::min);
    let passed = worst_residual <= 1e-10 && worst_slope <= 0.05 && spread < 2.0;
    let summary = json!({
        "runs": runs,
        "max_residual": worst_residual,
        "max_slope": worst_slope,
        "max_rho_spread": num(spread),
    });
    Ok(artifact(cfg, vec![table], vec![p], summary, passed))
}

fn run_ctilde_limit(cfg: &ExperimentConfig) -> Result<Artifact> {
    let g = cfg.f.require_smooth()?;
    let lattice = cfg.lattice()?;
    let t = quadform_ctilde_limit(&g, &cfg.eps, &lattice, &cfg.step()?, cfg.s, cfg.gamma)?;
    let mut table = Table::new(
        "ctilde_limit",
        &["eps", "j_f", "quadform", "target", "ratio"],
    );
    let mut p = plot("ctilde_limit", "(f_ε, C̃ f_ε)", "ε", "quadratic form", true);
    let mut series = Series {
        label: format!("γ = {}", cfg.gamma),
        points: Vec::new(),
    };
    for r in &t.rows {
        table.push(vec![
            r.eps.into(),
            r.j_f.into(),
            r.quadform.into(),
            r.target.into(),
            r.ratio.into(),
        ]);
        series.points.push((r.eps, r.quadform, 0.0));
    }
    p.series.push(series);
    p.reference = Some(("continuum".into(), t.target));
    let deviation = (t.extrapolated - t.target).abs() / t.target;
    let summary = json!({
        "target": t.target,
        "extrapolated": t.extrapolated,
        "extrapolation_error": t.error,
        "relative_deviation": deviation,
        "non_monotone": t.non_monotone,
    });
    Ok(artifact(
        cfg,
        vec![table],
        vec![p],
        summary,
        deviation <= 0.02,
    ))
}

fn fixture_options(cfg: &ExperimentConfig, with_psi: bool) -> Result<FixtureOptions> {
    if cfg.scales == 0 {
        return Err(Error::ScaleOutOfRange {
            scale: 0,
            scales: 0,
        });
    }
    Ok(FixtureOptions {
        base: cfg.base,
        scales: cfg.scales,
        scale: cfg.scales - 1,
        beta: cfg.beta,
        with_psi,
        ..Default::default()
    })
}

fn random_fields(rng: &mut Rng, count: usize, side: usize, sigma: f64) -> Vec<LatticeField> {
    (0..count).map(|_| normal_field(rng, side, sigma)).collect()
}

fn run_reblocking(cfg: &ExperimentConfig) -> Result<Artifact> {
    let opts = fixture_options(cfg, false)?;
    let side = cfg.lattice()?.side();
    if cfg.trials == 0 || cfg.fields == 0 {
        return Err(Error::Config("need trials and fields".into()));
    }
    let mut table = Table::new("reblocking", &["trial", "residual", "control"]);
    let (mut worst, mut worst_control) = (0.0_f64, 0.0_f64);
    for trial in 0..cfg.trials {
        let mut rng = stream(cfg.seed, trial as u64);
        let state = random_fixture(&opts, &mut rng)?.state()?;
        let u = normal_field(&mut rng, side, 0.5);
        let phis = random_fields(&mut rng, cfg.fields, side, 1.0);
        let r = check_reblocking(&state, &u, &phis)?;
        let c = check_reblocking(&state, &LatticeField::zeros(side), &phis)?;
        worst = worst.max(r);
        worst_control = worst_control.max(c);
        table.push(vec![trial.into(), r.into(), c.into()]);
    }
    let passed = worst <= 1e-10 && worst_control <= 1e-12;
    let summary = json!({"max_residual": worst, "max_control_residual": worst_control});
    Ok(artifact(cfg, vec![table], vec![], summary, passed))
}

fn run_consistency(cfg: &ExperimentConfig) -> Result<Artifact> {
    let opts = fixture_options(cfg, true)?;
    let lattice = cfg.lattice()?;
    let side = lattice.side();
    if cfg.trials == 0 || cfg.fields == 0 || cfg.samples == 0 {
        return Err(Error::Config("need trials, samples and fields".into()));
    }
    let cs = covariance_cs(&cfg.step()?, side, cfg.params())?;
    let dec = decompose(&cs, &lattice, cfg.width)?;
    let gamma = dec.gamma(opts.scale + 1)?;
    let kinds = [LocKind::Zero, LocKind::Constant, LocKind::Taylor2];
    let mut table = Table::new("consistency", &["trial", "loc", "residual"]);
    let mut worst = 0.0_f64;
    for trial in 0..cfg.trials {
        let mut rng = stream(cfg.seed, trial as u64);
        let fixture = random_fixture(&opts, &mut rng)?;
        let state = fixture.state()?;
        let loc = kinds[rng.random_range(0..kinds.len())];
        let e = Arc::new(ExpectationFunctional::gaussian_fixed(
            gamma,
            cfg.samples,
            rng.random(),
        )?);
        let phis = random_fields(&mut rng, cfg.fields, side, 1.0);
        let r = check_rg_consistency(
            &state,
            e,
            &fixture.couplings(),
            loc.build(),
            &phis,
            &Default::default(),
        )?;
        worst = worst.max(r);
        let name = serde_json::to_value(loc).expect("serialisable");
        table.push(vec![
            trial.into(),
            Cell::Text(name.as_str().unwrap_or_default().into()),
            r.into(),
        ]);
    }
    let summary = json!({"max_residual": worst});
    Ok(artifact(cfg, vec![table], vec![], summary, worst <= 1e-9))
}

fn run_ginibre(cfg: &ExperimentConfig) -> Result<Artifact> {
    let side = cfg.lattice()?.side();
    let f = match cfg.f {
        TestFunction::Dipole { amplitude } => dipole(side, amplitude),
        _ => {
            return Err(Error::Config(
                "the ginibre run takes a dipole test function".into(),
            ))
        }
    };
    let model = DgModel::new(cfg.step()?, cfg.beta, side, 0.0, true)?;
    let mode = match cfg.mode {
        Mode::Oracle => GinibreMode::Oracle { k: cfg.k },
        Mode::Mcmc => GinibreMode::Mcmc {
            chain: cfg.chain,
            seed: cfg.seed,
        },
    };
    let r = dgmc::check_ginibre(&model, &f, mode)?;
    let mut table = Table::new("ginibre", &["observable", "value", "se", "bound", "holds"]);
    table.push(vec![
        "mgf".into(),
        r.mgf.into(),
        r.mgf_se.into(),
        r.mgf_bound.into(),
        r.mgf_holds.into(),
    ]);
    table.push(vec![
        "second".into(),
        r.second.into(),
        r.second_se.into(),
        r.second_bound.into(),
        r.second_holds.into(),
    ]);
    let summary = serde_json::to_value(r).map_err(|e| Error::Io(e.to_string()))?;
    Ok(artifact(cfg, vec![table], vec![], summary, r.holds()))
}

fn scaling_table(rows: &[dgmc::ScalingRow]) -> (Table, Plot) {
    let mut table = Table::new(
        "scaling_limit",
        &[
            "eps",
            "j_f",
            "amplitude",
            "log_mgf",
            "se",
            "lattice_target",
            "continuum_target",
            "ratio",
            "ratio_se",
            "discretisation",
            "combined_error",
            "ess_fraction",
            "tau",
        ],
    );
    let mut p = plot(
        "scaling_limit",
        "log⟨e^{a(f_ε,σ)}⟩ / Gaussian prediction",
        "ε",
        "ratio",
        true,
    );
    let mut series = Series {
        label: "ratio".into(),
        points: Vec::new(),
    };
    for r in rows {
        table.push(vec![
            r.eps.into(),
            r.j_f.into(),
            r.amplitude.into(),
            r.log_mgf.into(),
            r.se.into(),
            r.lattice_target.into(),
            r.continuum_target.into(),
            r.ratio.into(),
            r.ratio_se.into(),
            r.discretisation.into(),
            r.combined_error.into(),
            r.ess_fraction.into(),
            r.tau.into(),
        ]);
        series.points.push((r.eps, r.ratio, r.combined_error));
    }
    p.series.push(series);
    p.reference = Some(("1".into(), 1.0));
    (table, p)
}

fn zn_table(report: &dgmc::ZnReport) -> (Table, Plot) {
    let mut table = Table::new(
        "zn_ratio",
        &[
            "eps",
            "j_f",
            "amplitude",
            "log_mgf",
            "gaussian",
            "value",
            "se",
        ],
    );
    let mut p = plot("zn_ratio", "zn statistic against ε", "ε", "zn", true);
    let mut series = Series {
        label: "zn".into(),
        points: Vec::new(),
    };
    for r in &report.rows {
        table.push(vec![
            r.eps.into(),
            r.j_f.into(),
            r.amplitude.into(),
            r.log_mgf.into(),
            r.gaussian.into(),
            r.value.into(),
            r.se.into(),
        ]);
        series.points.push((r.eps, r.value, r.se));
    }
    p.series.push(series);
    p.reference = Some(("0".into(), 0.0));
    (table, p)
}

/// Row at the smallest ε, i.e. the widest test function.
fn widest(rows: &[dgmc::ScalingRow]) -> Option<&dgmc::ScalingRow> {
    rows.iter().min_by(|a, b| a.eps.total_cmp(&b.eps))
}

fn run_scaling(cfg: &ExperimentConfig) -> Result<Artifact> {
    let sc = cfg.scaling()?;
    let rows = dgmc::scaling_limit_experiment(&sc)?;
    let (table, p) = scaling_table(&rows);
    let w = widest(&rows).expect("nonempty sweep");
    let passed = (0.9..=1.1).contains(&w.ratio);
    let mut summary = json!({
        "widest": {"eps": w.eps, "j_f": w.j_f, "ratio": w.ratio, "ratio_se": w.ratio_se, "combined_error": w.combined_error},
        "rows": rows,
    });
    if cfg.samples >= 2 {
        let side = cfg.lattice()?.side();
        let field = build_feps(&sc.test_function, w.eps, side)?.field;
        let control = dgmc::gaussian_control(
            &sc.j,
            sc.beta,
            &field,
            cfg.samples,
            sc.exponent_variance,
            cfg.seed,
        )?;
        summary["gaussian_control"] =
            serde_json::to_value(control).map_err(|e| Error::Io(e.to_string()))?;
    }
    Ok(artifact(cfg, vec![table], vec![p], summary, passed))
}

fn run_zn(cfg: &ExperimentConfig) -> Result<Artifact> {
    let (rows, report) = dgmc::scaling_and_zn(&cfg.scaling()?)?;
    let (zt, zp) = zn_table(&report);
    let (st, sp) = scaling_table(&rows);
    let w = widest(&rows).expect("nonempty sweep");
    let passed = report.sign_test.passes && (0.9..=1.1).contains(&w.ratio);
    let summary = json!({
        "sign_test": report.sign_test,
        "decay_exponent": report.decay_exponent.map_or(Value::Null, num),
        "widest": {"eps": w.eps, "j_f": w.j_f, "ratio": w.ratio, "ratio_se": w.ratio_se, "combined_error": w.combined_error},
        "rows": report.rows,
    });
    Ok(artifact(cfg, vec![zt, st], vec![zp, sp], summary, passed))
}

/// Connected polymer of `size` blocks grown from a random block.
pub fn random_connected_polymer(rng: &mut Rng, bl: &BlockLattice, size: usize) -> Polymer {
    let mut blocks = vec![rng.random_range(0..bl.num_blocks())];
    while blocks.len() < size.min(bl.num_blocks()) {
        let b = blocks[rng.random_range(0..blocks.len())];
        let n = bl.neighbours(b);
        let c = n[rng.random_range(0..n.len())];
        if !blocks.contains(&c) {
            blocks.push(c);
        }
    }
    Polymer::new(blocks)
}

/// Field from one of the two families: white noise or a random plane wave,
/// at a log-uniform amplitude in `[10^-2, 10)`.
fn random_regulator_field(rng: &mut Rng, side: usize, smooth: bool) -> LatticeField {
    let amp = 10f64.powf(rng.random_range(-2.0..1.0));
    if !smooth {
        return normal_field(rng, side, amp);
    }
    let (kx, ky) = (rng.random_range(0..4) as f64, rng.random_range(0..4) as f64);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let w = std::f64::consts::TAU / side as f64;
    LatticeField::from_fn(side, |x, y| {
        amp * (w * (kx * x as f64 + ky * y as f64) + phase).cos()
    })
}

fn run_regulator(cfg: &ExperimentConfig) -> Result<Artifact> {
    let lattice = cfg.lattice()?;
    if lattice.scales() < 2 {
        return Err(Error::ScaleOutOfRange {
            scale: 2,
            scales: lattice.scales(),
        });
    }
    let side = lattice.side();
    let params = cfg
        .regulator
        .unwrap_or_else(|| RegulatorParams::defaults(cfg.base, cfg.beta));
    params.validate()?;
    let fine = BlockLattice::new(&lattice, 1, Adjacency::Linf)?;
    let coarse = BlockLattice::new(&lattice, 2, Adjacency::Linf)?;
    let checks = cfg.instances.min(1000);
    let tol = |a: f64| 1e-10 * (1.0 + a.abs());

    let mut props = Table::new(
        "properties",
        &[
            "instance",
            "blocks",
            "components",
            "psi_minus_g",
            "grid_minus_endpoint",
            "factorisation",
        ],
    );
    let (mut psi_failures, mut grid_failures, mut factor_failures) = (0, 0, 0);
    let (mut worst_grid, mut worst_factor) = (0.0_f64, 0.0_f64);
    for i in 0..checks {
        let mut rng = stream(cfg.seed, i as u64);
        let n = fine.num_blocks();
        let x = Polymer::new((0..n).filter(|_| rng.random_bool(0.15)).collect());
        let x = if x.is_empty() {
            Polymer::single(rng.random_range(0..n))
        } else {
            x
        };
        let smooth = rng.random_bool(0.5);
        let phi = random_regulator_field(&mut rng, side, smooth);
        let u = random_regulator_field(&mut rng, side, smooth);
        let g = log_regulator_g(&params, &fine, &x, &phi);
        let psi = log_regulator_g_psi(&params, &fine, &x, &phi, &u);
        let grid = log_regulator_g_psi_grid(&params, &fine, &x, &phi, &u, 101);
        let comps = components(&fine, &x);
        let split: f64 = comps
            .iter()
            .map(|c| log_regulator_g(&params, &fine, c, &phi))
            .sum();
        let factor = (g - split).abs() / (1.0 + g.abs());
        psi_failures += usize::from(psi < g - tol(g));
        grid_failures += usize::from(grid - psi > tol(psi));
        factor_failures += usize::from(factor > 1e-10);
        worst_grid = worst_grid.max(grid - psi);
        worst_factor = worst_factor.max(factor);
        props.push(vec![
            i.into(),
            x.len().into(),
            comps.len().into(),
            (psi - g).into(),
            (grid - psi).into(),
            factor.into(),
        ]);
    }

    let mut cos = Table::new(
        "change_of_scale",
        &[
            "instance", "blocks", "family", "log_lhs", "log_rhs", "holds",
        ],
    );
    let mut failures = 0;
    let mut worst_margin = f64::INFINITY;
    for i in 0..cfg.instances {
        let mut rng = stream(cfg.seed, (1 << 32) + i as u64);
        let size = rng.random_range(1..=6);
        let x = random_connected_polymer(&mut rng, &fine, size);
        let smooth = i % 2 == 1;
        let phi = random_regulator_field(&mut rng, side, smooth);
        let xi_o = random_regulator_field(&mut rng, side, smooth);
        let xi_b: Vec<LatticeField> = (0..x.len())
            .map(|_| random_regulator_field(&mut rng, side, smooth))
            .collect();
        let r = check_change_of_scale_instance(&params, &fine, &coarse, &x, &phi, &xi_o, &xi_b)?;
        failures += usize::from(!r.holds);
        worst_margin = worst_margin.min(r.log_margin());
        let family = if smooth { "plane-wave" } else { "noise" };
        cos.push(vec![
            i.into(),
            x.len().into(),
            family.into(),
            r.log_lhs.into(),
            r.log_rhs.into(),
            r.holds.into(),
        ]);
    }
    let passed = psi_failures == 0 && grid_failures == 0 && factor_failures == 0 && failures == 0;
    let summary = json!({
        "params": params,
        "property_instances": checks,
        "psi_below_g": psi_failures,
        "grid_above_endpoint": grid_failures,
        "max_grid_excess": worst_grid,
        "factorisation_failures": factor_failures,
        "max_relative_factorisation_defect": worst_factor,
        "change_of_scale_instances": cfg.instances,
        "change_of_scale_failures": failures,
        "min_log_margin": num(worst_margin),
    });
    Ok(artifact(cfg, vec![props, cos], vec![], summary, passed))
}
