//! `multigauss <experiment> [--config file] [--key value ...] [--seed n] [--out dir]`

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use multigauss::experiments::{parse_value, run, Experiment, ExperimentConfig};
use multigauss::Error;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(
    name = "multigauss",
    version,
    about = "Multiscale Discrete Gaussian experiments"
)]
struct Cli {
    /// decompose | schedule | ctilde-limit | reblocking-check | rg-consistency |
    /// ginibre | scaling-limit | zn-ratio | regulator-falsify
    experiment: String,
    /// JSON configuration merged over the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default multigauss-out/<experiment>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    dry_run: bool,

    #[arg(long = "L")]
    l: Option<String>,
    #[arg(long = "N")]
    n: Option<String>,
    /// `nn`, `linf<R>` or a JSON list of steps.
    #[arg(long = "J")]
    j: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    m2: Option<String>,
    #[arg(long)]
    width: Option<String>,
    /// JSON test function, e.g. '{"kind":"gaussian","width":1}'.
    #[arg(long)]
    f: Option<String>,
    /// JSON list of ε values.
    #[arg(long)]
    eps: Option<String>,
    #[arg(long = "K")]
    k: Option<String>,
    /// oracle | mcmc
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    fields: Option<String>,
    #[arg(long)]
    instances: Option<String>,
    #[arg(long)]
    sweeps: Option<String>,
    #[arg(long = "burn-in")]
    burn_in: Option<String>,
    #[arg(long = "sampling-beta")]
    sampling_beta: Option<String>,
}

impl Cli {
    fn overrides(&self) -> Vec<(String, Value)> {
        let flags = [
            ("L", &self.l),
            ("N", &self.n),
            ("J", &self.j),
            ("beta", &self.beta),
            ("s", &self.s),
            ("gamma", &self.gamma),
            ("m2", &self.m2),
            ("width", &self.width),
            ("f", &self.f),
            ("eps", &self.eps),
            ("K", &self.k),
            ("mode", &self.mode),
            ("trials", &self.trials),
            ("samples", &self.samples),
            ("fields", &self.fields),
            ("instances", &self.instances),
            ("sweeps", &self.sweeps),
            ("burn-in", &self.burn_in),
            ("sampling-beta", &self.sampling_beta),
        ];
        flags
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k.to_string(), parse_value(v))))
            .collect()
    }
}

/// Bad input exits with 2, failures during a run with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidLattice(_)
        | Error::InvalidStepDistribution(_)
        | Error::TorusTooSmall { .. }
        | Error::SizeMismatch { .. }
        | Error::NonzeroMean(_)
        | Error::ScaleOutOfRange { .. }
        | Error::NotAPower { .. }
        | Error::SupportTooLarge(_)
        | Error::Precondition(_) => 2,
        _ => 1,
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!(
        "{}",
        json!({"kind": e.kind(), "code": e.code(), "message": e.to_string()})
    );
    ExitCode::from(exit_code(e))
}

fn init_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("MULTIGAUSS_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Config(format!(
            "MULTIGAUSS_THREADS = `{raw}` is not a positive integer"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = (|| {
        init_threads()?;
        let experiment: Experiment = cli.experiment.parse()?;
        let mut overrides = cli.overrides();
        if let Some(seed) = cli.seed {
            overrides.push(("seed".into(), json!(seed)));
        }
        let mut cfg = match &cli.config {
            Some(path) => ExperimentConfig::from_json_file(experiment, path, &overrides)?,
            None => ExperimentConfig::resolve(experiment, None, &overrides)?,
        };
        if cli.out.is_some() {
            cfg.out = cli.out.clone();
        }
        let dir = cfg
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("multigauss-out").join(experiment.name()));
        if cli.dry_run {
            println!(
                "{}",
                serde_json::to_string_pretty(&cfg).expect("serialisable")
            );
            return Ok(None);
        }
        let artifact = run(&cfg)?;
        let files = artifact.write(&dir)?;
        Ok(Some((artifact, files)))
    })();
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some((artifact, files))) => {
            for f in &files {
                println!("wrote {}", f.display());
            }
            println!(
                "{} {}",
                artifact.config.experiment,
                if artifact.passed { "PASS" } else { "FAIL" }
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
