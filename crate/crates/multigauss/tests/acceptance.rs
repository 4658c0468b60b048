//! Acceptance suite: one PASS/FAIL line per criterion. Failures are reported,
//! not raised, so the binary always exits 0.

use std::time::Instant;

use multigauss::dgmc::{
    check_ginibre, check_monotonicity, exact_enumerate, gaussian_control, mcmc_sample, ChainConfig,
    DgModel, GinibreMode,
};
use multigauss::experiments::{dipole, run, Experiment, ExperimentConfig};
use multigauss::extfield::build_feps;
use multigauss::{Result, StepDistribution};
use serde_json::{json, Value};

type Outcome = Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Outcome);

fn config(e: Experiment, over: Value) -> Result<ExperimentConfig> {
    ExperimentConfig::resolve(e, Some(over), &[])
}

fn f64_at(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or(f64::NAN)
}

fn grid() -> Vec<Value> {
    let mut out = Vec::new();
    for (l, n) in [(4, 3), (8, 2)] {
        for j in ["nn", "linf1"] {
            for s in [0.0, 0.02] {
                for m2 in [0.01, 1.0] {
                    out.push(json!({"L": l, "N": n, "J": j, "s": s, "m2": m2, "gamma": 0.1}));
                }
            }
        }
    }
    out
}

fn decomposition_exactness() -> Outcome {
    let (mut err, mut min) = (0.0_f64, f64::INFINITY);
    for p in grid() {
        let a = run(&config(Experiment::Decompose, p)?)?;
        err = err.max(f64_at(&a.summary, "reconstruction_error"));
        min = min.min(f64_at(&a.summary, "min_piece"));
    }
    Ok((
        err <= 1e-10 && min >= -1e-12,
        format!("16 cases, max error {err:.3e}, min piece {min:.3e}"),
    ))
}

fn range_diagnostic() -> Outcome {
    let a = run(&config(
        Experiment::Decompose,
        json!({"L": 8, "N": 2, "gamma": 0.1, "m2": 0.01}),
    )?)?;
    let profiles = a.summary["range_profiles"]
        .as_array()
        .cloned()
        .unwrap_or_default();
    let n = profiles.len() as u64;
    let mut inner = Vec::new();
    let mut first = f64::NAN;
    for p in &profiles {
        let j = p["j"].as_u64().unwrap_or(0);
        let r = f64_at(p, "range_profile");
        if j == 1 {
            first = r;
        } else if j < n {
            inner.push(r);
        }
    }
    let ok = inner.iter().all(|&r| r <= 1e-3);
    Ok((
        ok,
        format!(
            "j = 1 profile {first:.4e}, {} scales with 1 < j < N",
            inner.len()
        ),
    ))
}

fn completeness() -> Outcome {
    let mut worst = 0.0_f64;
    let mut cases = 0;
    for mut p in grid() {
        for f in [
            json!({"kind": "dipole", "amplitude": 0.3}),
            json!({"kind": "gaussian", "width": 1.0}),
        ] {
            p["f"] = f;
            p["eps"] = json!([0.75]);
            let a = run(&config(Experiment::Schedule, p.clone())?)?;
            worst = worst.max(f64_at(&a.summary, "max_residual"));
            cases += 1;
        }
    }
    Ok((
        worst <= 1e-10,
        format!("{cases} cases, max residual {worst:.3e}"),
    ))
}

fn schedule_bounds() -> Outcome {
    let a = run(&ExperimentConfig::defaults(Experiment::Schedule))?;
    let slope = f64_at(&a.summary, "max_slope");
    let spread = f64_at(&a.summary, "max_rho_spread");
    Ok((
        slope <= 0.05 && spread < 2.0,
        format!("max slope {slope:.4}, max ρ spread {spread:.4}"),
    ))
}

fn ctilde_limit() -> Outcome {
    let mut runs = Vec::new();
    for gamma in [0.05, 0.2] {
        let a = run(&config(Experiment::CtildeLimit, json!({"gamma": gamma}))?)?;
        runs.push((
            f64_at(&a.summary, "extrapolated"),
            f64_at(&a.summary, "extrapolation_error"),
            f64_at(&a.summary, "target"),
        ));
    }
    let target = runs[0].2;
    let within = runs.iter().all(|r| ((r.0 - target) / target).abs() <= 0.02);
    let gap = (runs[0].0 - runs[1].0).abs();
    let allowed = runs[0].1.abs() + runs[1].1.abs();
    Ok((
        within && gap <= allowed,
        format!(
            "target {target:.6}, γ = 0.05 → {:.6}, γ = 0.2 → {:.6}, gap {gap:.3e} vs extrapolation error {allowed:.3e}",
            runs[0].0, runs[1].0
        ),
    ))
}

fn reblocking() -> Outcome {
    let a = run(&config(
        Experiment::ReblockingCheck,
        json!({"trials": 100}),
    )?)?;
    let r = f64_at(&a.summary, "max_residual");
    let c = f64_at(&a.summary, "max_control_residual");
    Ok((
        r <= 1e-10 && c <= 1e-12,
        format!("100 trials, max residual {r:.3e}, control {c:.3e}"),
    ))
}

fn rg_consistency() -> Outcome {
    let a = run(&config(
        Experiment::RgConsistency,
        json!({"trials": 100, "samples": 20}),
    )?)?;
    let r = f64_at(&a.summary, "max_residual");
    Ok((r <= 1e-9, format!("100 trials, max residual {r:.3e}")))
}

fn oracle_vs_chain() -> Outcome {
    let f = dipole(3, 0.3);
    let terms: Vec<(usize, f64)> = f.support().into_iter().map(|x| (x, f.at(x))).collect();
    let pairing = move |s: &[f64]| terms.iter().map(|&(x, c)| c * s[x]).sum::<f64>();
    let mut ok = true;
    let mut lines = Vec::new();
    for beta in [1.0, 2.0, 4.0_f64] {
        let model = DgModel::new(StepDistribution::nearest_neighbour(), beta, 3, 0.0, true)?;
        let exact = exact_enumerate(&model, 3, &f, f64::INFINITY)?;
        let chain = ChainConfig {
            sweeps: 1_000_000,
            burn_in: 10_000,
            sampling_beta: Some(beta.max(4.0)),
            ..ChainConfig::default()
        };
        let c = mcmc_sample(
            &model,
            &chain,
            None,
            &[&pairing],
            &mut multigauss::rng::stream(8, beta.to_bits()),
        )?;
        for (name, est, truth) in [
            ("second", c.estimate_map(0, |v| v * v), exact.second),
            ("mgf", c.estimate_map(0, f64::exp), exact.mgf),
        ] {
            let z = (est.mean - truth) / est.se;
            let rel = est.se / est.mean.abs();
            ok &= z.abs() <= 3.0 && rel <= 0.02;
            lines.push(format!("β={beta} {name} z={z:+.2} se/value={rel:.2e}"));
        }
    }
    Ok((ok, lines.join("; ")))
}

fn ginibre_suite() -> Outcome {
    let mut violations = 0;
    let mut cases = 0;
    for j in [
        StepDistribution::nearest_neighbour(),
        StepDistribution::linf_ball(1)?,
    ] {
        for beta in [0.5, 1.0, 2.0, 4.0, 8.0] {
            for a in [0.3, 1.0] {
                let model = DgModel::new(j.clone(), beta, 3, 0.0, true)?;
                let r = check_ginibre(&model, &dipole(3, a), GinibreMode::Oracle { k: 3 })?;
                violations += usize::from(!r.holds());
                cases += 1;
            }
        }
    }
    let mut mono = Vec::new();
    let mut mono_ok = true;
    for beta in [1.0, 2.0, 4.0] {
        let f = [((1, 0), 0.4), ((0, 1), -0.4)];
        let r = check_monotonicity(&StepDistribution::nearest_neighbour(), beta, 2, 1, &f, 1)?;
        mono_ok &= r.holds;
        mono.push(format!("β={beta}: {:.6} ≤ {:.6}", r.small, r.large));
    }
    Ok((
        violations == 0 && mono_ok,
        format!(
            "{violations} violations in {cases} oracle cases; {}",
            mono.join(", ")
        ),
    ))
}

fn estimator_control() -> Outcome {
    let cfg = ExperimentConfig::defaults(Experiment::ScalingLimit);
    let sc = cfg.scaling()?;
    let eps = cfg.eps.iter().copied().fold(f64::INFINITY, f64::min);
    let f = build_feps(&sc.test_function, eps, cfg.lattice()?.side())?.field;
    let g = gaussian_control(
        &sc.j,
        sc.beta,
        &f,
        cfg.samples,
        sc.exponent_variance,
        cfg.seed,
    )?;
    Ok((
        g.holds,
        format!(
            "ε = {eps}, log-MGF {:.6} vs {:.6}, z = {:+.2}",
            g.log_mgf, g.target, g.z
        ),
    ))
}

fn zn_summary(beta: f64) -> Result<(bool, String)> {
    let over = json!({"beta": beta, "chain": {"sweeps": 200_000, "burn_in": 20_000}});
    let a = run(&config(Experiment::ZnRatio, over)?)?;
    let st = &a.summary["sign_test"];
    let w = &a.summary["widest"];
    Ok((
        a.passed,
        format!(
            "sign test {}/{} decreasing (p = {:.3}), widest ε = {} ratio {:.4} ± {:.4}",
            st["decreasing"],
            st["pairs"],
            f64_at(st, "p_value"),
            w["eps"],
            f64_at(w, "ratio"),
            f64_at(w, "combined_error")
        ),
    ))
}

fn zn_trend() -> Outcome {
    let (ok, detail) = zn_summary(6.0)?;
    let (control_ok, control) = zn_summary(12.0)?;
    let verdict = if control_ok { "passes" } else { "fails" };
    Ok((
        ok,
        format!("β = 6: {detail}; rough-phase control β = 12 {verdict}: {control}"),
    ))
}

fn regulator() -> Outcome {
    let a = run(&config(
        Experiment::RegulatorFalsify,
        json!({"instances": 10_000}),
    )?)?;
    let s = &a.summary;
    Ok((
        a.passed,
        format!(
            "{} property instances ({} G^Ψ < G, {} grid excesses, {} factorisation failures); {} change-of-scale instances, {} failures, min log margin {:.3}",
            s["property_instances"],
            s["psi_below_g"],
            s["grid_above_endpoint"],
            s["factorisation_failures"],
            s["change_of_scale_instances"],
            s["change_of_scale_failures"],
            f64_at(s, "min_log_margin")
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("decomposition exactness", decomposition_exactness),
        ("range diagnostic", range_diagnostic),
        ("external-field completeness", completeness),
        ("schedule bounds", schedule_bounds),
        ("C̃ continuum limit", ctilde_limit),
        ("reblocking identity", reblocking),
        ("RG-step consistency", rg_consistency),
        ("oracle vs MCMC", oracle_vs_chain),
        ("Ginibre suite", ginibre_suite),
        ("estimator control", estimator_control),
        ("zn-ratio trend", zn_trend),
        ("regulator properties", regulator),
    ];
    let mut passed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        passed += usize::from(ok);
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!(
            "{verdict} {:>2} {name}: {detail} [{:.1} s]",
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{passed}/{} criteria passed", criteria.len());
}
