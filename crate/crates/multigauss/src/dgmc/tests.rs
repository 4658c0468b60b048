use std::f64::consts::{PI, TAU};

use rand::Rng as _;

use super::*;
use crate::extfield::{build_feps, SmoothTestFunction};
use crate::rng;

fn nn() -> StepDistribution {
    StepDistribution::nearest_neighbour()
}

fn linf() -> StepDistribution {
    StepDistribution::linf_ball(1).unwrap()
}

fn dipole(side: usize, a: f64) -> LatticeField {
    let mut f = LatticeField::zeros(side);
    f.set(1, a);
    f.set(side, -a);
    f
}

fn random_heights(side: usize, rng: &mut rng::Rng, pinned: bool) -> SpinConfiguration {
    let mut h: Vec<i64> = (0..side * side).map(|_| rng.random_range(-2..=2)).collect();
    if pinned {
        h[0] = 0;
    }
    SpinConfiguration::from_heights(side, h).unwrap()
}

#[test]
fn energy_of_zero_and_single_spike() {
    let side = 5;
    assert_eq!(energy(&nn(), 2.0, &LatticeField::zeros(side), 0.0), 0.0);
    let spike = LatticeField::delta(side, 7).scale(TAU);
    for beta in [0.5, 2.0, 6.0] {
        let want = TAU * TAU / (2.0 * beta);
        assert!((energy(&nn(), beta, &spike, 0.0) - want).abs() < 1e-12 * want);
    }
}

#[test]
fn edge_sum_matches_quadratic_form() {
    let mut r = rng::stream(3, 0);
    for j in [nn(), linf()] {
        for m2 in [0.0, 0.7] {
            let sigma = random_heights(6, &mut r, false).to_field(TAU);
            let a = energy(&j, 1.7, &sigma, m2);
            let b = energy_quadratic_form(&j, 1.7, &sigma, m2).unwrap();
            assert!((a - b).abs() < 1e-10 * a.max(1.0), "{a} vs {b}");
            let model = DgModel::new(j.clone(), 1.7, 6, m2.max(1e-300), false).unwrap();
            let s = SpinConfiguration::from_field(&sigma, TAU).unwrap();
            if m2 > 0.0 {
                assert!((model.energy(&s) - a).abs() < 1e-10 * a);
            }
        }
    }
}

#[test]
fn tiny_torus_counts_coinciding_neighbours() {
    // On side 2 the four nearest neighbours of a site are two sites, each twice.
    let model = DgModel::new(nn(), 1.0, 2, 0.0, true).unwrap();
    let s = SpinConfiguration::from_heights(2, vec![0, 1, 0, 0]).unwrap();
    assert!((model.action(&s) - TAU * TAU / 2.0).abs() < 1e-12);
}

#[test]
fn model_validation() {
    assert!(matches!(
        DgModel::new(nn(), 1.0, 4, 0.0, false),
        Err(Error::Precondition(_))
    ));
    assert!(DgModel::new(nn(), 0.0, 4, 0.0, true).is_err());
    assert!(DgModel::new(nn(), 1.0, 4, -1.0, true).is_err());
    assert!(SpinConfiguration::from_field(&LatticeField::constant(2, 1.0), TAU).is_err());
    let model = DgModel::new(nn(), 1.0, 3, 0.0, true).unwrap();
    let bad = SpinConfiguration::from_heights(3, vec![1, 0, 0, 0, 0, 0, 0, 0, 0]).unwrap();
    let cfg = ChainConfig::default();
    assert!(mcmc_sample(&model, &cfg, Some(&bad), &[], &mut rng::stream(0, 0)).is_err());
}

#[test]
fn single_site_kernel_is_reversible() {
    let mut r = rng::stream(11, 0);
    for (j, beta_s, p) in [(nn(), 2.0, 0.4), (linf(), 0.8, 0.9), (nn(), 5.0, 1.0)] {
        let model = DgModel::new(j, 1.3, 3, 0.0, true).unwrap();
        for _ in 0..50 {
            let a = random_heights(3, &mut r, true);
            let x = r.random_range(1..9);
            let mut h = a.heights().to_vec();
            h[x] += if r.random::<bool>() {
                r.random_range(1..4)
            } else {
                -r.random_range(1..4)
            };
            let b = SpinConfiguration::from_heights(3, h).unwrap();
            let forward = transition_probability(&model, &a, x, b.heights()[x], p, beta_s);
            let back = transition_probability(&model, &b, x, a.heights()[x], p, beta_s);
            if p == 1.0 && (b.heights()[x] - a.heights()[x]).abs() > 1 {
                assert_eq!(forward, 0.0);
                continue;
            }
            let boltzmann = (-(model.action(&b) - model.action(&a)) / beta_s).exp();
            assert!((forward / back - boltzmann).abs() < 1e-12 * boltzmann.max(1.0));
        }
    }
}

#[test]
fn enumeration_trivial_cases() {
    let model = DgModel::new(nn(), 2.0, 3, 0.0, true).unwrap();
    let r = exact_enumerate(&model, 1, &LatticeField::zeros(3), 1.0).unwrap();
    assert_eq!(r.states, 3u64.pow(8));
    assert!((r.mgf - 1.0).abs() < 1e-14);
    assert_eq!(r.second, 0.0);
    let r = exact_enumerate(&model, 2, &dipole(3, 0.3), 1.0).unwrap();
    assert!(r.linear.abs() < 1e-12 * r.second.sqrt());
    assert!(r.characteristic_im.abs() < 1e-12);
    assert!(r.partition > 1.0);
}

#[test]
fn enumeration_brute_force_on_side_two() {
    let model = DgModel::new(linf(), 1.1, 2, 0.0, true).unwrap();
    let f = LatticeField::from_values(2, vec![0.0, 0.5, -0.2, -0.3]).unwrap();
    let r = exact_enumerate(&model, 2, &f, 1.0).unwrap();
    let (mut z, mut e) = (0.0, 0.0);
    for a in -2..=2 {
        for b in -2..=2 {
            for c in -2..=2 {
                let s = SpinConfiguration::from_heights(2, vec![0, a, b, c]).unwrap();
                let w = (-model.energy(&s)).exp();
                z += w;
                e += w * s.to_field(TAU).dot(&f).exp();
            }
        }
    }
    assert!((r.partition - z).abs() < 1e-12 * z);
    assert!((r.mgf - e / z).abs() < 1e-12 * r.mgf);
}

#[test]
fn enumeration_is_stable_in_k() {
    let model = DgModel::new(nn(), 2.0, 3, 0.0, true).unwrap();
    let f = dipole(3, 0.3);
    let a = exact_enumerate(&model, 2, &f, 1e-8).unwrap();
    let b = exact_enumerate(&model, 3, &f, 1e-8).unwrap();
    for (x, y) in [
        (a.partition, b.partition),
        (a.second, b.second),
        (a.mgf, b.mgf),
        (a.characteristic, b.characteristic),
    ] {
        assert!((x - y).abs() <= 1e-8 * y.abs(), "{x} vs {y}");
    }
    assert!(!b.flagged, "{}", b.truncation);
}

#[test]
fn enumeration_guard() {
    let model = DgModel::new(nn(), 2.0, 4, 0.0, true).unwrap();
    assert!(exact_enumerate(&model, 2, &LatticeField::zeros(4), 1.0).is_err());
    assert!(exact_enumerate(&model, 0, &LatticeField::zeros(4), 1.0).is_err());
    // 15 free sites at K = 1: 3^15 < 2^24.
    let model = DgModel::new(nn(), 0.2, 4, 0.0, true).unwrap();
    let r = exact_enumerate(&model, 1, &LatticeField::zeros(4), 1.0).unwrap();
    assert_eq!(r.states, 3u64.pow(15));
}

#[test]
fn cold_chain_freezes() {
    let model = DgModel::new(nn(), 0.1, 4, 0.0, true).unwrap();
    let sq = |s: &[f64]| s[5] * s[5];
    let c = mcmc_sample(
        &model,
        &ChainConfig::default(),
        None,
        &[&sq],
        &mut rng::stream(1, 0),
    )
    .unwrap();
    assert_eq!(c.estimate(0).mean, 0.0);
    assert_eq!(c.estimate(0).se, 0.0);
}

#[test]
fn chain_matches_oracle() {
    let f = dipole(3, 0.3);
    let x = inequalities::pairing(&f);
    for (j, beta, beta_s) in [(nn(), 2.0, Some(4.0)), (linf(), 4.0, None)] {
        let model = DgModel::new(j, beta, 3, 0.0, true).unwrap();
        let exact = exact_enumerate(&model, 3, &f, 1e-8).unwrap();
        let cfg = ChainConfig {
            sweeps: 200_000,
            burn_in: 2_000,
            sampling_beta: beta_s,
            ..ChainConfig::default()
        };
        let c = mcmc_sample(&model, &cfg, None, &[&x], &mut rng::stream(5, 0)).unwrap();
        let second = c.estimate_map(0, |v| v * v);
        let mgf = c.estimate_map(0, f64::exp);
        let odd = c.estimate(0);
        assert!(
            (second.mean - exact.second).abs() < 3.0 * second.se,
            "{second:?} vs {}",
            exact.second
        );
        assert!(
            (mgf.mean - exact.mgf).abs() < 3.0 * mgf.se,
            "{mgf:?} vs {}",
            exact.mgf
        );
        assert!(odd.mean.abs() < 3.0 * odd.se, "parity {odd:?}");
        let d = c.diagnostics();
        assert!(d.tau.iter().all(|&t| t >= 0.5) && d.se.iter().all(|&s| s >= 0.0));
        assert!(d.acceptance > 0.0 && d.ess > 0.0);
    }
}

#[test]
fn error_bars_shrink_with_budget() {
    let model = DgModel::new(nn(), 4.0, 3, 0.0, true).unwrap();
    let f = dipole(3, 0.3);
    let x = inequalities::pairing(&f);
    let se = |sweeps: usize| {
        let cfg = ChainConfig {
            sweeps,
            batches: 200,
            ..ChainConfig::default()
        };
        let c = mcmc_sample(
            &model,
            &cfg,
            None,
            &[&x],
            &mut rng::stream(21, sweeps as u64),
        )
        .unwrap();
        c.estimate_map(0, |v| v * v).se
    };
    let ratio = se(100_000) / se(200_000);
    assert!((1.3..=1.6).contains(&ratio), "{ratio}");
}

#[test]
fn ginibre_oracle_and_chain() {
    for j in [nn(), linf()] {
        let model = DgModel::new(j, 2.0, 3, 0.0, true).unwrap();
        let f = dipole(3, 0.3);
        let r = check_ginibre(&model, &f, GinibreMode::Oracle { k: 3 }).unwrap();
        assert!(r.holds(), "{r:?}");
        assert!(r.mgf < r.mgf_bound && r.second < r.second_bound);
        let chain = ChainConfig {
            sweeps: 50_000,
            sampling_beta: Some(4.0),
            ..ChainConfig::default()
        };
        let m = check_ginibre(&model, &f, GinibreMode::Mcmc { chain, seed: 2 }).unwrap();
        assert!(m.holds(), "{m:?}");
    }
    let model = DgModel::new(nn(), 2.0, 3, 0.0, true).unwrap();
    let bad = LatticeField::delta(3, 1);
    assert!(matches!(
        check_ginibre(&model, &bad, GinibreMode::Oracle { k: 1 }),
        Err(Error::NonzeroMean(_))
    ));
}

#[test]
fn characteristic_function_grows_with_the_torus() {
    let f = [((1, 0), 0.4), ((0, 1), -0.4)];
    let r = check_monotonicity(&nn(), 2.0, 2, 1, &f, 1).unwrap();
    assert!(r.holds, "{r:?}");
    assert_eq!((r.small_side, r.large_side), (2, 4));
    assert!(check_monotonicity(&nn(), 2.0, 2, 1, &[((2, 0), 1.0), ((0, 0), -1.0)], 1).is_err());
}

#[test]
fn no_tilt_from_flat_start() {
    let side = 8;
    let model = DgModel::new(nn(), 3.0, side, 0.0, true).unwrap();
    let tx = tilt_observable(side, 0, (0, 0), 4);
    let ty = tilt_observable(side, 1, (0, 0), 4);
    let cfg = ChainConfig {
        sweeps: 20_000,
        ..ChainConfig::default()
    };
    let c = mcmc_sample(&model, &cfg, None, &[&tx, &ty], &mut rng::stream(8, 0)).unwrap();
    let r = check_zero_tilt(&c, [0, 1]);
    assert!(r.holds && r.isotropic, "{r:?}");
}

#[test]
fn half_plane_shift_relaxes() {
    let side = 8;
    let model = DgModel::new(nn(), 3.0, side, 0.0, true).unwrap();
    let h: Vec<i64> = (0..side * side)
        .map(|i| if (i % side) >= side / 2 { 1 } else { 0 })
        .collect();
    let start = SpinConfiguration::from_heights(side, h).unwrap();
    // The window straddles the wall between columns 3 and 4.
    let tx = tilt_observable(side, 0, (2, 0), 4);
    let cfg = ChainConfig {
        sweeps: 4_000,
        burn_in: 0,
        adapt: false,
        ..ChainConfig::default()
    };
    let c = mcmc_sample(&model, &cfg, Some(&start), &[&tx], &mut rng::stream(9, 0)).unwrap();
    let first = tx(&start.to_field(TAU).into_values());
    assert!((first - TAU / 4.0).abs() < 1e-12);
    let means = segment_means(c.series(0), 4);
    assert!(means[3].abs() < 0.2 * first, "{means:?}");
}

#[test]
fn sign_test_counts() {
    let s = sign_test(&[(1, 0.5), (2, 0.3), (3, 0.2), (4, 0.1), (5, 0.05)]);
    assert_eq!((s.pairs, s.decreasing), (10, 10));
    assert!((s.p_value - 1.0 / 1024.0).abs() < 1e-15 && s.passes);
    let s = sign_test(&[(2, 0.5), (2, 0.3)]);
    assert_eq!(s.pairs, 0);
    assert!(!s.passes);
}

#[test]
fn gaussian_control_recovers_quadratic_form() {
    let f = build_feps(&SmoothTestFunction::polynomial(1.0, 0), 0.25, 32)
        .unwrap()
        .field;
    let g = gaussian_control(&nn(), 6.0, &f, 20_000, 1.0, 4).unwrap();
    assert!(g.holds, "{g:?}");
    assert!(g.amplitude < 1.0);
    let zero = gaussian_control(&nn(), 6.0, &LatticeField::zeros(32), 100, 1.0, 4).unwrap();
    assert_eq!(zero.log_mgf, 0.0);
}

#[test]
fn mgf_sweep_zero_function_and_preconditions() {
    let cfg = ScalingConfig {
        base: 2,
        scales: 4,
        beta: 3.0,
        eps: vec![0.5],
        chain: ChainConfig {
            sweeps: 2_000,
            burn_in: 200,
            ..ChainConfig::default()
        },
        ..ScalingConfig::default()
    };
    let rows = scaling_limit_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].log_mgf.is_finite() && rows[0].se > 0.0);
    let zn = zn_ratio_experiment(&cfg).unwrap();
    assert!((zn.rows[0].log_mgf - rows[0].log_mgf).abs() < 1e-15);
    // At s = 0, C̃ is (-Δ_J)^{-1} on mean-zero fields.
    assert!((zn.rows[0].gaussian - rows[0].lattice_target).abs() < 1e-12);
    let narrow = ScalingConfig {
        eps: vec![0.25],
        ..cfg
    };
    assert!(matches!(
        scaling_limit_experiment(&narrow),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn continuum_target_uses_v_squared() {
    let cfg = ScalingConfig::default();
    let (g, _) = cfg.test_function.green_form(1e-12).unwrap();
    // Polynomial bump (1-r²)⁴: π∫(1-r²)⁸ r dr = π/18.
    assert!((g - PI / 18.0).abs() < 1e-10);
    assert!((nn().v_squared() - 0.25).abs() < 1e-15);
}
