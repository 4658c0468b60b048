use multigauss::activities::{log_regulator_g, log_regulator_g_psi, RegulatorParams};
use multigauss::dgmc::{energy, energy_quadratic_form, sign_test};
use multigauss::experiments::dipole;
use multigauss::extfield::{build_schedule_at, completeness_residual};
use multigauss::multiscale::decompose;
use multigauss::output::fmt17;
use multigauss::polymer::{Adjacency, BlockLattice, Polymer};
use multigauss::spectral::{covariance_cs, CovarianceParams};
use multigauss::{LatticeField, StepDistribution, TorusLattice};
use proptest::prelude::*;

fn step(linf: bool) -> StepDistribution {
    if linf {
        StepDistribution::linf_ball(1).unwrap()
    } else {
        StepDistribution::nearest_neighbour()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pieces_telescope(linf: bool, s in 0.0..0.1f64, m2 in 0.01..2.0f64, gamma in 0.0..0.2f64, width in 0.5..2.0f64) {
        let lat = TorusLattice::new(4, 2).unwrap();
        let cs = covariance_cs(&step(linf), lat.side(), CovarianceParams { s, m2, gamma }).unwrap();
        let dec = decompose(&cs, &lat, width).unwrap();
        prop_assert!(dec.reconstruction_error() <= 1e-10);
        for g in dec.gammas() {
            prop_assert!(g.multiplier().values().iter().all(|&v| v >= -1e-12));
        }
    }

    #[test]
    fn schedule_is_complete(linf: bool, s in 0.0..0.05f64, a in -2.0..2.0f64, start in 1u32..3) {
        let lat = TorusLattice::new(4, 3).unwrap();
        let cs = covariance_cs(&step(linf), lat.side(), CovarianceParams { s, m2: 0.0, gamma: 0.1 }).unwrap();
        let dec = decompose(&cs, &lat, 1.0).unwrap();
        let f = dipole(lat.side(), a);
        let sched = build_schedule_at(&f, &dec, s, 0.1, start).unwrap();
        prop_assert!(completeness_residual(&sched, &dec).unwrap() <= 1e-10);
    }

    #[test]
    fn edge_sum_energy_is_the_quadratic_form(linf: bool, beta in 0.1..10.0f64, m2 in 0.0..1.0f64, heights in proptest::collection::vec(-3i64..=3, 25)) {
        let tau = std::f64::consts::TAU;
        let sigma = LatticeField::from_values(5, heights.iter().map(|&n| tau * n as f64).collect()).unwrap();
        let a = energy(&step(linf), beta, &sigma, m2);
        let b = energy_quadratic_form(&step(linf), beta, &sigma, m2).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn psi_regulator_dominates(blocks in proptest::collection::btree_set(0usize..16, 1..6), amp in 0.01..5.0f64, seed: u64) {
        let lat = TorusLattice::new(4, 2).unwrap();
        let bl = BlockLattice::new(&lat, 1, Adjacency::Linf).unwrap();
        let p = RegulatorParams::defaults(4, 1.0);
        let x = Polymer::new(blocks.into_iter().collect());
        let mut rng = multigauss::rng::stream(seed, 0);
        let phi = multigauss::rng::normal_field(&mut rng, 16, amp);
        let u = multigauss::rng::normal_field(&mut rng, 16, amp);
        let g = log_regulator_g(&p, &bl, &x, &phi);
        prop_assert!(log_regulator_g_psi(&p, &bl, &x, &phi, &u) >= g - 1e-10 * (1.0 + g.abs()));
    }

    #[test]
    fn floats_round_trip_through_text(v: f64) {
        prop_assume!(v.is_finite());
        prop_assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn sign_test_p_value_is_a_probability(values in proptest::collection::vec((1u32..5, -1.0..1.0f64), 0..8)) {
        let t = sign_test(&values);
        prop_assert!(t.decreasing <= t.pairs);
        prop_assert!((0.0..=1.0).contains(&t.p_value));
    }
}
