use std::sync::Arc;

use super::*;
use crate::lattice::{StepDistribution, TorusLattice};
use crate::multiscale::decompose;
use crate::polymer::{all_polymers, closure, is_connected, Adjacency};
use crate::rng::{normal_field, stream};
use crate::spectral::{covariance_cs, CovarianceParams};

fn blocks(base: usize, scales: u32, j: u32) -> BlockLattice {
    BlockLattice::new(
        &TorusLattice::new(base, scales).unwrap(),
        j,
        Adjacency::Linf,
    )
    .unwrap()
}

fn fields(seed: u64, count: usize, side: usize, sigma: f64) -> Vec<LatticeField> {
    let mut rng = stream(seed, 1);
    (0..count)
        .map(|_| normal_field(&mut rng, side, sigma))
        .collect()
}

fn constant_on(bl: &BlockLattice, target: Polymer, c: f64) -> PolymerActivity {
    PolymerActivity::new(
        bl.clone(),
        move |x, _| if *x == target { c } else { 0.0 },
        false,
        Locality::L1(0),
    )
}

fn fixture(seed: u64, opts: &FixtureOptions) -> RgFixture {
    random_fixture(opts, &mut stream(seed, 7)).unwrap()
}

fn gamma_samples(
    base: usize,
    scales: u32,
    j: u32,
    count: usize,
    seed: u64,
) -> Arc<ExpectationFunctional> {
    let lat = TorusLattice::new(base, scales).unwrap();
    let p = CovarianceParams {
        s: 0.0,
        m2: 0.0,
        gamma: 0.0,
    };
    let cs = covariance_cs(&StepDistribution::nearest_neighbour(), lat.side(), p).unwrap();
    let dec = decompose(&cs, &lat, 1.0).unwrap();
    Arc::new(ExpectationFunctional::gaussian_fixed(dec.gamma(j + 1).unwrap(), count, seed).unwrap())
}

#[test]
fn z_without_activities_is_exp_u() {
    let bl = blocks(2, 2, 1);
    let u = UCoupling::new(0.3, vec![0.2], 2.0).unwrap();
    let state = RgState::bulk(bl.clone(), u.clone(), PolymerActivity::zero(bl.clone()));
    let phi = &fields(1, 1, 4, 1.0)[0];
    let z = eval_z(&state, phi).unwrap();
    let want = eval_u(&u, &bl, &bl.full(), phi).exp();
    assert!((z - want).abs() < 1e-13 * want);
}

#[test]
fn z_single_block_activity() {
    let bl = blocks(2, 2, 1);
    let k = constant_on(&bl, Polymer::single(2), 0.37);
    let state = RgState::bulk(bl, UCoupling::zero(1.0), k);
    let z = eval_z(&state, &LatticeField::zeros(4)).unwrap();
    assert!((z - 1.37).abs() < 1e-14);
}

#[test]
fn z_is_affine_in_one_activity_value() {
    let f = fixture(3, &FixtureOptions::default());
    let state = f.state().unwrap();
    let phi = &fields(4, 1, 4, 0.7)[0];
    let target = Polymer::new(vec![0, 1]);
    let bump = |h: f64| {
        let extra = constant_on(&state.blocks, target.clone(), h);
        let s = RgState {
            k_pert: sum(&state.k_pert, &extra),
            ..state.clone()
        };
        eval_z(&s, phi).unwrap()
    };
    let slope = (bump(1e-4) - bump(-1e-4)) / 2e-4;
    // ∂Z/∂K(Y) = prefactor · Σ_{X ⊃ Y as a component} e^{U(Λ∖X)} ∏_{other components}(K+Ψ)
    let graph = MaskGraph::new(&state.blocks).unwrap();
    let u_blocks = block_u(&state.u, &state.blocks, phi);
    let mut exact = 0.0;
    for mask in 0..=graph.full() {
        let comps = graph.components(mask);
        if !comps.contains(&target.mask()) {
            continue;
        }
        let others: f64 = comps
            .iter()
            .filter(|&&c| c != target.mask())
            .map(|&c| state.perturbed_activity(&Polymer::from_mask(c), phi))
            .product();
        exact += bits(graph.full() & !mask)
            .map(|b| u_blocks[b])
            .sum::<f64>()
            .exp()
            * others;
    }
    exact *= (-state.energy * 16.0 + state.local_energy).exp();
    assert!((slope - exact).abs() < 1e-8, "{slope} vs {exact}");
}

#[test]
fn enumeration_budget() {
    let state = RgState::bulk(
        blocks(2, 3, 0),
        UCoupling::zero(1.0),
        PolymerActivity::zero(blocks(2, 3, 0)),
    );
    assert!(matches!(
        eval_z(&state, &LatticeField::zeros(8)),
        Err(Error::Budget { .. })
    ));
}

#[test]
fn polymer_powers() {
    let bl = blocks(2, 3, 1);
    let x = Polymer::new(vec![0, 1, 10]);
    assert_eq!(components(&bl, &x).len(), 2);
    assert_eq!(block_power(&x, |b| (b + 1) as f64), 22.0);
    assert_eq!(
        component_power(&bl, &x, |c| c.len() as f64 + 0.5),
        2.5 * 1.5
    );
    assert_eq!(component_power(&bl, &Polymer::empty(), |_| 7.0), 1.0);
}

#[test]
fn f_psi_vanishes_without_field() {
    let f = fixture(5, &FixtureOptions::default());
    let state = f.state().unwrap();
    let psi = f_psi(&LatticeField::zeros(4), &state.u, &state.k_pert);
    for phi in fields(6, 5, 4, 1.0) {
        for mask in 1..16u64 {
            assert!(psi.evaluate(&Polymer::from_mask(mask), &phi).abs() < 1e-14);
        }
    }
}

#[test]
fn f_psi_on_a_block_with_empty_activity() {
    let bl = blocks(2, 2, 1);
    let u = UCoupling::new(0.2, vec![0.1], 3.0).unwrap();
    let k = PolymerActivity::zero(bl.clone());
    let field = fields(7, 2, 4, 0.5);
    let psi = f_psi(&field[0], &u, &k);
    let b = Polymer::single(3);
    let want =
        eval_u(&u, &bl, &b, &field[1].add(&field[0])).exp() - eval_u(&u, &bl, &b, &field[1]).exp();
    assert!((psi.evaluate(&b, &field[1]) - want).abs() < 1e-14);
}

#[test]
fn f_psi_is_local_to_the_field() {
    // blocks of side 4 on a 16-torus; the field sits strictly inside the origin block
    let bl = blocks(4, 2, 1);
    let opts = FixtureOptions {
        base: 4,
        scales: 2,
        scale: 1,
        terms: 40,
        with_psi: false,
        ..Default::default()
    };
    let state = fixture(8, &opts).state().unwrap();
    let mut u_field = LatticeField::zeros(16);
    for (x, y) in [(1, 1), (2, 1), (1, 2), (2, 2)] {
        u_field.set(bl.lattice().index(x, y), 0.8);
    }
    let psi = f_psi(&u_field, &state.u, &state.k_pert);
    let phi = &fields(9, 1, 16, 0.6)[0];
    for x in [vec![5], vec![5, 6], vec![15], vec![10, 11, 14]] {
        let p = Polymer::new(x);
        assert!(psi.evaluate(&p, phi).abs() < 1e-14);
    }
    assert!(psi.evaluate(&Polymer::single(0), phi).abs() > 0.0);
    let period = 2.0 * std::f64::consts::PI / state.u.beta.sqrt();
    let x = Polymer::new(vec![0, 1]);
    assert!((psi.evaluate(&x, phi) - psi.evaluate(&x, &phi.add_constant(period))).abs() < 1e-12);
}

#[test]
fn reblocking_identity() {
    let opts = FixtureOptions {
        single_block: true,
        with_psi: false,
        ..Default::default()
    };
    for trial in 0..5 {
        let state = fixture(100 + trial, &opts).state().unwrap();
        let u_field = crate::lattice::LatticeField::from_fn(4, |x, y| {
            0.4 * (std::f64::consts::PI * (x as f64 + 0.3 * y as f64) / 2.0).sin()
        });
        let phis = fields(200 + trial, 100, 4, 1.0);
        let r = check_reblocking(&state, &u_field, &phis).unwrap();
        assert!(r < 1e-10, "trial {trial}: {r}");
        assert!(check_reblocking(&state, &LatticeField::zeros(4), &phis[..5]).unwrap() < 1e-12);
    }
}

#[test]
fn reblocking_negative_control() {
    let state = fixture(
        11,
        &FixtureOptions {
            with_psi: false,
            ..Default::default()
        },
    )
    .state()
    .unwrap();
    let u_field = fields(12, 1, 4, 0.5).remove(0);
    let phis = fields(13, 10, 4, 1.0);
    let base = reblocking_mismatch(&state, &u_field, &phis, 1.0).unwrap();
    let r1 = reblocking_mismatch(&state, &u_field, &phis, 1.0 + 1e-3).unwrap();
    let r2 = reblocking_mismatch(&state, &u_field, &phis, 1.0 + 2e-3).unwrap();
    assert!(base < 1e-10);
    assert!(r1 > 1e3 * base.max(1e-14));
    assert!((r2 / r1 - 2.0).abs() < 0.05, "{}", r2 / r1);
}

#[test]
fn s_reblock_single_blocks() {
    let bl = blocks(2, 2, 0);
    let f = PolymerActivity::new(
        bl.clone(),
        |x, _| {
            if x.len() == 1 {
                x.blocks()[0] as f64 + 1.0
            } else {
                0.0
            }
        },
        false,
        Locality::L1(0),
    );
    let s = s_reblock(&f).unwrap();
    let phi = LatticeField::zeros(4);
    for b in 0..4 {
        let want: f64 = (0..16)
            .filter(|&d| bl.parent(d) == b)
            .map(|d| d as f64 + 1.0)
            .sum();
        assert_eq!(s.evaluate(&Polymer::single(b), &phi), want);
    }
    let zero = s_reblock(&PolymerActivity::zero(bl)).unwrap();
    assert_eq!(zero.evaluate(&Polymer::new(vec![0, 1]), &phi), 0.0);
}

fn hashed(x: &Polymer) -> f64 {
    let m = x.mask();
    ((m.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 40) as f64 / (1u64 << 24) as f64) - 0.5
}

#[test]
fn s_reblock_matches_brute_force() {
    for (base, scales) in [(3, 1), (2, 2)] {
        let bl = blocks(base, scales, 0);
        let coarse = bl.coarser().unwrap();
        let f = PolymerActivity::new(bl.clone(), |x, _| hashed(x), false, Locality::L1(0));
        let s = s_reblock(&f).unwrap();
        let phi = LatticeField::zeros(bl.lattice().side());
        let all = all_polymers(&bl).unwrap();
        for x in all_polymers(&coarse).unwrap() {
            if !is_connected(&coarse, &x) {
                continue;
            }
            let want: f64 = all
                .iter()
                .filter(|y| is_connected(&bl, y) && closure(&bl, y).unwrap() == x)
                .map(hashed)
                .sum();
            assert!((s.evaluate(&x, &phi) - want).abs() < 1e-12);
        }
    }
}

#[test]
fn e_next_cases() {
    let bl = blocks(2, 2, 1);
    let e = ExpectationFunctional::empirical(fields(14, 5, 4, 1.0)).unwrap();
    let f = fixture(
        15,
        &FixtureOptions {
            with_psi: false,
            ..Default::default()
        },
    );
    let mut state = f.state().unwrap();
    state.k_pert = state.k_bulk.clone();
    assert_eq!(e_next(&state, &e, 16).unwrap(), 0.0);

    let origin = Polymer::single(state.origin_block());
    state.k_pert = sum(&state.k_bulk, &constant_on(&bl, origin, 0.25));
    assert!((e_next(&state, &e, 16).unwrap() - 0.25).abs() < 1e-14);
}

#[test]
fn e_next_is_linear_and_commutes_with_expectation() {
    let f = fixture(16, &FixtureOptions::default());
    let state = f.state().unwrap();
    let e = ExpectationFunctional::empirical(fields(17, 6, 4, 1.0)).unwrap();
    let psi = state.psi.clone().unwrap();
    let base = RgState {
        k_pert: state.k_bulk.clone(),
        psi: Some(psi.clone()),
        ..state.clone()
    };
    let tripled = RgState {
        psi: Some(scaled(&psi, 3.0)),
        ..base.clone()
    };
    let a = e_next(&base, &e, 16).unwrap();
    assert!(a.abs() > 1e-6);
    assert!((e_next(&tripled, &e, 16).unwrap() - 3.0 * a).abs() < 1e-12);

    // neutral part of ψ ↦ E[Ψ(X, ψ+ζ)] at ψ = 0 against E[Ψ̂_0(X, ζ)]
    let beta = state.u.beta;
    let x = Polymer::single(state.origin_block());
    let samples: Vec<LatticeField> = e.points().map(|(_, z)| z.clone()).collect();
    let averaged = {
        let p = psi.clone();
        let s = samples.clone();
        PolymerActivity::new(
            psi.blocks().clone(),
            move |x, phi| {
                s.iter().map(|z| p.evaluate(x, &phi.add(z))).sum::<f64>() / s.len() as f64
            },
            false,
            Locality::L1(1),
        )
    };
    let swapped = neutral_part(&averaged, &x, &LatticeField::zeros(4), beta, 16).unwrap();
    let direct = e
        .try_expect(|z| neutral_part(&psi, &x, z, beta, 16))
        .unwrap();
    assert!((swapped - direct).abs() < 1e-12);
}

#[test]
fn k_next_of_zero_state_vanishes() {
    let bl = blocks(2, 2, 1);
    let state = RgState::bulk(bl.clone(), UCoupling::zero(1.0), PolymerActivity::zero(bl));
    let e = Arc::new(ExpectationFunctional::empirical(fields(18, 3, 4, 1.0)).unwrap());
    let couplings = StepCouplings {
        energy: 0.0,
        u_next: UCoupling::zero(1.0),
    };
    let step = RgStep::new(state, e, couplings, Arc::new(ZeroLoc), 16).unwrap();
    let table = step.k_next_all(&fields(19, 1, 4, 1.0)[0]);
    assert_eq!(table[0], 1.0);
    assert!(table[1..].iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn bulk_path_agrees_with_general_path() {
    for (trial, loc) in [LocKind::Zero, LocKind::Constant, LocKind::Taylor2]
        .into_iter()
        .enumerate()
    {
        let f = fixture(
            20 + trial as u64,
            &FixtureOptions {
                with_psi: false,
                ..Default::default()
            },
        );
        let mut state = f.state().unwrap();
        state.k_pert = state.k_bulk.clone();
        let e = Arc::new(ExpectationFunctional::empirical(fields(30, 6, 4, 0.8)).unwrap());
        let loc = loc.build();
        let step = RgStep::new(state.clone(), e.clone(), f.couplings(), loc.clone(), 16).unwrap();
        assert_eq!(step.e_next(), 0.0);
        for phi in fields(31, 3, 4, 1.0) {
            let general = step.k_next_all(&phi);
            let bulk = k_next_bulk(&state, &e, &f.couplings(), loc.as_ref(), &phi).unwrap();
            for (a, b) in general.iter().zip(&bulk) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
            assert!(general[1].abs() > 1e-6);
        }
    }
}

#[test]
fn bulk_path_agrees_on_four_coarse_blocks() {
    let opts = FixtureOptions {
        scale: 0,
        terms: 12,
        with_psi: false,
        ..Default::default()
    };
    let f = fixture(40, &opts);
    let mut state = f.state().unwrap();
    state.k_pert = state.k_bulk.clone();
    let e = Arc::new(ExpectationFunctional::empirical(fields(41, 1, 4, 0.8)).unwrap());
    let loc = LocKind::Constant.build();
    let step = RgStep::new(state.clone(), e.clone(), f.couplings(), loc.clone(), 16).unwrap();
    let phi = &fields(42, 1, 4, 1.0)[0];
    let general = step.k_next_all(phi);
    let bulk = k_next_bulk(&state, &e, &f.couplings(), loc.as_ref(), phi).unwrap();
    for (a, b) in general.iter().zip(&bulk) {
        assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn consistency_on_one_coarse_block() {
    for (trial, loc) in [LocKind::Zero, LocKind::Constant, LocKind::Taylor2]
        .into_iter()
        .enumerate()
    {
        let f = fixture(50 + trial as u64, &FixtureOptions::default());
        let state = f.state().unwrap();
        let e = gamma_samples(2, 2, 1, 20, 51);
        let phis = fields(52, 50, 4, 1.0);
        let r = check_rg_consistency(
            &state,
            e,
            &f.couplings(),
            loc.build(),
            &phis,
            &Default::default(),
        )
        .unwrap();
        assert!(r < 1e-9, "{loc:?}: {r}");
    }
}

#[test]
fn consistency_on_four_coarse_blocks() {
    let opts = FixtureOptions {
        scale: 0,
        terms: 12,
        ..Default::default()
    };
    let f = fixture(60, &opts);
    let state = f.state().unwrap();
    let e = gamma_samples(2, 2, 0, 2, 61);
    let phis = fields(62, 2, 4, 1.0);
    let r = check_rg_consistency(
        &state,
        e,
        &f.couplings(),
        LocKind::Constant.build(),
        &phis,
        &Default::default(),
    )
    .unwrap();
    assert!(r < 1e-9, "{r}");
}

#[test]
fn consistency_with_exact_gaussian_rule() {
    let f = fixture(
        63,
        &FixtureOptions {
            base: 2,
            scales: 1,
            scale: 0,
            ..Default::default()
        },
    );
    let state = f.state().unwrap();
    let lat = TorusLattice::new(2, 1).unwrap();
    let p = CovarianceParams {
        s: 0.0,
        m2: 0.0,
        gamma: 0.0,
    };
    let cs = covariance_cs(&StepDistribution::nearest_neighbour(), 2, p).unwrap();
    let dec = decompose(&cs, &lat, 1.0).unwrap();
    let e = Arc::new(
        ExpectationFunctional::gaussian_exact_small(dec.gamma(1).unwrap(), 4, 1000).unwrap(),
    );
    let phis = fields(64, 10, 2, 1.0);
    let r = check_rg_consistency(
        &state,
        e,
        &f.couplings(),
        LocKind::Zero.build(),
        &phis,
        &Default::default(),
    )
    .unwrap();
    assert!(r < 1e-9, "{r}");
}

#[test]
fn consistency_sensitivity() {
    let f = fixture(70, &FixtureOptions::default());
    let state = f.state().unwrap();
    let e = gamma_samples(2, 2, 1, 5, 71);
    let phis = fields(72, 5, 4, 1.0);
    let loc = LocKind::Zero.build();
    let base = check_rg_consistency(
        &state,
        e.clone(),
        &f.couplings(),
        loc.clone(),
        &phis,
        &Default::default(),
    )
    .unwrap();
    let opts = ConsistencyOptions {
        perturbation: Some((Polymer::single(0), 1e-3)),
        ..Default::default()
    };
    let bumped = check_rg_consistency(&state, e, &f.couplings(), loc, &phis, &opts).unwrap();
    assert!(base < 1e-9);
    assert!(bumped > 1e-5, "{bumped}");
}

#[test]
fn monte_carlo_expectation_is_rejected() {
    let f = fixture(80, &FixtureOptions::default());
    let state = f.state().unwrap();
    let lat = TorusLattice::new(2, 2).unwrap();
    let p = CovarianceParams {
        s: 0.0,
        m2: 0.0,
        gamma: 0.0,
    };
    let cs = covariance_cs(&StepDistribution::nearest_neighbour(), lat.side(), p).unwrap();
    let dec = decompose(&cs, &lat, 1.0).unwrap();
    let e = Arc::new(ExpectationFunctional::gaussian_mc(
        dec.gamma(2).unwrap(),
        4,
        1,
    ));
    let phis = fields(81, 1, 4, 1.0);
    let r = check_rg_consistency(
        &state,
        e.clone(),
        &f.couplings(),
        Arc::new(ZeroLoc),
        &phis,
        &Default::default(),
    );
    assert!(matches!(r, Err(Error::Expectation(_))));
    assert!(RgStep::new(state, e, f.couplings(), Arc::new(ZeroLoc), 16).is_err());
}

#[test]
fn fixture_json_round_trip_and_invariants() {
    let f = fixture(90, &FixtureOptions::default());
    let text = serde_json::to_string(&f).unwrap();
    let back: RgFixture = serde_json::from_str(&text).unwrap();
    assert_eq!(back, f);
    let state = back.state().unwrap();
    assert_eq!(state.invariant_defect(&fields(91, 3, 4, 1.0)).unwrap(), 0.0);
}
