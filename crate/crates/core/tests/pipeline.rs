use proptest::prelude::*;

use tcsde::clock::{simulate_subordinator, CoupledRealization};
use tcsde::experiments::{
    exact_moment_bound_check, ml_envelope_check, stability_curve, strong_error,
    LyapunovCertificate, MonteCarloConfig, ReferenceRule,
};
use tcsde::model::{make_builtin, BuiltinModel};
use tcsde::seeding::{path_rng, SeedLineage, StreamTag};
use tcsde::special_fn::StabilityIndex;
use tcsde::theta::{integrate, SchemeConfig, SolverOptions};

fn alpha(a: f64) -> StabilityIndex {
    StabilityIndex::new(a).unwrap()
}

#[test]
fn black_scholes_error_shrinks_with_step() {
    let model = make_builtin(&BuiltinModel::black_scholes(0.02, 0.2)).unwrap();
    let grid = [2e-2, 1e-2, 4e-3, 2e-3, 1e-3];
    let r = strong_error(
        &model,
        alpha(0.9),
        1.0,
        &grid,
        1.0,
        ReferenceRule::ClosedForm { clock_delta: 1e-4 },
        &MonteCarloConfig::new(400, 11),
        &SolverOptions::default(),
    )
    .unwrap();
    let inversions = r
        .rows
        .windows(2)
        .filter(|w| w[1].mse > w[0].mse)
        .map(|w| (w[1].mse - w[0].mse) <= w[1].se.max(w[0].se))
        .collect::<Vec<_>>();
    assert!(
        inversions.len() <= 1 && inversions.iter().all(|&within| within),
        "{:?}",
        r.rows
    );
}

#[test]
fn stability_dichotomy_on_linear_test_equation() {
    let model = make_builtin(&BuiltinModel::StabilityLinear { x0: 1.0 }).unwrap();
    let mc = MonteCarloConfig::new(300, 5);
    for theta in [0.5, 1.0] {
        for delta in [2.0, 1.0, 0.5] {
            let c = stability_curve(
                &model,
                alpha(0.9),
                theta,
                delta,
                (50.0 / delta) as usize,
                &mc,
                &SolverOptions::default(),
            )
            .unwrap();
            assert!(!c.divergent, "theta {theta} delta {delta}");
            assert!(c.threshold.unwrap().stable);
            assert!(c.msq.iter().all(|&m| m >= 0.0));
            assert_eq!(c.envelope.is_some(), c.threshold.unwrap().gamma.is_some());
        }
    }
}

#[test]
fn mittag_leffler_envelope_of_linear_test_equation() {
    let model = make_builtin(&BuiltinModel::StabilityLinear { x0: 1.0 }).unwrap();
    let cert = LyapunovCertificate::new(1.0, 1.0, 1.0, 2.0).unwrap();
    let ts: Vec<f64> = (0..=20).map(f64::from).collect();
    let r = ml_envelope_check(
        &model,
        alpha(0.9),
        &cert,
        &ts,
        1e-2,
        0.15,
        &MonteCarloConfig::new(1000, 3),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(r.pass, "max ratio {}", r.max_ratio);
}

#[test]
fn moment_bound_holds_with_deterministic_clock() {
    let model = make_builtin(&BuiltinModel::StabilityLinear { x0: 1.0 }).unwrap();
    let r = exact_moment_bound_check(
        &model,
        alpha(1.0),
        1.0,
        &[0.5, 1.0, 2.0],
        1e-2,
        &MonteCarloConfig::new(500, 2),
        &SolverOptions::default(),
    )
    .unwrap();
    assert!(r.pass);
    assert!(r
        .rows
        .windows(2)
        .all(|w| w[1].empirical < w[0].empirical && w[1].bound > w[0].bound));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reports_are_identical_at_any_concurrency(seed in any::<u64>(), threads in 2usize..6) {
        let model = make_builtin(&BuiltinModel::BoundedNonlinear { x0: 1.0 }).unwrap();
        let run = |mc: MonteCarloConfig| strong_error(
            &model,
            alpha(0.8),
            0.75,
            &[2e-2, 1e-2],
            0.5,
            ReferenceRule::FineGrid { delta0: 5e-3 },
            &mc,
            &SolverOptions::default(),
        ).unwrap();
        let base = MonteCarloConfig::new(16, seed);
        prop_assert_eq!(run(base.with_concurrency(1)), run(base.with_concurrency(threads)));
    }

    #[test]
    fn coupled_coarse_clock_matches_independent_simulation(seed in any::<u64>(), path in 0u64..1000) {
        // The finest level of a coupled realization is the plain simulation on the same stream.
        let a = alpha(0.7);
        let (delta, horizon) = (1e-2, 0.5);
        let real = CoupledRealization::from_lineage(
            a, delta, horizon, 1,
            SeedLineage::new(seed, path, StreamTag::Clock),
            SeedLineage::new(seed, path, StreamTag::Noise),
        ).unwrap();
        let direct = simulate_subordinator(a, delta, horizon, &mut path_rng(seed, path, StreamTag::Clock)).unwrap();
        let coupled = real.clock(1).unwrap();
        prop_assert_eq!(coupled.values(), direct.values());
    }

    #[test]
    fn integrated_trajectory_tracks_clock(seed in any::<u64>(), theta in 0.5f64..=1.0) {
        let model = make_builtin(&BuiltinModel::StabilityCubic { x0: 1.0 }).unwrap();
        let real = CoupledRealization::from_lineage(
            alpha(0.9), 1e-2, 1.0, 1,
            SeedLineage::new(seed, 0, StreamTag::Clock),
            SeedLineage::new(seed, 0, StreamTag::Noise),
        ).unwrap();
        let clock = real.clock(1).unwrap();
        let noise = real.noise(1, clock.n_steps()).unwrap();
        let rec = integrate(&model, &SchemeConfig::new(theta, 1e-2, 1.0).unwrap(), &clock, &noise, true).unwrap();
        prop_assert_eq!(rec.tau.len(), rec.x_st.len());
        prop_assert!(rec.tau.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(rec.x_st.iter().all(|x| x.is_finite()));
        prop_assert!(*rec.tau.last().unwrap() <= 1.0);
    }
}
