mod common;

use polydiv::black::OptionKind;
use polydiv::mc::{mc_price, simulate_paths, Control, McUnderlying, SimConfig};
use polydiv::model::{in_state_space, JumpDist, JumpSpec, ModelParams, State};
use polydiv::moments::stock_futures;
use polydiv::options::{price_option, OptionSpec, Underlying};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

#[test]
fn results_do_not_depend_on_the_thread_count() {
    let (p, s) = calibrated_a02();
    let jump = JumpSpec::new(0.5, JumpDist::PointMass { z0: -0.5 }).unwrap();
    let mut cfg = SimConfig::new(2_000, 52, 11, 2.0);
    cfg.windows = vec![(0.0, 1.0), (1.0, 2.0)];
    cfg.stored_yield_paths = 3;
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_paths(&p, &jump, &s, &cfg).unwrap())
    };
    let one = run(1);
    for threads in [2, 5] {
        let other = run(threads);
        assert_eq!(one.terminal, other.terminal);
        assert_eq!(one.windows, other.windows);
        assert_eq!(one.yield_paths, other.yield_paths);
        assert_eq!(one.summary(), other.summary());
    }
    let reseeded = simulate_paths(&p, &jump, &s, &SimConfig { seed: 12, ..cfg.clone() }).unwrap();
    assert_ne!(one.summary(), reseeded.summary());
}

#[test]
fn control_variate_never_widens_the_interval() {
    let (p, s) = calibrated_a02();
    let bundle = simulate_paths(&p, &JumpSpec::none(), &s, &SimConfig::new(20_000, 52, 5, 0.5)).unwrap();
    let fwd = stock_futures(&p, &JumpSpec::none(), &s, 0.0, 0.5).unwrap();
    for strike in [0.8, 0.9, 1.0, 1.1, 1.2] {
        let payoff = |x: f64| (x - strike).max(0.0);
        let plain = mc_price(&bundle, McUnderlying::Stock, payoff, 1.0, Control::None).unwrap();
        let controlled = mc_price(&bundle, McUnderlying::Stock, payoff, 1.0, Control::Linear { mean: fwd }).unwrap();
        assert!(controlled.std_err <= plain.std_err, "{strike}");
    }
}

#[test]
fn crash_jumps_keep_the_put_consistent_with_moments() {
    let (p, s) = calibrated_a02();
    let jump = JumpSpec::new(0.5, JumpDist::PointMass { z0: -0.5 }).unwrap();
    let bundle = simulate_paths(&p, &jump, &s, &SimConfig::new(50_000, 252, 9, 0.5)).unwrap();
    assert!(bundle.jump_counts.iter().any(|j| *j > 0));
    let spec = OptionSpec::new(OptionKind::Put, Underlying::Stock, 0.9, 0.5).unwrap();
    let exact = price_option(&p, &jump, &s, &spec, 6).unwrap();
    let df = (-0.005f64).exp();
    let mc = mc_price(&bundle, McUnderlying::Stock, |x| (0.9 - x).max(0.0), df, Control::Linear { mean: exact.moments[1] }).unwrap();
    // six moments do not pin down the jump atom, so allow a wider band
    assert!(mc.z_score(exact.price) < 6.0, "{} vs {} +- {}", exact.price, mc.estimate, mc.std_err);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulated_states_never_leave_the_state_space(seed in any::<u64>(), d in 1usize..=3, with_jumps in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, d);
        let s = random_state(&mut rng, &p);
        let jump = if with_jumps { random_jump(&mut rng, seed % 2 == 0) } else { JumpSpec::none() };
        let mut cfg = SimConfig::new(200, 52, seed, 3.0);
        cfg.windows = vec![(0.0, 1.5), (1.5, 3.0)];
        let bundle = simulate_paths(&p, &jump, &s, &cfg).unwrap();
        prop_assert_eq!(bundle.states_outside, 0);
        for st in &bundle.terminal {
            prop_assert!(in_state_space(&p, st).inside);
        }
        for w in &bundle.windows {
            prop_assert!(w.iter().all(|c| *c >= 0.0));
        }
    }

    #[test]
    fn deterministic_limit_grows_at_the_rate(r in 0.0f64..0.08, x in 0.5f64..2.0) {
        let p = ModelParams::single_factor(r, 0.2, 0.0, 0.0, -0.5, 0.0).unwrap();
        let s = State::new(0.0, x, vec![0.0]);
        let bundle = simulate_paths(&p, &JumpSpec::none(), &s, &SimConfig::new(1, 252, 1, 1.0)).unwrap();
        let exact = x * r.exp();
        prop_assert!((bundle.terminal[0].x - exact).abs() / exact < 1e-3);
    }
}
