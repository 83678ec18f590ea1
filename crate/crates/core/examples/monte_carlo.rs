//! Monte-Carlo check of the moment-based prices: futures, the gains
//! martingale, a control-variate option price and the simulated yield.
//!
//!     cargo run --release --example monte_carlo

use polydiv::black::OptionKind;
use polydiv::mc::{martingale_diagnostic, mc_price, simulate_paths, yield_path_stats, Control, McUnderlying, SimConfig};
use polydiv::model::{JumpSpec, ModelParams, State};
use polydiv::moments::{dividend_futures, stock_futures};
use polydiv::options::{price_option, OptionSpec, Underlying};

fn main() -> polydiv::Result<()> {
    let p = ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0103, -0.3439, 0.0194)?;
    let jump = JumpSpec::none();
    let s = State::new(0.0, 1.0, vec![0.0371]);

    let mut cfg = SimConfig::new(100_000, 252, 7, 1.0);
    cfg.windows = vec![(0.0, 1.0)];
    let bundle = simulate_paths(&p, &jump, &s, &cfg)?;

    let fx = stock_futures(&p, &jump, &s, 0.0, 1.0)?;
    let fc = dividend_futures(&p, &jump, &s, 0.0, 0.0, 1.0)?;
    let mx = mc_price(&bundle, McUnderlying::Stock, |x| x, 1.0, Control::None)?;
    let mc = mc_price(&bundle, McUnderlying::Window(0), |c| c, 1.0, Control::None)?;
    println!("stock futures    exact {fx:.6}  mc {:.6} +- {:.6}", mx.estimate, mx.std_err);
    println!("dividend futures exact {fc:.6}  mc {:.6} +- {:.6}", mc.estimate, mc.std_err);
    let g = martingale_diagnostic(&bundle);
    println!("discounted gains mc {:.6} +- {:.6} (exact 1)", g.estimate, g.std_err);

    let spec = OptionSpec::new(OptionKind::Call, Underlying::Stock, 1.0, 1.0)?;
    let exact = price_option(&p, &jump, &s, &spec, 6)?.price;
    let df = (-0.01f64).exp();
    let payoff = |x: f64| (x - 1.0f64).max(0.0);
    let plain = mc_price(&bundle, McUnderlying::Stock, payoff, df, Control::None)?;
    let cv = mc_price(&bundle, McUnderlying::Stock, payoff, df, Control::Linear { mean: fx })?;
    println!("one-year ATM call: maxent {exact:.6}; mc {:.6} +- {:.6}; with control {:.6} +- {:.6}", plain.estimate, plain.std_err, cv.estimate, cv.std_err);

    let mut long = SimConfig::new(1, 252, 3, 10.0);
    long.stored_yield_paths = 1;
    let path = simulate_paths(&p, &jump, &s, &long)?;
    let st = yield_path_stats(&path)?;
    println!("ten-year yield path: min {:.4} q25 {:.4} median {:.4} q75 {:.4} max {:.4}", st.min, st.q25, st.median, st.q75, st.max);
    println!("states outside the state space: {} of {}", bundle.states_outside, bundle.states_checked);
    Ok(())
}
