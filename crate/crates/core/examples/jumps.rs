//! Adds compensated jumps to the stock. Futures are unchanged (the jump
//! term is a martingale), while option prices and higher moments move.
//!
//!     cargo run --release --example jumps

use polydiv::black::{implied_vol, Convention, OptionKind};
use polydiv::mc::{mc_price, simulate_paths, Control, McUnderlying, SimConfig};
use polydiv::model::{JumpDist, JumpSpec, ModelParams, State};
use polydiv::moments::{dividend_futures, stock_futures, stock_price_moments};
use polydiv::options::{price_option, OptionSpec, Underlying};

fn main() -> polydiv::Result<()> {
    let p = ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0103, -0.3439, 0.0194)?;
    let s = State::new(0.0, 1.0, vec![0.0371]);
    let cases = [
        ("no jumps", JumpSpec::none()),
        ("crash -50%, 0.5/yr", JumpSpec::new(0.5, JumpDist::PointMass { z0: -0.5 })?),
        ("two-point", JumpSpec::new(1.0, JumpDist::TwoPoint { z1: -0.2, p: 0.4, z2: 0.1 })?),
    ];
    let spec = OptionSpec::new(OptionKind::Put, Underlying::Stock, 0.9, 0.5)?;
    println!("{:<20} {:>9} {:>9} {:>10} {:>9} {:>16}", "", "F(X, 1y)", "DF [0,1]", "sd X(1y)", "put vol", "put mc");
    for (label, jump) in cases {
        let fx = stock_futures(&p, &jump, &s, 0.0, 1.0)?;
        let fd = dividend_futures(&p, &jump, &s, 0.0, 0.0, 1.0)?;
        let m = stock_price_moments(&p, &jump, &s, 0.0, 1.0, 2)?;
        let put = price_option(&p, &jump, &s, &spec, 6)?;
        let fwd = put.moments[1];
        let vol = implied_vol(put.price, OptionKind::Put, fwd, 0.9, 0.5, 0.01, Convention::Black76)?;
        let bundle = simulate_paths(&p, &jump, &s, &SimConfig::new(50_000, 252, 1, 0.5))?;
        let mc = mc_price(&bundle, McUnderlying::Stock, |x| (0.9 - x).max(0.0), (-0.005f64).exp(), Control::Linear { mean: fwd })?;
        println!(
            "{label:<20} {fx:>9.6} {fd:>9.6} {:>10.6} {vol:>9.5} {:>8.6}+-{:.6}",
            (m[1] - m[0] * m[0]).sqrt(),
            mc.estimate,
            mc.std_err
        );
    }
    Ok(())
}
