//! At-the-money stock and dividend options from maximum-entropy densities,
//! for an increasing number of matched moments.
//!
//!     cargo run --example option_pricing

use polydiv::black::{implied_vol, Convention, OptionKind};
use polydiv::model::{JumpSpec, ModelParams, State};
use polydiv::moments::dividend_futures;
use polydiv::options::{price_option, OptionSpec, Underlying};

fn main() -> polydiv::Result<()> {
    let p = ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0103, -0.3439, 0.0194)?;
    let jump = JumpSpec::none();
    let s = State::new(0.0, 1.0, vec![0.0371]);

    // stock call, three months, struck at spot
    let stock = OptionSpec::new(OptionKind::Call, Underlying::Stock, 1.0, 0.25)?;
    // call on next year's dividends, struck at the futures price
    let (t0, t1) = (-3.0 / 365.0, 361.0 / 365.0);
    let fwd = dividend_futures(&p, &jump, &s, 0.0, t0, t1)?;
    let div = OptionSpec::new(OptionKind::Call, Underlying::DividendWindow { t0, t1 }, fwd, t1)?;

    println!("{:>2} {:>12} {:>8} {:>12} {:>8}", "N", "stock call", "vol", "div call", "vol");
    for n in 2..=6 {
        let a = price_option(&p, &jump, &s, &stock, n)?;
        let fwd_stock = a.moments[1];
        let va = implied_vol(a.price, OptionKind::Call, fwd_stock, 1.0, 0.25, 0.01, Convention::Black76)?;
        let b = price_option(&p, &jump, &s, &div, n)?;
        let vb = implied_vol(b.price, OptionKind::Call, fwd, fwd, t1, 0.01, Convention::Black76)?;
        println!("{n:>2} {:>12.8} {va:>8.5} {:>12.4e} {vb:>8.5}", a.price, b.price);
    }

    let fit = price_option(&p, &jump, &s, &stock, 6)?.density.expect("stock is random");
    let (lo, hi) = fit.domain();
    println!("\nsix-moment stock density on [{lo:.4}, {hi:.4}], entropy {:.5}", fit.entropy());
    for x in [0.7, 0.85, 1.0, 1.15, 1.3] {
        println!("  f({x:.2}) = {:.5}", fit.pdf(x));
    }
    Ok(())
}
