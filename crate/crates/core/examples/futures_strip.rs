//! Prices the ten annual dividend futures of the bundled market table,
//! fits the index level by least squares and prints the errors. Also shows
//! the split of the stock price into dividends and terminal value.
//!
//!     cargo run --example futures_strip

use std::path::Path;

use polydiv::calibration::{model_futures, MarketData};
use polydiv::model::{ModelParams, State};
use polydiv::moments::{pv_dividends, pv_dividends_limit};

fn main() -> polydiv::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let market = MarketData::from_files(&data.join("market_20151221.csv"), &data.join("market_20151221.json"))?;
    let p = ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0103, -0.3439, 0.0194)?;
    let d0 = 0.0371;

    let model = model_futures(&p, d0, &market)?;
    let spot = market.fitted_spot(&model);
    println!("least-squares index level: {spot:.2}");
    println!("{:<5} {:>8} {:>8} {:>9} {:>9} {:>7}", "", "start", "end", "quote", "model", "error");
    for (q, m) in market.futures.iter().zip(&model) {
        println!(
            "{:<5} {:>8.4} {:>8.4} {:>9.2} {:>9.2} {:>7.3}",
            q.id,
            q.t0,
            q.t1,
            q.quote,
            spot * m,
            spot * m - q.quote
        );
    }

    let s = State::new(0.0, 1.0, vec![d0]);
    println!("\n{:>8} {:>14} {:>14} {:>10}", "horizon", "pv dividends", "terminal", "sum");
    for h in [1.0, 5.0, 30.0, 200.0] {
        let split = pv_dividends(&p, &s, h)?;
        println!("{h:>8} {:>14.10} {:>14.10} {:>10.7}", split.pv_dividends, split.discounted_terminal, split.pv_dividends + split.discounted_terminal);
    }
    let limit = pv_dividends_limit(&p, &s)?;
    println!("all future dividends: {:.10} (horizon {} years)", limit.split.pv_dividends, limit.horizon);

    let bubble = ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0, -0.3439, 0.0194)?;
    let b = pv_dividends_limit(&bubble, &s)?;
    println!("with b = 0: {:.10} vs D/(r - beta) = {:.10}", b.split.pv_dividends, d0 / (0.01 + 0.3439));
    Ok(())
}
