//! Fits the single-factor model to the bundled market table for each yield
//! cap `a`, then checks that a synthetic market is recovered.
//!
//!     cargo run --release --example calibration

use std::path::Path;

use polydiv::calibration::{calibrate, model_dividend_iv, model_futures, model_stock_iv, CalibConfig, CalibPoint, MarketData};
use polydiv::cli::calibration_tables;

fn main() -> polydiv::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let market = MarketData::from_files(&data.join("market_20151221.csv"), &data.join("market_20151221.json"))?;

    for a in [0.1, 0.2, 0.3] {
        let config = CalibConfig::for_market(&market, 0.01, a);
        let result = calibrate(&market, &config)?;
        println!("{}", calibration_tables(&market, &result));
    }

    // quotes generated by known parameters
    let truth = CalibPoint { b: 0.0103, beta: -0.3439, sigma: 0.2813, nu: 0.0194, d0: 0.0371 };
    let params = truth.params(0.01, 0.2)?;
    let mut synthetic = market.clone();
    let model = model_futures(&params, truth.d0, &synthetic)?;
    for (q, m) in synthetic.futures.iter_mut().zip(model) {
        q.quote = synthetic.spot * m;
    }
    if let Some(q) = synthetic.stock_iv.as_mut() {
        q.iv = model_stock_iv(&params, truth.d0, q.t, 6)?;
    }
    let first = synthetic.futures[0].clone();
    if let Some(q) = synthetic.dividend_iv.as_mut() {
        q.iv = model_dividend_iv(&params, truth.d0, &first, 6)?;
    }
    let mut config = CalibConfig::for_market(&synthetic, 0.01, 0.2);
    config.two_stage = true;
    let fit = calibrate(&synthetic, &config)?;
    println!("synthetic market, two-stage fit: {:?}", fit.point);
    println!("true parameters:                 {truth:?}");
    Ok(())
}
