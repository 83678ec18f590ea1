//! Conditional moments of (C, X, Y) from the generator matrix, checked
//! against the linear futures formulas.
//!
//!     cargo run --example moments

use polydiv::generator::{build_generator, PolyBasis};
use polydiv::model::{JumpSpec, ModelParams, State};
use polydiv::moments::{conditional_moments, cumulative_dividend_moments, dividend_futures, stock_price_moments};
use std::sync::Arc;

fn main() -> polydiv::Result<()> {
    let p = ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0103, -0.3439, 0.0194)?;
    let jump = JumpSpec::none();
    let s = State::new(0.0, 1.0, vec![0.0371]);

    let basis = Arc::new(PolyBasis::new(1, 2)?);
    let g = build_generator(&p, &jump, &basis)?;
    println!("generator on polynomials of degree <= 2 ({0}x{0}):", basis.len());
    for (m, row) in basis.monomials().iter().zip(g.matrix().row_iter()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>8.4}")).collect();
        println!("  {:<8} {}", format!("{:?}", m.exponents()), cells.join(" "));
    }

    let m = conditional_moments(&p, &jump, &s, 0.0, 1.0, 4)?;
    println!("\nE[C_1] = {:.8}  (dividend futures on [0,1]: {:.8})", m.cx(1, 0).unwrap(), dividend_futures(&p, &jump, &s, 0.0, 0.0, 1.0)?);
    println!("E[X_1] = {:.8}", m.cx(0, 1).unwrap());

    let x = stock_price_moments(&p, &jump, &s, 0.0, 0.25, 6)?;
    let sd = (x[1] - x[0] * x[0]).sqrt();
    println!("\nstock at 3 months: mean {:.6}, sd {:.6} (annualized {:.4})", x[0], sd, sd / x[0] / 0.25f64.sqrt());

    let c = cumulative_dividend_moments(&p, &jump, &s, 0.0, 1.0, 2.0, 4)?;
    println!("dividends paid in year two: moments {c:?}");
    Ok(())
}
