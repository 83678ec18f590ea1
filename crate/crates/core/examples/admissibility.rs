//! Checks the parameter inequalities for the three calibrated single-factor
//! models and for a few deliberately broken variants.
//!
//!     cargo run --example admissibility

use polydiv::model::{log_price_volatility, validate_admissibility, yield_reversion_level, ModelParams, State};

fn main() -> polydiv::Result<()> {
    let rows = [
        (0.1, 0.3621, 0.0103, -0.3440, 0.0220),
        (0.2, 0.2813, 0.0103, -0.3439, 0.0194),
        (0.3, 0.2614, 0.0103, -0.3439, 0.0187),
    ];
    let state = State::new(0.0, 1.0, vec![0.0371]);
    println!("{:>4} {:>10} {:>12} {:>12} {:>10} {:>10}", "a", "admissible", "upper bound", "boundaries", "reversion", "log vol");
    for (a, sigma, b, beta, nu) in rows {
        let p = ModelParams::single_factor(0.01, a, sigma, b, beta, nu)?;
        let report = validate_admissibility(&p);
        let untouched = report.nonattain_x && report.nonattain_y.iter().all(|v| *v);
        println!(
            "{a:>4} {:>10} {:>12.5} {:>12} {:>10.5} {:>10.5}",
            report.admissible,
            a * (0.01 - a - beta),
            if untouched { "not hit" } else { "reachable" },
            yield_reversion_level(&p)?,
            log_price_volatility(&p, &state)?,
        );
    }

    println!();
    for (label, b, beta) in [("b < 0", -0.01, -0.3439), ("b above cap", 0.05, -0.1), ("b = 0 (bubble)", 0.0, -0.3439)] {
        let p = ModelParams::single_factor(0.01, 0.2, 0.2813, b, beta, 0.0194)?;
        let report = validate_admissibility(&p);
        println!("{label:<16} admissible = {:<5} {}", report.admissible, report.violations(&p).join("; "));
    }
    Ok(())
}
