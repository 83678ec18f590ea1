//! Black-Scholes and Black-76 prices and implied volatilities.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn payoff(self, underlying: f64, strike: f64) -> f64 {
        match self {
            OptionKind::Call => (underlying - strike).max(0.0),
            OptionKind::Put => (strike - underlying).max(0.0),
        }
    }
}

fn norm_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Undiscounted Black price on a forward.
fn black_undiscounted(kind: OptionKind, forward: f64, strike: f64, t: f64, vol: f64) -> f64 {
    let sd = vol * t.sqrt();
    if sd <= 0.0 {
        return kind.payoff(forward, strike);
    }
    let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    match kind {
        OptionKind::Call => forward * norm_cdf(d1) - strike * norm_cdf(d2),
        OptionKind::Put => strike * norm_cdf(-d2) - forward * norm_cdf(-d1),
    }
}

/// Black-Scholes price with continuous dividend yield `q`.
pub fn black_scholes_price(kind: OptionKind, spot: f64, strike: f64, t: f64, vol: f64, r: f64, q: f64) -> f64 {
    let forward = spot * ((r - q) * t).exp();
    (-r * t).exp() * black_undiscounted(kind, forward, strike, t, vol)
}

/// Black-76 price of an option on a forward, discounted at `r` to expiry.
pub fn black76_price(kind: OptionKind, forward: f64, strike: f64, t: f64, vol: f64, r: f64) -> f64 {
    (-r * t).exp() * black_undiscounted(kind, forward, strike, t, vol)
}

/// Quoting convention to invert.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Convention {
    /// Spot quote with continuous dividend yield `q`.
    BlackScholes { q: f64 },
    Black76,
}

/// Volatility that reproduces `price`. `underlying` is the spot for
/// Black-Scholes and the forward for Black-76. A price at intrinsic value
/// returns zero.
pub fn implied_vol(price: f64, kind: OptionKind, underlying: f64, strike: f64, t: f64, r: f64, convention: Convention) -> Result<f64> {
    if !(price.is_finite() && underlying > 0.0 && strike > 0.0 && t > 0.0) {
        return Err(Error::Domain(format!(
            "implied vol needs finite price and positive underlying, strike and maturity (price {price}, underlying {underlying}, strike {strike}, t {t})"
        )));
    }
    let (forward, df) = match convention {
        Convention::BlackScholes { q } => (underlying * ((r - q) * t).exp(), (-r * t).exp()),
        Convention::Black76 => (underlying, (-r * t).exp()),
    };
    let undiscounted = price / df;
    let lower = kind.payoff(forward, strike);
    let upper = match kind {
        OptionKind::Call => forward,
        OptionKind::Put => strike,
    };
    let scale = forward.max(strike);
    if undiscounted < lower - 1e-12 * scale || undiscounted > upper + 1e-12 * scale {
        return Err(Error::Domain(format!(
            "price {price} outside no-arbitrage bounds [{}, {}]",
            lower * df,
            upper * df
        )));
    }
    if undiscounted - lower <= 1e-14 * scale {
        return Ok(0.0);
    }
    let f = |v: f64| black_undiscounted(kind, forward, strike, t, v) - undiscounted;
    let (mut lo, mut hi) = (0.0, 1.0);
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::Domain(format!("no volatility below {hi} reproduces price {price}")));
        }
    }
    // Newton on vega with bisection fallback
    let mut v = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fv = f(v);
        if fv.abs() <= 1e-14 * scale {
            return Ok(v);
        }
        if fv > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let sd = v * t.sqrt();
        let d1 = ((forward / strike).ln() + 0.5 * sd * sd) / sd;
        let vega = forward * (-0.5 * d1 * d1).exp() / (2.0 * std::f64::consts::PI).sqrt() * t.sqrt();
        let newton = v - fv / vega;
        v = if vega > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            return Ok(v);
        }
    }
    Ok(v)
}
