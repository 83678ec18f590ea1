//! European options on the stock and on dividends paid over a window,
//! priced by integrating the payoff against a maximum-entropy density fitted
//! to the model's moments.
//!
//! Times are in years from the valuation date, at which `state` holds.

use serde::{Deserialize, Serialize};

use crate::black::OptionKind;
use crate::error::{Error, Result};
use crate::maxent::{fit_maxent, MaxEntDensity};
use crate::model::{JumpSpec, ModelParams, State};
use crate::moments::{cumulative_dividend_moments, stock_price_moments};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Underlying {
    /// Stock price at expiry.
    Stock,
    /// Dividends paid over `[t0, t1]`. A window that started before the
    /// valuation date (`t0 < 0`) counts `state.c` as already accrued.
    DividendWindow { t0: f64, t1: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    pub underlying: Underlying,
    pub strike: f64,
    pub expiry: f64,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, underlying: Underlying, strike: f64, expiry: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(Error::InvalidParameter(format!("strike must be positive, got {strike}")));
        }
        if !(expiry > 0.0) || !expiry.is_finite() {
            return Err(Error::InvalidParameter(format!("expiry must be positive, got {expiry}")));
        }
        if let Underlying::DividendWindow { t0, t1 } = underlying {
            if !(t0 <= t1) {
                return Err(Error::InvalidParameter(format!("window start {t0} after window end {t1}")));
            }
            if t1 < 0.0 {
                return Err(Error::InvalidParameter(format!("window ended before valuation (t1 = {t1})")));
            }
            if expiry < t1 {
                return Err(Error::InvalidParameter(format!("expiry {expiry} before window end {t1}")));
            }
        }
        Ok(Self { kind, underlying, strike, expiry })
    }
}

/// Price together with the density it was read from (absent when the
/// underlying is deterministic).
#[derive(Debug, Clone)]
pub struct OptionPrice {
    pub price: f64,
    /// Raw moments `M_0..M_N` of the underlying at expiry.
    pub moments: Vec<f64>,
    pub density: Option<MaxEntDensity>,
}

/// Discounted `E[payoff(Z)]` for `Z >= 0` with raw moments `M_0..M_N`.
/// Zero variance is treated as a point mass at `M_1`.
pub fn price_from_moments(kind: OptionKind, strike: f64, discount: f64, moments: Vec<f64>) -> Result<OptionPrice> {
    let m1 = moments[1];
    let var = moments.get(2).map(|m2| m2 - m1 * m1);
    if m1.abs() < 1e-300 || var.is_some_and(|v| v.abs() <= 1e-12 * m1 * m1) {
        return Ok(OptionPrice { price: discount * kind.payoff(m1.max(0.0), strike), moments, density: None });
    }
    let density = fit_maxent(&moments)?;
    let price = discount * density.integrate_payoff(|z| kind.payoff(z, strike), &[strike]);
    Ok(OptionPrice { price, moments, density: Some(density) })
}

fn with_unit(raw: Vec<f64>) -> Vec<f64> {
    std::iter::once(1.0).chain(raw).collect()
}

pub fn price_stock_option(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    spec: &OptionSpec,
    n: u32,
) -> Result<OptionPrice> {
    if spec.underlying != Underlying::Stock {
        return Err(Error::InvalidParameter("stock option pricer given a dividend underlying".into()));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least two moments, got {n}")));
    }
    let moments = with_unit(stock_price_moments(params, jump, state, 0.0, spec.expiry, n)?);
    price_from_moments(spec.kind, spec.strike, (-params.r() * spec.expiry).exp(), moments)
}

/// Raw moments `M_0..M_N` of the dividends paid over `[t0, t1]`.
pub fn dividend_window_moments(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    t0: f64,
    t1: f64,
    n: u32,
) -> Result<Vec<f64>> {
    if t0 >= 0.0 {
        return Ok(with_unit(cumulative_dividend_moments(params, jump, state, 0.0, t0, t1, n)?));
    }
    // accrued + remaining, expanded binomially
    let accrued = state.c;
    let rest = with_unit(cumulative_dividend_moments(params, jump, state, 0.0, 0.0, t1, n)?);
    Ok((0..=n as usize)
        .map(|m| {
            let mut coef = 1.0;
            let mut sum = 0.0;
            for k in 0..=m {
                sum += coef * accrued.powi((m - k) as i32) * rest[k];
                coef = coef * (m - k) as f64 / (k + 1) as f64;
            }
            sum
        })
        .collect())
}

pub fn price_dividend_option(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    spec: &OptionSpec,
    n: u32,
) -> Result<OptionPrice> {
    let Underlying::DividendWindow { t0, t1 } = spec.underlying else {
        return Err(Error::InvalidParameter("dividend option pricer given a stock underlying".into()));
    };
    if n < 1 {
        return Err(Error::InvalidParameter("need at least one moment".into()));
    }
    let moments = dividend_window_moments(params, jump, state, t0, t1, n)?;
    price_from_moments(spec.kind, spec.strike, (-params.r() * spec.expiry).exp(), moments)
}

/// Dispatches on the underlying.
pub fn price_option(params: &ModelParams, jump: &JumpSpec, state: &State, spec: &OptionSpec, n: u32) -> Result<OptionPrice> {
    match spec.underlying {
        Underlying::Stock => price_stock_option(params, jump, state, spec, n),
        Underlying::DividendWindow { .. } => price_dividend_option(params, jump, state, spec, n),
    }
}
