//! Fitting the single-factor model `(b, beta, sigma, nu, D_0)` to a strip of
//! annual dividend futures and two at-the-money implied vols.
//!
//! Prices are computed at `X_0 = 1` and `C_0 = 0`; futures are scaled by the
//! market spot before comparison with quotes. Implied vols are scale free.

pub mod market;
pub mod nelder_mead;

use serde::{Deserialize, Serialize};

use crate::black::{implied_vol, Convention, OptionKind};
use crate::error::{Error, Result};
use crate::model::{validate_admissibility, AdmissibilityReport, JumpSpec, ModelParams, State};
use crate::moments::dividend_futures;
use crate::options::{price_dividend_option, price_stock_option, OptionSpec, Underlying};

pub use market::{december_window, third_friday, year_fraction, FuturesQuote, MarketData, MarketMeta};
pub use nelder_mead::{minimize, NelderMeadOptions, NelderMeadResult};

/// Free parameters of the single-factor fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibPoint {
    pub b: f64,
    pub beta: f64,
    pub sigma: f64,
    pub nu: f64,
    pub d0: f64,
}

impl CalibPoint {
    pub fn to_vec(self) -> [f64; 5] {
        [self.b, self.beta, self.sigma, self.nu, self.d0]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self { b: v[0], beta: v[1], sigma: v[2], nu: v[3], d0: v[4] }
    }

    pub fn params(&self, r: f64, a: f64) -> Result<ModelParams> {
        ModelParams::single_factor(r, a, self.sigma, self.b, self.beta, self.nu)
    }

    pub fn state(&self) -> State {
        State::new(0.0, 1.0, vec![self.d0])
    }

    /// Nearest point satisfying `0 <= b <= a(r - a - beta)`, `sigma, nu >= 0`
    /// and `0 <= D_0 <= a`, with the squared distance to each violated
    /// bound.
    fn project(&self, r: f64, a: f64) -> (Self, f64) {
        let mut p = *self;
        let mut viol = 0.0;
        let mut clamp = |v: &mut f64, lo: f64, hi: f64| {
            if *v < lo {
                viol += (lo - *v).powi(2);
                *v = lo;
            } else if *v > hi {
                viol += (*v - hi).powi(2);
                *v = hi;
            }
        };
        clamp(&mut p.sigma, 0.0, f64::INFINITY);
        clamp(&mut p.nu, 0.0, f64::INFINITY);
        clamp(&mut p.d0, 0.0, a);
        clamp(&mut p.beta, f64::NEG_INFINITY, r - a);
        let cap = a * (r - a - p.beta);
        let b_raw = self.b;
        if b_raw < 0.0 {
            viol += b_raw * b_raw;
            p.b = 0.0;
        } else if b_raw > cap {
            viol += (b_raw - cap).powi(2);
            p.b = cap;
        }
        (p, viol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibConfig {
    pub r: f64,
    pub a: f64,
    /// Moments used for option prices.
    pub n_moments: u32,
    /// Weight on each squared futures error (index points).
    pub futures_weight: f64,
    /// Weight on each squared implied-vol error.
    pub iv_weight: f64,
    /// Coefficient of the squared constraint violation.
    pub penalty: f64,
    pub start: CalibPoint,
    /// Initial simplex edge relative to each start coordinate.
    pub initial_step: f64,
    /// Fresh simplices built around the best point after the first run.
    pub restarts: usize,
    pub optimizer: NelderMeadOptions,
    /// Fit `(b, beta, D_0)` to futures first, then `(sigma, nu)` to vols.
    pub two_stage: bool,
}

impl CalibConfig {
    /// Defaults with `D_0` started at the first future divided by the spot.
    pub fn for_market(market: &MarketData, r: f64, a: f64) -> Self {
        let d0 = market
            .futures
            .first()
            .map(|f| f.quote / market.spot / (f.t1 - f.t0).max(1e-6))
            .unwrap_or(0.03);
        Self {
            r,
            a,
            n_moments: 6,
            futures_weight: 1.0,
            iv_weight: 1e4,
            penalty: 1e6,
            start: CalibPoint { b: 0.01, beta: -0.3, sigma: 0.3, nu: 0.02, d0 },
            initial_step: 0.1,
            restarts: 3,
            optimizer: NelderMeadOptions::default(),
            two_stage: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) {
            return Err(Error::InvalidParameter(format!("a must be > 0, got {}", self.a)));
        }
        if self.n_moments < 2 {
            return Err(Error::InvalidParameter("option legs need at least two moments".into()));
        }
        if !(self.futures_weight >= 0.0 && self.iv_weight >= 0.0 && self.penalty >= 0.0) {
            return Err(Error::InvalidParameter("weights and penalty must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentError {
    pub id: String,
    pub model: f64,
    pub quote: f64,
    pub error: f64,
}

impl InstrumentError {
    fn new(id: &str, model: f64, quote: f64) -> Self {
        Self { id: id.to_string(), model, quote, error: (model - quote).abs() }
    }
}

/// Model prices against quotes, laid out like the market table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricingReport {
    pub futures: Vec<InstrumentError>,
    pub stock_iv: Option<InstrumentError>,
    pub dividend_iv: Option<InstrumentError>,
}

impl PricingReport {
    pub fn max_futures_error(&self) -> f64 {
        self.futures.iter().map(|e| e.error).fold(0.0, f64::max)
    }

    pub fn all(&self) -> impl Iterator<Item = &InstrumentError> {
        self.futures.iter().chain(self.stock_iv.iter()).chain(self.dividend_iv.iter())
    }

    /// Weighted squared errors, summed in instrument-id order.
    pub fn loss(&self, futures_weight: f64, iv_weight: f64) -> f64 {
        let mut fut: Vec<(&str, f64)> = self.futures.iter().map(|e| (e.id.as_str(), e.error)).collect();
        fut.sort_by(|a, b| a.0.cmp(b.0));
        let mut total: f64 = fut.iter().map(|(_, e)| futures_weight * e * e).sum();
        for e in self.stock_iv.iter().chain(self.dividend_iv.iter()) {
            total += iv_weight * e.error * e.error;
        }
        total
    }
}

/// Normalized (`X_0 = 1`) futures prices for each listed window.
pub fn model_futures(params: &ModelParams, d0: f64, market: &MarketData) -> Result<Vec<f64>> {
    let state = State::new(0.0, 1.0, vec![d0]);
    let jump = JumpSpec::none();
    market
        .futures
        .iter()
        .map(|f| {
            dividend_futures(params, &jump, &state, 0.0, f.t0, f.t1)
                .map_err(|e| Error::Numeric(format!("{}: {e}", f.id)))
        })
        .collect()
}

/// Black-Scholes vol of the model's at-the-money-spot call, using the
/// model's own forward for the carry.
pub fn model_stock_iv(params: &ModelParams, d0: f64, expiry: f64, n: u32) -> Result<f64> {
    let state = State::new(0.0, 1.0, vec![d0]);
    let spec = OptionSpec::new(OptionKind::Call, Underlying::Stock, 1.0, expiry)?;
    let priced = price_stock_option(params, &JumpSpec::none(), &state, &spec, n)?;
    let q = params.r() - priced.moments[1].ln() / expiry;
    implied_vol(priced.price, OptionKind::Call, 1.0, 1.0, expiry, params.r(), Convention::BlackScholes { q })
}

/// Black vol of the call on a dividend future struck at the model futures
/// price, expiring at the end of the window.
pub fn model_dividend_iv(params: &ModelParams, d0: f64, future: &FuturesQuote, n: u32) -> Result<f64> {
    let state = State::new(0.0, 1.0, vec![d0]);
    let jump = JumpSpec::none();
    let forward = dividend_futures(params, &jump, &state, 0.0, future.t0, future.t1)?;
    let window = Underlying::DividendWindow { t0: future.t0, t1: future.t1 };
    let spec = OptionSpec::new(OptionKind::Call, window, forward, future.t1)?;
    let priced = price_dividend_option(params, &jump, &state, &spec, n)?;
    implied_vol(priced.price, OptionKind::Call, forward, forward, future.t1, params.r(), Convention::Black76)
}

pub fn pricing_errors(params: &ModelParams, d0: f64, market: &MarketData, n: u32) -> Result<PricingReport> {
    let model = model_futures(params, d0, market)?;
    let futures = market
        .futures
        .iter()
        .zip(&model)
        .map(|(q, m)| InstrumentError::new(&q.id, market.spot * m, q.quote))
        .collect();
    let stock_iv = match &market.stock_iv {
        Some(q) => {
            let iv = model_stock_iv(params, d0, q.t, n).map_err(|e| annotate(&q.id, e))?;
            Some(InstrumentError::new(&q.id, iv, q.iv))
        }
        None => None,
    };
    let dividend_iv = match &market.dividend_iv {
        Some(q) => {
            let fut = market
                .future(&q.future_id)
                .ok_or_else(|| Error::Data(format!("{}: unknown future {}", q.id, q.future_id)))?;
            let iv = model_dividend_iv(params, d0, fut, n).map_err(|e| annotate(&q.id, e))?;
            Some(InstrumentError::new(&q.id, iv, q.iv))
        }
        None => None,
    };
    Ok(PricingReport { futures, stock_iv, dividend_iv })
}

fn annotate(id: &str, e: Error) -> Error {
    Error::Numeric(format!("{id}: {e}"))
}

/// Value charged when pricing fails at an otherwise feasible point.
const FAILED_PRICING: f64 = 1e12;

/// Weighted squared errors plus `penalty * (squared constraint violation)`.
/// Infeasible points are priced at their projection onto the feasible set.
pub fn objective(v: &[f64], market: &MarketData, config: &CalibConfig) -> f64 {
    objective_parts(&CalibPoint::from_slice(v), market, config, true, true)
}

fn objective_parts(point: &CalibPoint, market: &MarketData, config: &CalibConfig, futures: bool, vols: bool) -> f64 {
    if point.to_vec().iter().any(|x| !x.is_finite()) {
        return FAILED_PRICING;
    }
    let (p, violation) = point.project(config.r, config.a);
    let penalty = config.penalty * violation;
    let Ok(params) = p.params(config.r, config.a) else {
        return FAILED_PRICING + penalty;
    };
    // the vol legs look up their future, so only the vols can be dropped
    let restricted;
    let m = if vols {
        market
    } else {
        restricted = MarketData { stock_iv: None, dividend_iv: None, ..market.clone() };
        &restricted
    };
    let futures_weight = if futures { config.futures_weight } else { 0.0 };
    match pricing_errors(&params, p.d0, m, config.n_moments) {
        Ok(report) => report.loss(futures_weight, config.iv_weight) + penalty,
        Err(_) => FAILED_PRICING + penalty,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evals: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibResult {
    pub point: CalibPoint,
    pub params: ModelParams,
    pub report: PricingReport,
    pub objective: f64,
    pub evaluations: usize,
    pub converged: bool,
    /// Best objective after each optimizer run.
    pub trace: Vec<TracePoint>,
    pub admissibility: AdmissibilityReport,
    /// Fewer instruments than free parameters.
    pub underdetermined: bool,
}

fn run(
    f: &mut impl FnMut(&[f64]) -> f64,
    start: Vec<f64>,
    rel_step: f64,
    restarts: usize,
    opts: &NelderMeadOptions,
    trace: &mut Vec<TracePoint>,
    evals: &mut usize,
) -> NelderMeadResult {
    let steps = |x: &[f64], rel: f64| -> Vec<f64> { x.iter().map(|v| rel * v.abs().max(1e-4)).collect() };
    let mut best = minimize(f, &start, &steps(&start, rel_step), opts);
    *evals += best.evals;
    trace.push(TracePoint { evals: *evals, objective: best.f });
    let mut rel = rel_step;
    for _ in 0..restarts {
        rel *= 0.5;
        let next = minimize(f, &best.x, &steps(&best.x, rel), opts);
        *evals += next.evals;
        trace.push(TracePoint { evals: *evals, objective: next.f });
        let improved = next.f < best.f;
        if improved {
            best = next;
        } else {
            best.converged = next.converged;
            break;
        }
    }
    best
}

/// Nelder-Mead fit of `(b, beta, sigma, nu, D_0)`.
pub fn calibrate(market: &MarketData, config: &CalibConfig) -> Result<CalibResult> {
    config.validate()?;
    if market.n_instruments() == 0 {
        return Err(Error::Calibration("market has no instruments".into()));
    }
    let mut trace = Vec::new();
    let mut evals = 0;
    let result = if config.two_stage {
        let fixed = config.start;
        let mut futures_only = |v: &[f64]| {
            let p = CalibPoint { b: v[0], beta: v[1], d0: v[2], ..fixed };
            objective_parts(&p, market, config, true, false)
        };
        let s1 = run(
            &mut futures_only,
            vec![fixed.b, fixed.beta, fixed.d0],
            config.initial_step,
            config.restarts,
            &config.optimizer,
            &mut trace,
            &mut evals,
        );
        let stage1 = CalibPoint { b: s1.x[0], beta: s1.x[1], d0: s1.x[2], ..fixed };
        let mut vols_only = |v: &[f64]| {
            let p = CalibPoint { sigma: v[0], nu: v[1], ..stage1 };
            objective_parts(&p, market, config, false, true)
        };
        let s2 = run(
            &mut vols_only,
            vec![fixed.sigma, fixed.nu],
            config.initial_step,
            config.restarts,
            &config.optimizer,
            &mut trace,
            &mut evals,
        );
        let x = CalibPoint { sigma: s2.x[0], nu: s2.x[1], ..stage1 }.to_vec().to_vec();
        NelderMeadResult { f: objective(&x, market, config), x, evals, converged: s1.converged && s2.converged }
    } else {
        let mut f = |v: &[f64]| objective(v, market, config);
        run(&mut f, config.start.to_vec().to_vec(), config.initial_step, config.restarts, &config.optimizer, &mut trace, &mut evals)
    };

    let (point, violation) = CalibPoint::from_slice(&result.x).project(config.r, config.a);
    if result.f >= FAILED_PRICING {
        return Err(Error::Calibration(format!(
            "no point could be priced after {evals} evaluations (best objective {:.3e}, trace {:?})",
            result.f, trace
        )));
    }
    if violation > 0.0 {
        log::warn!("optimizer ended outside the admissible set; reporting its projection");
    }
    let params = point.params(config.r, config.a)?;
    let admissibility = validate_admissibility(&params);
    if !admissibility.admissible {
        return Err(Error::Calibration(admissibility.violations(&params).join("; ")));
    }
    let report = pricing_errors(&params, point.d0, market, config.n_moments)?;
    let objective = report.loss(config.futures_weight, config.iv_weight);
    let underdetermined = market.n_instruments() < 5;
    if underdetermined {
        log::warn!("{} instruments for 5 free parameters; the fit is not unique", market.n_instruments());
    }
    Ok(CalibResult {
        point,
        params,
        report,
        objective,
        evaluations: evals,
        converged: result.converged,
        trace,
        admissibility,
        underdetermined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn calibrated_point() -> CalibPoint {
        CalibPoint { b: 0.0103, beta: -0.3439, sigma: 0.2813, nu: 0.0194, d0: 0.0371 }
    }

    fn synthetic(point: CalibPoint, with_vols: bool) -> MarketData {
        let valuation = NaiveDate::from_ymd_opt(2015, 12, 21).unwrap();
        let params = point.params(0.01, 0.2).unwrap();
        let mut market = MarketData { valuation_date: valuation, spot: 3200.0, futures: vec![], stock_iv: None, dividend_iv: None };
        for k in 1..=10 {
            let (s, e) = december_window(valuation, k);
            market.futures.push(FuturesQuote {
                id: format!("DF{k}"),
                window_start: s,
                window_end: e,
                t0: year_fraction(valuation, s),
                t1: year_fraction(valuation, e),
                quote: 1.0,
            });
        }
        let model = model_futures(&params, point.d0, &market).unwrap();
        for (q, m) in market.futures.iter_mut().zip(model) {
            q.quote = 3200.0 * m;
        }
        if with_vols {
            let expiry = NaiveDate::from_ymd_opt(2016, 3, 21).unwrap();
            let t = year_fraction(valuation, expiry);
            market.stock_iv = Some(market::StockVolQuote {
                id: "IV_STOCK".into(),
                expiry,
                t,
                iv: model_stock_iv(&params, point.d0, t, 6).unwrap(),
            });
            market.dividend_iv = Some(market::DividendVolQuote {
                id: "IV_DIV".into(),
                future_id: "DF1".into(),
                iv: model_dividend_iv(&params, point.d0, &market.futures[0], 6).unwrap(),
            });
        }
        market
    }

    #[test]
    fn self_consistent_market_prices_without_error() {
        let p = calibrated_point();
        let market = synthetic(p, true);
        let report = pricing_errors(&p.params(0.01, 0.2).unwrap(), p.d0, &market, 6).unwrap();
        assert!(report.all().all(|e| e.error < 1e-8), "{report:?}");
        let config = CalibConfig::for_market(&market, 0.01, 0.2);
        assert!(objective(&p.to_vec(), &market, &config) < 1e-12);
    }

    #[test]
    fn negative_b_is_penalized() {
        let market = synthetic(calibrated_point(), false);
        let config = CalibConfig::for_market(&market, 0.01, 0.2);
        let mut v = calibrated_point().to_vec();
        v[0] = -0.01;
        assert!(objective(&v, &market, &config) >= config.penalty * 1e-4);
        v[4] = f64::NAN;
        assert!(objective(&v, &market, &config).is_finite());
    }

    #[test]
    fn futures_ignore_the_volatilities() {
        let p = calibrated_point();
        let market = synthetic(p, false);
        let a = pricing_errors(&p.params(0.01, 0.2).unwrap(), p.d0, &market, 6).unwrap();
        let q = CalibPoint { sigma: 0.1, nu: 0.05, ..p };
        let b = pricing_errors(&q.params(0.01, 0.2).unwrap(), q.d0, &market, 6).unwrap();
        assert_eq!(a.futures, b.futures);
    }

    #[test]
    fn objective_ignores_instrument_order() {
        let p = CalibPoint { b: 0.012, ..calibrated_point() };
        let market = synthetic(calibrated_point(), true);
        let mut shuffled = market.clone();
        shuffled.futures.reverse();
        let config = CalibConfig::for_market(&market, 0.01, 0.2);
        assert_eq!(objective(&p.to_vec(), &market, &config), objective(&p.to_vec(), &shuffled, &config));
    }

    #[test]
    fn single_quote_is_flagged_underdetermined() {
        let mut market = synthetic(calibrated_point(), false);
        market.futures.truncate(1);
        let mut config = CalibConfig::for_market(&market, 0.01, 0.2);
        config.optimizer.max_evals = 400;
        config.restarts = 0;
        let res = calibrate(&market, &config).unwrap();
        assert!(res.underdetermined);
        assert!(res.admissibility.admissible);
        assert!(res.report.futures[0].error < 1.0);
    }
}
