//! File formats and command dispatch behind the `polydiv` binary.
//!
//! Every command prints one JSON document on stdout: a [`RunReport`] on
//! success, an error object otherwise. With `--out` the report and any
//! plot series (CSV) are also written to that directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::black::{implied_vol, Convention, OptionKind};
use crate::calibration::{calibrate, CalibConfig, CalibPoint, CalibResult, MarketData};
use crate::error::{Error, Result};
use crate::mc::{martingale_diagnostic, mc_price, simulate_paths, yield_path_stats, Control, McUnderlying, SimConfig};
use crate::model::{
    ensure_admissible, in_state_space, validate_admissibility, JumpDist, JumpSpec, ModelParams, State,
};
use crate::moments::{conditional_moments, dividend_futures, pv_dividends_limit, stock_futures};
use crate::options::{dividend_window_moments, price_from_moments, OptionSpec, Underlying};

/// Model configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub r: f64,
    pub a: f64,
    pub sigma: f64,
    pub d: usize,
    pub b: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "no_jumps")]
    pub jump_dist: JumpDist,
    pub x0: f64,
    pub y0: Vec<f64>,
    #[serde(default)]
    pub c0: f64,
}

fn no_jumps() -> JumpDist {
    JumpDist::None
}

/// A parsed configuration, structurally valid but not yet checked for
/// admissibility.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedModel {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub jump: JumpSpec,
    pub state: State,
}

/// Parses a configuration without the admissibility check.
pub fn parse_model_config_str(text: &str) -> Result<ParsedModel> {
    let config: ModelConfig = serde_json::from_str(text).map_err(|e| Error::Data(format!("model config: {e}")))?;
    if config.b.len() != config.d || config.y0.len() != config.d {
        return Err(Error::Data(format!(
            "model config: d = {} but b has {} and y0 has {} entries",
            config.d,
            config.b.len(),
            config.y0.len()
        )));
    }
    let params = ModelParams::new(config.r, config.a, config.sigma, config.b.clone(), config.beta.clone(), config.nu.clone())?;
    let jump = JumpSpec::new(config.lambda, config.jump_dist)?;
    let state = State::new(config.c0, config.x0, config.y0.clone());
    Ok(ParsedModel { config, params, jump, state })
}

/// Reads and validates a model configuration: parameters must be admissible
/// and the initial state must lie in the state space.
pub fn parse_model_config(path: &Path) -> Result<ParsedModel> {
    let text = read(path)?;
    let parsed = parse_model_config_str(&text).map_err(|e| prefix(path, e))?;
    ensure_admissible(&parsed.params)?;
    let m = in_state_space(&parsed.params, &parsed.state);
    if !m.inside {
        return Err(Error::InvalidParameter(format!(
            "initial state outside the state space (x = {}, min y = {}, a x - 1'y = {})",
            m.stock, m.min_factor, m.cap
        )));
    }
    Ok(parsed)
}

impl ModelConfig {
    pub fn from_parts(params: &ModelParams, jump: &JumpSpec, state: &State) -> Self {
        Self {
            r: params.r(),
            a: params.a(),
            sigma: params.sigma(),
            d: params.d(),
            b: params.b().to_vec(),
            beta: params.beta().to_vec(),
            nu: params.nu().to_vec(),
            lambda: jump.lambda(),
            jump_dist: jump.dist(),
            x0: state.x,
            y0: state.y.clone(),
            c0: state.c,
        }
    }
}

/// Reads a market quote table; valuation date and spot come from `meta`
/// (by default the `.json` file next to the table).
pub fn parse_market_csv(path: &Path, meta: Option<&Path>) -> Result<MarketData> {
    let meta_path = meta.map(Path::to_path_buf).unwrap_or_else(|| path.with_extension("json"));
    MarketData::from_files(path, &meta_path)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn prefix(path: &Path, e: Error) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

#[derive(Debug, Parser)]
#[command(name = "polydiv", version, about = "Moment-based pricing of stock and dividend derivatives")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Model configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for report.json and CSV series.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 252)]
    pub steps_per_year: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceTarget {
    Futures,
    Option,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UnderlyingArg {
    Stock,
    Dividend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Call,
    Put,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the admissibility inequalities of a configuration.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Futures strip or one option (with an N-sweep and optional Monte-Carlo check).
    Price {
        target: PriceTarget,
        #[command(flatten)]
        common: Common,
        /// Market table whose futures windows (and spot) are priced.
        #[arg(long)]
        market: Option<PathBuf>,
        /// Market meta JSON; defaults to the table's sibling `.json`.
        #[arg(long)]
        meta: Option<PathBuf>,
        /// Number of annual windows when no market table is given.
        #[arg(long, default_value_t = 10)]
        years: u32,
        #[arg(long, default_value_t = 6)]
        moments: u32,
        #[arg(long, value_enum, default_value_t = KindArg::Call)]
        kind: KindArg,
        #[arg(long, value_enum, default_value_t = UnderlyingArg::Stock)]
        underlying: UnderlyingArg,
        /// Defaults to the spot for stock options and the futures price for
        /// dividend options.
        #[arg(long)]
        strike: Option<f64>,
        /// Years; defaults to 0.25 for stock options and the window end for
        /// dividend options.
        #[arg(long)]
        expiry: Option<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        window_start: f64,
        #[arg(long, default_value_t = 1.0)]
        window_end: f64,
        /// Cross-check with Monte-Carlo and a degree-one control variate.
        #[arg(long)]
        mc: bool,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Conditional moments of (C, X, Y) up to a total degree.
    Moments {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        maturity: f64,
        #[arg(long, default_value_t = 2)]
        moments: u32,
    },
    /// Simulate paths; report summaries, yield statistics and the gains martingale check.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 10.0)]
        horizon: f64,
        /// Paths whose yield is stored (the first ones).
        #[arg(long, default_value_t = 1)]
        yield_paths: usize,
    },
    /// Fit (b, beta, sigma, nu, D0) of a single-factor model to a market table.
    Calibrate {
        /// Supplies r and a (and the start point with --start-from-config).
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        market: PathBuf,
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long, default_value_t = 6)]
        moments: u32,
        #[arg(long)]
        two_stage: bool,
        #[arg(long)]
        start_from_config: bool,
        #[arg(long, default_value_t = 20_000)]
        max_evals: usize,
    },
}

/// JSON document printed by every successful command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    /// Inputs with defaults filled in.
    pub config: Value,
    pub results: Value,
    pub elapsed_seconds: f64,
}

/// Maps an error to the process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParameter(_) | Error::Inadmissible(_) | Error::Domain(_) => 2,
        Error::Data(_) => 3,
        Error::Infeasible(_) | Error::Convergence { .. } | Error::Numeric(_) | Error::Calibration(_) => 4,
    }
}

pub fn error_json(e: &Error) -> Value {
    let kind = match e {
        Error::InvalidParameter(_) => "invalid_parameter",
        Error::Inadmissible(_) => "inadmissible",
        Error::Domain(_) => "domain",
        Error::Infeasible(_) => "infeasible_moments",
        Error::Convergence { .. } => "convergence",
        Error::Numeric(_) => "numeric",
        Error::Data(_) => "data",
        Error::Calibration(_) => "calibration",
    };
    json!({ "error": { "kind": kind, "message": e.to_string(), "exit_code": exit_code(e) } })
}

/// Full-precision CSV cell (17 significant digits).
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_csv(dir: &Path, name: &str, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(dir.join(name), text).map_err(|e| Error::Data(format!("cannot write {name}: {e}")))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

/// Output of [`run`]: the report plus files for `--out`.
pub struct Outcome {
    pub report: RunReport,
    /// `(file name, header, rows)`
    pub series: Vec<(String, String, Vec<Vec<String>>)>,
    pub text: Option<String>,
    pub exit: i32,
}

/// Runs one command. `echo` is the command line recorded in the report.
pub fn run(cli: &Cli, echo: &str) -> Result<Outcome> {
    let started = Instant::now();
    let (config, results, series, text, exit) = match &cli.command {
        Command::Validate { common } => validate_cmd(common)?,
        Command::Price { target: PriceTarget::Futures, common, market, meta, years, .. } => {
            futures_cmd(common, market.as_deref(), meta.as_deref(), *years)?
        }
        Command::Price {
            target: PriceTarget::Option,
            common,
            moments,
            kind,
            underlying,
            strike,
            expiry,
            window_start,
            window_end,
            mc,
            sim,
            ..
        } => option_cmd(common, *moments, *kind, *underlying, *strike, *expiry, (*window_start, *window_end), *mc, sim)?,
        Command::Moments { common, t, maturity, moments } => moments_cmd(common, *t, *maturity, *moments)?,
        Command::Simulate { common, sim, horizon, yield_paths } => simulate_cmd(common, sim, *horizon, *yield_paths)?,
        Command::Calibrate { common, market, meta, moments, two_stage, start_from_config, max_evals } => {
            calibrate_cmd(common, market, meta.as_deref(), *moments, *two_stage, *start_from_config, *max_evals)?
        }
    };
    let report = RunReport {
        command: echo.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        results,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(Outcome { report, series, text, exit })
}

/// Writes `report.json`, the CSV series and the text tables under `dir`.
pub fn write_outputs(outcome: &Outcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))?;
    let body = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    std::fs::write(dir.join("report.json"), body).map_err(|e| Error::Data(format!("cannot write report.json: {e}")))?;
    for (name, header, rows) in &outcome.series {
        write_csv(dir, name, header, rows)?;
    }
    if let Some(text) = &outcome.text {
        std::fs::write(dir.join("tables.txt"), text).map_err(|e| Error::Data(format!("cannot write tables.txt: {e}")))?;
    }
    Ok(())
}

type CmdOut = (Value, Value, Vec<(String, String, Vec<Vec<String>>)>, Option<String>, i32);

fn validate_cmd(common: &Common) -> Result<CmdOut> {
    let text = read(&common.config)?;
    let parsed = parse_model_config_str(&text).map_err(|e| prefix(&common.config, e))?;
    let report = validate_admissibility(&parsed.params);
    let membership = in_state_space(&parsed.params, &parsed.state);
    let violations = report.violations(&parsed.params);
    let ok = report.admissible && membership.inside;
    let results = json!({
        "admissible": report.admissible,
        "report": report,
        "violations": violations,
        "initial_state": membership,
        "reversion_level": crate::model::yield_reversion_level(&parsed.params).ok(),
    });
    Ok((to_value(&parsed.config), results, vec![], None, if ok { 0 } else { 2 }))
}

fn futures_cmd(common: &Common, market: Option<&Path>, meta: Option<&Path>, years: u32) -> Result<CmdOut> {
    let m = parse_model_config(&common.config)?;
    let market = market.map(|p| parse_market_csv(p, meta)).transpose()?;
    let windows: Vec<(String, f64, f64, Option<f64>)> = match &market {
        Some(mk) => mk.futures.iter().map(|f| (f.id.clone(), f.t0, f.t1, Some(f.quote))).collect(),
        None => (1..=years).map(|k| (format!("DF{k}"), f64::from(k - 1), f64::from(k), None)).collect(),
    };
    let mut prices = Vec::with_capacity(windows.len());
    for (id, t0, t1, _) in &windows {
        let p = dividend_futures(&m.params, &m.jump, &m.state, 0.0, *t0, *t1).map_err(|e| annotate(id, e))?;
        prices.push(p);
    }
    // scale to index points when a market spot is available
    let scale = market.as_ref().map(|mk| mk.spot / m.state.x);
    let mut rows = Vec::new();
    let mut strip = Vec::new();
    for ((id, t0, t1, quote), p) in windows.iter().zip(&prices) {
        let index = scale.map(|s| s * p);
        let error = index.zip(*quote).map(|(i, q)| (i - q).abs());
        rows.push(vec![
            id.clone(),
            num(*t0),
            num(*t1),
            num(*p),
            index.map(num).unwrap_or_default(),
            quote.map(num).unwrap_or_default(),
            error.map(num).unwrap_or_default(),
        ]);
        strip.push(json!({ "id": id, "t0": t0, "t1": t1, "price": p, "index_points": index, "quote": quote, "error": error }));
    }
    let horizon_stock: Vec<Value> = [0.25, 0.5, 1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|&t| stock_futures(&m.params, &m.jump, &m.state, 0.0, t).map(|f| json!({ "maturity": t, "price": f })))
        .collect::<Result<_>>()?;
    let pv = if m.jump.is_pure_diffusion() { Some(pv_dividends_limit(&m.params, &m.state)?) } else { None };
    let results = json!({ "dividend_futures": strip, "stock_futures": horizon_stock, "pv_dividends": pv });
    let config = json!({ "model": m.config, "market": market, "years": years });
    let series = vec![(
        "futures.csv".to_string(),
        "id,t0,t1,price,index_points,quote,error".to_string(),
        rows,
    )];
    Ok((config, results, series, None, 0))
}

fn annotate(id: &str, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{id}: {m}")),
        Error::Numeric(m) => Error::Numeric(format!("{id}: {m}")),
        other => other,
    }
}

#[allow(clippy::too_many_arguments)]
fn option_cmd(
    common: &Common,
    n: u32,
    kind: KindArg,
    underlying: UnderlyingArg,
    strike: Option<f64>,
    expiry: Option<f64>,
    window: (f64, f64),
    with_mc: bool,
    sim: &SimArgs,
) -> Result<CmdOut> {
    let m = parse_model_config(&common.config)?;
    let kind = match kind {
        KindArg::Call => OptionKind::Call,
        KindArg::Put => OptionKind::Put,
    };
    let r = m.params.r();
    let (under, expiry, forward) = match underlying {
        UnderlyingArg::Stock => {
            let expiry = expiry.unwrap_or(0.25);
            (Underlying::Stock, expiry, stock_futures(&m.params, &m.jump, &m.state, 0.0, expiry)?)
        }
        UnderlyingArg::Dividend => {
            let (t0, t1) = window;
            let f = dividend_futures(&m.params, &m.jump, &m.state, 0.0, t0, t1)?;
            (Underlying::DividendWindow { t0, t1 }, expiry.unwrap_or(t1), f)
        }
    };
    let strike = strike.unwrap_or(match under {
        Underlying::Stock => m.state.x,
        Underlying::DividendWindow { .. } => forward,
    });
    let spec = OptionSpec::new(kind, under, strike, expiry)?;
    let lowest = if matches!(under, Underlying::Stock) { 2 } else { 1 };
    if n < lowest {
        return Err(Error::InvalidParameter(format!("--moments must be at least {lowest}")));
    }

    let all_moments = match under {
        Underlying::Stock => std::iter::once(1.0)
            .chain(crate::moments::stock_price_moments(&m.params, &m.jump, &m.state, 0.0, expiry, n)?)
            .collect::<Vec<_>>(),
        Underlying::DividendWindow { t0, t1 } => dividend_window_moments(&m.params, &m.jump, &m.state, t0, t1, n)?,
    };
    let discount = (-r * expiry).exp();
    // Black-76 on the model forward; for the stock this equals Black-Scholes
    // with the carry implied by that forward
    let convention = Convention::Black76;

    let mc = if with_mc {
        let horizon = match under {
            Underlying::Stock => expiry,
            Underlying::DividendWindow { t1, .. } => t1,
        };
        let mut cfg = SimConfig::new(sim.paths, sim.steps_per_year, sim.seed, horizon);
        let which = match under {
            Underlying::Stock => McUnderlying::Stock,
            Underlying::DividendWindow { t0, t1 } => {
                cfg.windows = vec![(t0, t1)];
                McUnderlying::Window(0)
            }
        };
        let bundle = simulate_paths(&m.params, &m.jump, &m.state, &cfg)?;
        let control = Control::Linear { mean: forward };
        Some((mc_price(&bundle, which, |z| kind.payoff(z, strike), discount, control)?, cfg))
    } else {
        None
    };

    let mut sweep = Vec::new();
    let mut rows = Vec::new();
    for k in lowest..=n {
        let priced = price_from_moments(kind, strike, discount, all_moments[..=k as usize].to_vec())?;
        let iv = implied_vol(priced.price, kind, forward, strike, expiry, r, convention).ok();
        let inside = mc.as_ref().map(|(e, _)| e.contains(priced.price));
        rows.push(vec![
            k.to_string(),
            num(priced.price),
            iv.map(num).unwrap_or_default(),
            mc.as_ref().map(|(e, _)| num(e.estimate)).unwrap_or_default(),
            mc.as_ref().map(|(e, _)| num(e.ci_low)).unwrap_or_default(),
            mc.as_ref().map(|(e, _)| num(e.ci_high)).unwrap_or_default(),
        ]);
        sweep.push(json!({ "moments": k, "price": priced.price, "implied_vol": iv, "inside_mc_ci": inside }));
    }
    let results = json!({
        "forward": forward,
        "discount": discount,
        "price": sweep.last().map(|s| s["price"].clone()),
        "sweep": sweep,
        "monte_carlo": mc.as_ref().map(|(e, _)| e),
    });
    let config = json!({
        "model": m.config,
        "option": spec,
        "moments": n,
        "implied_vol_convention": "black76 on the model forward",
        "monte_carlo": mc.as_ref().map(|(_, c)| json!({ "sim": c, "rng": "ChaCha8, seed per run, stream per path" })),
    });
    let series = vec![(
        "option_sweep.csv".to_string(),
        "moments,price,implied_vol,mc_estimate,mc_ci_low,mc_ci_high".to_string(),
        rows,
    )];
    Ok((config, results, series, None, 0))
}

fn moments_cmd(common: &Common, t: f64, maturity: f64, n: u32) -> Result<CmdOut> {
    let m = parse_model_config(&common.config)?;
    let set = conditional_moments(&m.params, &m.jump, &m.state, t, maturity, n)?;
    let mut rows = Vec::new();
    let mut listed = Vec::new();
    for (mono, v) in set.basis.monomials().iter().zip(set.values.iter()) {
        let e = mono.exponents();
        rows.push(vec![e.iter().map(u32::to_string).collect::<Vec<_>>().join(" "), num(*v)]);
        listed.push(json!({ "exponents": e, "value": v }));
    }
    let config = json!({ "model": m.config, "t": t, "maturity": maturity, "degree": n });
    let results = json!({ "order": "exponents of (c, x, y_1, .., y_d)", "moments": listed });
    Ok((config, results, vec![("moments.csv".into(), "exponents,value".into(), rows)], None, 0))
}

fn simulate_cmd(common: &Common, sim: &SimArgs, horizon: f64, yield_paths: usize) -> Result<CmdOut> {
    let m = parse_model_config(&common.config)?;
    let mut cfg = SimConfig::new(sim.paths, sim.steps_per_year, sim.seed, horizon);
    cfg.stored_yield_paths = yield_paths.min(sim.paths);
    let bundle = simulate_paths(&m.params, &m.jump, &m.state, &cfg)?;
    let grid = cfg.time_grid();
    let mut rows = Vec::new();
    for (p, path) in bundle.yield_paths.iter().enumerate() {
        for (t, y) in grid.iter().zip(path) {
            rows.push(vec![p.to_string(), num(*t), num(*y)]);
        }
    }
    let stats = if cfg.stored_yield_paths > 0 { Some(yield_path_stats(&bundle)?) } else { None };
    let results = json!({
        "summary": bundle.summary(),
        "yield_stats": stats,
        "martingale": martingale_diagnostic(&bundle),
        "gains_start": m.state.x,
        "states_checked": bundle.states_checked,
        "states_outside": bundle.states_outside,
    });
    let config = json!({ "model": m.config, "sim": cfg, "rng": "ChaCha8, seed per run, stream per path" });
    Ok((config, results, vec![("yield_paths.csv".into(), "path,t,yield".into(), rows)], None, 0))
}

fn calibrate_cmd(
    common: &Common,
    market_path: &Path,
    meta: Option<&Path>,
    n: u32,
    two_stage: bool,
    start_from_config: bool,
    max_evals: usize,
) -> Result<CmdOut> {
    let text = read(&common.config)?;
    let parsed = parse_model_config_str(&text).map_err(|e| prefix(&common.config, e))?;
    if parsed.params.d() != 1 {
        return Err(Error::InvalidParameter("calibration fits single-factor models only (d = 1)".into()));
    }
    let market = parse_market_csv(market_path, meta)?;
    let mut config = CalibConfig::for_market(&market, parsed.params.r(), parsed.params.a());
    config.n_moments = n;
    config.two_stage = two_stage;
    config.optimizer.max_evals = max_evals;
    if start_from_config {
        config.start = CalibPoint {
            b: parsed.params.b()[0],
            beta: parsed.params.beta()[0][0],
            sigma: parsed.params.sigma(),
            nu: parsed.params.nu()[0],
            d0: parsed.state.y[0] / parsed.state.x,
        };
    }
    let result = calibrate(&market, &config)?;
    let text = calibration_tables(&market, &result);
    let rows = result
        .report
        .all()
        .map(|e| vec![e.id.clone(), num(e.quote), num(e.model), num(e.error)])
        .collect();
    let config_json = json!({ "calibration": config, "market": market });
    Ok((
        config_json,
        to_value(&result),
        vec![("calibration_errors.csv".into(), "instrument,quote,model,error".into(), rows)],
        Some(text),
        0,
    ))
}

/// Plain-text tables: quotes with model errors, and fitted parameters.
pub fn calibration_tables(market: &MarketData, result: &CalibResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Market data as of {} (spot {:.2})", market.valuation_date, market.spot);
    let _ = writeln!(s, "{:<10} {:>10} {:>10} {:>10}", "", "quote", "model", "abs error");
    for e in result.report.all() {
        let _ = writeln!(s, "{:<10} {:>10.4} {:>10.4} {:>10.4}", e.id, e.quote, e.model, e.error);
    }
    let p = &result.point;
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<6} {:>8} {:>8} {:>8} {:>8} {:>8}", "a", "b", "beta", "sigma", "nu", "D0");
    let _ = writeln!(
        s,
        "{:<6} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
        result.params.a(),
        p.b,
        p.beta,
        p.sigma,
        p.nu,
        p.d0
    );
    let _ = writeln!(s, "objective {:.6e} after {} evaluations", result.objective, result.evaluations);
    s
}

/// Binary entry point: parses arguments, runs, prints, and returns the exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Ok(v) = std::env::var("POLYDIV_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                let e = Error::InvalidParameter(format!("POLYDIV_THREADS must be a positive integer, got {v:?}"));
                println!("{}", error_json(&e));
                return exit_code(&e);
            }
        }
    }
    let echo = args.iter().skip(1).cloned().collect::<Vec<_>>().join(" ");
    let out_dir = match &cli.command {
        Command::Validate { common }
        | Command::Price { common, .. }
        | Command::Moments { common, .. }
        | Command::Simulate { common, .. }
        | Command::Calibrate { common, .. } => common.out.clone(),
    };
    let outcome = run(&cli, &echo).and_then(|o| {
        if let Some(dir) = &out_dir {
            write_outputs(&o, dir)?;
        }
        Ok(o)
    });
    match outcome {
        Ok(o) => {
            println!("{}", serde_json::to_string_pretty(&o.report).expect("report serializes"));
            if let Some(t) = &o.text {
                eprint!("{t}");
            }
            o.exit
        }
        Err(e) => {
            println!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}
