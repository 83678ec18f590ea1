//! Euler Monte-Carlo for the stock and dividend factors, used as an
//! independent check on the moment-based prices.
//!
//! Each path draws from its own ChaCha8 stream (`seed`, stream = path index),
//! and paths are collected in index order, so results do not depend on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{in_state_space, JumpDist, JumpSpec, ModelParams, State};

/// Smallest stock price kept after projection.
pub const MIN_STOCK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    /// Years simulated from the valuation date.
    pub horizon: f64,
    /// Dividend windows `[t0, t1]` whose paid dividends are recorded per
    /// path. A window starting before the valuation date counts the initial
    /// `c` as already paid.
    #[serde(default)]
    pub windows: Vec<(f64, f64)>,
    /// Number of leading paths whose yield `D/X` is kept at every step.
    #[serde(default)]
    pub stored_yield_paths: usize,
}

impl SimConfig {
    pub fn new(n_paths: usize, steps_per_year: usize, seed: u64, horizon: f64) -> Self {
        Self { n_paths, steps_per_year, seed, horizon, windows: vec![], stored_yield_paths: 0 }
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.steps_per_year == 0 {
            return Err(Error::InvalidParameter("need at least one path and one step per year".into()));
        }
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidParameter(format!("horizon must be finite and >= 0, got {}", self.horizon)));
        }
        for &(t0, t1) in &self.windows {
            if !(t0 <= t1) || t1 > self.horizon || t1 < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "window [{t0}, {t1}] must be ordered and end inside [0, {}]",
                    self.horizon
                )));
            }
        }
        Ok(())
    }

    /// Uniform grid with every window endpoint inserted.
    pub fn time_grid(&self) -> Vec<f64> {
        let steps = (self.horizon * self.steps_per_year as f64).round().max(0.0) as usize;
        let mut grid: Vec<f64> = (0..=steps).map(|k| self.horizon * k as f64 / steps.max(1) as f64).collect();
        if steps == 0 {
            grid.truncate(1);
        }
        for &(t0, t1) in &self.windows {
            grid.extend([t0, t1].into_iter().filter(|t| *t > 0.0));
        }
        grid.sort_by(f64::total_cmp);
        grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        grid
    }
}

/// Output of [`simulate_paths`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathBundle {
    pub config: SimConfig,
    pub x0: f64,
    pub terminal: Vec<State>,
    /// `windows[w][path]`: dividends paid over window `w`.
    pub windows: Vec<Vec<f64>>,
    /// `∫_0^T e^{-rs} D_s ds` per path.
    pub discounted_dividends: Vec<f64>,
    pub yield_paths: Vec<Vec<f64>>,
    pub jump_counts: Vec<u32>,
    /// Post-projection states checked against `E`.
    pub states_checked: u64,
    pub states_outside: u64,
    /// Steps where the projection changed the Euler update.
    pub projections: u64,
    pub rate: f64,
}

struct PathResult {
    terminal: State,
    windows: Vec<f64>,
    discounted_dividends: f64,
    yields: Vec<f64>,
    jumps: u32,
    outside: u64,
    projections: u64,
}

/// Clamps `y` at zero, keeps `x` positive and pulls `1'y` under `a x`.
/// Returns whether anything moved.
fn project(a: f64, x: &mut f64, y: &mut [f64]) -> bool {
    let mut moved = false;
    for v in y.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            moved = true;
        }
    }
    if *x < MIN_STOCK {
        *x = MIN_STOCK;
        moved = true;
    }
    let cap = a * *x;
    let total: f64 = y.iter().sum();
    if total > cap {
        // shave a few ulps so rounding cannot leave the sum above the cap
        let f = cap / total * (1.0 - 4.0 * f64::EPSILON);
        y.iter_mut().for_each(|v| *v *= f);
        moved = true;
    }
    moved
}

fn draw_jump(dist: JumpDist, rng: &mut ChaCha8Rng) -> f64 {
    match dist {
        JumpDist::None => 0.0,
        JumpDist::PointMass { z0 } => z0,
        JumpDist::TwoPoint { z1, p, z2 } => {
            let u: f64 = rand::Rng::random(rng);
            if u < p {
                z1
            } else {
                z2
            }
        }
    }
}

fn simulate_one(params: &ModelParams, jump: &JumpSpec, state0: &State, cfg: &SimConfig, grid: &[f64], index: usize) -> PathResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let (r, a, sigma) = (params.r(), params.a(), params.sigma());
    let d = params.d();
    let jumps_on = !jump.is_pure_diffusion();
    let compensator = if jumps_on { jump.lambda() * crate::model::jump_moment(jump, 1).unwrap_or(0.0) } else { 0.0 };

    let mut x = state0.x;
    let mut y = state0.y.clone();
    let mut c = state0.c;
    let mut div = 0.0;
    let mut jumps = 0;
    let mut outside = 0;
    let mut projections = 0;
    let keep_yield = index < cfg.stored_yield_paths;
    let mut yields = Vec::new();
    if keep_yield {
        yields.reserve(grid.len());
        yields.push(y.iter().sum::<f64>() / x);
    }
    // C at each window start, filled in as the grid is walked; a window
    // that began before valuation measures from C = 0 there
    let mut start_c: Vec<Option<f64>> = cfg
        .windows
        .iter()
        .map(|&(t0, _)| match t0 {
            t0 if t0 < 0.0 => Some(0.0),
            t0 if t0 == 0.0 => Some(c),
            _ => None,
        })
        .collect();
    let mut window_c: Vec<f64> = start_c.iter().map(|s| c - s.unwrap_or(c)).collect();

    let mut dw = vec![0.0; d];
    let mut drift_y = vec![0.0; d];
    for step in grid.windows(2) {
        let (t, t_next) = (step[0], step[1]);
        let dt = t_next - t;
        let sq = dt.sqrt();
        let dz: f64 = StandardNormal.sample(&mut rng);
        for v in dw.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let dividend = y.iter().sum::<f64>();
        let q = (x - dividend / a).max(0.0);
        for k in 0..d {
            drift_y[k] = params.b()[k] * x + (0..d).map(|l| params.beta()[k][l] * y[l]).sum::<f64>();
        }
        let mut x_new = x + (r * x - dividend - compensator * q) * dt + sigma * q * sq * dz;
        for k in 0..d {
            y[k] += drift_y[k] * dt + (q * y[k].max(0.0)).sqrt() * params.nu()[k] * sq * dw[k];
        }
        if jumps_on {
            let level = y.iter().map(|v| v.max(0.0)).sum::<f64>() / a;
            let n = Poisson::new(jump.lambda() * dt).expect("positive intensity").sample(&mut rng) as u32;
            for _ in 0..n {
                let z = draw_jump(jump.dist(), &mut rng);
                x_new += z * (x_new - level).max(0.0);
            }
            jumps += n;
        }
        x = x_new;
        if project(a, &mut x, &mut y) {
            projections += 1;
        }
        let dividend_new = y.iter().sum::<f64>();
        c += 0.5 * (dividend + dividend_new) * dt;
        div += 0.5 * ((-r * t).exp() * dividend + (-r * t_next).exp() * dividend_new) * dt;
        let cap = a * x - dividend_new;
        if !(x > 0.0 && y.iter().all(|v| *v >= 0.0) && cap >= 0.0) {
            outside += 1;
        }
        if keep_yield {
            yields.push(dividend_new / x);
        }
        for (w, &(t0, t1)) in cfg.windows.iter().enumerate() {
            if start_c[w].is_none() && (t_next - t0).abs() < 1e-12 {
                start_c[w] = Some(c);
            }
            if (t_next - t1).abs() < 1e-12 {
                window_c[w] = c - start_c[w].unwrap_or(c);
            }
        }
    }
    PathResult {
        terminal: State::new(c, x, y),
        windows: window_c,
        discounted_dividends: div,
        yields,
        jumps,
        outside,
        projections,
    }
}

/// Simulates `config.n_paths` Euler paths from `state0`.
pub fn simulate_paths(params: &ModelParams, jump: &JumpSpec, state0: &State, config: &SimConfig) -> Result<PathBundle> {
    config.validate()?;
    crate::model::ensure_admissible(params)?;
    if !in_state_space(params, state0).inside {
        return Err(Error::Domain(format!("initial state {state0:?} lies outside the state space")));
    }
    let grid = config.time_grid();
    let results: Vec<PathResult> = (0..config.n_paths)
        .into_par_iter()
        .map(|i| simulate_one(params, jump, state0, config, &grid, i))
        .collect();

    let steps = (grid.len() - 1) as u64;
    let mut bundle = PathBundle {
        config: config.clone(),
        x0: state0.x,
        terminal: Vec::with_capacity(results.len()),
        windows: vec![Vec::with_capacity(results.len()); config.windows.len()],
        discounted_dividends: Vec::with_capacity(results.len()),
        yield_paths: vec![],
        jump_counts: Vec::with_capacity(results.len()),
        states_checked: steps * config.n_paths as u64,
        states_outside: 0,
        projections: 0,
        rate: params.r(),
    };
    for res in results {
        for (w, v) in res.windows.into_iter().enumerate() {
            bundle.windows[w].push(v);
        }
        bundle.terminal.push(res.terminal);
        bundle.discounted_dividends.push(res.discounted_dividends);
        if !res.yields.is_empty() {
            bundle.yield_paths.push(res.yields);
        }
        bundle.jump_counts.push(res.jumps);
        bundle.states_outside += res.outside;
        bundle.projections += res.projections;
    }
    Ok(bundle)
}

/// Which simulated quantity an option is written on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McUnderlying {
    Stock,
    /// Index into `SimConfig::windows`.
    Window(usize),
}

impl PathBundle {
    pub fn n_paths(&self) -> usize {
        self.terminal.len()
    }

    pub fn underlying(&self, u: McUnderlying) -> Result<Vec<f64>> {
        match u {
            McUnderlying::Stock => Ok(self.terminal.iter().map(|s| s.x).collect()),
            McUnderlying::Window(w) => self
                .windows
                .get(w)
                .cloned()
                .ok_or_else(|| Error::Domain(format!("no dividend window {w} was simulated"))),
        }
    }

    /// Order-fixed summary used to compare runs.
    pub fn summary(&self) -> BundleSummary {
        let n = self.n_paths() as f64;
        BundleSummary {
            mean_stock: self.terminal.iter().map(|s| s.x).sum::<f64>() / n,
            mean_stock_sq: self.terminal.iter().map(|s| s.x * s.x).sum::<f64>() / n,
            mean_windows: self.windows.iter().map(|w| w.iter().sum::<f64>() / n).collect(),
            mean_discounted_dividends: self.discounted_dividends.iter().sum::<f64>() / n,
            total_jumps: self.jump_counts.iter().map(|&j| u64::from(j)).sum(),
            projections: self.projections,
            states_outside: self.states_outside,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleSummary {
    pub mean_stock: f64,
    pub mean_stock_sq: f64,
    pub mean_windows: Vec<f64>,
    pub mean_discounted_dividends: f64,
    pub total_jumps: u64,
    pub projections: u64,
    pub states_outside: u64,
}

/// Monte-Carlo estimate with a normal 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_err: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    /// Regression coefficient on the control, when one was used.
    pub control_coef: Option<f64>,
    /// The control had zero sample variance and was dropped.
    pub control_dropped: bool,
}

impl McEstimate {
    fn from_samples(samples: &[f64], control_coef: Option<f64>, control_dropped: bool) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        let std_err = (var / n as f64).sqrt();
        Self {
            estimate: mean,
            std_err,
            ci_low: mean - 1.96 * std_err,
            ci_high: mean + 1.96 * std_err,
            n,
            control_coef,
            control_dropped,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    /// `|value - estimate|` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_err == 0.0 {
            if value == self.estimate {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (value - self.estimate).abs() / self.std_err
        }
    }
}

/// Control variate for [`mc_price`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    None,
    /// Regress on `(1, underlying)`; `mean` is the exact expectation of the
    /// underlying.
    Linear { mean: f64 },
}

/// Discounted expectation of `payoff(underlying)` over the paths.
pub fn mc_price(
    bundle: &PathBundle,
    underlying: McUnderlying,
    payoff: impl Fn(f64) -> f64,
    discount: f64,
    control: Control,
) -> Result<McEstimate> {
    let u = bundle.underlying(underlying)?;
    if u.is_empty() {
        return Err(Error::Domain("empty path bundle".into()));
    }
    let y: Vec<f64> = u.iter().map(|v| discount * payoff(*v)).collect();
    estimate_with_control(&y, &u, control)
}

/// Sample mean of `y`, optionally corrected by the control `u`.
pub fn estimate_with_control(y: &[f64], u: &[f64], control: Control) -> Result<McEstimate> {
    if y.len() != u.len() || y.is_empty() {
        return Err(Error::Domain("payoff and control samples must be nonempty and equally long".into()));
    }
    let Control::Linear { mean } = control else {
        return Ok(McEstimate::from_samples(y, None, false));
    };
    let n = y.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (a, b) in u.iter().zip(y) {
        cov += (a - mu) * (b - my);
        var += (a - mu) * (a - mu);
    }
    if !(var > 1e-300) {
        log::warn!("control variate has zero sample variance; using the plain estimator");
        return Ok(McEstimate::from_samples(y, None, true));
    }
    let coef = cov / var;
    let adjusted: Vec<f64> = y.iter().zip(u).map(|(b, a)| b - coef * (a - mean)).collect();
    Ok(McEstimate::from_samples(&adjusted, Some(coef), false))
}

/// Sample mean of the discounted gains `e^{-rT} X_T + ∫_0^T e^{-rs} D_s ds`,
/// whose exact expectation is `X_0`.
pub fn martingale_diagnostic(bundle: &PathBundle) -> McEstimate {
    let df = (-bundle.rate * bundle.config.horizon).exp();
    let g: Vec<f64> = bundle
        .terminal
        .iter()
        .zip(&bundle.discounted_dividends)
        .map(|(s, d)| df * s.x + d)
        .collect();
    McEstimate::from_samples(&g, None, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YieldStats {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

/// Pooled statistics of the stored yield paths.
pub fn yield_path_stats(bundle: &PathBundle) -> Result<YieldStats> {
    let mut all: Vec<f64> = bundle.yield_paths.iter().flatten().copied().collect();
    if all.is_empty() {
        return Err(Error::Domain("no yield paths were stored".into()));
    }
    all.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (all.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        all[lo] + (pos - lo as f64) * (all[hi] - all[lo])
    };
    Ok(YieldStats {
        min: all[0],
        q25: q(0.25),
        median: q(0.5),
        q75: q(0.75),
        max: all[all.len() - 1],
        mean: all.iter().sum::<f64>() / all.len() as f64,
        count: all.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn calibrated() -> (ModelParams, State) {
        let p = ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0103, -0.3439, 0.0194).unwrap();
        (p, State::new(0.0, 1.0, vec![0.0371]))
    }

    #[test]
    fn deterministic_limit_grows_at_the_rate() {
        let p = ModelParams::single_factor(0.03, 0.2, 0.0, 0.0, -0.5, 0.0).unwrap();
        let s = State::new(0.0, 1.0, vec![0.0]);
        let b = simulate_paths(&p, &JumpSpec::none(), &s, &SimConfig::new(3, 252, 1, 1.0)).unwrap();
        for st in &b.terminal {
            assert!((st.x / 0.03f64.exp() - 1.0).abs() < 1e-3);
        }
        let g = martingale_diagnostic(&b);
        assert!((g.estimate - 1.0).abs() < 1e-3);
    }

    #[test]
    fn zero_horizon_returns_initial_state() {
        let (p, s) = calibrated();
        let b = simulate_paths(&p, &JumpSpec::none(), &s, &SimConfig::new(4, 252, 9, 0.0)).unwrap();
        assert_eq!(martingale_diagnostic(&b).estimate, 1.0);
    }

    #[test]
    fn projection_restores_membership() {
        let (mut x, mut y) = (-0.5, vec![0.3, -0.1]);
        assert!(project(0.2, &mut x, &mut y));
        assert_eq!(x, MIN_STOCK);
        assert!(y.iter().all(|v| *v >= 0.0) && y.iter().sum::<f64>() <= 0.2 * x);
        let (mut x, mut y) = (1.0, vec![0.15, 0.1]);
        assert!(project(0.2, &mut x, &mut y));
        assert!(y.iter().sum::<f64>() <= 0.2);
    }

    #[test]
    fn constant_payoff_has_zero_error_and_linear_payoff_is_absorbed() {
        let (p, s) = calibrated();
        let b = simulate_paths(&p, &JumpSpec::none(), &s, &SimConfig::new(500, 52, 3, 0.5)).unwrap();
        let flat = mc_price(&b, McUnderlying::Stock, |_| 2.0, 0.9, Control::None).unwrap();
        assert_relative_eq!(flat.estimate, 1.8, max_relative = 1e-14);
        assert!(flat.std_err < 1e-15);
        let lin = mc_price(&b, McUnderlying::Stock, |x| x, 0.9, Control::Linear { mean: 1.2 }).unwrap();
        assert_relative_eq!(lin.estimate, 0.9 * 1.2, max_relative = 1e-12);
        assert!(lin.std_err < 1e-12);
    }

    #[test]
    fn zero_variance_control_falls_back() {
        let est = estimate_with_control(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0], Control::Linear { mean: 5.0 }).unwrap();
        assert!(est.control_dropped);
        assert_eq!(est.estimate, 2.0);
    }

    #[test]
    fn no_intensity_jumps_match_the_diffusion_bit_for_bit() {
        let (p, s) = calibrated();
        let cfg = SimConfig::new(50, 52, 11, 1.0);
        let plain = simulate_paths(&p, &JumpSpec::none(), &s, &cfg).unwrap();
        let silent = JumpSpec::new(0.0, JumpDist::PointMass { z0: -0.5 }).unwrap();
        let with = simulate_paths(&p, &silent, &s, &cfg).unwrap();
        assert_eq!(plain.summary(), with.summary());
    }

    #[test]
    fn jumps_keep_the_state_inside() {
        let (p, s) = calibrated();
        let jump = JumpSpec::new(0.5, JumpDist::PointMass { z0: -0.5 }).unwrap();
        let mut cfg = SimConfig::new(200, 252, 5, 2.0);
        cfg.stored_yield_paths = 200;
        let b = simulate_paths(&p, &jump, &s, &cfg).unwrap();
        assert!(b.summary().total_jumps > 0);
        assert_eq!(b.states_outside, 0);
        let st = yield_path_stats(&b).unwrap();
        assert!(st.min >= 0.0 && st.max <= 0.2);
    }

    #[test]
    fn window_before_valuation_counts_accrued() {
        let (p, mut s) = calibrated();
        s.c = 0.002;
        let mut cfg = SimConfig::new(10, 252, 2, 1.0);
        cfg.windows = vec![(-0.1, 0.5), (0.0, 0.5), (0.5, 1.0)];
        let b = simulate_paths(&p, &JumpSpec::none(), &s, &cfg).unwrap();
        for i in 0..10 {
            assert_relative_eq!(b.windows[0][i], b.windows[1][i] + 0.002, max_relative = 1e-12);
            assert_relative_eq!(b.windows[1][i] + b.windows[2][i], b.terminal[i].c - 0.002, max_relative = 1e-12);
        }
    }
}
