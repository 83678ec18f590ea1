//! Model parameters, states and the parameter inequalities that keep the
//! joint stock/dividend process inside its state space
//!
//! ```text
//! E = { (x, y) : x > 0, y >= 0, 1'y <= a x }.
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Diffusion coefficients of the joint stock price / dividend factor model.
///
/// The stock follows `dX = (rX - D) dt + sigma (X - D/a) dW` and each factor
/// `dY_k = (b_k X + (beta Y)_k) dt + nu_k sqrt((X - D/a) Y_k) dB_k`, with
/// dividend rate `D = 1'Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    r: f64,
    a: f64,
    sigma: f64,
    b: Vec<f64>,
    beta: Vec<Vec<f64>>,
    nu: Vec<f64>,
}

impl ModelParams {
    /// Builds a parameter set, checking structural invariants only.
    ///
    /// `sigma = 0` is accepted as the deterministic-stock limit; admissibility
    /// is a separate question answered by [`validate_admissibility`].
    pub fn new(
        r: f64,
        a: f64,
        sigma: f64,
        b: Vec<f64>,
        beta: Vec<Vec<f64>>,
        nu: Vec<f64>,
    ) -> Result<Self> {
        let d = b.len();
        if d == 0 {
            return Err(Error::InvalidParameter("factor dimension d must be >= 1".into()));
        }
        if beta.len() != d || beta.iter().any(|row| row.len() != d) {
            return Err(Error::InvalidParameter(format!("beta must be {d}x{d}")));
        }
        if nu.len() != d {
            return Err(Error::InvalidParameter(format!("nu must have length {d}")));
        }
        let all_finite = [r, a, sigma]
            .iter()
            .chain(b.iter())
            .chain(beta.iter().flatten())
            .chain(nu.iter())
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidParameter("non-finite coefficient".into()));
        }
        if a <= 0.0 {
            return Err(Error::InvalidParameter(format!("a must be > 0, got {a}")));
        }
        if sigma < 0.0 {
            return Err(Error::InvalidParameter(format!("sigma must be >= 0, got {sigma}")));
        }
        if let Some((k, v)) = nu.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::InvalidParameter(format!("nu_{} must be >= 0, got {v}", k + 1)));
        }
        Ok(Self { r, a, sigma, b, beta, nu })
    }

    /// Single-factor model (`d = 1`), where `D` itself is the factor.
    pub fn single_factor(r: f64, a: f64, sigma: f64, b: f64, beta: f64, nu: f64) -> Result<Self> {
        Self::new(r, a, sigma, vec![b], vec![vec![beta]], vec![nu])
    }

    pub fn r(&self) -> f64 {
        self.r
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn d(&self) -> usize {
        self.b.len()
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }

    /// `(1'beta)_k`, the k-th column sum of beta.
    pub fn beta_column_sum(&self, k: usize) -> f64 {
        self.beta.iter().map(|row| row[k]).sum()
    }

    /// Copy with a different volatility pair, used to probe volatility
    /// independence of linear prices.
    pub fn with_volatilities(&self, sigma: f64, nu: Vec<f64>) -> Result<Self> {
        Self::new(self.r, self.a, sigma, self.b.clone(), self.beta.clone(), nu)
    }
}

/// Distribution of relative jump sizes of the stock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum JumpDist {
    None,
    PointMass { z0: f64 },
    TwoPoint { z1: f64, p: f64, z2: f64 },
}

/// Compensated compound Poisson jumps in the stock price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpSpec {
    lambda: f64,
    dist: JumpDist,
}

impl Default for JumpSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl JumpSpec {
    pub fn new(lambda: f64, dist: JumpDist) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("jump intensity must be >= 0, got {lambda}")));
        }
        let support: Vec<f64> = match dist {
            JumpDist::None => vec![],
            JumpDist::PointMass { z0 } => vec![z0],
            JumpDist::TwoPoint { z1, p, z2 } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!("two-point weight p must lie in [0,1], got {p}")));
                }
                vec![z1, z2]
            }
        };
        if let Some(z) = support.iter().find(|z| !(z.is_finite() && **z > -1.0)) {
            return Err(Error::InvalidParameter(format!("jump support must lie in (-1, inf), got {z}")));
        }
        Ok(Self { lambda, dist })
    }

    /// Pure-diffusion specification.
    pub fn none() -> Self {
        Self { lambda: 0.0, dist: JumpDist::None }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn dist(&self) -> JumpDist {
        self.dist
    }

    /// True when the jump part contributes nothing to the dynamics.
    pub fn is_pure_diffusion(&self) -> bool {
        self.lambda == 0.0 || matches!(self.dist, JumpDist::None)
    }

    /// Atoms `(z, weight)` of the jump-size distribution.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self.dist {
            JumpDist::None => vec![],
            JumpDist::PointMass { z0 } => vec![(z0, 1.0)],
            JumpDist::TwoPoint { z1, p, z2 } => vec![(z1, p), (z2, 1.0 - p)],
        }
    }
}

/// Raw moment `m_m = ∫ z^m F(dz)` of the jump-size distribution.
pub fn jump_moment(jump: &JumpSpec, m: u32) -> Result<f64> {
    if matches!(jump.dist, JumpDist::None) {
        return Err(Error::Domain("jump specification has no size distribution".into()));
    }
    Ok(jump.atoms().iter().map(|(z, w)| w * z.powi(m as i32)).sum())
}

/// Point `(c, x, y)`: cumulative dividends, stock price and dividend factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub c: f64,
    pub x: f64,
    pub y: Vec<f64>,
}

impl State {
    pub fn new(c: f64, x: f64, y: Vec<f64>) -> Self {
        Self { c, x, y }
    }

    pub fn d(&self) -> usize {
        self.y.len()
    }
}

/// Dividend rate `D = 1'y`.
pub fn dividend_rate(state: &State) -> f64 {
    state.y.iter().sum()
}

/// Dividend yield `D / x`.
pub fn dividend_yield(state: &State) -> Result<f64> {
    if state.x <= 0.0 {
        return Err(Error::Domain(format!("dividend yield needs x > 0, got {}", state.x)));
    }
    Ok(dividend_rate(state) / state.x)
}

/// Membership of a state in `E`, with signed distances to each face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Membership {
    pub inside: bool,
    /// `x`
    pub stock: f64,
    /// `min_k y_k`
    pub min_factor: f64,
    /// `a x - 1'y`
    pub cap: f64,
}

pub fn in_state_space(params: &ModelParams, state: &State) -> Membership {
    let min_factor = state.y.iter().copied().fold(f64::INFINITY, f64::min);
    let cap = params.a * state.x - dividend_rate(state);
    Membership {
        inside: state.y.len() == params.d() && state.x > 0.0 && min_factor >= 0.0 && cap >= 0.0,
        stock: state.x,
        min_factor,
        cap,
    }
}

/// Slacks of the inward-drift and boundary non-attainment inequalities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    /// `b_k + a min_{l != k} beta_kl^-`, one entry per factor; must be >= 0.
    pub slack_factor: Vec<f64>,
    /// `r - a - max_k (1'beta)_k - 1'b / a`; must be >= 0.
    pub slack_cap: f64,
    /// Strict positivity of each factor is preserved.
    pub nonattain_y: Vec<bool>,
    /// Strict distance from the yield cap is preserved.
    pub nonattain_x: bool,
}

impl AdmissibilityReport {
    /// Human-readable names of the violated inward-drift inequalities.
    pub fn violations(&self, params: &ModelParams) -> Vec<String> {
        let mut out = Vec::new();
        let single = params.d() == 1;
        for (k, s) in self.slack_factor.iter().enumerate() {
            if *s < 0.0 {
                if single {
                    out.push(format!("inward drift of D at zero: b >= 0 violated (b = {})", params.b[0]));
                } else {
                    out.push(format!(
                        "inward drift of factor {}: b_k + a*min_(l!=k) beta_kl^- >= 0 violated (slack {s:.6e})",
                        k + 1
                    ));
                }
            }
        }
        if self.slack_cap < 0.0 {
            if single {
                let bound = params.a * (params.r - params.a - params.beta[0][0]);
                out.push(format!(
                    "inward drift at the yield cap: b <= a(r - a - beta) violated (b = {}, a(r - a - beta) = {bound})",
                    params.b[0]
                ));
            } else {
                out.push(format!(
                    "inward drift at the yield cap: r - a - max_k (1'beta)_k - 1'b/a >= 0 violated (slack {:.6e})",
                    self.slack_cap
                ));
            }
        }
        out
    }
}

fn neg_part(v: f64) -> f64 {
    v.min(0.0)
}

/// Minimum over `l != k` of `f(l)`, defined as 0 when the set is empty.
fn min_off_diagonal(d: usize, k: usize, f: impl Fn(usize) -> f64) -> f64 {
    (0..d).filter(|&l| l != k).map(f).reduce(f64::min).unwrap_or(0.0)
}

/// Evaluates every parameter inequality.
///
/// For `d = 1` this reduces to `0 <= b <= a (r - a - beta)`, with
/// non-attainment iff `nu^2/2 < b < a(r - a - beta) - nu^2/2`.
pub fn validate_admissibility(params: &ModelParams) -> AdmissibilityReport {
    let d = params.d();
    let a = params.a;
    let sum_b: f64 = params.b.iter().sum();

    let slack_factor: Vec<f64> = (0..d)
        .map(|k| params.b[k] + a * min_off_diagonal(d, k, |l| neg_part(params.beta[k][l])))
        .collect();
    let max_col = (0..d).map(|k| params.beta_column_sum(k)).fold(f64::NEG_INFINITY, f64::max);
    let slack_cap = params.r - a - max_col - sum_b / a;

    let nonattain_y = (0..d)
        .map(|k| {
            let half = 0.5 * params.nu[k] * params.nu[k];
            params.b[k] + min_off_diagonal(d, k, |l| neg_part(a * params.beta[k][l] + half)) > half
        })
        .collect();
    let max_vol_col = (0..d)
        .map(|k| params.nu[k] * params.nu[k] / (2.0 * a) + params.beta_column_sum(k))
        .fold(f64::NEG_INFINITY, f64::max);
    let nonattain_x = params.r - a - max_vol_col - sum_b / a > 0.0;

    AdmissibilityReport {
        admissible: slack_factor.iter().all(|s| *s >= 0.0) && slack_cap >= 0.0,
        slack_factor,
        slack_cap,
        nonattain_y,
        nonattain_x,
    }
}

/// Fails with [`Error::Inadmissible`] naming each violated inequality.
pub fn ensure_admissible(params: &ModelParams) -> Result<()> {
    let report = validate_admissibility(params);
    if report.admissible {
        Ok(())
    } else {
        Err(Error::Inadmissible(report.violations(params).join("; ")))
    }
}

/// Instantaneous volatility of the log price, `sigma (1 - delta/a)`.
pub fn log_price_volatility(params: &ModelParams, state: &State) -> Result<f64> {
    Ok(params.sigma * (1.0 - dividend_yield(state)? / params.a))
}

/// Mean-reversion level `b / (r - beta - sigma^2)` of the single-factor
/// dividend yield once higher-order drift terms are dropped.
pub fn yield_reversion_level(params: &ModelParams) -> Result<f64> {
    if params.d() != 1 {
        return Err(Error::Domain("yield reversion level is defined for d = 1".into()));
    }
    let denom = params.r - params.beta[0][0] - params.sigma * params.sigma;
    if denom <= 0.0 {
        return Err(Error::Domain("r - beta - sigma^2 must be positive".into()));
    }
    Ok(params.b[0] / denom)
}
