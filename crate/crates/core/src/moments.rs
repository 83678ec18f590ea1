//! Conditional moments via the matrix exponential of the generator, and the
//! linear prices built from them: stock futures, dividend futures, moments of
//! dividends paid over a window, and the present value of future dividends.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::generator::{build_generator, eval_basis, GeneratorMatrix, MultiIndex, PolyBasis};
use crate::model::{in_state_space, JumpSpec, ModelParams, State};

/// `E_t[H_n(C_T, X_T, Y_T)]` aligned with the basis order.
#[derive(Debug, Clone)]
pub struct MomentSet {
    pub basis: Arc<PolyBasis>,
    pub t: f64,
    pub maturity: f64,
    pub values: DVector<f64>,
}

impl MomentSet {
    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.basis.index_of(m).map(|k| self.values[k])
    }

    /// `E_t[C_T^i X_T^j]`.
    pub fn cx(&self, i: u32, j: u32) -> Option<f64> {
        self.basis.index_cx(i, j).map(|k| self.values[k])
    }
}

/// `exp(G dt)` assembled from the exponentials of the homogeneous-degree
/// blocks of `G`.
pub fn propagator(g: &GeneratorMatrix, dt: f64) -> Result<DMatrix<f64>> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!("horizon must be finite and >= 0, got {dt}")));
    }
    let basis = g.basis();
    let n = basis.len();
    let mut out = DMatrix::zeros(n, n);
    for k in 0..=basis.degree() {
        let range = basis.degree_range(k);
        let block = if dt == 0.0 {
            DMatrix::identity(range.len(), range.len())
        } else {
            expm(&(g.degree_block(k) * dt))?
        };
        out.view_mut((range.start, range.start), (range.len(), range.len())).copy_from(&block);
    }
    Ok(out)
}

fn check_state(params: &ModelParams, state: &State) -> Result<()> {
    let m = in_state_space(params, state);
    if !m.inside {
        return Err(Error::Domain(format!(
            "state outside E (x = {}, min y = {}, a x - 1'y = {})",
            m.stock, m.min_factor, m.cap
        )));
    }
    Ok(())
}

fn generator(params: &ModelParams, jump: &JumpSpec, basis: PolyBasis) -> Result<GeneratorMatrix> {
    build_generator(params, jump, &Arc::new(basis))
}

fn moments_on(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    t: f64,
    maturity: f64,
    basis: PolyBasis,
) -> Result<MomentSet> {
    if maturity < t {
        return Err(Error::Domain(format!("maturity {maturity} precedes valuation time {t}")));
    }
    check_state(params, state)?;
    let g = generator(params, jump, basis)?;
    let h = eval_basis(g.basis(), state);
    let values = propagator(&g, maturity - t)? * h;
    Ok(MomentSet { basis: Arc::clone(g.basis()), t, maturity, values })
}

/// Moments of `(C_T, X_T, Y_T)` up to total degree `n`.
pub fn conditional_moments(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    t: f64,
    maturity: f64,
    n: u32,
) -> Result<MomentSet> {
    moments_on(params, jump, state, t, maturity, PolyBasis::new(params.d(), n)?)
}

/// Stock futures price `E_t[X_T]`.
pub fn stock_futures(params: &ModelParams, jump: &JumpSpec, state: &State, t: f64, maturity: f64) -> Result<f64> {
    let m = conditional_moments(params, jump, state, t, maturity, 1)?;
    Ok(m.cx(0, 1).expect("x is in every basis"))
}

/// Dividend futures price `E_t[C_{T1} - C_{T0}]`.
///
/// When the window has already started (`t0 < t`), `state.c` is read as the
/// dividends paid since `t0`.
pub fn dividend_futures(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    t: f64,
    t0: f64,
    t1: f64,
) -> Result<f64> {
    if t1 < t0 {
        return Err(Error::Domain(format!("window end {t1} precedes window start {t0}")));
    }
    if t1 < t {
        return Err(Error::Domain(format!("window end {t1} precedes valuation time {t}")));
    }
    check_state(params, state)?;
    let g = generator(params, jump, PolyBasis::new(params.d(), 1)?)?;
    let h = eval_basis(g.basis(), state);
    let c = g.basis().index_cx(1, 0).expect("c is in the basis");
    let end = (propagator(&g, t1 - t)? * &h)[c];
    if t0 >= t {
        let start = (propagator(&g, t0 - t)? * &h)[c];
        Ok(end - start)
    } else {
        Ok(end)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Raw moments `E_t[(C_{T1} - C_{T0})^m]` for `m = 1..=n`.
///
/// Uses the tower property at `T0`: the inner conditional moments of `C_{T1}`
/// are polynomials in the state at `T0`, which are multiplied by powers of
/// `-C_{T0}` and propagated back to `t` on the degree-`n` basis.
pub fn cumulative_dividend_moments(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    t: f64,
    t0: f64,
    t1: f64,
    n: u32,
) -> Result<Vec<f64>> {
    if !(t <= t0 && t0 <= t1) {
        return Err(Error::Domain(format!("need t <= T0 <= T1, got t = {t}, T0 = {t0}, T1 = {t1}")));
    }
    if n < 1 {
        return Err(Error::Domain("need at least one moment".into()));
    }
    check_state(params, state)?;
    // The window increment does not depend on C_t; dropping it keeps the
    // alternating binomial sum from cancelling large powers of C_{T0}.
    let state = &State { c: 0.0, ..state.clone() };
    if t0 == t {
        return window_moments_from_now(params, jump, state, t, t1, n);
    }

    let g = generator(params, jump, PolyBasis::new(params.d(), n)?)?;
    let basis = Arc::clone(g.basis());
    let inner = propagator(&g, t1 - t0)?;
    let outer = propagator(&g, t0 - t)? * eval_basis(&basis, state);

    let mut out = Vec::with_capacity(n as usize);
    for m in 1..=n {
        let mut total = 0.0;
        for k in 0..=m {
            let row = basis.index_cx(k, 0).expect("c^k is in the basis");
            let shift = m - k;
            let sign = if shift % 2 == 0 { 1.0 } else { -1.0 };
            let mut term = 0.0;
            for (col, coef) in inner.row(row).iter().enumerate() {
                if *coef == 0.0 {
                    continue;
                }
                let mut e = basis.monomials()[col].exponents().to_vec();
                e[0] += shift;
                let idx = basis
                    .index_of(&MultiIndex::from_exponents(e))
                    .ok_or_else(|| Error::Numeric("shifted monomial outside degree-n basis".into()))?;
                term += coef * outer[idx];
            }
            total += binomial(m, k) * sign * term;
        }
        out.push(total);
    }
    Ok(out)
}

/// Window starting at the valuation time: reset `c` to zero and read the
/// pure `c^m` moments.
fn window_moments_from_now(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    t: f64,
    t1: f64,
    n: u32,
) -> Result<Vec<f64>> {
    let reset = State { c: 0.0, ..state.clone() };
    let m = conditional_moments(params, jump, &reset, t, t1, n)?;
    Ok((1..=n).map(|k| m.cx(k, 0).expect("c^k is in the basis")).collect())
}

/// Raw moments `E_t[X_T^k]`, `k = 1..=n`, from the `(x, y)` basis alone.
pub fn stock_price_moments(
    params: &ModelParams,
    jump: &JumpSpec,
    state: &State,
    t: f64,
    maturity: f64,
    n: u32,
) -> Result<Vec<f64>> {
    let m = moments_on(params, jump, state, t, maturity, PolyBasis::without_c(params.d(), n)?)?;
    Ok((1..=n).map(|k| m.cx(0, k).expect("x^k is in the basis")).collect())
}

/// Split of the current stock price over a horizon `h`:
/// `x = pv_dividends + discounted_terminal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PvSplit {
    /// `E_t[∫_t^{t+h} e^{-r(s-t)} D_s ds]`
    pub pv_dividends: f64,
    /// `e^{-rh} E_t[X_{t+h}]`
    pub discounted_terminal: f64,
}

/// Linear system for `(P, x~, y~)` where `x~, y~` are discounted expected
/// stock and factors and `P` accumulates discounted expected dividends.
fn discounted_linear_system(params: &ModelParams) -> DMatrix<f64> {
    let d = params.d();
    let n = d + 2;
    let mut a = DMatrix::zeros(n, n);
    for k in 0..d {
        a[(0, 2 + k)] = 1.0;
        a[(1, 2 + k)] = -1.0;
        a[(2 + k, 1)] = params.b()[k];
        for l in 0..d {
            a[(2 + k, 2 + l)] = params.beta()[k][l];
        }
        a[(2 + k, 2 + k)] -= params.r();
    }
    a
}

/// Present value of dividends over `[t, t + horizon]` and the discounted
/// expected terminal stock price. The two sum to `state.x`.
pub fn pv_dividends(params: &ModelParams, state: &State, horizon: f64) -> Result<PvSplit> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if horizon == 0.0 {
        return Ok(PvSplit { pv_dividends: 0.0, discounted_terminal: state.x });
    }
    let a = discounted_linear_system(params);
    let z0 = DVector::from_iterator(a.nrows(), [0.0, state.x].into_iter().chain(state.y.iter().copied()));
    let z = expm(&(a * horizon))? * z0;
    Ok(PvSplit { pv_dividends: z[0], discounted_terminal: z[1] })
}

/// Present value of all future dividends, approximated at a finite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PvLimit {
    pub split: PvSplit,
    pub horizon: f64,
    /// `|PV(h) - PV(0.75 h)| < 1e-6 x` at the returned horizon.
    pub converged: bool,
}

/// Starts at 200 years and doubles the horizon until the PV stops moving
/// (relative `1e-6` between `0.75 h` and `h`) or `h` exceeds 10^5 years.
pub fn pv_dividends_limit(params: &ModelParams, state: &State) -> Result<PvLimit> {
    let tol = 1e-6 * state.x;
    let mut horizon = 200.0;
    loop {
        let split = pv_dividends(params, state, horizon)?;
        let earlier = pv_dividends(params, state, 0.75 * horizon)?;
        let converged = (split.pv_dividends - earlier.pv_dividends).abs() < tol;
        if converged || horizon >= 1e5 {
            return Ok(PvLimit { split, horizon, converged });
        }
        horizon *= 2.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpDist;
    use approx::assert_relative_eq;

    fn calibrated_a02() -> ModelParams {
        ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0103, -0.3439, 0.0194).unwrap()
    }

    fn bubble_params() -> ModelParams {
        // b = 0 and r - beta = 0.3544 >= a
        ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0, -0.3439, 0.0194).unwrap()
    }

    fn s0() -> State {
        State::new(0.0, 1.0, vec![0.0371])
    }

    #[test]
    fn zero_horizon_returns_basis_values() {
        let st = State::new(0.2, 1.1, vec![0.05]);
        let m = conditional_moments(&calibrated_a02(), &JumpSpec::none(), &st, 0.5, 0.5, 3).unwrap();
        assert_eq!(m.values, eval_basis(&m.basis, &st));
        assert_eq!(m.values[0], 1.0);
    }

    #[test]
    fn factor_mean_without_stock_loading() {
        let p = bubble_params();
        let m = conditional_moments(&p, &JumpSpec::none(), &s0(), 0.0, 2.5, 2).unwrap();
        let y = m.get(&MultiIndex::new(0, 0, &[1])).unwrap();
        assert_relative_eq!(y, (-0.3439f64 * 2.5).exp() * 0.0371, max_relative = 1e-13);
    }

    #[test]
    fn stock_futures_cases() {
        let p = calibrated_a02();
        let st = State::new(0.0, 1.3, vec![0.02]);
        assert_eq!(stock_futures(&p, &JumpSpec::none(), &st, 1.0, 1.0).unwrap(), 1.3);
        let q = ModelParams::single_factor(0.03, 0.2, 0.2813, 0.0, -0.3439, 0.0194).unwrap();
        let flat = State::new(0.0, 1.3, vec![0.0]);
        assert_relative_eq!(
            stock_futures(&q, &JumpSpec::none(), &flat, 0.0, 2.0).unwrap(),
            1.3 * (0.06f64).exp(),
            max_relative = 1e-14
        );
        let n1 = conditional_moments(&p, &JumpSpec::none(), &st, 0.0, 0.7, 1).unwrap().cx(0, 1).unwrap();
        assert_eq!(stock_futures(&p, &JumpSpec::none(), &st, 0.0, 0.7).unwrap(), n1);
    }

    #[test]
    fn dividend_futures_without_stock_loading_has_closed_form() {
        let p = bubble_params();
        let beta = -0.3439f64;
        let (t0, t1) = (1.0, 2.0);
        let expected = 0.0371 * ((beta * t1).exp() - (beta * t0).exp()) / beta;
        let got = dividend_futures(&p, &JumpSpec::none(), &s0(), 0.0, t0, t1).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-13);
        assert_eq!(dividend_futures(&p, &JumpSpec::none(), &s0(), 0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(dividend_futures(&p, &JumpSpec::none(), &s0(), 0.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn started_window_agrees_with_forward_branch_at_boundary() {
        let p = calibrated_a02();
        let a = dividend_futures(&p, &JumpSpec::none(), &s0(), 0.0, 0.0, 1.0).unwrap();
        let b = dividend_futures(&p, &JumpSpec::none(), &s0(), 0.0, -1e-300, 1.0).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-14);
        // accrued dividends add one-for-one
        let accrued = State::new(0.01, 1.0, vec![0.0371]);
        let c = dividend_futures(&p, &JumpSpec::none(), &accrued, 0.0, -0.5, 1.0).unwrap();
        assert_relative_eq!(c, a + 0.01, max_relative = 1e-14);
    }

    #[test]
    fn dividend_futures_ignore_volatilities_and_jumps() {
        let p = calibrated_a02();
        let base = dividend_futures(&p, &JumpSpec::none(), &s0(), 0.0, 1.0, 3.0).unwrap();
        let q = p.with_volatilities(0.5, vec![0.0]).unwrap();
        let jump = JumpSpec::new(1.0, JumpDist::PointMass { z0: -0.2 }).unwrap();
        assert_eq!(dividend_futures(&q, &jump, &s0(), 0.0, 1.0, 3.0).unwrap(), base);
    }

    #[test]
    fn first_window_moment_is_the_futures_price() {
        let p = calibrated_a02();
        let m = cumulative_dividend_moments(&p, &JumpSpec::none(), &s0(), 0.0, 1.0, 2.0, 3).unwrap();
        let f = dividend_futures(&p, &JumpSpec::none(), &s0(), 0.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(m[0], f, max_relative = 1e-12);
    }

    /// Independent route: `C_{T1} - C_{T0}` given the state at `T0` has the law
    /// of `C_{T1}` started from `c = 0`, so only the `c`-free part of the inner
    /// polynomial matters.
    fn window_moments_by_reset(p: &ModelParams, jump: &JumpSpec, st: &State, t0: f64, t1: f64, n: u32) -> Vec<f64> {
        let basis = Arc::new(PolyBasis::new(p.d(), n).unwrap());
        let g = build_generator(p, jump, &basis).unwrap();
        let inner = propagator(&g, t1 - t0).unwrap();
        let outer = conditional_moments(p, jump, st, 0.0, t0, n).unwrap();
        (1..=n)
            .map(|m| {
                let row = basis.index_cx(m, 0).unwrap();
                basis
                    .monomials()
                    .iter()
                    .enumerate()
                    .filter(|(_, mono)| mono.i() == 0)
                    .map(|(col, mono)| inner[(row, col)] * outer.get(mono).unwrap())
                    .sum()
            })
            .collect()
    }

    #[test]
    fn window_moments_match_reset_route() {
        let p = calibrated_a02();
        let jump = JumpSpec::new(0.4, JumpDist::TwoPoint { z1: -0.3, p: 0.5, z2: 0.1 }).unwrap();
        for j in [JumpSpec::none(), jump] {
            let st = State::new(0.7, 1.0, vec![0.0371]);
            let a = cumulative_dividend_moments(&p, &j, &st, 0.0, 0.8, 1.9, 6).unwrap();
            let b = window_moments_by_reset(&p, &j, &st, 0.8, 1.9, 6);
            for (x, y) in a.iter().zip(&b) {
                assert_relative_eq!(x, y, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn window_starting_now_uses_reset_and_matches_limit() {
        let p = calibrated_a02();
        let st = State::new(0.3, 1.0, vec![0.0371]);
        let now = cumulative_dividend_moments(&p, &JumpSpec::none(), &st, 0.0, 0.0, 1.0, 4).unwrap();
        let near = cumulative_dividend_moments(&p, &JumpSpec::none(), &st, 0.0, 1e-9, 1.0, 4).unwrap();
        for (x, y) in now.iter().zip(&near) {
            assert_relative_eq!(x, y, max_relative = 1e-6);
        }
        assert!(cumulative_dividend_moments(&p, &JumpSpec::none(), &st, 0.5, 0.2, 1.0, 2).is_err());
    }

    #[test]
    fn deterministic_stock_moments() {
        let p = ModelParams::single_factor(0.02, 0.2, 0.0, 0.0, -0.3, 0.0).unwrap();
        let st = State::new(0.0, 1.5, vec![0.0]);
        let m = stock_price_moments(&p, &JumpSpec::none(), &st, 0.0, 1.5, 4).unwrap();
        for (k, v) in m.iter().enumerate() {
            assert_relative_eq!(*v, (1.5 * (0.03f64).exp()).powi(k as i32 + 1), max_relative = 1e-13);
        }
    }

    #[test]
    fn stock_moments_match_augmented_basis_and_have_positive_variance() {
        let p = calibrated_a02();
        let m = stock_price_moments(&p, &JumpSpec::none(), &s0(), 0.0, 0.25, 6).unwrap();
        let full = conditional_moments(&p, &JumpSpec::none(), &s0(), 0.0, 0.25, 6).unwrap();
        for k in 1..=6 {
            assert_relative_eq!(m[k - 1], full.cx(0, k as u32).unwrap(), max_relative = 1e-13);
        }
        assert_eq!(m[0], stock_futures(&p, &JumpSpec::none(), &s0(), 0.0, 0.25).unwrap());
        assert!(m[1] - m[0] * m[0] > 0.0);
    }

    #[test]
    fn pv_split_sums_to_stock() {
        let p = calibrated_a02();
        assert_eq!(pv_dividends(&p, &s0(), 0.0).unwrap(), PvSplit { pv_dividends: 0.0, discounted_terminal: 1.0 });
        for h in [0.5, 1.0, 30.0, 200.0] {
            let s = pv_dividends(&p, &s0(), h).unwrap();
            assert_relative_eq!(s.pv_dividends + s.discounted_terminal, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn pv_at_200y_against_eigen_decomposition() {
        // Discounted means solve x' = -y, y' = b x + (beta - r) y; with
        // roots l1,l2 of l^2 - (beta - r) l - b... computed by hand here.
        let (r, b, beta) = (0.01f64, 0.0103f64, -0.3439f64);
        let tr = beta - r;
        let disc = (tr * tr - 4.0 * b).sqrt();
        let (l1, l2) = (0.5 * (tr + disc), 0.5 * (tr - disc));
        // x(s) = A e^{l1 s} + B e^{l2 s}, x(0) = 1, x'(0) = -D0
        let a_coef = (-0.0371 - l2) / (l1 - l2);
        let b_coef = 1.0 - a_coef;
        let h = 200.0;
        let terminal = a_coef * (l1 * h).exp() + b_coef * (l2 * h).exp();
        let s = pv_dividends(&calibrated_a02(), &s0(), h).unwrap();
        assert_relative_eq!(s.discounted_terminal, terminal, max_relative = 1e-9);
        assert_relative_eq!(s.discounted_terminal, 1.6332e-3, max_relative = 1e-3);
    }

    #[test]
    fn pv_without_stock_loading_leaves_a_bubble() {
        let p = bubble_params();
        let lim = pv_dividends_limit(&p, &s0()).unwrap();
        assert!(lim.converged);
        assert_relative_eq!(lim.split.pv_dividends, 0.0371 / (0.01 + 0.3439), max_relative = 1e-10);
        assert!(lim.split.discounted_terminal > 0.5);
    }

    #[test]
    fn pv_limit_reaches_stock_price_with_stock_loading() {
        let lim = pv_dividends_limit(&calibrated_a02(), &s0()).unwrap();
        assert!(lim.converged);
        assert!(lim.horizon > 200.0);
        assert_relative_eq!(lim.split.pv_dividends, 1.0, max_relative = 1e-5);
    }

    #[test]
    fn block_propagator_matches_dense_exponential() {
        let p = calibrated_a02();
        let jump = JumpSpec::new(0.4, JumpDist::PointMass { z0: -0.25 }).unwrap();
        let g = build_generator(&p, &jump, &Arc::new(PolyBasis::new(1, 5).unwrap())).unwrap();
        let dense = expm(&(g.matrix() * 1.7)).unwrap();
        assert_relative_eq!(propagator(&g, 1.7).unwrap(), dense, max_relative = 1e-10, epsilon = 1e-14);
    }

    #[test]
    fn outside_state_and_reversed_horizon_are_errors() {
        let p = calibrated_a02();
        let bad = State::new(0.0, 1.0, vec![0.5]);
        assert!(conditional_moments(&p, &JumpSpec::none(), &bad, 0.0, 1.0, 2).is_err());
        assert!(conditional_moments(&p, &JumpSpec::none(), &s0(), 1.0, 0.5, 2).is_err());
    }
}
