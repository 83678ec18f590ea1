//! Maximum-entropy density on the positive half-line matching a finite set
//! of raw moments, `f(x) = exp(-sum_n lambda_n x^n)`.
//!
//! The Lagrange multipliers are found by Newton's method on the convex dual.
//! Internally the problem is posed in the standardized variable
//! `z = (x - M_1) / sd`, which keeps the Hessian (a covariance matrix of
//! powers of `z`) well conditioned, and on a truncated domain that is widened
//! until the fitted density is negligible at the edges.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::CompositeRule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxEntOptions {
    /// Initial half-width of the domain in standard deviations.
    pub initial_width: f64,
    /// Largest half-width tried before giving up.
    pub max_width: f64,
    /// Gauss-Legendre nodes per panel; panels are one standard deviation wide.
    pub nodes_per_panel: usize,
    pub max_iter: usize,
    /// Relative tolerance on the moment residuals.
    pub tol: f64,
    /// Bound on the tail mass estimate at the domain edges.
    pub edge_tol: f64,
}

impl Default for MaxEntOptions {
    fn default() -> Self {
        Self {
            initial_width: 10.0,
            max_width: 80.0,
            nodes_per_panel: 20,
            max_iter: 200,
            tol: 1e-11,
            edge_tol: 1e-12,
        }
    }
}

/// Fitted maximum-entropy density.
#[derive(Debug, Clone)]
pub struct MaxEntDensity {
    moments: Vec<f64>,
    center: f64,
    scale: f64,
    /// Multipliers on powers of `z`, index 0 holds the log normalizer.
    internal: Vec<f64>,
    lower: f64,
    upper: f64,
    rule: CompositeRule,
    per_panel: usize,
    truncated: bool,
    iterations: usize,
    residual: f64,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Moments of `z = (x - center)/scale` from raw moments of `x`.
fn standardized_moments(raw: &[f64], center: f64, scale: f64) -> Vec<f64> {
    (0..raw.len())
        .map(|n| {
            let central: f64 = (0..=n)
                .map(|k| binomial(n, k) * raw[k] * (-center).powi((n - k) as i32))
                .sum();
            central / scale.powi(n as i32)
        })
        .collect()
}

/// Rejects sequences that no density on `[0, inf)` can have.
fn check_feasible(m: &[f64]) -> Result<()> {
    if m.len() < 2 {
        return Err(Error::Infeasible("need M_0 and at least M_1".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Infeasible("non-finite moment".into()));
    }
    if (m[0] - 1.0).abs() > 1e-12 {
        return Err(Error::Infeasible(format!("M_0 must be 1, got {}", m[0])));
    }
    if m[1] <= 0.0 {
        return Err(Error::Infeasible(format!("M_1 must be positive on [0, inf), got {}", m[1])));
    }
    if m.len() > 2 {
        let var = m[2] - m[1] * m[1];
        if var <= 1e-14 * m[1] * m[1] {
            return Err(Error::Infeasible(format!("M_2 - M_1^2 = {var:e} is not positive")));
        }
    }
    if m.len() > 3 && m[1] * m[3] < m[2] * m[2] {
        return Err(Error::Infeasible("M_1 M_3 < M_2^2 (shifted Hankel minor negative)".into()));
    }
    Ok(())
}

struct Evaluation {
    /// `E[z^k]`, `k = 0..=2N`
    moments: Vec<f64>,
    log_partition: f64,
}

fn evaluate(lambda: &[f64], nodes_z: &[f64], weights_z: &[f64], n: usize) -> Evaluation {
    let exponents: Vec<f64> = nodes_z
        .iter()
        .map(|z| {
            let mut acc = 0.0;
            for l in lambda.iter().rev() {
                acc = acc * z + l;
            }
            -acc * z
        })
        .collect();
    let shift = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sums = vec![0.0; 2 * n + 1];
    for ((z, w), e) in nodes_z.iter().zip(weights_z).zip(&exponents) {
        let f = w * (e - shift).exp();
        let mut p = f;
        for s in sums.iter_mut() {
            *s += p;
            p *= z;
        }
    }
    let z0 = sums[0];
    Evaluation {
        moments: sums.iter().map(|s| s / z0).collect(),
        log_partition: z0.ln() + shift,
    }
}

/// Newton iteration on the dual for the multipliers `lambda_1..lambda_N` in `z`.
fn newton(target: &[f64], nodes_z: &[f64], weights_z: &[f64], start: Vec<f64>, opts: &MaxEntOptions) -> Result<(Vec<f64>, f64, usize, f64)> {
    let n = target.len() - 1;
    let dual = |lam: &[f64], ev: &Evaluation| -> f64 {
        ev.log_partition + lam.iter().zip(&target[1..]).map(|(l, m)| l * m).sum::<f64>()
    };
    let scale: Vec<f64> = target[1..].iter().map(|m| m.abs().max(1.0)).collect();
    let mut lam = start;
    let mut ev = evaluate(&lam, nodes_z, weights_z, n);
    let mut value = dual(&lam, &ev);
    let mut residual = f64::INFINITY;
    for iter in 0..opts.max_iter {
        let grad = DVector::from_iterator(n, (1..=n).map(|k| target[k] - ev.moments[k]));
        residual = grad.iter().zip(&scale).map(|(g, s)| (g / s).abs()).fold(0.0, f64::max);
        if residual < opts.tol {
            return Ok((lam, ev.log_partition, iter, residual));
        }
        let hess = DMatrix::from_fn(n, n, |i, j| ev.moments[i + j + 2] - ev.moments[i + 1] * ev.moments[j + 1]);
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => hess
                .lu()
                .solve(&grad)
                .ok_or_else(|| Error::Numeric("singular maximum-entropy Hessian".into()))?,
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<f64> = lam.iter().zip(step.iter()).map(|(l, s)| l - t * s).collect();
            let trial_ev = evaluate(&trial, nodes_z, weights_z, n);
            let trial_value = dual(&trial, &trial_ev);
            let slope: f64 = grad.iter().zip(step.iter()).map(|(g, s)| g * s).sum();
            if trial_value.is_finite() && trial_value <= value - 1e-4 * t * slope.abs() + 1e-15 * value.abs() {
                lam = trial;
                ev = trial_ev;
                value = trial_value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Err(Error::Convergence {
        context: "maximum-entropy dual Newton".into(),
        iterations: opts.max_iter,
        residual,
    })
}

/// Fits the maximum-entropy density to `moments = [M_0, M_1, .., M_N]`.
pub fn fit_maxent(moments: &[f64]) -> Result<MaxEntDensity> {
    fit_maxent_with(moments, &MaxEntOptions::default())
}

pub fn fit_maxent_with(moments: &[f64], opts: &MaxEntOptions) -> Result<MaxEntDensity> {
    check_feasible(moments)?;
    let n = moments.len() - 1;
    let center = moments[1];
    // with only the mean available, use the exponential law's spread
    let scale = if n >= 2 { (moments[2] - moments[1] * moments[1]).sqrt() } else { moments[1] };
    let target = standardized_moments(moments, center, scale);

    // a fit on a too-narrow domain is a poor start on a wider one (its
    // leading multiplier may be negative), so each width starts afresh
    let mut start = vec![0.0; n];
    if n >= 2 {
        start[1] = 0.5;
    } else {
        start[0] = 1.0;
    }

    // Widen until the density is negligible at the edge. For some moment
    // sequences (odd N) no density on the whole half-line exists; the fit on
    // the initial truncated domain is then returned.
    let mut width = opts.initial_width;
    let mut first_fit: Option<MaxEntDensity> = None;
    let mut last_err = None;
    while width <= opts.max_width {
        let z_lo = (-center / scale).max(-width);
        let z_hi = width;
        let rule = CompositeRule::uniform_with_breaks(z_lo, z_hi, 1.0, &[], opts.nodes_per_panel);
        match newton(&target, &rule.nodes, &rule.weights, start.clone(), opts) {
            Ok((lam, log_z, iterations, residual)) => {
                let mut internal = Vec::with_capacity(n + 1);
                internal.push(log_z);
                internal.extend_from_slice(&lam);
                let density = MaxEntDensity::assemble(moments.to_vec(), center, scale, internal, z_lo, z_hi, opts, iterations, residual);
                if density.edge_mass() < opts.edge_tol {
                    return Ok(density);
                }
                if first_fit.is_none() {
                    first_fit = Some(density);
                }
            }
            Err(e) => last_err = Some(e),
        }
        width *= 2.0;
    }
    if let Some(mut density) = first_fit {
        density.truncated = true;
        return Ok(density);
    }
    Err(last_err.expect("at least one width was tried"))
}

impl MaxEntDensity {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        moments: Vec<f64>,
        center: f64,
        scale: f64,
        internal: Vec<f64>,
        z_lo: f64,
        z_hi: f64,
        opts: &MaxEntOptions,
        iterations: usize,
        residual: f64,
    ) -> Self {
        let lower = (center + scale * z_lo).max(0.0);
        let upper = center + scale * z_hi;
        let rule = CompositeRule::uniform_with_breaks(lower, upper, scale, &[], opts.nodes_per_panel);
        Self { moments, center, scale, internal, lower, upper, rule, per_panel: opts.nodes_per_panel, truncated: false, iterations, residual }
    }

    /// Density value at `x`; zero outside the truncated domain.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        let z = (x - self.center) / self.scale;
        let mut acc = 0.0;
        for l in self.internal[1..].iter().rev() {
            acc = acc * z + l;
        }
        (-(self.internal[0] + acc * z)).exp() / self.scale
    }

    /// Estimated moment mass lost beyond the domain edges.
    fn edge_mass(&self) -> f64 {
        let n = self.moments.len() - 1;
        let top = self.moments[n].abs().max(f64::MIN_POSITIVE);
        let upper = self.pdf(self.upper) * self.scale * self.upper.abs().max(1.0).powi(n as i32) / top;
        let lower = if self.lower > 0.0 { self.pdf(self.lower) * self.scale } else { 0.0 };
        upper.max(lower)
    }

    /// Multipliers `lambda_0..lambda_N` on raw powers of `x`.
    pub fn lambdas(&self) -> Vec<f64> {
        let n = self.internal.len() - 1;
        let (m, s) = (self.center, self.scale);
        let mut out = vec![0.0; n + 1];
        out[0] = self.internal[0] + s.ln();
        for (j, lj) in self.internal.iter().enumerate().skip(1) {
            for (k, slot) in out.iter_mut().enumerate().take(j + 1) {
                *slot += lj * binomial(j, k) * (-m).powi((j - k) as i32) / s.powi(j as i32);
            }
        }
        out
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }
    pub fn input_moments(&self) -> &[f64] {
        &self.moments
    }
    /// The density does not decay to zero inside its domain; it is a
    /// maximum-entropy density on the truncated interval only.
    pub fn is_truncated(&self) -> bool {
        self.truncated
    }
    pub fn iterations(&self) -> usize {
        self.iterations
    }
    /// Largest relative moment residual of the standardized problem at exit.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// `∫ payoff(x) f(x) dx`; put the payoff's kinks in `breaks` so panels
    /// split there.
    pub fn integrate_payoff(&self, payoff: impl Fn(f64) -> f64, breaks: &[f64]) -> f64 {
        let rule = if breaks.iter().any(|b| *b > self.lower && *b < self.upper) {
            CompositeRule::uniform_with_breaks(self.lower, self.upper, self.scale, breaks, self.per_panel)
        } else {
            self.rule.clone()
        };
        rule.integrate(|x| payoff(x) * self.pdf(x))
    }

    /// Raw moment `∫ x^k f(x) dx` under the fitted density.
    pub fn moment(&self, k: u32) -> f64 {
        self.integrate_payoff(|x| x.powi(k as i32), &[])
    }

    /// Differential entropy `-∫ f ln f`.
    pub fn entropy(&self) -> f64 {
        self.integrate_payoff(
            |x| {
                let p = self.pdf(x);
                if p > 0.0 {
                    -p.ln()
                } else {
                    0.0
                }
            },
            &[],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    #[test]
    fn exponential_from_mean_only() {
        let f = fit_maxent(&[1.0, 2.0]).unwrap();
        let l = f.lambdas();
        assert_relative_eq!(l[0], 2f64.ln(), epsilon = 1e-10);
        assert_relative_eq!(l[1], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn unit_exponential_from_six_moments() {
        let m: Vec<f64> = (0..=6).map(factorial).collect();
        let f = fit_maxent(&m).unwrap();
        let l = f.lambdas();
        assert_relative_eq!(l[1], 1.0, epsilon = 1e-6);
        for (k, v) in l.iter().enumerate() {
            if k != 1 {
                assert!(v.abs() < 1e-6, "lambda_{k} = {v}");
            }
        }
        for k in 0..=6 {
            assert_relative_eq!(f.moment(k), m[k as usize], max_relative = 1e-8);
        }
    }

    #[test]
    fn rejects_infeasible_sequences() {
        assert!(matches!(fit_maxent(&[1.0, 1.0, 0.9]), Err(Error::Infeasible(_))));
        assert!(matches!(fit_maxent(&[0.9, 1.0, 2.0]), Err(Error::Infeasible(_))));
        assert!(matches!(fit_maxent(&[1.0, -1.0, 2.0]), Err(Error::Infeasible(_))));
        assert!(matches!(fit_maxent(&[1.0, 1.0, 1.0]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn call_payoff_under_unit_exponential() {
        let m: Vec<f64> = (0..=6).map(factorial).collect();
        let f = fit_maxent(&m).unwrap();
        let call = f.integrate_payoff(|x| (x - 1.0f64).max(0.0), &[1.0]);
        assert_relative_eq!(call, (-1.0f64).exp(), max_relative = 1e-7);
        assert_relative_eq!(f.integrate_payoff(|_| 1.0, &[]), 1.0, max_relative = 1e-10);
    }

    #[test]
    fn matched_mean_of_exponential() {
        let f = fit_maxent(&[1.0, 2.0]).unwrap();
        assert_relative_eq!(f.integrate_payoff(|x| x, &[]), 2.0, max_relative = 1e-10);
    }

    #[test]
    fn narrow_lognormal_moments() {
        // lognormal with mean ~1 and log-sd 0.115, roughly a quarter-year stock price
        let (mu, s) = (-0.5 * 0.115f64 * 0.115, 0.115f64);
        let m: Vec<f64> = (0..=6).map(|k| (k as f64 * mu + 0.5 * (k as f64 * s).powi(2)).exp()).collect();
        let f = fit_maxent(&m).unwrap();
        for k in 0..=6 {
            assert_relative_eq!(f.moment(k), m[k as usize], max_relative = 1e-8);
        }
    }

    #[test]
    fn entropy_does_not_increase_with_more_constraints() {
        // gamma(2, 1/2)
        let m: Vec<f64> = (0..=4).map(|k| factorial(k + 1) * 0.5f64.powi(k as i32)).collect();
        let f2 = fit_maxent(&m[..3]).unwrap();
        let f4 = fit_maxent(&m[..5]).unwrap();
        assert!(f4.entropy() <= f2.entropy() + 1e-10);
    }
}
