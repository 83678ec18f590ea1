//! Helpers shared by the integration tests: reference parameter sets, the
//! bundled market, random admissible models and an independent pointwise
//! generator.
#![allow(dead_code)]

use std::path::PathBuf;

use polydiv::calibration::{model_dividend_iv, model_futures, model_stock_iv, CalibPoint, MarketData};
use polydiv::generator::PolyBasis;
use polydiv::model::{JumpDist, JumpSpec, ModelParams, State};
use rand::Rng;

pub const R: f64 = 0.01;

/// `(a, sigma, b, beta, nu, D_0)` of the three calibrated rows.
pub const CALIBRATED: [(f64, f64, f64, f64, f64, f64); 3] = [
    (0.1, 0.3621, 0.0103, -0.3440, 0.0220, 0.0371),
    (0.2, 0.2813, 0.0103, -0.3439, 0.0194, 0.0371),
    (0.3, 0.2614, 0.0103, -0.3439, 0.0187, 0.0371),
];

pub fn calibrated(row: usize) -> (ModelParams, State) {
    let (a, sigma, b, beta, nu, d0) = CALIBRATED[row];
    (ModelParams::single_factor(R, a, sigma, b, beta, nu).unwrap(), State::new(0.0, 1.0, vec![d0]))
}

pub fn calibrated_a02() -> (ModelParams, State) {
    calibrated(1)
}

pub fn calibrated_point() -> CalibPoint {
    let (_, sigma, b, beta, nu, d0) = CALIBRATED[1];
    CalibPoint { b, beta, sigma, nu, d0 }
}

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

pub fn market() -> MarketData {
    let dir = data_dir();
    MarketData::from_files(&dir.join("market_20151221.csv"), &dir.join("market_20151221.json")).unwrap()
}

/// The bundled market with every quote replaced by the model value at `point`.
pub fn synthetic_market(point: CalibPoint, a: f64) -> MarketData {
    let mut market = market();
    let params = point.params(R, a).unwrap();
    let model = model_futures(&params, point.d0, &market).unwrap();
    for (q, m) in market.futures.iter_mut().zip(model) {
        q.quote = market.spot * m;
    }
    let first = market.futures[0].clone();
    if let Some(q) = market.stock_iv.as_mut() {
        q.iv = model_stock_iv(&params, point.d0, q.t, 6).unwrap();
    }
    if let Some(q) = market.dividend_iv.as_mut() {
        q.iv = model_dividend_iv(&params, point.d0, &first, 6).unwrap();
    }
    market
}

/// Admissible `d`-factor parameters. Off-diagonal `beta` entries are kept
/// nonnegative so the factor inequalities reduce to `b >= 0`, and `1'b` is
/// a random fraction of its cap.
pub fn random_params(rng: &mut impl Rng, d: usize) -> ModelParams {
    let r = rng.random_range(0.0..0.05);
    let a = rng.random_range(0.05..0.4);
    let mut beta = vec![vec![0.0; d]; d];
    for (k, row) in beta.iter_mut().enumerate() {
        for (l, v) in row.iter_mut().enumerate() {
            *v = if k == l { rng.random_range(-1.0..-0.3) - a } else { rng.random_range(0.0..0.05) };
        }
    }
    let max_col = (0..d).map(|k| beta.iter().map(|row| row[k]).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
    let room = a * (r - a - max_col) * rng.random_range(0.0..1.0);
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = w.iter().sum();
    let b = w.iter().map(|v| room * v / total).collect();
    let nu = (0..d).map(|_| rng.random_range(0.0..0.3)).collect();
    ModelParams::new(r, a, rng.random_range(0.0..0.5), b, beta, nu).unwrap()
}

pub fn random_state(rng: &mut impl Rng, params: &ModelParams) -> State {
    let x = rng.random_range(0.2..3.0);
    let w: Vec<f64> = (0..params.d()).map(|_| rng.random_range(0.0..1.0)).collect();
    let total: f64 = w.iter().sum::<f64>().max(1e-12);
    let fill = rng.random_range(0.0..1.0) * params.a() * x;
    State::new(rng.random_range(0.0..1.0), x, w.iter().map(|v| fill * v / total).collect())
}

pub fn random_jump(rng: &mut impl Rng, two_point: bool) -> JumpSpec {
    let lambda = rng.random_range(0.05..2.0);
    let dist = if two_point {
        JumpDist::TwoPoint { z1: rng.random_range(-0.9..0.0), p: rng.random_range(0.0..1.0), z2: rng.random_range(0.0..1.0) }
    } else {
        JumpDist::PointMass { z0: rng.random_range(-0.9..1.0) }
    };
    JumpSpec::new(lambda, dist).unwrap()
}

fn mono(c: f64, x: f64, y: &[f64], i: i64, j: i64, alpha: &[i64]) -> f64 {
    if i < 0 || j < 0 || alpha.iter().any(|e| *e < 0) {
        return 0.0;
    }
    c.powi(i as i32) * x.powi(j as i32) * y.iter().zip(alpha).map(|(v, e)| v.powi(*e as i32)).product::<f64>()
}

/// `G p` at `state`, written out term by term from the dynamics. Returns the
/// value and the sum of absolute contributions, the scale for relative
/// comparisons.
pub fn oracle_generator(params: &ModelParams, jump: &JumpSpec, basis: &PolyBasis, coeffs: &[f64], s: &State) -> (f64, f64) {
    let d = params.d();
    let dr: f64 = s.y.iter().sum();
    let q = s.x - dr / params.a();
    let (mut value, mut scale) = (0.0, 0.0);
    for (m, coef) in basis.monomials().iter().zip(coeffs) {
        let e = m.exponents();
        let (i, j) = (e[0] as i64, e[1] as i64);
        let alpha: Vec<i64> = e[2..].iter().map(|v| *v as i64).collect();
        let at = |di: i64, dj: i64, k: Option<(usize, i64)>| {
            let mut al = alpha.clone();
            if let Some((k, dk)) = k {
                al[k] += dk;
            }
            mono(s.c, s.x, &s.y, i + di, j + dj, &al)
        };
        let mut terms = vec![
            dr * i as f64 * at(-1, 0, None),
            (params.r() * s.x - dr) * j as f64 * at(0, -1, None),
            0.5 * params.sigma().powi(2) * q * q * (j * (j - 1)) as f64 * at(0, -2, None),
        ];
        for k in 0..d {
            let drift = params.b()[k] * s.x + (0..d).map(|l| params.beta()[k][l] * s.y[l]).sum::<f64>();
            terms.push(drift * alpha[k] as f64 * at(0, 0, Some((k, -1))));
            terms.push(0.5 * params.nu()[k].powi(2) * s.y[k] * q * (alpha[k] * (alpha[k] - 1)) as f64 * at(0, 0, Some((k, -2))));
        }
        if !jump.is_pure_diffusion() {
            let rest = mono(s.c, 1.0, &s.y, i, 0, &alpha);
            for (z, w) in jump.atoms() {
                let h = q * z;
                let slope = if j > 0 { j as f64 * h * s.x.powi(j as i32 - 1) } else { 0.0 };
                for piece in [(s.x + h).powi(j as i32), -s.x.powi(j as i32), -slope] {
                    terms.push(jump.lambda() * w * rest * piece);
                }
            }
        }
        for t in terms {
            value += coef * t;
            scale += (coef * t).abs();
        }
    }
    (value, scale)
}
