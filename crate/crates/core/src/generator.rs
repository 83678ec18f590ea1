//! Graded monomial basis on `(c, x, y_1..y_d)` and the matrix of the
//! infinitesimal generator acting on it.
//!
//! Row `i` of the generator matrix holds the coefficients of `G h_i` in the
//! basis, so that `G H(z) = Gmat H(z)` and `E_t[H(Z_T)] = exp(Gmat (T-t)) H(Z_t)`.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{dividend_rate, ensure_admissible, jump_moment, JumpSpec, ModelParams, State};

/// Exponents of one monomial `c^i x^j y^alpha`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(i: u32, j: u32, alpha: &[u32]) -> Self {
        let mut e = Vec::with_capacity(2 + alpha.len());
        e.push(i);
        e.push(j);
        e.extend_from_slice(alpha);
        Self(e)
    }

    pub fn from_exponents(exps: Vec<u32>) -> Self {
        Self(exps)
    }

    /// Exponent of `c`.
    pub fn i(&self) -> u32 {
        self.0[0]
    }
    /// Exponent of `x`.
    pub fn j(&self) -> u32 {
        self.0[1]
    }
    /// Exponents of `y`.
    pub fn alpha(&self) -> &[u32] {
        &self.0[2..]
    }
    pub fn exponents(&self) -> &[u32] {
        &self.0
    }
    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn eval(&self, state: &State) -> f64 {
        let mut v = state.c.powi(self.i() as i32) * state.x.powi(self.j() as i32);
        for (yk, e) in state.y.iter().zip(self.alpha()) {
            v *= yk.powi(*e as i32);
        }
        v
    }
}

/// Ordered monomial basis of all monomials of total degree `<= n`.
///
/// Ordering is graded, then lexicographic with `c` most significant, so the
/// degree-1 block reads `c, x, y_1, .., y_d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyBasis {
    d: usize,
    n: u32,
    with_c: bool,
    monomials: Vec<MultiIndex>,
    lookup: HashMap<MultiIndex, usize>,
    degree_start: Vec<usize>,
}

/// All exponent vectors of length `len` summing to `total`, lexicographically
/// descending.
fn compositions(total: u32, len: usize) -> Vec<Vec<u32>> {
    if len == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, len - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl PolyBasis {
    /// Basis on `(c, x, y)`, size `binomial(n + d + 2, d + 2)`.
    pub fn new(d: usize, n: u32) -> Result<Self> {
        Self::build(d, n, true)
    }

    /// Basis on `(x, y)` only; every monomial has zero `c` exponent.
    pub fn without_c(d: usize, n: u32) -> Result<Self> {
        Self::build(d, n, false)
    }

    fn build(d: usize, n: u32, with_c: bool) -> Result<Self> {
        if d < 1 {
            return Err(Error::Domain("basis needs d >= 1".into()));
        }
        if n < 1 {
            return Err(Error::Domain("basis degree must be >= 1".into()));
        }
        let mut monomials = Vec::new();
        let mut degree_start = Vec::with_capacity(n as usize + 2);
        for deg in 0..=n {
            degree_start.push(monomials.len());
            let vars = if with_c { d + 2 } else { d + 1 };
            for e in compositions(deg, vars) {
                let exps = if with_c {
                    e
                } else {
                    std::iter::once(0).chain(e).collect()
                };
                monomials.push(MultiIndex(exps));
            }
        }
        degree_start.push(monomials.len());
        let lookup = monomials.iter().cloned().enumerate().map(|(k, m)| (m, k)).collect();
        Ok(Self { d, n, with_c, monomials, lookup, degree_start })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn degree(&self) -> u32 {
        self.n
    }
    pub fn has_c(&self) -> bool {
        self.with_c
    }
    pub fn len(&self) -> usize {
        self.monomials.len()
    }
    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }
    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }
    pub fn index_of(&self, m: &MultiIndex) -> Option<usize> {
        self.lookup.get(m).copied()
    }

    /// Positions of monomials of exactly total degree `k`.
    pub fn degree_range(&self, k: u32) -> Range<usize> {
        self.degree_start[k as usize]..self.degree_start[k as usize + 1]
    }

    /// Position of `c^i x^j` (no factor powers).
    pub fn index_cx(&self, i: u32, j: u32) -> Option<usize> {
        self.index_of(&MultiIndex::new(i, j, &vec![0; self.d]))
    }

    /// Position of the single factor power `y_k^e`.
    pub fn index_y(&self, k: usize, e: u32) -> Option<usize> {
        let mut alpha = vec![0; self.d];
        alpha[k] = e;
        self.index_of(&MultiIndex::new(0, 0, &alpha))
    }
}

/// Componentwise evaluation `H_n(c, x, y)` in basis order.
pub fn eval_basis(basis: &PolyBasis, state: &State) -> DVector<f64> {
    DVector::from_iterator(basis.len(), basis.monomials.iter().map(|m| m.eval(state)))
}

/// Sparse polynomial in the `2 + d` variables `(c, x, y)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparsePoly {
    terms: HashMap<Vec<u32>, f64>,
}

impl SparsePoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(exps: Vec<u32>, coef: f64) -> Self {
        let mut p = Self::zero();
        p.add_term(exps, coef);
        p
    }

    /// The single variable at position `var` (0 = c, 1 = x, 2.. = y).
    pub fn variable(nvars: usize, var: usize) -> Self {
        let mut e = vec![0; nvars];
        e[var] = 1;
        Self::monomial(e, 1.0)
    }

    pub fn add_term(&mut self, exps: Vec<u32>, coef: f64) {
        if coef != 0.0 {
            *self.terms.entry(exps).or_insert(0.0) += coef;
        }
    }

    pub fn add_scaled(&mut self, other: &SparsePoly, scale: f64) {
        for (e, c) in &other.terms {
            self.add_term(e.clone(), c * scale);
        }
    }

    pub fn mul(&self, other: &SparsePoly) -> SparsePoly {
        let mut out = SparsePoly::zero();
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(u, v)| u + v).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, k: u32, nvars: usize) -> SparsePoly {
        let mut out = SparsePoly::monomial(vec![0; nvars], 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u32>, &f64)> {
        self.terms.iter()
    }

    /// Coefficient vector in `basis`; fails if a monomial falls outside it.
    pub fn to_coefficients(&self, basis: &PolyBasis) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(basis.len());
        for (e, c) in &self.terms {
            let idx = basis.index_of(&MultiIndex(e.clone())).ok_or_else(|| {
                Error::Numeric(format!("monomial {e:?} lies outside the degree-{} basis", basis.n))
            })?;
            v[idx] += c;
        }
        Ok(v)
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Derivative of the monomial `exps` in variable `var`, as `(coef, exps')`.
fn d_monomial(exps: &[u32], var: usize) -> Option<(f64, Vec<u32>)> {
    if exps[var] == 0 {
        return None;
    }
    let mut e = exps.to_vec();
    e[var] -= 1;
    Some((f64::from(exps[var]), e))
}

fn d2_monomial(exps: &[u32], var: usize) -> Option<(f64, Vec<u32>)> {
    let (c1, e1) = d_monomial(exps, var)?;
    let (c2, e2) = d_monomial(&e1, var)?;
    Some((c1 * c2, e2))
}

/// Generator applied to one monomial, as a polynomial.
fn generator_of_monomial(params: &ModelParams, jump: &JumpSpec, exps: &[u32]) -> Result<SparsePoly> {
    let d = params.d();
    let nv = d + 2;
    let var = |k: usize| SparsePoly::variable(nv, k);
    let mut sum_y = SparsePoly::zero();
    for k in 0..d {
        sum_y.add_scaled(&var(2 + k), 1.0);
    }
    // q = x - 1'y / a, the distance to the yield cap
    let mut q = var(1);
    q.add_scaled(&sum_y, -1.0 / params.a());

    let mut out = SparsePoly::zero();
    let add_drift = |drift: &SparsePoly, v: usize, out: &mut SparsePoly| {
        if let Some((c, e)) = d_monomial(exps, v) {
            out.add_scaled(&drift.mul(&SparsePoly::monomial(e, c)), 1.0);
        }
    };

    add_drift(&sum_y, 0, &mut out);
    let mut x_drift = SparsePoly::zero();
    x_drift.add_scaled(&var(1), params.r());
    x_drift.add_scaled(&sum_y, -1.0);
    add_drift(&x_drift, 1, &mut out);
    for k in 0..d {
        let mut yk_drift = SparsePoly::zero();
        yk_drift.add_scaled(&var(1), params.b()[k]);
        for l in 0..d {
            yk_drift.add_scaled(&var(2 + l), params.beta()[k][l]);
        }
        add_drift(&yk_drift, 2 + k, &mut out);
    }

    if let Some((c, e)) = d2_monomial(exps, 1) {
        let s2 = params.sigma() * params.sigma();
        out.add_scaled(&q.mul(&q).mul(&SparsePoly::monomial(e, c)), 0.5 * s2);
    }
    for k in 0..d {
        if let Some((c, e)) = d2_monomial(exps, 2 + k) {
            let nu2 = params.nu()[k] * params.nu()[k];
            out.add_scaled(&var(2 + k).mul(&q).mul(&SparsePoly::monomial(e, c)), 0.5 * nu2);
        }
    }

    // Jump part: lambda * sum_{m>=2} C(j,m) m_m x^{j-m} q^m c^i y^alpha.
    // The m = 0 and m = 1 terms cancel against -f and the compensator.
    let j = exps[1];
    if !jump.is_pure_diffusion() && j >= 2 {
        for m in 2..=j {
            let mm = jump_moment(jump, m)?;
            if mm == 0.0 {
                continue;
            }
            let mut rest = exps.to_vec();
            rest[1] = j - m;
            let term = q.pow(m, nv).mul(&SparsePoly::monomial(rest, 1.0));
            out.add_scaled(&term, jump.lambda() * binomial(j, m) * mm);
        }
    }
    Ok(out)
}

/// Dense generator matrix on a basis; row `i` is the expansion of `G h_i`.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    basis: Arc<PolyBasis>,
    matrix: DMatrix<f64>,
}

impl GeneratorMatrix {
    pub fn basis(&self) -> &Arc<PolyBasis> {
        &self.basis
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Coefficients of `G p` for `p = coeffs' H`.
    pub fn apply_to_coefficients(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        self.matrix.tr_mul(coeffs)
    }

    /// Square block acting on the homogeneous degree-`k` monomials. The
    /// generator maps homogeneous polynomials to homogeneous polynomials of the
    /// same degree, so the matrix is block diagonal in these ranges.
    pub fn degree_block(&self, k: u32) -> DMatrix<f64> {
        let r = self.basis.degree_range(k);
        self.matrix.view((r.start, r.start), (r.len(), r.len())).into_owned()
    }
}

/// Generator matrix of the (jump-)diffusion `(C, X, Y)` on `basis`.
pub fn build_generator(params: &ModelParams, jump: &JumpSpec, basis: &Arc<PolyBasis>) -> Result<GeneratorMatrix> {
    ensure_admissible(params)?;
    build_generator_unchecked(params, jump, basis)
}

/// As [`build_generator`] without the admissibility check. Used where the
/// algebra is needed for parameters outside the admissible set (calibration
/// probing, closure tests).
pub fn build_generator_unchecked(
    params: &ModelParams,
    jump: &JumpSpec,
    basis: &Arc<PolyBasis>,
) -> Result<GeneratorMatrix> {
    if basis.d() != params.d() {
        return Err(Error::Domain(format!(
            "basis dimension {} does not match model dimension {}",
            basis.d(),
            params.d()
        )));
    }
    let n = basis.len();
    let mut matrix = DMatrix::zeros(n, n);
    for (row, m) in basis.monomials().iter().enumerate() {
        let g = generator_of_monomial(params, jump, m.exponents())?;
        for (e, c) in g.terms() {
            let col = basis.index_of(&MultiIndex(e.clone())).ok_or_else(|| {
                Error::Numeric(format!("generator of {:?} left the basis at {e:?}", m.exponents()))
            })?;
            debug_assert_eq!(basis.monomials()[col].degree(), m.degree());
            matrix[(row, col)] += c;
        }
    }
    Ok(GeneratorMatrix { basis: Arc::clone(basis), matrix })
}

/// Evaluates `G p` at `state` directly from the analytic derivatives of `p`
/// and the atoms of the jump distribution, without forming a generator matrix.
pub fn apply_generator_pointwise(
    params: &ModelParams,
    jump: &JumpSpec,
    basis: &PolyBasis,
    coeffs: &DVector<f64>,
    state: &State,
) -> f64 {
    let d = params.d();
    let s = dividend_rate(state);
    let q = state.x - s / params.a();
    let vars: Vec<f64> = [state.c, state.x].into_iter().chain(state.y.iter().copied()).collect();
    let eval = |exps: &[u32], at: &[f64]| -> f64 {
        exps.iter().zip(at).map(|(e, v)| v.powi(*e as i32)).product::<f64>()
    };
    let poly_at = |at: &[f64]| -> f64 {
        basis.monomials().iter().zip(coeffs.iter()).map(|(m, c)| c * eval(m.exponents(), at)).sum()
    };
    let partial = |var: usize| -> f64 {
        basis
            .monomials()
            .iter()
            .zip(coeffs.iter())
            .filter_map(|(m, c)| d_monomial(m.exponents(), var).map(|(k, e)| c * k * eval(&e, &vars)))
            .sum()
    };
    let partial2 = |var: usize| -> f64 {
        basis
            .monomials()
            .iter()
            .zip(coeffs.iter())
            .filter_map(|(m, c)| d2_monomial(m.exponents(), var).map(|(k, e)| c * k * eval(&e, &vars)))
            .sum()
    };

    let f_x = partial(1);
    let mut value = s * partial(0) + (params.r() * state.x - s) * f_x;
    for k in 0..d {
        let drift = params.b()[k] * state.x
            + (0..d).map(|l| params.beta()[k][l] * state.y[l]).sum::<f64>();
        value += drift * partial(2 + k);
    }
    value += 0.5 * params.sigma().powi(2) * q * q * partial2(1);
    for k in 0..d {
        value += 0.5 * params.nu()[k].powi(2) * state.y[k] * q * partial2(2 + k);
    }
    if !jump.is_pure_diffusion() {
        let f0 = poly_at(&vars);
        let mut integral = 0.0;
        for (z, w) in jump.atoms() {
            let mut shifted = vars.clone();
            shifted[1] = state.x + q * z;
            integral += w * (poly_at(&shifted) - f0 - q * z * f_x);
        }
        value += jump.lambda() * integral;
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::JumpDist;
    use approx::assert_relative_eq;

    fn calibrated_a02() -> ModelParams {
        ModelParams::single_factor(0.01, 0.2, 0.2813, 0.0103, -0.3439, 0.0194).unwrap()
    }

    fn unit(basis: &PolyBasis, m: MultiIndex) -> DVector<f64> {
        let mut v = DVector::zeros(basis.len());
        v[basis.index_of(&m).unwrap()] = 1.0;
        v
    }

    #[test]
    fn basis_sizes() {
        assert_eq!(PolyBasis::new(1, 1).unwrap().len(), 4);
        assert_eq!(PolyBasis::new(1, 2).unwrap().len(), 10);
        assert_eq!(PolyBasis::new(1, 6).unwrap().len(), 84);
        assert_eq!(PolyBasis::new(3, 4).unwrap().len(), 126);
        assert_eq!(PolyBasis::without_c(1, 6).unwrap().len(), 28);
        assert!(PolyBasis::new(1, 0).is_err());
    }

    #[test]
    fn degree_one_layout_is_c_x_y() {
        let b = PolyBasis::new(2, 2).unwrap();
        let names: Vec<_> = b.monomials()[..4].iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(names, vec![vec![0, 0, 0, 0], vec![1, 0, 0, 0], vec![0, 1, 0, 0], vec![0, 0, 1, 0]]);
        assert_eq!(b.monomials()[5].exponents(), &[2, 0, 0, 0]);
        for (k, m) in b.monomials().iter().enumerate() {
            assert_eq!(b.index_of(m), Some(k));
        }
    }

    #[test]
    fn eval_basis_examples() {
        let b = PolyBasis::new(1, 1).unwrap();
        let h = eval_basis(&b, &State::new(0.0, 1.0, vec![0.0371]));
        assert_eq!(h.as_slice(), &[1.0, 0.0, 1.0, 0.0371]);
        let h0 = eval_basis(&b, &State::new(0.0, 0.0, vec![0.0]));
        assert_eq!(h0.as_slice(), &[1.0, 0.0, 0.0, 0.0]);
        let b3 = PolyBasis::new(1, 3).unwrap();
        let h = eval_basis(&b3, &State::new(2.0, 3.0, vec![4.0]));
        assert_eq!(h[b3.index_of(&MultiIndex::new(1, 1, &[1])).unwrap()], 24.0);
    }

    #[test]
    fn linear_block_matches_closed_form() {
        let p = calibrated_a02();
        let basis = Arc::new(PolyBasis::new(1, 1).unwrap());
        let g = build_generator(&p, &JumpSpec::none(), &basis).unwrap();
        let block = g.matrix().view((1, 1), (3, 3)).into_owned();
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 0.0, 0.01, -1.0, 0.0, 0.0103, -0.3439]);
        assert_eq!(block, expected);
        assert!(g.matrix().row(0).iter().all(|v| *v == 0.0));
        assert!(g.matrix().column(0).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn drift_only_generator_on_x_squared() {
        let p = ModelParams::single_factor(0.01, 0.2, 0.0, 0.0103, -0.3439, 0.0).unwrap();
        let basis = Arc::new(PolyBasis::new(1, 2).unwrap());
        let g = build_generator(&p, &JumpSpec::none(), &basis).unwrap();
        let row = basis.index_of(&MultiIndex::new(0, 2, &[0])).unwrap();
        let xy = basis.index_of(&MultiIndex::new(0, 1, &[1])).unwrap();
        for (col, v) in g.matrix().row(row).iter().enumerate() {
            let expected = if col == row {
                0.02
            } else if col == xy {
                -2.0
            } else {
                0.0
            };
            assert_eq!(*v, expected, "column {col}");
        }
    }

    #[test]
    fn jump_leaves_columns_linear_in_x_unchanged() {
        let p = calibrated_a02();
        let basis = Arc::new(PolyBasis::new(1, 4).unwrap());
        let g0 = build_generator(&p, &JumpSpec::none(), &basis).unwrap();
        let jump = JumpSpec::new(0.7, JumpDist::PointMass { z0: -0.3 }).unwrap();
        let gj = build_generator(&p, &jump, &basis).unwrap();
        let mut differs = false;
        for (row, m) in basis.monomials().iter().enumerate() {
            let same = g0.matrix().row(row) == gj.matrix().row(row);
            if m.j() <= 1 {
                assert!(same, "{:?}", m.exponents());
            } else {
                differs |= !same;
            }
        }
        assert!(differs);
    }

    #[test]
    fn pointwise_examples() {
        let p = calibrated_a02();
        let basis = PolyBasis::new(1, 2).unwrap();
        let st = State::new(0.3, 1.0, vec![0.0371]);
        let c = apply_generator_pointwise(&p, &JumpSpec::none(), &basis, &unit(&basis, MultiIndex::new(1, 0, &[0])), &st);
        assert_relative_eq!(c, 0.0371);
        let x = apply_generator_pointwise(&p, &JumpSpec::none(), &basis, &unit(&basis, MultiIndex::new(0, 1, &[0])), &st);
        assert_relative_eq!(x, 0.01 - 0.0371, epsilon = 1e-16);
        let x2 = apply_generator_pointwise(&p, &JumpSpec::none(), &basis, &unit(&basis, MultiIndex::new(0, 2, &[0])), &st);
        let expected = 2.0 * (0.01 - 0.0371) + 0.2813f64.powi(2) * (1.0 - 0.0371 / 0.2f64).powi(2);
        assert_relative_eq!(x2, expected, epsilon = 1e-15);
        assert_relative_eq!(x2, -0.001700, epsilon = 1e-5);
    }

    #[test]
    fn generator_is_block_diagonal_by_degree() {
        let p = ModelParams::new(0.05, 0.3, 0.2, vec![0.01, 0.02], vec![vec![-0.5, 0.01], vec![0.03, -0.4]], vec![0.05, 0.02])
            .unwrap();
        let jump = JumpSpec::new(0.3, JumpDist::TwoPoint { z1: -0.2, p: 0.4, z2: 0.1 }).unwrap();
        let basis = Arc::new(PolyBasis::new(2, 4).unwrap());
        let g = build_generator(&p, &jump, &basis).unwrap();
        for (i, mi) in basis.monomials().iter().enumerate() {
            for (j, mj) in basis.monomials().iter().enumerate() {
                if mi.degree() != mj.degree() {
                    assert_eq!(g.matrix()[(i, j)], 0.0);
                }
            }
        }
    }
}
