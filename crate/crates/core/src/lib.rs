//! Pricing engine for a joint stock-price / dividend-rate polynomial diffusion.
//!
//! The dividend rate `D = 1'Y` is driven by factors whose drift and volatility
//! tie them to the stock price so that the dividend yield stays in `[0, a]`.
//! Because the generator maps polynomials to polynomials of the same degree,
//! every conditional moment of `(C, X, Y)` is a matrix exponential away.
//! On top of that the crate provides:
//!
//! - closed-form stock and dividend futures ([`moments`]),
//! - option prices from maximum-entropy densities fitted to moments ([`maxent`], [`options`]),
//! - an Euler Monte-Carlo oracle with control variates ([`mc`]),
//! - Nelder-Mead calibration to a dividend futures strip and ATM vols ([`calibration`]),
//! - the file formats and command dispatch behind the `polydiv` binary ([`cli`]).

pub mod black;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod expm;
pub mod generator;
pub mod maxent;
pub mod mc;
pub mod model;
pub mod moments;
pub mod options;
pub mod quadrature;

pub use error::{Error, Result};
pub use generator::{apply_generator_pointwise, build_generator, eval_basis, GeneratorMatrix, MultiIndex, PolyBasis};
pub use model::{
    dividend_rate, dividend_yield, in_state_space, jump_moment, validate_admissibility, AdmissibilityReport,
    JumpDist, JumpSpec, ModelParams, State,
};
