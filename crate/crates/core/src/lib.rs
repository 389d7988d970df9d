//! Exact formulas, Fredholm determinants and simulation for the q-deformed totally
//! asymmetric zero range process (q-TAZRP) with site-dependent rates.
//!
//! A site `x` holding `k` particles sends its top particle to `x + 1` at rate
//! `a_x (1 - q^k)`. The crate evaluates contour-integral formulas for transition
//! probabilities and tagged-particle laws, Fredholm determinants for the step initial
//! condition and their large-time limits, and cross-checks them against the master equation
//! and Monte Carlo simulation.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod error;
pub mod fredholm;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod qalgebra;
pub mod quadrature;
pub mod scalar;
pub mod simulator;
pub mod stats;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::{Field, Real};

/// Default floating point type.
pub type Float = f64;
/// Default complex type.
pub type Complex64 = num_complex::Complex<f64>;
/// Exact rational type used by the q-combinatorics mirror.
pub type Rational = num_rational::BigRational;
/// Circle quadrature in the default precision.
pub type Circle = quadrature::Circle<f64>;
/// Nested circle family in the default precision.
pub type NestedContourFamily = contour::NestedContourFamily<f64>;
/// Nyström grid in the default precision.
pub type NystromGrid = fredholm::NystromGrid<f64>;
