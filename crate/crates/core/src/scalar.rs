//! Scalar abstractions.
//!
//! Numerical code is written against [`Real`] (`f32` or `f64`) and `Complex<R>`.
//! The q-combinatorics in [`crate::qalgebra`] is written against [`Field`], which
//! additionally admits exact rationals so identities can be checked without rounding.

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, Zero};
use std::fmt::{Debug, Display};

/// Floating point type used by quadrature, determinants and simulation.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal; every literal used in this crate is representable.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in the scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A field in which q-combinatorial expressions can be evaluated.
pub trait Field: Clone + Num + Debug {
    /// Pole test used by the rational kernels: `den` is treated as zero when
    /// `|den| < 1e-12 (1 + |num|)` for floating types and when it is exactly zero otherwise.
    fn near_zero(den: &Self, num: &Self) -> bool;

    fn from_i64(v: i64) -> Self;

    fn neg(&self) -> Self {
        Self::zero() - self.clone()
    }

    /// Integer power, negative exponents allowed for nonzero bases.
    fn powi(&self, e: i64) -> Self {
        let mut acc = Self::one();
        for _ in 0..e.unsigned_abs() {
            acc = acc * self.clone();
        }
        if e < 0 {
            Self::one() / acc
        } else {
            acc
        }
    }
}

macro_rules! float_field {
    ($t:ty) => {
        impl Field for $t {
            fn near_zero(den: &Self, num: &Self) -> bool {
                den.abs() < 1e-12 * (1.0 + num.abs())
            }
            fn from_i64(v: i64) -> Self {
                v as $t
            }
            fn powi(&self, e: i64) -> Self {
                Float::powi(*self, e as i32)
            }
        }

        impl Field for Complex<$t> {
            fn near_zero(den: &Self, num: &Self) -> bool {
                den.norm() < 1e-12 * (1.0 + num.norm())
            }
            fn from_i64(v: i64) -> Self {
                Complex::new(v as $t, 0.0)
            }
            fn powi(&self, e: i64) -> Self {
                Complex::powi(self, e as i32)
            }
        }
    };
}

float_field!(f32);
float_field!(f64);

impl Field for BigRational {
    fn near_zero(den: &Self, _num: &Self) -> bool {
        den.is_zero()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }
}

impl Field for Complex<BigRational> {
    fn near_zero(den: &Self, _num: &Self) -> bool {
        den.re.is_zero() && den.im.is_zero()
    }
    fn from_i64(v: i64) -> Self {
        Complex::new(<BigRational as Field>::from_i64(v), BigRational::zero())
    }
}

/// Exact rational from a ratio of integers.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Parameters of a field that can also be ordered, used to validate `q` in `(0,1)`.
pub trait Ordered: Field + PartialOrd {}
impl Ordered for f32 {}
impl Ordered for f64 {}
impl Ordered for BigRational {}

pub(crate) fn is_unit_interval<T: Ordered>(q: &T) -> bool {
    *q > T::zero() && *q < T::one()
}
