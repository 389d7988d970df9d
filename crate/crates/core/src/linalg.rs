//! Dense complex determinants.

use crate::error::{Error, Result};
use crate::scalar::Real;
use num_complex::Complex;

/// Row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<R> {
    n: usize,
    data: Vec<Complex<R>>,
}

impl<R: Real> Matrix<R> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Complex::new(R::zero(), R::zero()); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = Complex::new(R::one(), R::zero());
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex<R>) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Determinant by LU factorisation with partial pivoting.
    pub fn det(&self) -> Result<Complex<R>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = Complex::new(R::one(), R::zero());
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].norm();
            for row in col + 1..n {
                let v = a[row * n + col].norm();
                if v > best {
                    best = v;
                    piv = row;
                }
            }
            if !best.is_finite() {
                return Err(Error::Numeric("non-finite matrix entry in determinant".into()));
            }
            if best == R::zero() {
                return Ok(Complex::new(R::zero(), R::zero()));
            }
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det = det * p;
            let inv = Complex::new(R::one(), R::zero()) / p;
            for row in col + 1..n {
                let f = a[row * n + col] * inv;
                if f.re == R::zero() && f.im == R::zero() {
                    continue;
                }
                for k in col + 1..n {
                    let v = a[col * n + k];
                    a[row * n + k] = a[row * n + k] - f * v;
                }
            }
        }
        if !(det.re.is_finite() && det.im.is_finite()) {
            return Err(Error::Numeric("determinant overflowed".into()));
        }
        Ok(det)
    }
}

impl<R> std::ops::Index<(usize, usize)> for Matrix<R> {
    type Output = Complex<R>;
    fn index(&self, (i, j): (usize, usize)) -> &Complex<R> {
        &self.data[i * self.n + j]
    }
}

impl<R> std::ops::IndexMut<(usize, usize)> for Matrix<R> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex<R> {
        &mut self.data[i * self.n + j]
    }
}
