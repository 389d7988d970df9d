//! Quadrature rules: trapezoid on (optionally clustered) circles and Gauss–Legendre on
//! intervals.

use crate::error::{domain, Error, Result};
use crate::scalar::Real;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Positively oriented circle with a trapezoid rule of `nodes` points.
///
/// `cluster = λ ∈ (0,1]` concentrates nodes near the leftmost point `center - radius` through
/// the disk automorphism `φ(s) = π + 2 atan(λ tan((s-π)/2))`; `λ = 1` is the uniform rule.
/// Clustering pays off when a singularity sits just outside (or inside) the circle near
/// that point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "R: Real + Deserialize<'de>"), deny_unknown_fields)]
pub struct Circle<R> {
    pub center: Complex<R>,
    pub radius: R,
    pub nodes: usize,
    #[serde(default = "one")]
    pub cluster: R,
}

fn one<R: Real>() -> R {
    R::one()
}

/// Quadrature node `z` with weight `dz/(2πi)` folded in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node<R> {
    pub z: Complex<R>,
    pub weight: Complex<R>,
}

impl<R: Real> Circle<R> {
    pub fn new(center: Complex<R>, radius: R, nodes: usize) -> Result<Self> {
        Self::clustered(center, radius, nodes, R::one())
    }

    pub fn clustered(center: Complex<R>, radius: R, nodes: usize, cluster: R) -> Result<Self> {
        let c = Self { center, radius, nodes, cluster };
        c.validate()?;
        Ok(c)
    }

    pub fn centered(center: R, radius: R, nodes: usize) -> Result<Self> {
        Self::new(Complex::new(center, R::zero()), radius, nodes)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > R::zero()) || !self.radius.is_finite() {
            return domain(format!("circle radius must be positive, got {}", self.radius));
        }
        if self.nodes < 8 || !self.nodes.is_power_of_two() {
            return domain(format!("circle node count must be a power of two >= 8, got {}", self.nodes));
        }
        if !(self.cluster > R::zero() && self.cluster <= R::one()) {
            return domain(format!("cluster parameter must lie in (0,1], got {}", self.cluster));
        }
        Ok(())
    }

    pub fn with_nodes(&self, nodes: usize) -> Self {
        Self { nodes, ..*self }
    }

    pub fn refined(&self) -> Self {
        self.with_nodes(self.nodes * 2)
    }

    pub fn contains(&self, z: Complex<R>) -> bool {
        (z - self.center).norm() < self.radius
    }

    /// Signed distance from `z` to the circle (positive outside).
    pub fn gap(&self, z: Complex<R>) -> R {
        (z - self.center).norm() - self.radius
    }

    pub fn nodes(&self) -> Vec<Node<R>> {
        let n = self.nodes;
        let pi = R::PI();
        let two = R::lit(2.0);
        let half = R::lit(0.5);
        let lam = self.cluster;
        let nf = R::from_usize(n).expect("node count fits");
        (0..n)
            .map(|k| {
                let s = two * pi * (R::from_usize(k).expect("index fits") + half) / nf;
                let x = (s - pi) / two;
                let (sx, cx) = x.sin_cos();
                let phi = pi + two * (lam * sx).atan2(cx);
                let dphi = lam / (cx * cx + lam * lam * sx * sx);
                let e = Complex::from_polar(self.radius, phi);
                Node { z: self.center + e, weight: e * (dphi / nf) }
            })
            .collect()
    }

    /// Geometric convergence factor of the trapezoid rule for an integrand whose singularities
    /// are `inside` and `outside` the circle; `include_infinity` accounts for entire factors
    /// such as `e^{-wt}` that grow away from the circle. The error decays like `rate^nodes`.
    pub fn convergence_rate(&self, inside: &[Complex<R>], outside: &[Complex<R>], include_infinity: bool) -> R {
        let a = (R::one() - self.cluster) / (R::one() + self.cluster);
        let pull = |w: Complex<R>| {
            let zeta = -(w - self.center) / self.radius;
            let den = Complex::new(R::one(), R::zero()) - zeta * a;
            -(zeta - a) / den
        };
        let mut rate = R::zero();
        for &w in inside {
            rate = rate.max(pull(w).norm());
        }
        for &w in outside {
            rate = rate.max(R::one() / pull(w).norm());
        }
        if include_infinity {
            rate = rate.max(a);
        }
        rate
    }
}

/// `∮_c f(z) dz/(2πi)` by the trapezoid rule; non-finite values are a numeric failure.
pub fn circle_integral<R: Real, F>(f: F, c: &Circle<R>) -> Result<Complex<R>>
where
    F: Fn(Complex<R>) -> Result<Complex<R>>,
{
    c.validate()?;
    let mut acc = Complex::new(R::zero(), R::zero());
    for node in c.nodes() {
        let v = f(node.z)? * node.weight;
        if !(v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::Numeric(format!("non-finite integrand at z = {}", node.z)));
        }
        acc = acc + v;
    }
    Ok(acc)
}

/// Gauss–Legendre nodes and weights on `[a, b]`.
pub fn gauss_legendre<R: Real>(n: usize, a: R, b: R) -> Result<Vec<(R, R)>> {
    if n == 0 {
        return domain("Gauss-Legendre needs at least one node");
    }
    let mut out = Vec::with_capacity(n);
    let half = R::lit(0.5);
    let mid = half * (a + b);
    let hw = half * (b - a);
    let nf = n as f64;
    for i in 0..n {
        // Newton iteration in f64 from the Tricomi initial guess, then conversion.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((mid + hw * R::lit(x), hw * R::lit(w)));
    }
    out.reverse();
    Ok(out)
}
