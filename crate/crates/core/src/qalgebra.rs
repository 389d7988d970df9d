//! q-deformed combinatorics, the rational kernels `S`, `A_σ`, `B_r`, the subset coefficients
//! and the q-digamma constants of the KPZ scaling regime.
//!
//! Everything except the digamma suite is generic over [`Field`], so the same code runs in
//! floating point and in exact rational arithmetic.

use crate::error::{domain, Error, Result};
use crate::scalar::{is_unit_interval, Field, Ordered, Real};
use serde::{Deserialize, Serialize};

/// The deformation parameter, strictly inside `(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QParam(f64);

impl QParam {
    pub fn new(q: f64) -> Result<Self> {
        if is_unit_interval(&q) {
            Ok(Self(q))
        } else {
            domain(format!("q must lie in (0,1), got {q}"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// The parameter as a value of another real type.
    pub fn as_real<R: Real>(self) -> R {
        R::lit(self.0)
    }
}

impl TryFrom<f64> for QParam {
    type Error = Error;
    fn try_from(q: f64) -> Result<Self> {
        Self::new(q)
    }
}

impl From<QParam> for f64 {
    fn from(q: QParam) -> f64 {
        q.0
    }
}

/// Validates `q ∈ (0,1)` for any ordered field (used by the exact mirror).
pub fn check_q<T: Ordered>(q: &T) -> Result<()> {
    if is_unit_interval(q) {
        Ok(())
    } else {
        domain(format!("q must lie in (0,1), got {q:?}"))
    }
}

/// `[k]_q = 1 + q + … + q^{k-1}`.
pub fn q_number<T: Field>(k: u32, q: &T) -> T {
    let mut acc = T::zero();
    let mut p = T::one();
    for _ in 0..k {
        acc = acc + p.clone();
        p = p * q.clone();
    }
    acc
}

/// `[m]_q! = ∏_{k=1}^m (1-q^k)/(1-q)`.
pub fn q_factorial<T: Field>(m: u32, q: &T) -> T {
    (1..=m).fold(T::one(), |acc, k| acc * q_number(k, q))
}

/// Gaussian binomial coefficient; `k` outside `0..=n` is a domain error.
pub fn q_binomial<T: Field>(n: i64, k: i64, q: &T) -> Result<T> {
    if n < 0 || k < 0 || k > n {
        return domain(format!("q-binomial needs 0 <= k <= n, got n={n}, k={k}"));
    }
    let (n, k) = (n as u32, k as u32);
    Ok(q_factorial(n, q) / (q_factorial(k, q) * q_factorial(n - k, q)))
}

/// `W(X) = ∏_k [n_k]_q!` from the occupation counts of a configuration.
pub fn weight_w<T: Field>(occupations: impl IntoIterator<Item = u32>, q: &T) -> T {
    occupations.into_iter().fold(T::one(), |acc, n| acc * q_factorial(n, q))
}

/// `S(w_a, w_b) = -(q w_b - w_a)/(q w_a - w_b)`.
pub fn s_factor<C: Field>(wa: &C, wb: &C, q: &C) -> Result<C> {
    let num = q.clone() * wb.clone() - wa.clone();
    let den = q.clone() * wa.clone() - wb.clone();
    if C::near_zero(&den, &num) {
        return Err(Error::Singular(format!("S(w_a,w_b) pole: q*{wa:?} = {wb:?}")));
    }
    Ok((num / den).neg())
}

/// Zero-based permutation of `0..n`.
pub fn is_permutation(sigma: &[usize]) -> bool {
    let mut seen = vec![false; sigma.len()];
    for &s in sigma {
        if s >= sigma.len() || seen[s] {
            return false;
        }
        seen[s] = true;
    }
    true
}

/// `A_σ(w) = ∏ S(w_α, w_β)` over inversions `(β, α)` of σ, that is over positions
/// `i < j` with `σ(i) = β > α = σ(j)`. The permutation is zero-based.
pub fn a_sigma<C: Field>(sigma: &[usize], w: &[C], q: &C) -> Result<C> {
    if sigma.len() != w.len() || !is_permutation(sigma) {
        return domain("a_sigma needs a permutation of the variable indices");
    }
    let mut acc = C::one();
    for i in 0..sigma.len() {
        for j in i + 1..sigma.len() {
            if sigma[i] > sigma[j] {
                acc = acc * s_factor(&w[sigma[j]], &w[sigma[i]], q)?;
            }
        }
    }
    Ok(acc)
}

/// `B_r(w) = ∏_{i<j} (w_i - w_j)/(q w_i - w_j)`.
pub fn b_r<C: Field>(w: &[C], q: &C) -> Result<C> {
    let mut acc = C::one();
    for i in 0..w.len() {
        for j in i + 1..w.len() {
            let num = w[i].clone() - w[j].clone();
            let den = q.clone() * w[i].clone() - w[j].clone();
            if C::near_zero(&den, &num) {
                return Err(Error::Singular(format!("B_r pole: q*w_{i} = w_{j}")));
            }
            acc = acc * num / den;
        }
    }
    Ok(acc)
}

fn check_subset(s: &[i64], n: usize) -> Result<()> {
    if n == 0 || n > s.len() {
        return domain(format!("coefficient needs 1 <= n <= |S|, got n={n}, |S|={}", s.len()));
    }
    Ok(())
}

fn sign(n: usize) -> i64 {
    if n.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// `c_S(n) = (-1)^n q^{n(n-1)/2 - n r + Σ s} qbinom(r-1, n-1)` with `r = |S|`.
pub fn coeff_c<T: Field>(s: &[i64], n: usize, q: &T) -> Result<T> {
    check_subset(s, n)?;
    let (r, n) = (s.len() as i64, n as i64);
    let e = n * (n - 1) / 2 - n * r + s.iter().sum::<i64>();
    Ok(T::from_i64(sign(n as usize)) * q.powi(e) * q_binomial(r - 1, n - 1, q)?)
}

/// `c̃_S(n) = (-1)^n q^{n(n-1)/2 + r(r-1)/2 + Σ s} qbinom(r-1, n-1)` with `r = |S|`.
pub fn coeff_c_tilde<T: Field>(s: &[i64], n: usize, q: &T) -> Result<T> {
    check_subset(s, n)?;
    let (r, n) = (s.len() as i64, n as i64);
    let e = n * (n - 1) / 2 + r * (r - 1) / 2 + s.iter().sum::<i64>();
    Ok(T::from_i64(sign(n as usize)) * q.powi(e) * q_binomial(r - 1, n - 1, q)?)
}

/// A subset coefficient together with the data that determines it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetCoefficient {
    pub r: usize,
    pub n: usize,
    pub sum_s: i64,
    pub value: f64,
}

impl SubsetCoefficient {
    pub fn c(s: &[i64], n: usize, q: QParam) -> Result<Self> {
        Ok(Self { r: s.len(), n, sum_s: s.iter().sum(), value: coeff_c(s, n, &q.get())? })
    }

    pub fn c_tilde(s: &[i64], n: usize, q: QParam) -> Result<Self> {
        Ok(Self { r: s.len(), n, sum_s: s.iter().sum(), value: coeff_c_tilde(s, n, &q.get())? })
    }
}

/// `Σ_{J ⊆ {1..N}, |J| = r} q^{ΣJ - m r} · qbinom(r-1, m-1)`, the weight of the `r`-particle
/// leftmost probability in the finite-`N` step expansion.
pub fn step_subset_weight<T: Field>(n_total: usize, r: usize, m: usize, q: &T) -> Result<T> {
    if m == 0 || m > r || r > n_total {
        return domain(format!("need 1 <= m <= r <= N, got m={m}, r={r}, N={n_total}"));
    }
    // e[k] holds the elementary symmetric polynomial e_k(q, q^2, …, q^j) as j grows.
    let mut e = vec![T::zero(); r + 1];
    e[0] = T::one();
    let mut qj = T::one();
    for j in 1..=n_total {
        qj = qj * q.clone();
        for k in (1..=r.min(j)).rev() {
            e[k] = e[k].clone() + e[k - 1].clone() * qj.clone();
        }
    }
    let shift = q.powi(-((m * r) as i64));
    Ok(e[r].clone() * shift * q_binomial(r as i64 - 1, m as i64 - 1, q)?)
}

/// `Ψ_q(θ)` and its first two θ-derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Digamma<R> {
    pub psi: R,
    pub psi1: R,
    pub psi2: R,
}

const SERIES_CAP: usize = 1_000_000;

/// `Ψ_q(θ) = -log(1-q) + log q Σ_{k≥0} x_k/(1-x_k)` with `x_k = q^{θ+k}`, differentiated
/// termwise. Terms are summed until the next one falls below `1e-15` of the running sum.
pub fn q_digamma_suite<R: Real>(theta: R, q: QParam) -> Result<Digamma<R>> {
    if theta.is_nan() || theta <= R::zero() {
        return domain(format!("q-digamma needs theta > 0, got {theta}"));
    }
    let qq: R = q.as_real();
    let lq = qq.ln();
    let one = R::one();
    let tol = R::lit(1e-15);
    let (mut s0, mut s1, mut s2) = (R::zero(), R::zero(), R::zero());
    let mut x = qq.powf(theta);
    for _ in 0..SERIES_CAP {
        let d = one - x;
        let t0 = x / d;
        let t1 = x / (d * d);
        let t2 = x * (one + x) / (d * d * d);
        s0 = s0 + t0;
        s1 = s1 + t1;
        s2 = s2 + t2;
        if t2 <= tol * s2 && t0 <= tol * s0 {
            return Ok(Digamma { psi: -(one - qq).ln() + lq * s0, psi1: lq * lq * s1, psi2: lq * lq * lq * s2 });
        }
        x = x * qq;
    }
    Err(Error::Numeric(format!("q-digamma series did not converge within {SERIES_CAP} terms (theta={theta})")))
}

/// `log Γ_q(z) = (1-z) log(1-q) + Σ_{k≥0} [log(1-q^{k+1}) - log(1-q^{k+z})]`, used as an
/// independent reference for the digamma series.
pub fn log_q_gamma<R: Real>(z: R, q: QParam) -> Result<R> {
    if z <= R::zero() {
        return domain("log Gamma_q needs z > 0");
    }
    let qq: R = q.as_real();
    let one = R::one();
    let mut acc = (one - z) * (one - qq).ln();
    let (mut a, mut b) = (qq, qq.powf(z));
    for _ in 0..SERIES_CAP {
        let term = (-a).ln_1p() - (-b).ln_1p();
        acc = acc + term;
        if a.abs() < R::lit(1e-17) && b.abs() < R::lit(1e-17) {
            return Ok(acc);
        }
        a = a * qq;
        b = b * qq;
    }
    Err(Error::Numeric("log Gamma_q product did not converge".into()))
}

/// Constants of the KPZ scaling at density parameter θ and spike parameter α.
///
/// `g` and `sigma` involve `Ψ_q(log_q α)`, which is infinite at `α = 1`; they are `None`
/// there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingConstants {
    pub theta: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub f: f64,
    pub chi: f64,
    pub g: Option<f64>,
    pub sigma: Option<f64>,
}

pub fn scaling_constants(theta: f64, alpha: f64, q: QParam) -> Result<ScalingConstants> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("alpha must lie in (0,1], got {alpha}"));
    }
    let d = q_digamma_suite(theta, q)?;
    let lq = q.get().ln();
    let l1q = (1.0 - q.get()).ln();
    let qt = q.get().powf(theta);
    let kappa = d.psi1 / (lq * lq * qt);
    let f = d.psi1 / (lq * lq) - d.psi / lq - l1q / lq;
    let chi = 0.5 * (d.psi1 * lq - d.psi2);
    let (g, sigma) = if alpha < 1.0 {
        let da = q_digamma_suite(alpha.ln() / lq, q)?;
        (Some(d.psi1 * alpha / (lq * lq * qt) - da.psi / lq - l1q / lq), Some(d.psi1 * alpha / qt - da.psi1))
    } else {
        (None, None)
    };
    Ok(ScalingConstants { theta, alpha, kappa, f, chi, g, sigma })
}
