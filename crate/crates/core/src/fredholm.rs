//! Nyström evaluation of the Fredholm determinants for the step initial condition, their
//! large-time limits and the Gaussian-kernel forms of the limit.
//!
//! Sign convention for the limit kernels: with `K_{M,t}(w,w') = e^{-wt} ∏_{k=0}^{M}
//! b_k/(b_k-w) / (q w' - w)`, the scaled determinants `det(I + ζ K_{M,t})` converge to
//! `det(I + ζ 𝒦)` for `𝒦(z,w) = e^{w²/2+τw} γ(w)/(q z - w)` on the downward line `Re w = -1`.
//! The equivalent half-line and Mehler operators are `-K̃` and `-K̂` with the Gaussian kernels
//! `K̃(ξ,η) = e^{-(ξ-qη+τ)²/2}/√(2π)` and `K̂` below.

use crate::contour::ExactProbability;
use crate::error::{domain, Error, Result};
use crate::linalg::Matrix;
use crate::model::RateProfile;
use crate::qalgebra::QParam;
use crate::quadrature::{gauss_legendre, Circle};
use crate::scalar::Real;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Integral operator whose Fredholm determinant is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `K_{M,t}` on a circle enclosing 0 and `b_0, …, b_M`.
    FiniteTime { m_cut: i64, t: f64, profile: RateProfile },
    /// `𝒦_{τ;β}` on the vertical line; empty `betas` is the unspiked case.
    Limiting { q: QParam, tau: f64, betas: Vec<f64> },
    /// `-K̂` on `(τ(1+q)/(1-q), ∞)`.
    Mehler { q: QParam, tau: f64 },
    /// `-K̃` on `(0, ∞)`.
    HalfLine { q: QParam, tau: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::FiniteTime { m_cut, t, .. } => {
                if *m_cut < 0 || !(*t >= 0.0) {
                    return domain("finite-time kernel needs M >= 0 and t >= 0");
                }
            }
            KernelSpec::Limiting { tau, betas, .. } => {
                if !tau.is_finite() || betas.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
                    return domain("limiting kernel needs finite tau and positive betas");
                }
            }
            KernelSpec::Mehler { tau, .. } | KernelSpec::HalfLine { tau, .. } => {
                if !tau.is_finite() {
                    return domain("tau must be finite");
                }
            }
        }
        Ok(())
    }

    fn q(&self) -> f64 {
        match self {
            KernelSpec::FiniteTime { profile, .. } => profile.q().get(),
            KernelSpec::Limiting { q, .. } | KernelSpec::Mehler { q, .. } | KernelSpec::HalfLine { q, .. } => q.get(),
        }
    }
}

/// Discretisation domain and rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case", deny_unknown_fields)]
#[serde(bound(deserialize = "R: Real + Deserialize<'de>"))]
pub enum NystromGrid<R> {
    /// Trapezoid rule on a circle.
    Circle(Circle<R>),
    /// Gauss–Legendre on `{-1 - iy : |y| ≤ half_height}`, oriented downward.
    VerticalLine { half_height: R, nodes: usize },
    /// Gauss–Legendre on `[start, start + length]`.
    HalfLine { start: R, length: R, nodes: usize },
}

/// Vertical-line defaults: `|e^{w²/2}| = e^{(1-y²)/2}` is below `1e-16` beyond `|y| = 8.6`.
pub const LINE_HALF_HEIGHT: f64 = 10.0;
pub const LINE_NODES: usize = 200;
pub const HALFLINE_NODES: usize = 200;
/// `√(2 log 1e14)`: a unit-width Gaussian factor is below `1e-14` beyond this.
const GAUSS_CUT: f64 = 8.03;

impl<R: Real> NystromGrid<R> {
    pub fn nodes(&self) -> usize {
        match self {
            NystromGrid::Circle(c) => c.nodes,
            NystromGrid::VerticalLine { nodes, .. } | NystromGrid::HalfLine { nodes, .. } => *nodes,
        }
    }

    pub fn with_nodes(&self, n: usize) -> Self {
        match *self {
            NystromGrid::Circle(c) => NystromGrid::Circle(c.with_nodes(n)),
            NystromGrid::VerticalLine { half_height, .. } => NystromGrid::VerticalLine { half_height, nodes: n },
            NystromGrid::HalfLine { start, length, .. } => NystromGrid::HalfLine { start, length, nodes: n },
        }
    }

    /// Nodes and weights; weights include `1/(2πi)` for contours.
    pub fn discretize(&self) -> Result<Vec<(Complex<R>, Complex<R>)>> {
        match *self {
            NystromGrid::Circle(c) => {
                c.validate()?;
                Ok(c.nodes().into_iter().map(|n| (n.z, n.weight)).collect())
            }
            NystromGrid::VerticalLine { half_height, nodes } => {
                if !(half_height > R::zero()) {
                    return domain("vertical line needs a positive half height");
                }
                let two_pi = R::lit(2.0) * R::PI();
                Ok(gauss_legendre(nodes, -half_height, half_height)?
                    .into_iter()
                    .map(|(y, w)| (Complex::new(-R::one(), -y), Complex::new(-w / two_pi, R::zero())))
                    .collect())
            }
            NystromGrid::HalfLine { start, length, nodes } => {
                if !(length > R::zero()) {
                    return domain("half-line grid needs a positive length");
                }
                Ok(gauss_legendre(nodes, start, start + length)?.into_iter().map(|(x, w)| (Complex::new(x, R::zero()), Complex::new(w, R::zero()))).collect())
            }
        }
    }
}

/// Default vertical-line grid.
pub fn line_grid() -> NystromGrid<f64> {
    NystromGrid::VerticalLine { half_height: LINE_HALF_HEIGHT, nodes: LINE_NODES }
}

/// Half-line grid for `K̃`: `(0, L)` with the diagonal Gaussian `e^{-((1-q)ξ+τ)²/2}` below
/// `1e-14` at `ξ = L`.
pub fn halfline_grid(tau: f64, q: QParam, nodes: usize) -> NystromGrid<f64> {
    let length = ((GAUSS_CUT - tau) / (1.0 - q.get())).max(2.0);
    NystromGrid::HalfLine { start: 0.0, length, nodes }
}

/// Grid for `K̂` on `(s, ∞)`, `s = τ(1+q)/(1-q)`: the diagonal `e^{-(1-q)²z²/(2(1+q)²)}` is
/// below `1e-14` outside `|z| ≤ Z`, so the window is `[max(s, -Z), max(Z, s + 2)]`.
pub fn mehler_grid(tau: f64, q: QParam, nodes: usize) -> NystromGrid<f64> {
    let q = q.get();
    let s = tau * (1.0 + q) / (1.0 - q);
    let z = GAUSS_CUT * (1.0 + q) / (1.0 - q);
    let start = s.max(-z);
    let end = z.max(start + 2.0);
    NystromGrid::HalfLine { start, length: end - start, nodes }
}

/// Saddle-adapted circle for `K_{M,t}` at scale `n`: center 1, radius `1 + n^{-1/2}`, passing
/// just left of 0 where the integrand concentrates, with nodes clustered there.
pub fn saddle_circle(n: f64, nodes: usize) -> Result<Circle<f64>> {
    if !(n >= 1.0) {
        return domain("scale n must be at least 1");
    }
    let s = n.sqrt();
    Circle::clustered(Complex::new(1.0, 0.0), 1.0 + 1.0 / s, nodes, (4.0 / s).min(1.0))
}

/// Default circle for `K_{M,t}` at moderate `M, t`: center 0, radius `2 max b + 1`.
pub fn finite_time_circle(profile: &RateProfile, m_cut: i64, nodes: usize) -> Result<Circle<f64>> {
    Circle::centered(0.0, 2.0 * profile.b_max_on(0, m_cut) + 1.0, nodes)
}

/// Determinant and its change under doubling of the grid nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetValue {
    pub value: Complex<f64>,
    pub grid_refinement_delta: f64,
}

fn check_grid(k: &KernelSpec, g: &NystromGrid<f64>) -> Result<()> {
    match (k, g) {
        (KernelSpec::FiniteTime { m_cut, profile, .. }, NystromGrid::Circle(c)) => {
            if c.center.norm() >= c.radius {
                return domain("the circle must enclose 0 (which also puts qΓ inside Γ)");
            }
            for j in 0..=*m_cut {
                if !c.contains(Complex::new(profile.b(j), 0.0)) {
                    return domain(format!("the circle must enclose b_{j}"));
                }
            }
            Ok(())
        }
        (KernelSpec::Limiting { .. }, NystromGrid::VerticalLine { .. })
        | (KernelSpec::Mehler { .. } | KernelSpec::HalfLine { .. }, NystromGrid::HalfLine { .. }) => Ok(()),
        _ => domain("grid domain does not match the kernel kind"),
    }
}

/// `I + ζ A` where `A_{jk} = K(x_j, x_k) w_k`.
fn operator_matrix(k: &KernelSpec, zeta: Complex<f64>, g: &NystromGrid<f64>) -> Result<Matrix<f64>> {
    let pts = g.discretize()?;
    let n = pts.len();
    let q = k.q();
    let one = Complex::new(1.0, 0.0);
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut m = Matrix::zeros(n);
    match k {
        KernelSpec::FiniteTime { m_cut, t, profile } => {
            // Row factor F(w) = e^{-wt} ∏ b_k/(b_k - w), column factor 1/(q w' - w).
            let f: Vec<Complex<f64>> =
                pts.iter().map(|(z, _)| crate::contour::product_ratio(profile, *z, 0, *m_cut).map(|p| p * (-*z * *t).exp())).collect::<Result<_>>()?;
            for j in 0..n {
                for l in 0..n {
                    let den = pts[l].0 * q - pts[j].0;
                    if den.norm() < 1e-14 {
                        return Err(Error::Singular("q w' = w on the contour".into()));
                    }
                    m[(j, l)] = zeta * f[j] / den * pts[l].1;
                }
            }
        }
        KernelSpec::Limiting { tau, betas, .. } => {
            let col: Vec<Complex<f64>> = pts
                .iter()
                .map(|(w, wt)| {
                    let gamma = betas.iter().fold(one, |acc, &b| acc * b / (b - *w));
                    (*w * *w * 0.5 + *w * *tau).exp() * gamma * *wt
                })
                .collect();
            for j in 0..n {
                for l in 0..n {
                    m[(j, l)] = zeta * col[l] / (pts[j].0 * q - pts[l].0);
                }
            }
        }
        KernelSpec::HalfLine { tau, .. } => {
            for j in 0..n {
                for l in 0..n {
                    let d = pts[j].0.re - q * pts[l].0.re + tau;
                    m[(j, l)] = -zeta * (inv_sqrt_2pi * (-0.5 * d * d).exp()) * pts[l].1;
                }
            }
        }
        KernelSpec::Mehler { .. } => {
            let a = (1.0 + q * q) / ((1.0 + q) * (1.0 + q) * 4.0);
            let b = q / ((1.0 + q) * (1.0 + q));
            let c = inv_sqrt_2pi / (1.0 + q);
            for j in 0..n {
                for l in 0..n {
                    let (x, y) = (pts[j].0.re, pts[l].0.re);
                    m[(j, l)] = -zeta * (c * (-a * (x * x + y * y) + b * x * y).exp()) * pts[l].1;
                }
            }
        }
    }
    for j in 0..n {
        m[(j, j)] += one;
    }
    Ok(m)
}

/// `det(I + ζ K)` on one grid.
pub fn det_on_grid(k: &KernelSpec, zeta: Complex<f64>, g: &NystromGrid<f64>) -> Result<Complex<f64>> {
    k.validate()?;
    check_grid(k, g)?;
    if zeta == Complex::new(0.0, 0.0) {
        return Ok(Complex::new(1.0, 0.0));
    }
    operator_matrix(k, zeta, g)?.det()
}

/// `det(I + ζ K)` on the doubled grid, with its change against the grid as given.
pub fn nystrom_det(k: &KernelSpec, zeta: Complex<f64>, g: &NystromGrid<f64>) -> Result<DetValue> {
    let base = det_on_grid(k, zeta, g)?;
    let value = det_on_grid(k, zeta, &g.with_nodes(g.nodes() * 2))?;
    Ok(DetValue { value, grid_refinement_delta: (value - base).norm() })
}

pub fn det_k_mt(zeta: Complex<f64>, m_cut: i64, t: f64, profile: &RateProfile, g: &NystromGrid<f64>) -> Result<DetValue> {
    nystrom_det(&KernelSpec::FiniteTime { m_cut, t, profile: profile.clone() }, zeta, g)
}

pub fn limiting_det(zeta: Complex<f64>, tau: f64, betas: &[f64], q: QParam, g: &NystromGrid<f64>) -> Result<DetValue> {
    nystrom_det(&KernelSpec::Limiting { q, tau, betas: betas.to_vec() }, zeta, g)
}

pub fn mehler_det(zeta: Complex<f64>, tau: f64, q: QParam, g: &NystromGrid<f64>) -> Result<DetValue> {
    nystrom_det(&KernelSpec::Mehler { q, tau }, zeta, g)
}

pub fn halfline_det(zeta: Complex<f64>, tau: f64, q: QParam, g: &NystromGrid<f64>) -> Result<DetValue> {
    nystrom_det(&KernelSpec::HalfLine { q, tau }, zeta, g)
}

/// Default ζ-circle for the `m`-th particle: center 0, radius `1.5 q^{1-m}`, 128 nodes.
pub fn zeta_circle(m: usize, q: QParam) -> Result<Circle<f64>> {
    if m == 0 {
        return domain("particle index m starts at 1");
    }
    Circle::centered(0.0, 1.5 * q.get().powi(1 - m as i32), 128)
}

fn zeta_integral(k: &KernelSpec, m: usize, g: &NystromGrid<f64>, zc: &Circle<f64>) -> Result<Complex<f64>> {
    let q = k.q();
    let nodes = zc.nodes();
    let vals: Vec<Complex<f64>> = nodes
        .par_iter()
        .map(|nd| {
            let d = det_on_grid(k, nd.z, g)?;
            let den = (0..m).fold(nd.z, |acc, j| acc * (1.0 - q.powi(j as i32) * nd.z));
            Ok(d / den * nd.weight)
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(Complex::new(0.0, 0.0), |a, b| a + b))
}

fn zeta_checks(m: usize, q: f64, zc: &Circle<f64>) -> Result<()> {
    zc.validate()?;
    if m == 0 {
        return domain("particle index m starts at 1");
    }
    if zc.center.norm() >= zc.radius || zc.gap(Complex::new(q.powi(1 - m as i32), 0.0)) >= 0.0 {
        return domain("the ζ-circle must enclose 0 and 1, q^{-1}, …, q^{1-m}");
    }
    Ok(())
}

fn step_from_kernel(k: &KernelSpec, m: usize, g: &NystromGrid<f64>, zc: &Circle<f64>) -> Result<ExactProbability> {
    k.validate()?;
    check_grid(k, g)?;
    zeta_checks(m, k.q(), zc)?;
    let base = zeta_integral(k, m, g, zc)?;
    let refined = zeta_integral(k, m, &g.with_nodes(g.nodes() * 2), &zc.refined())?;
    Ok(ExactProbability::from_pair(base, refined))
}

/// `P(x_m(t) > M) = ∮ dζ/ζ det(I + ζ K_{M,t}) / ∏_{j<m} (1 - q^j ζ)` for the step initial
/// condition; the certification doubles both the ζ nodes and the kernel grid.
pub fn step_distribution(m: usize, m_cut: i64, t: f64, profile: &RateProfile, g: &NystromGrid<f64>, zc: &Circle<f64>) -> Result<ExactProbability> {
    step_from_kernel(&KernelSpec::FiniteTime { m_cut, t, profile: profile.clone() }, m, g, zc)
}

/// Same quantity by residues at `ζ = 0` and `ζ = q^{-j}`:
/// `1 - Σ_{j<m} det(I + q^{-j} K) / ∏_{i≠j} (1 - q^{i-j})`.
pub fn step_distribution_residues(k: &KernelSpec, m: usize, g: &NystromGrid<f64>) -> Result<Complex<f64>> {
    if m == 0 {
        return domain("particle index m starts at 1");
    }
    let q = k.q();
    let mut acc = Complex::new(1.0, 0.0);
    for j in 0..m as i32 {
        let d = det_on_grid(k, Complex::new(q.powi(-j), 0.0), g)?;
        let den: f64 = (0..m as i32).filter(|&i| i != j).map(|i| 1.0 - q.powi(i - j)).product();
        acc -= d / den;
    }
    Ok(acc)
}

/// Large-time limit of `P(x_m > M)` in the scaling `M = n + l + 1`, `t = n - τ√n`.
pub fn limiting_step_distribution(m: usize, tau: f64, betas: &[f64], q: QParam, g: &NystromGrid<f64>, zc: &Circle<f64>) -> Result<ExactProbability> {
    step_from_kernel(&KernelSpec::Limiting { q, tau, betas: betas.to_vec() }, m, g, zc)
}

/// Kernel of the scaled finite-`n` problem: `M = n + l + 1`, `t = n - τ√n`,
/// `b_k = β_k/√n` for `k ≤ l` and `b_k = 1` otherwise.
pub fn scaled_kernel(n: usize, tau: f64, betas: &[f64], q: QParam) -> Result<KernelSpec> {
    let nf = n as f64;
    let t = nf - tau * nf.sqrt();
    if !(t > 0.0) {
        return domain(format!("t = n - tau sqrt(n) must be positive (n={n}, tau={tau})"));
    }
    let a_unit = 1.0 / (1.0 - q.get());
    let rates: Vec<f64> = betas.iter().map(|&b| b / nf.sqrt() * a_unit).collect();
    let profile = RateProfile::with_rates(q.get(), a_unit, 0, &rates)?;
    let l = betas.len() as i64 - 1;
    Ok(KernelSpec::FiniteTime { m_cut: n as i64 + l + 1, t, profile })
}

/// One row of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub det_n: Complex<f64>,
    pub det_limit: Complex<f64>,
    pub deviation: f64,
    pub det_n_delta: f64,
}

/// Nodes of the saddle circle used for the finite-`n` determinants.
pub const SADDLE_NODES: usize = 128;

/// `|det(I + ζ K_{M,t}) - det(I + ζ 𝒦)|` along `n_list`.
pub fn asymptotic_convergence_study(n_list: &[usize], tau: f64, betas: &[f64], zeta: Complex<f64>, q: QParam, nodes: usize) -> Result<Vec<ConvergenceRow>> {
    let limit = limiting_det(zeta, tau, betas, q, &line_grid())?;
    n_list
        .iter()
        .map(|&n| {
            let k = scaled_kernel(n, tau, betas, q)?;
            let g = NystromGrid::Circle(saddle_circle(n as f64, nodes)?);
            let d = nystrom_det(&k, zeta, &g)?;
            Ok(ConvergenceRow { n, det_n: d.value, det_limit: limit.value, deviation: (d.value - limit.value).norm(), det_n_delta: d.grid_refinement_delta })
        })
        .collect()
}

/// Least-squares slope of `log deviation` against `log n`.
pub fn loglog_slope(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).ln(), r.deviation.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Saddle-point exponent `f(w) = w + log(1 - w)` with the principal branch (cut on `[1, ∞)`).
pub fn saddle_exponent(w: Complex<f64>) -> Complex<f64> {
    w + (Complex::new(1.0, 0.0) - w).ln()
}
