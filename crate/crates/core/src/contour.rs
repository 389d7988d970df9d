//! Finite-N contour integral formulas: the transition probability, the tagged-particle
//! distributions on the large circle and on nested circles, and the identities relating the
//! two contour families.

use crate::error::{domain, Error, Result};
use crate::model::{ParticleConfig, RateProfile};
use crate::qalgebra::{coeff_c, coeff_c_tilde, QParam};
use crate::quadrature::{circle_integral, Circle, Node};
use crate::scalar::Real;
use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Largest number of coupled integration variables.
pub const MAX_FOLD: usize = 5;
/// Largest per-axis node count of a multi-dimensional integral before refinement.
pub const MAX_NODES_PER_AXIS: usize = 128;
/// Tolerance on the imaginary part of a computed probability.
pub const IMAG_TOL: f64 = 1e-9;

/// A probability computed at two resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactProbability {
    /// Real part at the refined resolution.
    pub value: f64,
    /// Modulus of the change between the base and the doubled node count.
    pub node_doubling_delta: f64,
    /// Imaginary part at the refined resolution.
    pub imag_residual: f64,
}

impl ExactProbability {
    pub fn from_pair(base: Complex<f64>, refined: Complex<f64>) -> Self {
        Self { value: refined.re, node_doubling_delta: (refined - base).norm(), imag_residual: refined.im }
    }

    /// Complement `1 - p` with the same error estimates.
    pub fn complement(self) -> Self {
        Self { value: 1.0 - self.value, ..self }
    }

    /// Value clamped to `[0, 1]` for reporting.
    pub fn clamped(&self) -> f64 {
        self.value.clamp(0.0, 1.0)
    }

    /// Checks node-doubling stability, the imaginary residue and the probability range.
    pub fn certify(&self, doubling_tol: f64) -> Result<()> {
        if !(self.node_doubling_delta < doubling_tol) {
            return Err(Error::Invariant(format!("node doubling changed the value by {:.3e} (tolerance {doubling_tol:.1e})", self.node_doubling_delta)));
        }
        if !(self.imag_residual.abs() < IMAG_TOL) {
            return Err(Error::Invariant(format!("imaginary residue {:.3e}", self.imag_residual)));
        }
        let eps = f64::max(1e-8, 10.0 * self.node_doubling_delta);
        if !(self.value >= -eps && self.value <= 1.0 + eps) {
            return Err(Error::Invariant(format!("probability {} outside [0,1]", self.value)));
        }
        Ok(())
    }
}

fn cplx<R: Real>(x: f64) -> Complex<R> {
    Complex::new(R::lit(x), R::zero())
}

/// Extended product `∏'_{k=lo}^{hi} b_k/(b_k - w)`: the ordinary product for `hi ≥ lo`, `1`
/// for `hi = lo - 1` and the reciprocal of the product over `hi+1..=lo-1` otherwise.
pub fn product_ratio<R: Real>(profile: &RateProfile, w: Complex<R>, lo: i64, hi: i64) -> Result<Complex<R>> {
    let (from, to, invert) = if hi >= lo { (lo, hi, false) } else { (hi + 1, lo - 1, true) };
    let mut acc = Complex::new(R::one(), R::zero());
    for k in from..=to {
        let b: Complex<R> = cplx(profile.b(k));
        let den = b - w;
        if den.norm() < R::lit(1e-12) * (R::one() + b.norm()) {
            return Err(Error::Singular(format!("w = {w} hits the pole b_{k}")));
        }
        acc = acc * if invert { den / b } else { b / den };
    }
    Ok(acc)
}

/// One integration variable: its nodes and the node weights multiplied by all factors that
/// depend on that variable alone.
struct Axis<R> {
    z: Vec<Complex<R>>,
    h: Vec<Complex<R>>,
}

fn check_fold(r: usize, nodes: usize) -> Result<()> {
    if r > MAX_FOLD {
        return domain(format!("{r}-fold integral exceeds the {MAX_FOLD}-fold limit"));
    }
    if r >= 2 && nodes > 2 * MAX_NODES_PER_AXIS {
        return domain(format!("{nodes} nodes per axis exceeds the limit of {MAX_NODES_PER_AXIS} (doubled {})", 2 * MAX_NODES_PER_AXIS));
    }
    Ok(())
}

/// `Σ ∏_i h_i(z_i) ∏_{i<j} (z_i - z_j)/(q z_i - z_j)` over the tensor grid.
fn coupled_sum<R: Real>(axes: &[Axis<R>], q: R) -> Result<Complex<R>> {
    let r = axes.len();
    let zero = Complex::new(R::zero(), R::zero());
    if r == 0 {
        return Ok(Complex::new(R::one(), R::zero()));
    }
    // pair[i][j] for i < j, row-major over (node of i, node of j).
    let mut pair: Vec<Vec<Vec<Complex<R>>>> = vec![vec![Vec::new(); r]; r];
    for i in 0..r {
        for j in i + 1..r {
            let nj = axes[j].z.len();
            let mut t = Vec::with_capacity(axes[i].z.len() * nj);
            for &zi in &axes[i].z {
                for &zj in &axes[j].z {
                    let num = zi - zj;
                    let den = zi * q - zj;
                    if den.norm() < R::lit(1e-12) * (R::one() + num.norm()) {
                        return Err(Error::Singular(format!("B_r pole between variables {i} and {j}")));
                    }
                    t.push(num / den);
                }
            }
            pair[i][j] = t;
        }
    }

    fn level<R: Real>(axes: &[Axis<R>], pair: &[Vec<Vec<Complex<R>>>], l: usize, idx: &mut Vec<usize>, buf: &mut Vec<Vec<Complex<R>>>) -> Complex<R> {
        let n = axes[l].z.len();
        let mut g = std::mem::take(&mut buf[l]);
        g.clear();
        g.extend_from_slice(&axes[l].h);
        for (i, &ki) in idx.iter().enumerate() {
            let row = &pair[i][l][ki * n..(ki + 1) * n];
            for (gk, p) in g.iter_mut().zip(row) {
                *gk = *gk * *p;
            }
        }
        let mut acc = Complex::new(R::zero(), R::zero());
        if l + 1 == axes.len() {
            for v in &g {
                acc = acc + *v;
            }
        } else {
            for (k, gk) in g.iter().enumerate() {
                idx.push(k);
                acc = acc + *gk * level(axes, pair, l + 1, idx, buf);
                idx.pop();
            }
        }
        buf[l] = g;
        acc
    }

    let n0 = axes[0].z.len();
    let parts: Vec<Complex<R>> = (0..n0)
        .into_par_iter()
        .map(|k| {
            if r == 1 {
                return axes[0].h[k];
            }
            let mut idx = vec![k];
            let mut buf = vec![Vec::new(); r];
            axes[0].h[k] * level(axes, &pair, 1, &mut idx, &mut buf)
        })
        .collect();
    let total = parts.into_iter().fold(zero, |a, b| a + b);
    if !(total.re.is_finite() && total.im.is_finite()) {
        return Err(Error::Numeric("non-finite contour integral".into()));
    }
    Ok(total)
}

/// Axis for the tagged-particle integrand `e^{-wt} ∏'_{k=y}^{M} b_k/(b_k-w) / w`.
fn tagged_axis<R: Real>(nodes: &[Node<R>], y: i64, m_cut: i64, t: f64, profile: &RateProfile) -> Result<Axis<R>> {
    let t = R::lit(t);
    let mut z = Vec::with_capacity(nodes.len());
    let mut h = Vec::with_capacity(nodes.len());
    for nd in nodes {
        let pr = product_ratio(profile, nd.z, y, m_cut)?;
        z.push(nd.z);
        h.push(nd.weight * pr * (-nd.z * t).exp() / nd.z);
    }
    Ok(Axis { z, h })
}

/// `I(Y; M, t) = ∮…∮ ∏ dw_i/w_i · B_r(w) ∏_i ∏'_{k=y_i}^{M} b_k/(b_k - w_i) e^{-w_i t}` with
/// variable `i` on `circles[i]`.
pub fn tagged_integral<R: Real>(ys: &[i64], m_cut: i64, t: f64, profile: &RateProfile, circles: &[Circle<R>]) -> Result<Complex<R>> {
    if circles.len() != ys.len() {
        return domain("one circle per integration variable is required");
    }
    for c in circles {
        c.validate()?;
        check_fold(ys.len(), c.nodes)?;
    }
    let axes = ys.iter().zip(circles).map(|(&y, c)| tagged_axis(&c.nodes(), y, m_cut, t, profile)).collect::<Result<Vec<_>>>()?;
    coupled_sum(&axes, profile.q().as_real::<R>())
}

/// Default large circle for formulas whose contour must enclose `0`, all `b_k` in scope and
/// the `q`-images of itself: center 0, radius `2 max b + 1`.
pub fn default_circle(profile: &RateProfile, lo: i64, hi: i64, nodes: usize) -> Result<Circle<f64>> {
    Circle::centered(0.0, 2.0 * profile.b_max_on(lo, hi) + 1.0, nodes)
}

fn check_large_circle(profile: &RateProfile, c: &Circle<f64>, lo: i64, hi: i64) -> Result<()> {
    if !c.contains(Complex::new(0.0, 0.0)) {
        return domain("the circle must enclose 0");
    }
    for k in lo..=hi {
        if !c.contains(Complex::new(profile.b(k), 0.0)) {
            return domain(format!("the circle must enclose b_{k} = {}", profile.b(k)));
        }
    }
    Ok(())
}

fn pair_eval<F>(base: &Circle<f64>, mut eval: F) -> Result<ExactProbability>
where
    F: FnMut(&Circle<f64>) -> Result<Complex<f64>>,
{
    let a = eval(base)?;
    let b = eval(&base.refined())?;
    Ok(ExactProbability::from_pair(a, b))
}

fn check_positions(y: &ParticleConfig, n: usize) -> Result<()> {
    let big_n = y.len();
    if n == 0 || n > big_n {
        return domain(format!("particle index {n} outside 1..={big_n}"));
    }
    if big_n > MAX_FOLD {
        return domain(format!("N = {big_n} exceeds the limit {MAX_FOLD}"));
    }
    Ok(())
}

fn subsets(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for s in start..=n {
            cur.push(s);
            rec(s + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(1, n, r, &mut Vec::new(), &mut out);
    out
}

/// All subsets of `{1..n}` ordered by size then lexicographically.
pub fn all_subsets(n: usize) -> Vec<Vec<usize>> {
    (0..=n).flat_map(|r| subsets(n, r)).collect()
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                cur.push(v);
                rec(cur, used, out);
                cur.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Transition amplitude at one resolution:
/// `(1/W(X)) ∏(-1/b_{x_k}) Σ_σ ∮ A_σ(w) ∏_j ∏'_{k=y_σ(j)}^{x_j} b_k/(b_k - w_σ(j)) e^{-w_j t}`.
pub fn transition_amplitude<R: Real>(y: &ParticleConfig, x: &ParticleConfig, t: f64, profile: &RateProfile, c: &Circle<R>) -> Result<Complex<R>> {
    let n = y.len();
    if x.len() != n {
        return domain("initial and final configurations differ in particle number");
    }
    if n > MAX_FOLD {
        return domain(format!("N = {n} exceeds the limit {MAX_FOLD}"));
    }
    if t < 0.0 {
        return domain("time must be nonnegative");
    }
    c.validate()?;
    check_fold(n, c.nodes)?;
    let q: R = profile.q().as_real();
    let nodes = c.nodes();
    let m = nodes.len();
    let tt = R::lit(t);
    let zs: Vec<Complex<R>> = nodes.iter().map(|nd| nd.z).collect();
    let base: Vec<Complex<R>> = nodes.iter().map(|nd| nd.weight * (-nd.z * tt).exp()).collect();
    // g[v][j][k]: variable v (initial y_v) at position j (final x_j) on node k.
    let mut g = vec![vec![vec![Complex::new(R::zero(), R::zero()); m]; n]; n];
    for (v, gv) in g.iter_mut().enumerate() {
        for (j, gvj) in gv.iter_mut().enumerate() {
            for (k, cell) in gvj.iter_mut().enumerate() {
                *cell = base[k] * product_ratio(profile, zs[k], y.x(v + 1), x.x(j + 1))?;
            }
        }
    }
    // s[k][l] = S(z_k, z_l).
    let mut s = vec![Complex::new(R::zero(), R::zero()); m * m];
    for k in 0..m {
        for l in 0..m {
            let num = zs[l] * q - zs[k];
            let den = zs[k] * q - zs[l];
            if den.norm() < R::lit(1e-12) * (R::one() + num.norm()) {
                return Err(Error::Singular("S pole on the contour".into()));
            }
            s[k * m + l] = -num / den;
        }
    }
    let perms = all_permutations(n);
    // inv[p][j] lists i < j with σ(i) > σ(j).
    let inv: Vec<Vec<Vec<usize>>> = perms.iter().map(|p| (0..n).map(|j| (0..j).filter(|&i| p[i] > p[j]).collect()).collect()).collect();

    struct Ctx<'a, R> {
        n: usize,
        m: usize,
        g: &'a [Vec<Vec<Complex<R>>>],
        s: &'a [Complex<R>],
        perms: &'a [Vec<usize>],
        inv: &'a [Vec<Vec<usize>>],
    }

    fn level<R: Real>(cx: &Ctx<R>, j: usize, idx: &mut Vec<usize>, part: &[Complex<R>]) -> Complex<R> {
        let mut acc = Complex::new(R::zero(), R::zero());
        let mut next = vec![Complex::new(R::zero(), R::zero()); part.len()];
        for k in 0..cx.m {
            for (p, perm) in cx.perms.iter().enumerate() {
                let mut v = part[p] * cx.g[perm[j]][j][k];
                for &i in &cx.inv[p][j] {
                    v = v * cx.s[k * cx.m + idx[i]];
                }
                next[p] = v;
            }
            if j + 1 == cx.n {
                for v in &next {
                    acc = acc + *v;
                }
            } else {
                idx.push(k);
                acc = acc + level(cx, j + 1, idx, &next);
                idx.pop();
            }
        }
        acc
    }

    let cx = Ctx { n, m, g: &g, s: &s, perms: &perms, inv: &inv };
    let parts: Vec<Complex<R>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let part: Vec<Complex<R>> = perms.iter().map(|p| g[p[0]][0][k]).collect();
            if n == 1 {
                return part.into_iter().fold(Complex::new(R::zero(), R::zero()), |a, b| a + b);
            }
            let mut idx = vec![k];
            level(&cx, 1, &mut idx, &part)
        })
        .collect();
    let total = parts.into_iter().fold(Complex::new(R::zero(), R::zero()), |a, b| a + b);
    let qq = profile.q().get();
    let occ: Vec<u32> = x.occupation().values().copied().collect();
    let w = crate::qalgebra::weight_w(occ, &qq);
    let pref = x.positions().iter().fold(1.0 / w, |acc, &xk| acc * (-1.0 / profile.b(xk)));
    let v = total * R::lit(pref);
    if !(v.re.is_finite() && v.im.is_finite()) {
        return Err(Error::Numeric("non-finite transition amplitude".into()));
    }
    Ok(v)
}

/// `P_Y(X(t) = X)` with node-doubling certification data.
pub fn transition_probability(y: &ParticleConfig, x: &ParticleConfig, t: f64, profile: &RateProfile, c: &Circle<f64>) -> Result<ExactProbability> {
    let lo = y.positions().iter().chain(x.positions()).copied().min().unwrap_or(0);
    let hi = y.positions().iter().chain(x.positions()).copied().max().unwrap_or(0);
    check_large_circle(profile, c, lo, hi)?;
    pair_eval(c, |c| transition_amplitude(y, x, t, profile, c))
}

fn ys_of(y: &ParticleConfig, s: &[usize]) -> Vec<i64> {
    s.iter().map(|&i| y.x(i)).collect()
}

/// Right-tail subset sum `P_Y(x_n(t) > M) = Σ_{r=n}^{N} (-1)^r Σ_{|S|=r} c_S(n) I(Y_S)` at one
/// resolution, with every variable on the same circle.
pub fn tagged_right_raw<R: Real>(y: &ParticleConfig, n: usize, m_cut: i64, t: f64, profile: &RateProfile, c: &Circle<R>) -> Result<Complex<R>> {
    check_positions(y, n)?;
    let big_n = y.len();
    let q = profile.q().get();
    let mut acc = Complex::new(R::zero(), R::zero());
    for r in n..=big_n {
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        for s in subsets(big_n, r) {
            let si: Vec<i64> = s.iter().map(|&v| v as i64).collect();
            let coef = sign * coeff_c(&si, n, &q)?;
            let ys = ys_of(y, &s);
            acc = acc + tagged_integral(&ys, m_cut, t, profile, &vec![*c; r])? * R::lit(coef);
        }
    }
    Ok(acc)
}

/// `P_Y(x_n(t) > M)` on the large circle.
pub fn dist_tagged_right(y: &ParticleConfig, n: usize, m_cut: i64, t: f64, profile: &RateProfile, c: &Circle<f64>) -> Result<ExactProbability> {
    check_positions(y, n)?;
    check_large_circle(profile, c, y.x(y.len()).min(m_cut), m_cut.max(y.x(1)))?;
    pair_eval(c, |c| tagged_right_raw(y, n, m_cut, t, profile, c))
}

/// Left-tail subset sum `P_Y(x_{N-n+1}(t) ≤ M) = Σ_r q^{-rN} Σ_{|S|=r} c̃_S(n) Ĩ(Y_S)` at one
/// resolution, the `i`-th variable of each subset on the `i`-th nested circle.
pub fn tagged_left_raw<R: Real>(y: &ParticleConfig, n: usize, m_cut: i64, t: f64, profile: &RateProfile, fam: &NestedContourFamily<R>) -> Result<Complex<R>> {
    check_positions(y, n)?;
    let big_n = y.len();
    if fam.circles.len() < big_n {
        return domain(format!("nested family has {} circles, {big_n} needed", fam.circles.len()));
    }
    let q = profile.q().get();
    let mut acc = Complex::new(R::zero(), R::zero());
    for r in n..=big_n {
        let pref = q.powi(-((r * big_n) as i32));
        for s in subsets(big_n, r) {
            let si: Vec<i64> = s.iter().map(|&v| v as i64).collect();
            let coef = pref * coeff_c_tilde(&si, n, &q)?;
            let ys = ys_of(y, &s);
            acc = acc + tagged_integral(&ys, m_cut, t, profile, &fam.circles[..r])? * R::lit(coef);
        }
    }
    Ok(acc)
}

/// `P_Y(x_{N-n+1}(t) ≤ M)` on nested circles.
pub fn dist_tagged_left(y: &ParticleConfig, n: usize, m_cut: i64, t: f64, profile: &RateProfile, fam: &NestedContourFamily<f64>) -> Result<ExactProbability> {
    check_positions(y, n)?;
    fam.verify_profile(profile, y.x(y.len()).min(m_cut), m_cut.max(y.x(1)))?;
    let a = tagged_left_raw(y, n, m_cut, t, profile, fam)?;
    let b = tagged_left_raw(y, n, m_cut, t, profile, &fam.refined())?;
    Ok(ExactProbability::from_pair(a, b))
}

/// `P_Y(x_N(t) > M)`: a single `N`-fold integral on the large circle.
pub fn dist_leftmost(y: &ParticleConfig, m_cut: i64, t: f64, profile: &RateProfile, c: &Circle<f64>) -> Result<ExactProbability> {
    check_positions(y, y.len())?;
    check_large_circle(profile, c, y.x(y.len()).min(m_cut), m_cut.max(y.x(1)))?;
    pair_eval(c, |c| tagged_integral(y.positions(), m_cut, t, profile, &vec![*c; y.len()]))
}

/// `P_Y(x_1(t) ≤ M) = (-1)^N q^{N(N-1)/2} Ĩ(Y)` on nested circles.
pub fn dist_rightmost(y: &ParticleConfig, m_cut: i64, t: f64, profile: &RateProfile, fam: &NestedContourFamily<f64>) -> Result<ExactProbability> {
    let big_n = y.len();
    check_positions(y, big_n)?;
    fam.verify_profile(profile, y.x(big_n).min(m_cut), m_cut.max(y.x(1)))?;
    let q = profile.q().get();
    let sign = if big_n.is_multiple_of(2) { 1.0 } else { -1.0 };
    let pref = sign * q.powi((big_n * (big_n - 1) / 2) as i32);
    let eval = |f: &NestedContourFamily<f64>| -> Result<Complex<f64>> { Ok(tagged_integral(y.positions(), m_cut, t, profile, &f.circles[..big_n])? * pref) };
    Ok(ExactProbability::from_pair(eval(fam)?, eval(&fam.refined())?))
}

/// `P_{0^N}(x_m(t) > M) = (-1)^m q^{m(m-1)/2} Σ_{r=m}^{N} (-1)^r s_N(r,m) P_{0^r}(x_r(t) > M)`,
/// with the `r`-particle leftmost probabilities supplied by `leftmost`. Terms whose weight
/// `s_N(r,m)` is below `skip` are dropped without evaluating `leftmost` (each probability is
/// at most 1).
pub fn finite_step_tail<F>(n_total: usize, m: usize, q: QParam, skip: f64, mut leftmost: F) -> Result<f64>
where
    F: FnMut(usize) -> Result<f64>,
{
    let qq = q.get();
    let mut acc = 0.0;
    for r in m..=n_total {
        let w = crate::qalgebra::step_subset_weight(n_total, r, m, &qq)?;
        if w.abs() < skip {
            continue;
        }
        let sign = if r % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * w * leftmost(r)?;
    }
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(sign * qq.powi((m * (m - 1) / 2) as i32) * acc)
}

/// Circles `C̃_1, …, C̃_r` with `C̃_j ⊃ q C̃_i` for `j > i`, each enclosing the `b_k` in scope
/// and excluding 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "R: Real + Deserialize<'de>"))]
pub struct NestedContourFamily<R> {
    pub circles: Vec<Circle<R>>,
    /// Minimum distance kept between every circle and every pole of the integrand.
    pub margin: R,
}

impl<R: Real> NestedContourFamily<R> {
    pub fn refined(&self) -> Self {
        Self { circles: self.circles.iter().map(Circle::refined).collect(), margin: self.margin }
    }

    pub fn with_nodes(&self, nodes: usize) -> Self {
        Self { circles: self.circles.iter().map(|c| c.with_nodes(nodes)).collect(), margin: self.margin }
    }

    /// Checks the enclosure, exclusion and nesting constraints with the margin.
    pub fn verify(&self, bs: &[R], q: R) -> Result<()> {
        let d = self.margin;
        for (j, c) in self.circles.iter().enumerate() {
            c.validate()?;
            for &b in bs {
                if c.gap(Complex::new(b, R::zero())) > -d {
                    return Err(Error::Infeasible(format!("circle {} does not enclose b = {b} with margin {d}", j + 1)));
                }
            }
            if c.gap(Complex::new(R::zero(), R::zero())) < d {
                return Err(Error::Infeasible(format!("circle {} does not exclude 0 with margin {d}", j + 1)));
            }
            for (i, ci) in self.circles[..j].iter().enumerate() {
                let reach = (c.center - ci.center * q).norm() + q * ci.radius;
                if reach > c.radius - d {
                    return Err(Error::Infeasible(format!("circle {} does not enclose q times circle {} with margin {d}", j + 1, i + 1)));
                }
            }
        }
        Ok(())
    }

    pub fn verify_profile(&self, profile: &RateProfile, lo: i64, hi: i64) -> Result<()> {
        let bs: Vec<R> = (lo..=hi).map(|k| R::lit(profile.b(k))).collect();
        self.verify(&bs, profile.q().as_real())
    }

    /// Worst predicted trapezoid convergence factor over the circles.
    pub fn convergence_rate(&self, bs: &[R], q: R) -> R {
        let samples = 64;
        let pts: Vec<Vec<Complex<R>>> = self.circles.iter().map(|c| c.with_nodes(samples).nodes().into_iter().map(|n| n.z).collect()).collect();
        let mut worst = R::zero();
        for (j, c) in self.circles.iter().enumerate() {
            let (inside, outside) = family_singularities(bs, q, &pts, j);
            worst = worst.max(c.convergence_rate(&inside, &outside, true));
        }
        worst
    }
}

fn family_singularities<R: Real>(bs: &[R], q: R, pts: &[Vec<Complex<R>>], j: usize) -> (Vec<Complex<R>>, Vec<Complex<R>>) {
    let mut inside: Vec<Complex<R>> = bs.iter().map(|&b| Complex::new(b, R::zero())).collect();
    let mut outside = vec![Complex::new(R::zero(), R::zero())];
    for (i, p) in pts.iter().enumerate() {
        if i < j {
            inside.extend(p.iter().map(|z| *z * q));
        } else if i > j {
            outside.extend(p.iter().map(|z| *z / q));
        }
    }
    (inside, outside)
}

/// Default pole margin for nested families.
pub const NESTED_MARGIN: f64 = 1e-3;

/// Builds a nested family of `count` concentric circles for the given `b` values.
///
/// The circles share a real center `c0`. For each candidate `c0` the first radius is placed
/// a fraction of the way through its feasible interval and each subsequent radius a fraction
/// of the way through `((1-q)c0 + q r_{j-1}, c0)`. Every circle also gets its own node
/// clustering toward the point nearest 0. Among candidates that satisfy all constraints with
/// the margin, the one with the smallest predicted trapezoid convergence factor wins.
pub fn nested_family_build(bs: &[f64], q: QParam, count: usize, margin: f64, nodes: usize) -> Result<NestedContourFamily<f64>> {
    if bs.is_empty() || count == 0 {
        return domain("nested family needs at least one b value and one circle");
    }
    if bs.iter().any(|&b| !(b > 0.0)) {
        return domain("all b values must be positive");
    }
    let q = q.get();
    let bmin = bs.iter().copied().fold(f64::INFINITY, f64::min);
    let bmax = bs.iter().copied().fold(0.0, f64::max);
    let lambdas: Vec<f64> = (0..40).map(|i| 10f64.powf(-2.0 + 2.0 * i as f64 / 39.0)).collect();
    let fracs: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let mut best: Option<(f64, NestedContourFamily<f64>)> = None;
    let mut last_err = None;
    for ci in 0..12 {
        let c0 = (0.6 * bmin + 0.4 * bmax) + (1.5 * bmax - (0.6 * bmin + 0.4 * bmax)) * ci as f64 / 11.0;
        let rmin = (c0 - bmin).max(bmax - c0) + margin;
        let rmax = c0 - margin;
        if rmin >= rmax {
            continue;
        }
        for &f1 in &fracs {
            for &g in &fracs {
                let mut radii = vec![rmin + f1 * (rmax - rmin)];
                for _ in 1..count {
                    let lo = (1.0 - q) * c0 + q * radii[radii.len() - 1] + margin;
                    radii.push(lo + g * (rmax - lo));
                }
                let mut fam = NestedContourFamily {
                    circles: radii.iter().map(|&r| Circle { center: Complex::new(c0, 0.0), radius: r, nodes, cluster: 1.0 }).collect(),
                    margin,
                };
                if let Err(e) = fam.verify(bs, q) {
                    last_err = Some(e);
                    continue;
                }
                let pts: Vec<Vec<Complex<f64>>> = fam.circles.iter().map(|c| c.with_nodes(32).nodes().into_iter().map(|n| n.z).collect()).collect();
                let mut worst: f64 = 0.0;
                for j in 0..count {
                    let (inside, outside) = family_singularities(bs, q, &pts, j);
                    let (rate, lam) = lambdas
                        .iter()
                        .map(|&lam| {
                            let c = Circle { cluster: lam, ..fam.circles[j] };
                            (c.convergence_rate(&inside, &outside, true), lam)
                        })
                        .fold((f64::INFINITY, 1.0), |a, b| if b.0 < a.0 { b } else { a });
                    fam.circles[j].cluster = lam;
                    worst = worst.max(rate);
                }
                if best.as_ref().is_none_or(|(w, _)| worst < *w) {
                    best = Some((worst, fam));
                }
            }
        }
    }
    match best {
        Some((rate, fam)) if rate < 1.0 => Ok(fam),
        Some((rate, _)) => Err(Error::Infeasible(format!("no nested family converges (best factor {rate:.3})"))),
        None => Err(last_err.unwrap_or_else(|| Error::Infeasible(format!("b spread [{bmin}, {bmax}] leaves no room for {count} nested circles at q = {q}")))),
    }
}

/// Nested family for the `b_k` with `k` in `lo..=hi`.
pub fn nested_family_for(profile: &RateProfile, lo: i64, hi: i64, count: usize, nodes: usize) -> Result<NestedContourFamily<f64>> {
    let bs: Vec<f64> = (lo..=hi).map(|k| profile.b(k)).collect();
    nested_family_build(&bs, profile.q(), count, NESTED_MARGIN, nodes)
}

/// Maximum absolute residual of the two identities that move the integrand between the
/// large circle and the nested circles:
///
/// `I_C(Y) = Σ_{I} q^{ΣI - (2N-l+1)l/2} Ĩ(Y_I)` and
/// `Ĩ(Y) = Σ_{I} (-1)^{N-l} q^{ΣI - l - N(N-1)/2} I_C(Y_I)`, with `l = |I|` and the variable
/// labelled `i` on the nested circle `C̃_i`.
pub fn contour_relation_residual(
    y: &ParticleConfig,
    m_cut: i64,
    t: f64,
    profile: &RateProfile,
    c: &Circle<f64>,
    fam: &NestedContourFamily<f64>,
) -> Result<f64> {
    let big_n = y.len();
    if big_n > 3 {
        return domain("contour relation residual is limited to N <= 3");
    }
    if fam.circles.len() < big_n {
        return domain("nested family too short");
    }
    let lo = y.x(big_n).min(m_cut);
    let hi = m_cut.max(y.x(1));
    check_large_circle(profile, c, lo, hi)?;
    fam.verify_profile(profile, lo, hi)?;
    let q = profile.q().get();
    let nf = big_n as i64;
    let on_c = |s: &[usize]| tagged_integral(&ys_of(y, s), m_cut, t, profile, &vec![*c; s.len()]);
    let on_fam = |s: &[usize]| {
        let circles: Vec<Circle<f64>> = s.iter().map(|&i| fam.circles[i - 1]).collect();
        tagged_integral(&ys_of(y, s), m_cut, t, profile, &circles)
    };
    let full: Vec<usize> = (1..=big_n).collect();
    let mut rhs1 = Complex::new(0.0, 0.0);
    let mut rhs2 = Complex::new(0.0, 0.0);
    for s in all_subsets(big_n) {
        let l = s.len() as i64;
        let sum: i64 = s.iter().map(|&v| v as i64).sum();
        let e1 = sum as f64 - ((2 * nf - l + 1) * l) as f64 / 2.0;
        rhs1 += on_fam(&s)? * q.powf(e1);
        let sign = if (nf - l) % 2 == 0 { 1.0 } else { -1.0 };
        let e2 = (sum - l) as f64 - (nf * (nf - 1)) as f64 / 2.0;
        rhs2 += on_c(&s)? * (sign * q.powf(e2));
    }
    let r1 = (on_c(&full)? - rhs1).norm();
    let r2 = (on_fam(&full)? - rhs2).norm();
    Ok(r1.max(r2))
}

/// One-dimensional contour integral with certification data, for callers that only need
/// [`circle_integral`] on a closure.
pub fn certified_circle_integral<F>(f: F, c: &Circle<f64>) -> Result<ExactProbability>
where
    F: Fn(Complex<f64>) -> Result<Complex<f64>>,
{
    let a = circle_integral(&f, c)?;
    let b = circle_integral(&f, &c.refined())?;
    Ok(ExactProbability::from_pair(a, b))
}
