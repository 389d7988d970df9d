//! Reference solutions that do not use any contour integral: the master equation of the
//! finite system, solved by uniformisation on a truncated state space.

use crate::error::{domain, Error, Result};
use crate::model::{ParticleConfig, RateProfile};
use std::collections::HashMap;

/// Upper bound on the number of states the solver will enumerate.
pub const MAX_STATES: usize = 2_000_000;

/// Master equation of an `N`-particle system started from `Y`, on positions `x_i ≤ cap + 1`.
///
/// Particles that reach `cap + 1` are frozen there. Because jumps only go right and a site's
/// rate depends only on its own occupation, this leaves the law of every state with
/// `x_1 ≤ cap` exact, and `P(x_n > M)` is exact for `M = cap`.
#[derive(Debug, Clone)]
pub struct MasterEquation {
    states: Vec<Vec<i64>>,
    index: HashMap<Vec<i64>, usize>,
    transitions: Vec<Vec<(usize, f64)>>,
    exit: Vec<f64>,
    start: usize,
    cap: i64,
}

impl MasterEquation {
    pub fn new(profile: &RateProfile, y: &ParticleConfig, cap: i64) -> Result<Self> {
        let ys = y.positions();
        if ys[0] > cap + 1 {
            return domain("initial configuration lies beyond the truncation");
        }
        let park = cap + 1;
        let mut states = Vec::new();
        let mut cur = Vec::with_capacity(ys.len());
        enumerate(ys, park, i64::MAX, &mut cur, &mut states)?;
        let index: HashMap<Vec<i64>, usize> = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let q = profile.q().get();
        let mut transitions = Vec::with_capacity(states.len());
        let mut exit = Vec::with_capacity(states.len());
        for s in &states {
            let mut out = Vec::new();
            let mut total = 0.0;
            let mut i = 0;
            while i < s.len() {
                let site = s[i];
                let mut j = i;
                while j < s.len() && s[j] == site {
                    j += 1;
                }
                if site < park {
                    let rate = profile.a(site) * (1.0 - q.powi((j - i) as i32));
                    let mut next = s.clone();
                    next[i] += 1;
                    out.push((index[&next], rate));
                    total += rate;
                }
                i = j;
            }
            transitions.push(out);
            exit.push(total);
        }
        let start = index[ys];
        Ok(Self { states, index, transitions, exit, start, cap })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[Vec<i64>] {
        &self.states
    }

    pub fn cap(&self) -> i64 {
        self.cap
    }

    /// State probabilities at time `t`, to an absolute accuracy of about `1e-15`.
    pub fn evolve(&self, t: f64) -> Result<Vec<f64>> {
        if !(t >= 0.0) {
            return domain("time must be nonnegative");
        }
        let n = self.states.len();
        let mut v = vec![0.0; n];
        v[self.start] = 1.0;
        let lam = self.exit.iter().copied().fold(0.0, f64::max);
        if lam == 0.0 || t == 0.0 {
            return Ok(v);
        }
        let lt = lam * t;
        let mut out = vec![0.0; n];
        let mut next = vec![0.0; n];
        let kmax = (lt + 40.0 * lt.sqrt() + 60.0) as usize;
        for k in 0..=kmax {
            let w = (-lt + k as f64 * lt.ln() - ln_factorial(k)).exp();
            for (o, x) in out.iter_mut().zip(&v) {
                *o += w * x;
            }
            // Beyond the mode the Poisson weights decay faster than geometrically.
            if k as f64 > lt + 1.0 && w < 1e-18 {
                return Ok(out);
            }
            next.iter_mut().for_each(|x| *x = 0.0);
            for (s, &p) in v.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                next[s] += p * (1.0 - self.exit[s] / lam);
                for &(to, r) in &self.transitions[s] {
                    next[to] += p * r / lam;
                }
            }
            std::mem::swap(&mut v, &mut next);
        }
        Err(Error::Numeric(format!("uniformisation did not converge (Λt = {lt})")))
    }

    /// Probability of configuration `x` in an evolved distribution.
    pub fn probability(&self, dist: &[f64], x: &[i64]) -> f64 {
        self.index.get(x).map_or(0.0, |&i| dist[i])
    }

    /// `P(x_n > M)` for `M ≤ cap`.
    pub fn tail(&self, dist: &[f64], n: usize, m_cut: i64) -> f64 {
        self.states.iter().zip(dist).filter(|(s, _)| s[n - 1] > m_cut).map(|(_, p)| p).sum()
    }
}

fn enumerate(ys: &[i64], park: i64, upper: i64, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) -> Result<()> {
    let i = cur.len();
    if i == ys.len() {
        if out.len() >= MAX_STATES {
            return Err(Error::Domain(format!("state space exceeds {MAX_STATES} states")));
        }
        out.push(cur.clone());
        return Ok(());
    }
    let hi = park.min(upper);
    for x in ys[i]..=hi {
        cur.push(x);
        enumerate(ys, park, x, cur, out)?;
        cur.pop();
    }
    Ok(())
}

pub(crate) fn ln_factorial(k: usize) -> f64 {
    (1..=k).map(|i| (i as f64).ln()).sum()
}

/// `P_{0^r}(x_r(t) > M)` from the master equation with sites beyond `M` frozen.
pub fn step_leftmost_tail(profile: &RateProfile, r: usize, m_cut: i64, t: f64) -> Result<f64> {
    let y = ParticleConfig::stacked(r, 0)?;
    let me = MasterEquation::new(profile, &y, m_cut)?;
    let d = me.evolve(t)?;
    Ok(me.tail(&d, r, m_cut))
}

/// Smallest `D` with `P(Poisson(λ) > D) < tol`.
pub fn poisson_depth(lambda: f64, tol: f64) -> i64 {
    let mut d = 0;
    while crate::stats::poisson_tail(d, lambda) >= tol {
        d += 1;
    }
    d
}
