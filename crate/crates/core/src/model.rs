//! Rate profiles, q-TAZRP and q-TASEP configurations, the particle/spacing duality and the
//! height function.

use crate::error::{domain, Error, Result};
use crate::qalgebra::QParam;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Sites are confined to `[-2^31, 2^31)`.
pub const SITE_MIN: i64 = -(1 << 31);
pub const SITE_MAX: i64 = (1 << 31) - 1;

pub(crate) fn check_site(x: i64) -> Result<i64> {
    if (SITE_MIN..=SITE_MAX).contains(&x) {
        Ok(x)
    } else {
        Err(Error::Domain(format!("site {x} outside the supported window")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateProfileRepr {
    q: f64,
    default_a: f64,
    #[serde(default)]
    overrides: BTreeMap<i64, f64>,
    a_min: f64,
    a_max: f64,
}

/// Site rates `a_x`: a default value with finitely many overrides, all inside `[a_min, a_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RateProfileRepr", into = "RateProfileRepr")]
pub struct RateProfile {
    q: QParam,
    default_a: f64,
    overrides: BTreeMap<i64, f64>,
    a_min: f64,
    a_max: f64,
}

impl RateProfile {
    pub fn new(q: f64, default_a: f64, overrides: BTreeMap<i64, f64>, a_min: f64, a_max: f64) -> Result<Self> {
        let q = QParam::new(q)?;
        if !(a_min > 0.0 && a_min <= a_max && a_max.is_finite()) {
            return domain(format!("rate bounds must satisfy 0 < a_min <= a_max, got [{a_min}, {a_max}]"));
        }
        let inside = |a: f64| a >= a_min && a <= a_max;
        if !inside(default_a) {
            return domain(format!("default rate {default_a} outside [{a_min}, {a_max}]"));
        }
        for (&x, &a) in &overrides {
            check_site(x)?;
            if !inside(a) {
                return domain(format!("rate a_{x} = {a} outside [{a_min}, {a_max}]"));
            }
        }
        Ok(Self { q, default_a, overrides, a_min, a_max })
    }

    /// Every site has rate `a`.
    pub fn homogeneous(q: f64, a: f64) -> Result<Self> {
        Self::new(q, a, BTreeMap::new(), a, a)
    }

    /// Rates given explicitly on `first, first+1, …`; other sites use `default_a`.
    pub fn with_rates(q: f64, default_a: f64, first: i64, rates: &[f64]) -> Result<Self> {
        let overrides: BTreeMap<i64, f64> = rates.iter().enumerate().map(|(i, &a)| (first + i as i64, a)).collect();
        let lo = rates.iter().copied().fold(default_a, f64::min);
        let hi = rates.iter().copied().fold(default_a, f64::max);
        Self::new(q, default_a, overrides, lo, hi)
    }

    pub fn q(&self) -> QParam {
        self.q
    }

    pub fn default_a(&self) -> f64 {
        self.default_a
    }

    pub fn overrides(&self) -> &BTreeMap<i64, f64> {
        &self.overrides
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn a(&self, x: i64) -> f64 {
        self.overrides.get(&x).copied().unwrap_or(self.default_a)
    }

    /// `b_x = (1-q) a_x`.
    pub fn b(&self, x: i64) -> f64 {
        (1.0 - self.q.get()) * self.a(x)
    }

    /// Upper bound for `b_x` over `lo..=hi`: the largest override in range or the default.
    pub fn b_max_on(&self, lo: i64, hi: i64) -> f64 {
        let a = self.overrides.range(lo..=hi.max(lo)).map(|(_, &a)| a).fold(self.default_a, f64::max);
        (1.0 - self.q.get()) * a
    }

    /// Returns a copy whose rates on `lo..=hi` are permuted: site `lo + i` receives the old
    /// rate of site `lo + perm[i]`.
    pub fn permuted(&self, lo: i64, perm: &[usize]) -> Result<Self> {
        let old: Vec<f64> = (0..perm.len()).map(|i| self.a(lo + i as i64)).collect();
        let mut overrides = self.overrides.clone();
        for (i, &p) in perm.iter().enumerate() {
            let a = *old.get(p).ok_or_else(|| Error::Domain("bad permutation".into()))?;
            overrides.insert(lo + i as i64, a);
        }
        Self::new(self.q.get(), self.default_a, overrides, self.a_min, self.a_max)
    }
}

impl TryFrom<RateProfileRepr> for RateProfile {
    type Error = Error;
    fn try_from(r: RateProfileRepr) -> Result<Self> {
        Self::new(r.q, r.default_a, r.overrides, r.a_min, r.a_max)
    }
}

impl From<RateProfile> for RateProfileRepr {
    fn from(p: RateProfile) -> Self {
        Self { q: p.q.get(), default_a: p.default_a, overrides: p.overrides, a_min: p.a_min, a_max: p.a_max }
    }
}

/// Ordered particle positions `x_1 ≥ x_2 ≥ … ≥ x_N` (the Weyl chamber).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<i64>", into = "Vec<i64>")]
pub struct ParticleConfig {
    positions: Vec<i64>,
}

impl ParticleConfig {
    pub fn new(positions: Vec<i64>) -> Result<Self> {
        if positions.is_empty() {
            return domain("a configuration needs at least one particle");
        }
        for &x in &positions {
            check_site(x)?;
        }
        if positions.windows(2).any(|w| w[0] < w[1]) {
            return domain(format!("positions must be weakly decreasing, got {positions:?}"));
        }
        Ok(Self { positions })
    }

    /// `N` particles at site `x`.
    pub fn stacked(n: usize, x: i64) -> Result<Self> {
        Self::new(vec![x; n])
    }

    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Position of particle `n` (1-based label).
    pub fn x(&self, n: usize) -> i64 {
        self.positions[n - 1]
    }

    /// Occupation counts `n_k` over occupied sites.
    pub fn occupation(&self) -> BTreeMap<i64, u32> {
        let mut occ = BTreeMap::new();
        for &x in &self.positions {
            *occ.entry(x).or_insert(0) += 1;
        }
        occ
    }

    /// Reassembles a configuration from occupation counts.
    pub fn from_occupation(occ: &BTreeMap<i64, u32>) -> Result<Self> {
        let positions = occ.iter().rev().flat_map(|(&x, &n)| std::iter::repeat_n(x, n as usize)).collect();
        Self::new(positions)
    }
}

impl TryFrom<Vec<i64>> for ParticleConfig {
    type Error = Error;
    fn try_from(v: Vec<i64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ParticleConfig> for Vec<i64> {
    fn from(c: ParticleConfig) -> Self {
        c.positions
    }
}

/// Number of particles at a site; only the step reservoir is infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Occupancy {
    Finite(u64),
    Infinite,
}

/// `a_x (1 - q^count)`, or `a_x` for the infinite reservoir.
pub fn jump_rate(profile: &RateProfile, site: i64, count: Occupancy) -> Result<f64> {
    let a = profile.a(site);
    match count {
        Occupancy::Finite(0) => domain(format!("no particle at site {site} to jump")),
        Occupancy::Finite(k) => {
            let k = i32::try_from(k).unwrap_or(i32::MAX);
            Ok(a * (1.0 - profile.q().get().powi(k)))
        }
        Occupancy::Infinite => Ok(a),
    }
}

/// Step initial condition: infinitely many particles at site 0, labels `1..=tracked` followed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub tracked: usize,
    pub positions: Vec<i64>,
    pub origin_infinite: bool,
}

impl StepConfig {
    pub fn new(tracked: usize) -> Result<Self> {
        if tracked == 0 {
            return domain("step configuration needs at least one tracked particle");
        }
        Ok(Self { tracked, positions: vec![0; tracked], origin_infinite: true })
    }
}

/// What lies to the right of the first stored q-TASEP particle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RightTail {
    /// Further particles with smaller labels, densely packed.
    Dense,
    /// No particles; the first stored label is the rightmost particle.
    Empty,
}

/// q-TASEP configuration: labels `first_label..first_label+len` stored explicitly, strictly
/// decreasing. Labels beyond the window to the left are densely packed; to the right the tail
/// is dense or absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TasepConfig {
    first_label: i64,
    positions: Vec<i64>,
    right: RightTail,
}

impl TasepConfig {
    pub fn new(first_label: i64, positions: Vec<i64>, right: RightTail) -> Result<Self> {
        if positions.is_empty() {
            return domain("TASEP window must hold at least one particle");
        }
        if positions.windows(2).any(|w| w[0] - w[1] < 1) {
            return domain(format!("TASEP positions must be strictly decreasing, got {positions:?}"));
        }
        Ok(Self { first_label, positions, right })
    }

    pub fn first_label(&self) -> i64 {
        self.first_label
    }

    pub fn last_label(&self) -> i64 {
        self.first_label + self.positions.len() as i64 - 1
    }

    pub fn window(&self) -> &[i64] {
        &self.positions
    }

    /// Position of the particle with label `k`, `None` if no such particle exists.
    pub fn position(&self, k: i64) -> Option<i64> {
        if k < self.first_label {
            match self.right {
                RightTail::Dense => Some(self.positions[0] + (self.first_label - k)),
                RightTail::Empty => None,
            }
        } else if k <= self.last_label() {
            Some(self.positions[(k - self.first_label) as usize])
        } else {
            Some(self.positions[self.positions.len() - 1] - (k - self.last_label()))
        }
    }

    pub fn is_occupied(&self, site: i64) -> bool {
        let first = self.positions[0];
        let last = self.positions[self.positions.len() - 1];
        if site > first {
            self.right == RightTail::Dense
        } else if site < last {
            true
        } else {
            self.positions.binary_search_by(|y| site.cmp(y)).is_ok()
        }
    }
}

/// Particle/spacing duality: `y_{k-1} - y_k = n_k + 1` anchored at `y_0 = k0`.
pub fn zrp_to_tasep(occ: &BTreeMap<i64, u32>, k0: i64) -> Result<TasepConfig> {
    let lo = occ.keys().next().copied().unwrap_or(0).min(0) - 1;
    let hi = occ.keys().next_back().copied().unwrap_or(0).max(0);
    let gap = |k: i64| i64::from(occ.get(&k).copied().unwrap_or(0)) + 1;
    let mut pos = vec![0i64; (hi - lo + 1) as usize];
    let idx = |k: i64| (k - lo) as usize;
    pos[idx(0)] = k0;
    for k in 1..=hi {
        pos[idx(k)] = pos[idx(k - 1)] - gap(k);
    }
    for k in (lo + 1..=0).rev() {
        pos[idx(k - 1)] = pos[idx(k)] + gap(k);
    }
    for &y in &pos {
        check_site(y)?;
    }
    // Labels increase to the left, so the window in label order is already decreasing.
    TasepConfig::new(lo, pos, RightTail::Dense)
}

/// Inverse of [`zrp_to_tasep`] on the stored window: `n_k = y_{k-1} - y_k - 1`.
pub fn tasep_to_occupation(y: &TasepConfig) -> BTreeMap<i64, u32> {
    let mut occ = BTreeMap::new();
    for k in y.first_label() + 1..=y.last_label() {
        let g = y.position(k - 1).unwrap_or(0) - y.position(k).unwrap_or(0) - 1;
        if g > 0 {
            occ.insert(k, g as u32);
        }
    }
    occ
}

/// Height function at the half-integer `x = k + 1/2`, normalised by `h(-1/2) = crossings`.
/// It steps down across occupied sites and up across empty ones.
pub fn height_function(y: &TasepConfig, crossings: i64, k: i64) -> i64 {
    let d = |j: i64| if y.is_occupied(j) { -1 } else { 1 };
    if k >= -1 {
        crossings + (0..=k).map(d).sum::<i64>()
    } else {
        crossings - (k + 1..=-1).map(d).sum::<i64>()
    }
}

/// A single q-TAZRP jump from `site` to `site + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub site: i64,
    pub time: f64,
    pub label: usize,
}

/// Number of jumps out of site 0, which is the displacement `y_0(t) - y_0(0)` of the dual
/// q-TASEP particle with label 0.
pub fn duality_event_count(trajectory: &[JumpEvent]) -> u64 {
    trajectory.iter().filter(|e| e.site == 0).count() as u64
}
