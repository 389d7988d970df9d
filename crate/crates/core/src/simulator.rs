//! Exact simulation of the q-TAZRP by the direct (Gillespie) method, and Monte Carlo
//! estimation of tagged-particle tail probabilities.

use crate::error::{domain, Result};
use crate::model::{check_site, JumpEvent, ParticleConfig, RateProfile, StepConfig};
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Initial condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initial {
    Finite(ParticleConfig),
    Step(StepConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub seed: u64,
    pub profile: RateProfile,
    pub initial: Initial,
    pub horizon: f64,
}

impl SimRun {
    fn check(&self) -> Result<()> {
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return domain(format!("horizon must be finite and nonnegative, got {}", self.horizon));
        }
        Ok(())
    }
}

/// Generator for one trajectory; distinct seeds give independent streams.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.sample(Open01);
    -u.ln() / rate
}

/// Maximal run of equal positions: labels `start..start+count` (0-based) at `site`.
#[derive(Debug, Clone, Copy)]
struct Stack {
    site: i64,
    start: usize,
    count: usize,
}

/// Particles sorted by label, grouped into stacks by site.
struct State {
    positions: Vec<i64>,
    stacks: Vec<Stack>,
}

impl State {
    fn new(positions: Vec<i64>) -> Self {
        let mut stacks: Vec<Stack> = Vec::new();
        for (i, &x) in positions.iter().enumerate() {
            match stacks.last_mut() {
                Some(s) if s.site == x => s.count += 1,
                _ => stacks.push(Stack { site: x, start: i, count: 1 }),
            }
        }
        Self { positions, stacks }
    }

    /// Moves the top (smallest-label) particle of stack `g` one site to the right.
    fn fire(&mut self, g: usize) -> Result<usize> {
        let Stack { site, start, .. } = self.stacks[g];
        let to = check_site(site + 1)?;
        self.positions[start] = to;
        let joined = g > 0 && self.stacks[g - 1].site == to;
        if joined {
            self.stacks[g - 1].count += 1;
        }
        let s = &mut self.stacks[g];
        s.start += 1;
        s.count -= 1;
        let emptied = s.count == 0;
        match (joined, emptied) {
            (true, true) => {
                self.stacks.remove(g);
            }
            (false, true) => {
                self.stacks[g] = Stack { site: to, start, count: 1 };
            }
            (false, false) => self.stacks.insert(g, Stack { site: to, start, count: 1 }),
            (true, false) => {}
        }
        debug_assert!(self.positions.windows(2).all(|w| w[0] >= w[1]), "label order violated");
        Ok(start)
    }

    /// Appends a particle with the next label at `site`, which must not exceed the last one.
    fn push(&mut self, site: i64) {
        let i = self.positions.len();
        self.positions.push(site);
        match self.stacks.last_mut() {
            Some(s) if s.site == site => s.count += 1,
            _ => self.stacks.push(Stack { site, start: i, count: 1 }),
        }
    }
}

fn stack_rate(profile: &RateProfile, s: &Stack) -> f64 {
    profile.a(s.site) * (1.0 - profile.q().get().powi(s.count.min(i32::MAX as usize) as i32))
}

/// Final configuration of a finite run and, if requested, every jump.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteOutcome {
    pub config: ParticleConfig,
    pub trajectory: Option<Vec<JumpEvent>>,
}

/// Exact trajectory of a finite system up to the horizon.
pub fn simulate_finite(run: &SimRun, record: bool) -> Result<FiniteOutcome> {
    run.check()?;
    let Initial::Finite(init) = &run.initial else {
        return domain("simulate_finite needs a finite initial configuration");
    };
    let mut rng = rng_for(run.seed);
    let mut st = State::new(init.positions().to_vec());
    let mut traj = record.then(Vec::new);
    let mut rates: Vec<f64> = Vec::with_capacity(st.stacks.len() + 1);
    let mut t = 0.0;
    loop {
        rates.clear();
        rates.extend(st.stacks.iter().map(|s| stack_rate(&run.profile, s)));
        let total: f64 = rates.iter().sum();
        t += exponential(&mut rng, total);
        if t > run.horizon {
            break;
        }
        let g = pick(&mut rng, &rates, total);
        let site = st.stacks[g].site;
        let label = st.fire(g)? + 1;
        if let Some(tr) = traj.as_mut() {
            tr.push(JumpEvent { site, time: t, label });
        }
    }
    Ok(FiniteOutcome { config: ParticleConfig::new(st.positions)?, trajectory: traj })
}

fn pick(rng: &mut ChaCha8Rng, rates: &[f64], total: f64) -> usize {
    let u: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, &r) in rates.iter().enumerate() {
        acc += r;
        if u < acc {
            return i;
        }
    }
    rates.len() - 1
}

/// Outcome of a step run.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Positions of labels `1..=m`; labels still in the reservoir are at 0.
    pub tracked: Vec<i64>,
    /// Number of particles that have left site 0.
    pub emitted: usize,
    /// Occupation counts of sites `≥ 1`.
    pub occupation: BTreeMap<i64, u32>,
    pub trajectory: Option<Vec<JumpEvent>>,
}

/// Exact trajectory of the step initial condition, reporting the first `m` labels.
///
/// Site 0 emits at rate `a_0` at all times. Every emitted particle is simulated explicitly:
/// trailing particles change the occupation, and hence the jump rates, of the sites where
/// the tracked particles sit, so they cannot be discarded. By time `t` only about `a_0 t`
/// particles have left the origin.
pub fn simulate_step(run: &SimRun, m: usize, record: bool) -> Result<StepOutcome> {
    run.check()?;
    let Initial::Step(init) = &run.initial else {
        return domain("simulate_step needs a step initial configuration");
    };
    if m == 0 {
        return domain("at least one particle must be tracked");
    }
    if !init.origin_infinite {
        return domain("the step reservoir must be present at the start");
    }
    let left: Vec<i64> = init.positions.iter().copied().take_while(|&x| x > 0).collect();
    if init.positions.windows(2).any(|w| w[0] < w[1]) || init.positions.iter().any(|&x| x < 0) {
        return domain("tracked positions must be nonnegative and weakly decreasing");
    }
    let mut rng = rng_for(run.seed);
    let mut st = State::new(Vec::new());
    for &x in &left {
        st.push(x);
    }
    let a0 = run.profile.a(0);
    let mut traj = record.then(Vec::new);
    let mut rates: Vec<f64> = Vec::new();
    let mut t = 0.0;
    loop {
        rates.clear();
        rates.extend(st.stacks.iter().map(|s| stack_rate(&run.profile, s)));
        rates.push(a0);
        let total: f64 = rates.iter().sum();
        t += exponential(&mut rng, total);
        if t > run.horizon {
            break;
        }
        let g = pick(&mut rng, &rates, total);
        let (site, label) = if g == st.stacks.len() {
            st.push(1);
            (0, st.positions.len())
        } else {
            let site = st.stacks[g].site;
            (site, st.fire(g)? + 1)
        };
        if let Some(tr) = traj.as_mut() {
            tr.push(JumpEvent { site, time: t, label });
        }
    }
    let tracked = (0..m).map(|i| st.positions.get(i).copied().unwrap_or(0)).collect();
    let mut occupation = BTreeMap::new();
    for &x in &st.positions {
        *occupation.entry(x).or_insert(0) += 1;
    }
    Ok(StepOutcome { tracked, emitted: st.positions.len(), occupation, trajectory: traj })
}

/// Counts of `{event(sample, M)}` over `samples` independent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTable {
    pub samples: u64,
    pub counts: BTreeMap<i64, u64>,
}

impl EmpiricalTable {
    pub fn empty(ms: &[i64]) -> Self {
        Self { samples: 0, counts: ms.iter().map(|&m| (m, 0)).collect() }
    }

    pub fn p_hat(&self, m: i64) -> f64 {
        self.counts.get(&m).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    /// Binomial standard error `sqrt(p(1-p)/samples)`.
    pub fn standard_error(&self, m: i64) -> f64 {
        let p = self.p_hat(m);
        (p * (1.0 - p) / self.samples as f64).sqrt()
    }

    /// Combines tables over the same `M` values from disjoint sample sets.
    pub fn merge(mut self, other: &EmpiricalTable) -> Self {
        self.samples += other.samples;
        for (m, c) in &other.counts {
            *self.counts.entry(*m).or_insert(0) += c;
        }
        self
    }
}

/// Monte Carlo frequencies of `event(sample, M)` for each `M`. Sample `i` is generated from
/// seed `seed + i`, so the result does not depend on how the work is split across threads.
pub fn estimate_distribution<S, G, E>(samples: u64, seed: u64, ms: &[i64], generate: G, event: E) -> Result<EmpiricalTable>
where
    G: Fn(u64) -> Result<S> + Sync,
    E: Fn(&S, i64) -> bool + Sync,
{
    if samples == 0 {
        return domain("at least one sample is required");
    }
    const CHUNK: u64 = 1024;
    let chunks: Vec<u64> = (0..samples.div_ceil(CHUNK)).collect();
    let tables = chunks
        .into_par_iter()
        .map(|c| {
            let mut tab = EmpiricalTable::empty(ms);
            for i in c * CHUNK..((c + 1) * CHUNK).min(samples) {
                let s = generate(seed.wrapping_add(i))?;
                tab.samples += 1;
                for &m in ms {
                    if event(&s, m) {
                        *tab.counts.get_mut(&m).expect("M registered") += 1;
                    }
                }
            }
            Ok(tab)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tables.iter().fold(EmpiricalTable::empty(ms), |a, b| a.merge(b)))
}
