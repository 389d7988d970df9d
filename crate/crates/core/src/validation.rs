//! Cross-validation battery: each check compares a formula against an independent route
//! (master equation, Monte Carlo, residues, an equivalent kernel, node refinement) and
//! reports one pass/fail outcome.

use crate::contour::{self, ExactProbability};
use crate::error::Result;
use crate::fredholm::{self, NystromGrid};
use crate::model::{ParticleConfig, RateProfile, StepConfig};
use crate::oracle::{self, MasterEquation};
use crate::qalgebra::{self, QParam};
use crate::simulator::{self, Initial, SimRun};
use crate::stats;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;

/// Tolerances of the battery.
pub mod tol {
    pub const TRANSITION_VS_MASTER: f64 = 1e-7;
    pub const TRANSITION_SUM: f64 = 1e-10;
    pub const COMPLEMENTARITY: f64 = 1e-8;
    pub const EXTREMES: f64 = 1e-10;
    pub const CONTOUR_RELATION: f64 = 1e-6;
    pub const SYMMETRIZATION: f64 = 1e-10;
    pub const STEP_VS_FINITE_N: f64 = 1e-6;
    pub const MC_SIGMAS: f64 = 3.0;
    pub const PERMUTATION: f64 = 1e-9;
    pub const RESIDUES: f64 = 1e-8;
    pub const KERNEL_EQUALITY: f64 = 1e-6;
    pub const DOUBLING_CIRCLE: f64 = 1e-9;
    pub const DOUBLING_LINE: f64 = 1e-6;
    pub const CHI_SQUARE_LEVEL: f64 = 0.01;
    pub const DIGAMMA_FD: f64 = 1e-6;
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        format!("[{}] {:>2} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.id, self.name, self.detail)
    }
}

/// Sizes and seeds of the battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuiteOptions {
    pub seed: u64,
    pub samples: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self { seed: 20_240_611, samples: 100_000 }
    }
}

/// Runs the checks and accumulates the node-doubling changes of every certified value.
#[derive(Debug, Clone)]
pub struct Suite {
    pub opts: SuiteOptions,
    circle_delta: f64,
    line_delta: f64,
    certified: usize,
    current: u32,
    circle_source: u32,
    line_source: u32,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Random rates in `[0.5, 2]` on `lo..=hi`, default 1.
pub fn random_profile(q: f64, lo: i64, hi: i64, r: &mut ChaCha8Rng) -> Result<RateProfile> {
    random_profile_in(q, lo, hi, 0.5, 2.0, r)
}

/// Random rates in `[a_min, a_max]` on `lo..=hi`, default 1.
pub fn random_profile_in(q: f64, lo: i64, hi: i64, a_min: f64, a_max: f64, r: &mut ChaCha8Rng) -> Result<RateProfile> {
    let overrides: BTreeMap<i64, f64> = (lo..=hi).map(|x| (x, r.random_range(a_min..=a_max))).collect();
    RateProfile::new(q, 1.0, overrides, a_min.min(1.0), a_max.max(1.0))
}

fn random_config(n: usize, spread: i64, r: &mut ChaCha8Rng) -> Result<ParticleConfig> {
    let mut xs: Vec<i64> = (0..n).map(|_| r.random_range(0..=spread)).collect();
    xs.sort_unstable_by(|a, b| b.cmp(a));
    let shift = xs[n - 1];
    ParticleConfig::new(xs.into_iter().map(|x| x - shift).collect())
}

fn fmt_e(x: f64) -> String {
    format!("{x:.2e}")
}

impl Suite {
    pub fn new(opts: SuiteOptions) -> Self {
        Self { opts, circle_delta: 0.0, line_delta: 0.0, certified: 0, current: 0, circle_source: 0, line_source: 0 }
    }

    fn circle(&mut self, p: &ExactProbability) {
        self.circle_delta(p.node_doubling_delta);
    }

    fn circle_delta(&mut self, d: f64) {
        if d > self.circle_delta {
            self.circle_delta = d;
            self.circle_source = self.current;
        }
        self.certified += 1;
    }

    fn line(&mut self, d: f64) {
        if d > self.line_delta {
            self.line_delta = d;
            self.line_source = self.current;
        }
        self.certified += 1;
    }

    /// Transition probabilities against the master equation, and their total mass.
    pub fn transition_vs_master(&mut self) -> Result<Check> {
        self.current = 1;
        let mut r = rng(self.opts.seed, 1);
        let mut worst: f64 = 0.0;
        let mut worst_sum: f64 = 0.0;
        let mut states = 0usize;
        for n in 1..=3 {
            for &t in &[0.2, 1.0] {
                let y = random_config(n, 2, &mut r)?;
                let depth = oracle::poisson_depth(2.0 * t, 1e-12);
                let cap = y.x(1) + depth;
                let p = random_profile(0.5, 0, cap + 1, &mut r)?;
                let me = MasterEquation::new(&p, &y, cap)?;
                let dist = me.evolve(t)?;
                let c = contour::default_circle(&p, 0, cap, 64)?;
                let mut sum = 0.0;
                for s in me.states().iter().filter(|s| s[0] <= cap) {
                    let x = ParticleConfig::new(s.clone())?;
                    let v = contour::transition_amplitude(&y, &x, t, &p, &c)?;
                    worst = worst.max((v.re - me.probability(&dist, s)).abs()).max(v.im.abs());
                    sum += v.re;
                    states += 1;
                }
                worst_sum = worst_sum.max((sum - 1.0).abs());
                // Certify the most likely final state at the doubled resolution.
                let (imax, _) = dist.iter().enumerate().fold((0, 0.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
                let x = ParticleConfig::new(me.states()[imax].clone())?;
                let e = contour::transition_probability(&y, &x, t, &p, &c)?;
                self.circle(&e);
            }
        }
        let passed = worst < tol::TRANSITION_VS_MASTER && worst_sum < tol::TRANSITION_SUM;
        Ok(Check {
            id: 1,
            name: "transition probability vs master equation".into(),
            passed,
            detail: format!(
                "{states} states, max |diff| {} (tol {:.0e}), max |sum - 1| {} (tol {:.0e})",
                fmt_e(worst),
                tol::TRANSITION_VS_MASTER,
                fmt_e(worst_sum),
                tol::TRANSITION_SUM
            ),
        })
    }

    /// Right-tail and left-tail forms at complementary indices, and the single-integral
    /// extremes.
    pub fn tagged_consistency(&mut self) -> Result<Check> {
        self.current = 2;
        let mut r = rng(self.opts.seed, 2);
        let y = random_config(3, 3, &mut r)?;
        let (lo, hi) = (-2, 6.max(y.x(1)));
        // A rate spread of 2 keeps the nested circles well separated from the poles at q = 1/2.
        let p = random_profile_in(0.5, lo, hi, 0.75, 1.5, &mut r)?;
        let c = contour::default_circle(&p, lo, hi, 64)?;
        let fam = contour::nested_family_for(&p, lo, hi, 3, 128)?;
        let (mut comp, mut ext): (f64, f64) = (0.0, 0.0);
        for m_cut in -2..=6 {
            let mut right = Vec::new();
            for n in 1..=3 {
                let rv = contour::dist_tagged_right(&y, n, m_cut, 0.8, &p, &c)?;
                let lv = contour::dist_tagged_left(&y, 3 - n + 1, m_cut, 0.8, &p, &fam)?;
                self.circle(&rv);
                self.circle(&lv);
                comp = comp.max((rv.value + lv.value - 1.0).abs());
                right.push((rv, lv));
            }
            let lm = contour::dist_leftmost(&y, m_cut, 0.8, &p, &c)?;
            let rm = contour::dist_rightmost(&y, m_cut, 0.8, &p, &fam)?;
            self.circle(&lm);
            self.circle(&rm);
            ext = ext.max((right[2].0.value - lm.value).abs());
            ext = ext.max((right[0].1.value - rm.value).abs());
        }
        Ok(Check {
            id: 2,
            name: "tagged-particle forms: complementarity and extremes".into(),
            passed: comp < tol::COMPLEMENTARITY && ext < tol::EXTREMES,
            detail: format!(
                "Y = {:?}, max |P(x_n>M) + P(x_n<=M) - 1| {} (tol {:.0e}), max extreme mismatch {} (tol {:.0e})",
                y.positions(),
                fmt_e(comp),
                tol::COMPLEMENTARITY,
                fmt_e(ext),
                tol::EXTREMES
            ),
        })
    }

    /// Identities moving the integrand between the large and the nested contours.
    pub fn contour_relations(&mut self) -> Result<Check> {
        self.current = 3;
        let mut r = rng(self.opts.seed, 3);
        let mut worst: f64 = 0.0;
        for n in 1..=3 {
            let y = random_config(n, 2, &mut r)?;
            let p = random_profile(0.5, -1, 5, &mut r)?;
            let c = contour::default_circle(&p, -1, 5, 64)?;
            let fam = contour::nested_family_for(&p, -1, 5, n, 128)?;
            for m_cut in [-1, 1, 3] {
                worst = worst.max(contour::contour_relation_residual(&y, m_cut, 0.6, &p, &c, &fam)?);
            }
        }
        Ok(Check {
            id: 3,
            name: "contour-relation identities".into(),
            passed: worst < tol::CONTOUR_RELATION,
            detail: format!("max residual {} (tol {:.0e})", fmt_e(worst), tol::CONTOUR_RELATION),
        })
    }

    /// `Σ_σ A_σ = [n]_q! B_n` at random points.
    pub fn symmetrization(&mut self) -> Result<Check> {
        self.current = 4;
        let mut r = rng(self.opts.seed, 4);
        let mut worst: f64 = 0.0;
        for n in 1..=6 {
            let perms = permutations(n);
            for _ in 0..100 {
                let q: f64 = r.random_range(0.1..0.9);
                let w: Vec<Complex<f64>> = (0..n).map(|_| Complex::from_polar(r.random_range(0.5..2.0), r.random_range(0.0..std::f64::consts::TAU))).collect();
                let qc = Complex::new(q, 0.0);
                let mut lhs = Complex::new(0.0, 0.0);
                for s in &perms {
                    lhs += qalgebra::a_sigma(s, &w, &qc)?;
                }
                let rhs = qalgebra::b_r(&w, &qc)? * qalgebra::q_factorial(n as u32, &q);
                worst = worst.max((lhs - rhs).norm() / rhs.norm().max(1e-300));
            }
        }
        Ok(Check {
            id: 4,
            name: "symmetrization identity".into(),
            passed: worst < tol::SYMMETRIZATION,
            detail: format!("n <= 6, 100 points each, max relative error {} (tol {:.0e})", fmt_e(worst), tol::SYMMETRIZATION),
        })
    }

    /// `m = 1` Fredholm determinant against the finite-`N` formula and simulation.
    pub fn step_m1(&mut self) -> Result<Check> {
        self.current = 5;
        let mut r = rng(self.opts.seed, 5);
        let p = random_profile(0.5, 0, 9, &mut r)?;
        let q = p.q();
        let (mut fin, mut z_worst, mut cross): (f64, f64, f64) = (0.0, 0.0, 0.0);
        let samples = self.opts.samples;
        for &t in &[1.0, 3.0] {
            let table = simulator::estimate_distribution(
                samples,
                self.opts.seed.wrapping_add(1_000_000 * t as u64),
                &(0..=8).collect::<Vec<i64>>(),
                |seed| {
                    let run = SimRun { seed, profile: p.clone(), initial: Initial::Step(StepConfig::new(1)?), horizon: t };
                    simulator::simulate_step(&run, 1, false)
                },
                |s, m| s.tracked[0] > m,
            )?;
            for m_cut in 0..=8 {
                let g = NystromGrid::Circle(fredholm::finite_time_circle(&p, m_cut, 64)?);
                let d = fredholm::det_k_mt(Complex::new(1.0, 0.0), m_cut, t, &p, &g)?;
                self.circle_delta(d.grid_refinement_delta);
                let le = d.value.re;
                let c = contour::default_circle(&p, 0, m_cut, 64)?;
                let mut contour_values = Vec::new();
                let tail = contour::finite_step_tail(30, 1, q, 1e-14, |rr| {
                    let me = oracle::step_leftmost_tail(&p, rr, m_cut, t)?;
                    if rr <= 3 {
                        let y = ParticleConfig::stacked(rr, 0)?;
                        let v = contour::dist_leftmost(&y, m_cut, t, &p, &c)?;
                        cross = cross.max((v.value - me).abs());
                        contour_values.push(v);
                    }
                    Ok(me)
                })?;
                for v in &contour_values {
                    self.circle(v);
                }
                fin = fin.max((le - (1.0 - tail)).abs());
                let exact = 1.0 - le;
                let sigma = (exact * (1.0 - exact) / samples as f64).sqrt();
                let dev = (table.p_hat(m_cut) - exact).abs();
                let z = if sigma > 0.0 {
                    dev / sigma
                } else if dev == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                };
                z_worst = z_worst.max(z);
            }
        }
        Ok(Check {
            id: 5,
            name: "step m = 1: det(I + K) vs finite-N formula and simulation".into(),
            passed: fin < tol::STEP_VS_FINITE_N && z_worst <= tol::MC_SIGMAS && cross < tol::STEP_VS_FINITE_N,
            detail: format!(
                "max |det - finite N=30| {} (tol {:.0e}); contour vs master equation for r <= 3: {}; worst MC deviation {:.2} sigma over {} samples",
                fmt_e(fin),
                tol::STEP_VS_FINITE_N,
                fmt_e(cross),
                z_worst,
                samples
            ),
        })
    }

    /// Invariance of the step distribution under permutations of `b_0, …, b_M`.
    pub fn permutation_invariance(&mut self) -> Result<Check> {
        self.current = 6;
        let mut r = rng(self.opts.seed, 6);
        // Unit rates with one slow and one fast site.
        let rates = [1.0, 1.0, 0.25, 1.0, 1.6];
        let p = RateProfile::with_rates(0.5, 1.0, 0, &rates)?;
        let zc = fredholm::zeta_circle(2, p.q())?;
        let cases = [(0, 1.0), (1, 2.0), (2, 3.0), (4, 3.0)];
        let mut base = Vec::new();
        for &(m_cut, t) in &cases {
            let g = NystromGrid::Circle(fredholm::finite_time_circle(&p, m_cut, 64)?);
            let v = fredholm::step_distribution(2, m_cut, t, &p, &g, &zc)?;
            self.circle(&v);
            base.push(v.value);
        }
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            for (&(m_cut, t), &b) in cases.iter().zip(&base) {
                // Only b_0..b_M enter; permute exactly those.
                let mut sub: Vec<usize> = (0..=m_cut as usize).collect();
                for i in (1..sub.len()).rev() {
                    sub.swap(i, r.random_range(0..=i));
                }
                let pp = p.permuted(0, &sub)?;
                let g = NystromGrid::Circle(fredholm::finite_time_circle(&pp, m_cut, 64)?);
                let v = fredholm::step_distribution(2, m_cut, t, &pp, &g, &zc)?;
                self.circle(&v);
                worst = worst.max((v.value - b).abs());
            }
        }
        Ok(Check {
            id: 6,
            name: "b-permutation invariance of the step distribution".into(),
            passed: worst < tol::PERMUTATION,
            detail: format!("10 permutations of b_0..b_M, P(x_2 > M) in {:.3?}, max deviation {} (tol {:.0e})", base, fmt_e(worst), tol::PERMUTATION),
        })
    }

    /// ζ-contour quadrature against the residue sum.
    pub fn residues(&mut self) -> Result<Check> {
        self.current = 7;
        let mut r = rng(self.opts.seed, 7);
        let p = random_profile(0.5, 0, 6, &mut r)?;
        let mut worst: f64 = 0.0;
        for m in 1..=3 {
            let zc = fredholm::zeta_circle(m, p.q())?;
            for &(m_cut, t) in &[(0, 0.5), (2, 1.0), (5, 2.5)] {
                let g = NystromGrid::Circle(fredholm::finite_time_circle(&p, m_cut, 64)?);
                let quad = fredholm::step_distribution(m, m_cut, t, &p, &g, &zc)?;
                self.circle(&quad);
                let k = fredholm::KernelSpec::FiniteTime { m_cut, t, profile: p.clone() };
                let res = fredholm::step_distribution_residues(&k, m, &g.with_nodes(128))?;
                worst = worst.max((quad.value - res.re).abs());
            }
        }
        Ok(Check {
            id: 7,
            name: "zeta integral: residues vs quadrature".into(),
            passed: worst < tol::RESIDUES,
            detail: format!("m in 1..=3, max |quadrature - residues| {} (tol {:.0e})", fmt_e(worst), tol::RESIDUES),
        })
    }

    /// Finite-`n` determinants approach the limit kernel.
    pub fn asymptotic_convergence(&mut self) -> Result<Check> {
        self.current = 8;
        let q = QParam::new(0.5)?;
        let ns = [50, 100, 200, 400];
        let mut cases: Vec<(f64, f64, Vec<f64>)> = Vec::new();
        for &tau in &[-1.0, 0.0, 1.0] {
            for &z in &[0.5, 1.0] {
                cases.push((tau, z, Vec::new()));
            }
        }
        for &z in &[0.5, 1.0] {
            cases.push((0.0, z, vec![1.0]));
        }
        let mut ok = true;
        let mut worst_slope = f64::NEG_INFINITY;
        let mut last_dev: f64 = 0.0;
        for (tau, z, betas) in &cases {
            let rows = fredholm::asymptotic_convergence_study(&ns, *tau, betas, Complex::new(*z, 0.0), q, fredholm::SADDLE_NODES)?;
            for row in &rows {
                self.circle_delta(row.det_n_delta);
            }
            let lim = fredholm::limiting_det(Complex::new(*z, 0.0), *tau, betas, q, &fredholm::line_grid())?;
            self.line(lim.grid_refinement_delta);
            let decreasing = rows.windows(2).all(|w| w[1].deviation < w[0].deviation);
            let slope = fredholm::loglog_slope(&rows);
            ok &= decreasing && slope < 0.0;
            worst_slope = worst_slope.max(slope);
            last_dev = last_dev.max(rows[rows.len() - 1].deviation);
        }
        Ok(Check {
            id: 8,
            name: "large-time convergence of det(I + zeta K)".into(),
            passed: ok,
            detail: format!(
                "{} cases over n = {ns:?}: deviations strictly decreasing = {ok}, flattest log-log slope {:.3}, max deviation at n = 400 {}",
                cases.len(),
                worst_slope,
                fmt_e(last_dev)
            ),
        })
    }

    /// Vertical-line, half-line and Mehler forms of the limit determinant.
    pub fn kernel_equality(&mut self) -> Result<Check> {
        self.current = 9;
        let q = QParam::new(0.5)?;
        let mut worst: f64 = 0.0;
        for &tau in &[-2.0, -1.0, 0.0, 1.0, 2.0] {
            for &z in &[-1.0, -0.5, 0.25, 0.5, 1.0] {
                let zeta = Complex::new(z, 0.0);
                let a = fredholm::limiting_det(zeta, tau, &[], q, &fredholm::line_grid())?;
                let b = fredholm::halfline_det(zeta, tau, q, &fredholm::halfline_grid(tau, q, fredholm::HALFLINE_NODES))?;
                let c = fredholm::mehler_det(zeta, tau, q, &fredholm::mehler_grid(tau, q, fredholm::HALFLINE_NODES))?;
                for d in [&a, &b, &c] {
                    self.line(d.grid_refinement_delta);
                }
                worst = worst.max((a.value - b.value).norm()).max((a.value - c.value).norm()).max((b.value - c.value).norm());
            }
        }
        Ok(Check {
            id: 9,
            name: "three-way equality of the limit kernels".into(),
            passed: worst < tol::KERNEL_EQUALITY,
            detail: format!("5 x 5 (tau, zeta) grid, max pairwise difference {} (tol {:.0e})", fmt_e(worst), tol::KERNEL_EQUALITY),
        })
    }

    /// Node-doubling changes accumulated over every certified value so far.
    pub fn certification(&self) -> Check {
        Check {
            id: 10,
            name: "quadrature certification under node doubling".into(),
            passed: self.circle_delta < tol::DOUBLING_CIRCLE && self.line_delta < tol::DOUBLING_LINE,
            detail: format!(
                "{} values, max change {} on circles (check {}, tol {:.0e}), {} on lines (check {}, tol {:.0e})",
                self.certified,
                fmt_e(self.circle_delta),
                self.circle_source,
                tol::DOUBLING_CIRCLE,
                fmt_e(self.line_delta),
                self.line_source,
                tol::DOUBLING_LINE
            ),
        }
    }

    /// Single-particle Poisson law and the q-TASEP duality on simulated trajectories.
    pub fn simulator(&mut self) -> Result<Check> {
        self.current = 11;
        let samples = self.opts.samples;
        let (a, t, q) = (1.5, 2.0, 0.4);
        let p1 = RateProfile::homogeneous(q, a)?;
        let lam = (1.0 - q) * a * t;
        let kmax = 20i64;
        let cells: Vec<i64> = (0..=kmax).collect();
        let table = simulator::estimate_distribution(
            samples,
            self.opts.seed,
            &cells,
            |seed| {
                let run = SimRun { seed, profile: p1.clone(), initial: Initial::Finite(ParticleConfig::new(vec![0])?), horizon: t };
                Ok(simulator::simulate_finite(&run, false)?.config.x(1).min(kmax))
            },
            |x, k| *x == k,
        )?;
        let hist: Vec<u64> = cells.iter().map(|k| table.counts[k]).collect();
        let mut expected: Vec<f64> = (0..kmax).map(|k| stats::poisson_pmf(k, lam)).collect();
        expected.push(stats::poisson_tail(kmax - 1, lam));
        let chi = stats::chi_square_gof(&hist, &expected)?;

        // Duality: x_m(t) > x iff y_x(t) + x >= m, with y read off the occupation and anchored
        // by the jumps out of the origin. Event key 10 m + x encodes both sides.
        let mut r = rng(self.opts.seed, 11);
        let p = random_profile(0.5, 0, 6, &mut r)?;
        let horizon = 1.5;
        let xs: Vec<i64> = (0..=4).collect();
        let keys: Vec<i64> = (1..=3).flat_map(|m| xs.iter().map(move |x| 10 * m + x)).collect();
        let dual = simulator::estimate_distribution(
            samples,
            self.opts.seed.wrapping_add(7_000_000),
            &keys,
            |seed| {
                let run = SimRun { seed, profile: p.clone(), initial: Initial::Step(StepConfig::new(3)?), horizon };
                let out = simulator::simulate_step(&run, 3, true)?;
                let y0 = crate::model::duality_event_count(out.trajectory.as_deref().unwrap_or(&[])) as i64;
                let y = crate::model::zrp_to_tasep(&out.occupation, y0)?;
                Ok((out.tracked, y))
            },
            |(tracked, y), key| {
                let (m, x) = ((key / 10) as usize, key % 10);
                (tracked[m - 1] > x) == (y.position(x).unwrap_or(i64::MIN) + x >= m as i64)
            },
        )?;
        let zrp = simulator::estimate_distribution(
            samples,
            self.opts.seed.wrapping_add(7_000_000),
            &keys,
            |seed| {
                let run = SimRun { seed, profile: p.clone(), initial: Initial::Step(StepConfig::new(3)?), horizon };
                Ok(simulator::simulate_step(&run, 3, false)?.tracked)
            },
            |tracked, key| tracked[(key / 10) as usize - 1] > key % 10,
        )?;
        let mismatches: u64 = keys.iter().map(|k| samples - dual.counts[k]).sum();
        let mut z_exact: f64 = 0.0;
        let n = samples as f64;
        for m in 1..=3usize {
            let zc = fredholm::zeta_circle(m, p.q())?;
            for &x in &xs {
                let a = zrp.p_hat(10 * m as i64 + x);
                let g = NystromGrid::Circle(fredholm::finite_time_circle(&p, x, 64)?);
                let e = fredholm::step_distribution(m, x, horizon, &p, &g, &zc)?;
                self.circle(&e);
                let s = (e.value * (1.0 - e.value) / n).sqrt();
                z_exact = z_exact.max(if s > 0.0 { (a - e.value).abs() / s } else { 0.0 });
            }
        }
        Ok(Check {
            id: 11,
            name: "simulator: Poisson law and duality".into(),
            passed: chi.p_value > tol::CHI_SQUARE_LEVEL && mismatches == 0 && z_exact <= tol::MC_SIGMAS,
            detail: format!(
                "chi2 = {:.2} on {} dof, p = {:.3} (level {}); duality mismatches {}; step law vs Fredholm worst {:.2} sigma; {} samples",
                chi.statistic,
                chi.dof,
                chi.p_value,
                tol::CHI_SQUARE_LEVEL,
                mismatches,
                z_exact,
                samples
            ),
        })
    }

    /// KPZ scaling constants: monotonicity and limit of κ, positivity of χ, and Ψ' against
    /// finite differences of Ψ.
    pub fn constants(&mut self) -> Result<Check> {
        self.current = 12;
        let mut ok = true;
        let mut fd: f64 = 0.0;
        let mut gap_end: f64 = 0.0;
        let h = 1e-4;
        for &qv in &[0.2, 0.5, 0.8] {
            let q = QParam::new(qv)?;
            let thetas: Vec<f64> = (0..=400).map(|i| 0.1 + (20.0 - 0.1) * i as f64 / 400.0).collect();
            let consts = thetas.iter().map(|&th| qalgebra::scaling_constants(th, 1.0, q)).collect::<Result<Vec<_>>>()?;
            let floor = 1.0 / (1.0 - qv);
            ok &= consts.windows(2).all(|w| w[1].kappa < w[0].kappa);
            ok &= consts.iter().all(|c| c.kappa > floor && c.chi > 0.0);
            gap_end = gap_end.max((consts[consts.len() - 1].kappa - floor) / floor);
            for &th in &thetas {
                let d = qalgebra::q_digamma_suite(th, q)?;
                let up = qalgebra::q_digamma_suite(th + h, q)?.psi;
                let dn = qalgebra::q_digamma_suite(th - h, q)?.psi;
                fd = fd.max(((up - dn) / (2.0 * h) - d.psi1).abs() / d.psi1.abs().max(1.0));
            }
        }
        // κ(20) sits within q^20-type corrections of its limit; require it to be close.
        ok &= gap_end < 1e-1;
        Ok(Check {
            id: 12,
            name: "scaling constants".into(),
            passed: ok && fd < tol::DIGAMMA_FD,
            detail: format!(
                "q in {{0.2, 0.5, 0.8}}, theta in [0.1, 20]: kappa decreasing above 1/(1-q) and chi > 0 = {ok}, relative gap of kappa(20) to 1/(1-q) {}, max |Psi' - FD| / max(1, |Psi'|) {} (tol {:.0e})",
                fmt_e(gap_end),
                fmt_e(fd),
                tol::DIGAMMA_FD
            ),
        })
    }

    /// Runs every check in order; the certification summary comes after the checks that
    /// produce certified values.
    pub fn run_all(&mut self) -> Result<Vec<Check>> {
        let mut out = vec![
            self.transition_vs_master()?,
            self.tagged_consistency()?,
            self.contour_relations()?,
            self.symmetrization()?,
            self.step_m1()?,
            self.permutation_invariance()?,
            self.residues()?,
            self.asymptotic_convergence()?,
            self.kernel_equality()?,
        ];
        let sim = self.simulator()?;
        let cst = self.constants()?;
        out.push(self.certification());
        out.push(sim);
        out.push(cst);
        out.sort_by_key(|c| c.id);
        Ok(out)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for k in 0..n {
        let mut next = Vec::new();
        for p in &out {
            for pos in 0..=k {
                let mut q = p.clone();
                q.insert(pos, k);
                next.push(q);
            }
        }
        out = next;
    }
    out
}
