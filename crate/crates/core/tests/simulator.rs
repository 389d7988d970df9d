use num_complex::Complex;
use qtazrp::fredholm::{self, NystromGrid};
use qtazrp::model::{ParticleConfig, RateProfile, StepConfig};
use qtazrp::oracle::MasterEquation;
use qtazrp::simulator::*;
use qtazrp::stats;

const SAMPLES: u64 = 100_000;

fn finite_run(seed: u64, p: &RateProfile, y: &ParticleConfig, t: f64) -> SimRun {
    SimRun { seed, profile: p.clone(), initial: Initial::Finite(y.clone()), horizon: t }
}

fn step_run(seed: u64, p: &RateProfile, t: f64) -> SimRun {
    SimRun { seed, profile: p.clone(), initial: Initial::Step(StepConfig::new(1).unwrap()), horizon: t }
}

fn within(p_hat: f64, p: f64, n: u64, sigmas: f64) -> bool {
    let s = (p * (1.0 - p) / n as f64).sqrt();
    (p_hat - p).abs() <= sigmas * s.max(1.0 / n as f64)
}

#[test]
fn zero_horizon_is_identity() {
    let p = RateProfile::homogeneous(0.5, 1.0).unwrap();
    let y = ParticleConfig::new(vec![4, 2, 2, 0]).unwrap();
    assert_eq!(simulate_finite(&finite_run(9, &p, &y, 0.0), false).unwrap().config, y);
    let s = simulate_step(&step_run(9, &p, 0.0), 3, false).unwrap();
    assert_eq!(s.tracked, vec![0, 0, 0]);
    assert_eq!(s.emitted, 0);
    assert!(simulate_finite(&finite_run(9, &p, &y, -1.0), false).is_err());
    assert!(simulate_step(&finite_run(9, &p, &y, 1.0), 1, false).is_err());
}

#[test]
fn runs_are_reproducible() {
    let p = RateProfile::with_rates(0.4, 1.0, 0, &[0.6, 1.8]).unwrap();
    let y = ParticleConfig::new(vec![1, 0, 0]).unwrap();
    let a = simulate_finite(&finite_run(123, &p, &y, 2.0), true).unwrap();
    let b = simulate_finite(&finite_run(123, &p, &y, 2.0), true).unwrap();
    assert_eq!(a, b);
    let gen = |s| Ok(simulate_step(&step_run(s, &p, 1.0), 1, false)?.tracked[0]);
    let t1 = estimate_distribution(5000, 1, &[0, 1, 2], gen, |x, m| *x > m).unwrap();
    let t2 = estimate_distribution(5000, 1, &[0, 1, 2], gen, |x, m| *x > m).unwrap();
    assert_eq!(t1, t2);
}

#[test]
fn single_particle_displacement_is_poisson() {
    let (a, q, t) = (1.2, 0.3, 1.7);
    let lam = (1.0 - q) * a * t;
    let p = RateProfile::homogeneous(q, a).unwrap();
    let y = ParticleConfig::new(vec![5]).unwrap();
    let ms: Vec<i64> = (0..12).collect();
    let tab = estimate_distribution(SAMPLES, 77, &ms, |s| Ok(simulate_finite(&finite_run(s, &p, &y, t), false)?.config.x(1) - 5), |d, k| *d == k).unwrap();
    for &k in &ms {
        assert!(within(tab.p_hat(k), stats::poisson_pmf(k, lam), SAMPLES, 3.0), "bin {k}");
    }
    // Tail probabilities from the same runs.
    let tail = estimate_distribution(SAMPLES, 77, &ms, |s| Ok(simulate_finite(&finite_run(s, &p, &y, t), false)?.config.x(1) - 5), |d, m| *d > m).unwrap();
    for &m in &ms {
        assert!(within(tail.p_hat(m), stats::poisson_tail(m, lam), SAMPLES, 3.0), "tail {m}");
    }
}

#[test]
fn two_particles_match_master_equation() {
    let p = RateProfile::with_rates(0.5, 1.0, 0, &[1.6, 0.7, 1.2]).unwrap();
    let y = ParticleConfig::new(vec![0, 0]).unwrap();
    let t = 0.6;
    let me = MasterEquation::new(&p, &y, 12).unwrap();
    let dist = me.evolve(t).unwrap();
    let states: Vec<Vec<i64>> = me.states().iter().filter(|s| s[0] <= 3).cloned().collect();
    let keys: Vec<i64> = (0..states.len() as i64).collect();
    let tab = estimate_distribution(
        SAMPLES,
        5,
        &keys,
        |s| Ok(simulate_finite(&finite_run(s, &p, &y, t), false)?.config),
        |x, k| x.positions() == states[k as usize].as_slice(),
    )
    .unwrap();
    for (k, s) in states.iter().enumerate() {
        assert!(within(tab.p_hat(k as i64), me.probability(&dist, s), SAMPLES, 3.0), "state {s:?}");
    }
}

#[test]
fn step_leader_matches_determinant() {
    let p = RateProfile::with_rates(0.5, 1.0, 0, &[1.4, 0.8, 1.1, 0.6]).unwrap();
    let t = 2.0;
    let ms: Vec<i64> = (0..6).collect();
    let tab = estimate_distribution(SAMPLES, 2024, &ms, |s| Ok(simulate_step(&step_run(s, &p, t), 1, false)?.tracked[0]), |x, m| *x > m).unwrap();
    for &m in &ms {
        let g = NystromGrid::Circle(fredholm::finite_time_circle(&p, m, 64).unwrap());
        let d = fredholm::det_k_mt(Complex::new(1.0, 0.0), m, t, &p, &g).unwrap();
        assert!(within(tab.p_hat(m), 1.0 - d.value.re, SAMPLES, 3.0), "M = {m}");
    }
}

#[test]
fn step_second_particle_matches_large_finite_system() {
    // Forty particles at the origin stand in for the reservoir: with t = 1.5 the chance
    // that the stack runs low is negligible.
    let p = RateProfile::with_rates(0.5, 1.0, 0, &[1.3, 0.8, 1.5]).unwrap();
    let t = 1.5;
    let ms: Vec<i64> = (0..5).collect();
    let y = ParticleConfig::stacked(40, 0).unwrap();
    let n = SAMPLES / 2;
    let finite = estimate_distribution(n, 11, &ms, |s| Ok(simulate_finite(&finite_run(s, &p, &y, t), false)?.config.x(2)), |x, m| *x > m).unwrap();
    let step = estimate_distribution(
        n,
        900_000,
        &ms,
        |s| Ok(simulate_step(&SimRun { initial: Initial::Step(StepConfig::new(2)?), ..step_run(s, &p, t) }, 2, false)?.tracked[1]),
        |x, m| *x > m,
    )
    .unwrap();
    for &m in &ms {
        let (a, b) = (finite.p_hat(m), step.p_hat(m));
        let s = ((a * (1.0 - a) + b * (1.0 - b)) / n as f64).sqrt();
        assert!((a - b).abs() <= 3.0 * s.max(1.0 / n as f64), "M = {m}: {a} vs {b}");
    }
}

#[test]
fn empirical_table_edge_cases() {
    let one = estimate_distribution(1, 3, &[0], Ok, |_, _| true).unwrap();
    assert_eq!(one.samples, 1);
    assert_eq!(one.p_hat(0), 1.0);
    assert_eq!(one.standard_error(0), 0.0);
    let never = estimate_distribution(1, 3, &[0], Ok, |_, _| false).unwrap();
    assert_eq!(never.counts[&0], 0);
    let all = estimate_distribution(3000, 3, &[0, 1], Ok, |_, _| true).unwrap();
    assert_eq!((all.p_hat(1), all.standard_error(1)), (1.0, 0.0));
    assert!(estimate_distribution(0, 3, &[0], Ok, |_, _| true).is_err());
}
