use num_complex::Complex;
use qtazrp::contour::*;
use qtazrp::model::{ParticleConfig, RateProfile};
use qtazrp::oracle::{self, MasterEquation};
use qtazrp::qalgebra::QParam;
use qtazrp::quadrature::{circle_integral, gauss_legendre, Circle};
use qtazrp::stats;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type C = Complex<f64>;

fn spiked() -> RateProfile {
    RateProfile::with_rates(0.5, 1.0, -1, &[1.0, 1.0, 0.6, 1.0, 1.7, 1.0, 0.8]).unwrap()
}

#[test]
fn circle_integral_residues() {
    let c = Circle::centered(0.0, 2.0, 64).unwrap();
    assert!((circle_integral(|w: C| Ok(1.0 / w), &c).unwrap() - 1.0).norm() < 1e-14);
    assert!(circle_integral(|_: C| Ok(C::new(1.0, 0.0)), &c).unwrap().norm() < 1e-14);
    let b = C::new(0.4, -0.3);
    let v = circle_integral(|w: C| Ok(w.exp() / (w - b)), &c).unwrap();
    assert!((v - b.exp()).norm() < 1e-12);
    // Clustering the nodes does not change the value.
    let cc = Circle::clustered(C::new(0.2, 0.0), 1.5, 128, 0.5).unwrap();
    let v = circle_integral(|w: C| Ok(w.exp() / (w - b)), &cc).unwrap();
    assert!((v - b.exp()).norm() < 1e-12);
    // Single precision.
    let c32 = Circle::<f32>::centered(0.0, 2.0, 32).unwrap();
    let b32 = Complex::new(0.4f32, -0.3);
    let v = circle_integral(|w: Complex<f32>| Ok(w.exp() / (w - b32)), &c32).unwrap();
    assert!((v - b32.exp()).norm() < 1e-5);
    assert!(Circle::centered(0.0, 1.0, 12).is_err());
}

#[test]
fn gauss_legendre_integrates_polynomials() {
    let nodes = gauss_legendre(10, -1.0f64, 2.0).unwrap();
    let s: f64 = nodes.iter().map(|&(x, w)| w * x.powi(19)).sum();
    assert!((s - (2f64.powi(20) - 1.0) / 20.0).abs() < 1e-9);
}

#[test]
fn product_ratio_cases() {
    let p = RateProfile::with_rates(0.5, 1.0, 0, &[4.0, 1.0, 1.5, 0.7]).unwrap();
    let w = C::new(0.3, 0.2);
    assert_eq!(product_ratio(&p, w, 3, 2).unwrap(), C::new(1.0, 0.0));
    let one = product_ratio(&p, C::new(1.0, 0.0), 0, 0).unwrap();
    assert!((one - 2.0).norm() < 1e-15);
    // Telescoping: forward product over lo..=mid times the extended product over
    // mid+1..=hi equals the product over lo..=hi, also when hi < mid.
    for (lo, mid, hi) in [(0, 3, 1), (0, 2, -1), (1, 3, 0)] {
        let lhs = product_ratio(&p, w, lo, mid).unwrap() * product_ratio(&p, w, mid + 1, hi).unwrap();
        assert!((lhs - product_ratio(&p, w, lo, hi).unwrap()).norm() < 1e-13, "{lo} {mid} {hi}");
    }
}

#[test]
fn transition_probability_at_time_zero() {
    let p = spiked();
    let y = ParticleConfig::new(vec![2, 1, 1]).unwrap();
    let c = default_circle(&p, 0, 4, 64).unwrap();
    let same = transition_probability(&y, &y, 0.0, &p, &c).unwrap();
    assert!((same.value - 1.0).abs() < 1e-12);
    let other = ParticleConfig::new(vec![3, 1, 1]).unwrap();
    assert!(transition_probability(&y, &other, 0.0, &p, &c).unwrap().value.abs() < 1e-12);
}

#[test]
fn single_particle_is_poisson() {
    let p = RateProfile::homogeneous(0.4, 1.3).unwrap();
    let b = 0.6 * 1.3;
    let t = 1.1;
    let c = default_circle(&p, 0, 8, 64).unwrap();
    let y = ParticleConfig::new(vec![2]).unwrap();
    for x in 2..9 {
        let v = transition_probability(&y, &ParticleConfig::new(vec![x]).unwrap(), t, &p, &c).unwrap();
        assert!((v.value - stats::poisson_pmf(x - 2, b * t)).abs() < 1e-13);
        v.certify(1e-9).unwrap();
    }
    let fam = nested_family_for(&p, -2, 8, 1, 128).unwrap();
    for m in -1..7 {
        let l = dist_leftmost(&y, m, t, &p, &c).unwrap().value;
        let r = 1.0 - dist_rightmost(&y, m, t, &p, &fam).unwrap().value;
        let tail = stats::poisson_tail(m - 2, b * t);
        assert!((l - tail).abs() < 1e-12 && (r - tail).abs() < 1e-12, "M = {m}");
    }
}

#[test]
fn two_particles_match_master_equation() {
    let p = RateProfile::with_rates(0.5, 1.0, 0, &[1.6, 0.7]).unwrap();
    let y = ParticleConfig::new(vec![0, 0]).unwrap();
    let x = ParticleConfig::new(vec![1, 0]).unwrap();
    let t = 0.9;
    let me = MasterEquation::new(&p, &y, 14).unwrap();
    let d = me.evolve(t).unwrap();
    let c = default_circle(&p, 0, 1, 64).unwrap();
    let v = transition_probability(&y, &x, t, &p, &c).unwrap();
    assert!((v.value - me.probability(&d, x.positions())).abs() < 1e-8);
}

#[test]
fn right_tail_against_direct_summation() {
    let mut r = ChaCha8Rng::seed_from_u64(17);
    let p = RateProfile::with_rates(0.5, 1.0, 0, &(0..12).map(|_| r.random_range(0.5..2.0)).collect::<Vec<_>>()).unwrap();
    let y = ParticleConfig::new(vec![2, 1, 0]).unwrap();
    let t = 0.7;
    let cap = y.x(1) + oracle::poisson_depth(2.0 * t, 1e-12);
    let me = MasterEquation::new(&p, &y, cap).unwrap();
    let c = default_circle(&p, 0, cap, 64).unwrap();
    let probs: Vec<(Vec<i64>, f64)> = me
        .states()
        .iter()
        .filter(|s| s[0] <= cap)
        .map(|s| {
            let x = ParticleConfig::new(s.clone()).unwrap();
            (s.clone(), transition_amplitude(&y, &x, t, &p, &c).unwrap().re)
        })
        .collect();
    for n in 1..=3 {
        for m in -1..5 {
            let direct: f64 = probs.iter().filter(|(s, _)| s[n - 1] > m).map(|(_, v)| v).sum();
            let formula = dist_tagged_right(&y, n, m, t, &p, &c).unwrap();
            assert!((formula.value - direct).abs() < 1e-7, "n = {n}, M = {m}");
        }
    }
}

#[test]
fn right_tail_below_every_particle_is_one() {
    let p = spiked();
    let y = ParticleConfig::new(vec![4, 2, 1]).unwrap();
    let c = default_circle(&p, -1, 5, 64).unwrap();
    for n in 1..=3 {
        assert!((dist_tagged_right(&y, n, 0, 0.5, &p, &c).unwrap().value - 1.0).abs() < 1e-10);
    }
    // Small times: the leftmost tail is the indicator of y_N > M.
    for m in -1..3 {
        let v = dist_leftmost(&y, m, 1e-9, &p, &c).unwrap().value;
        assert!((v - if 1 > m { 1.0 } else { 0.0 }).abs() < 1e-8);
    }
}

#[test]
fn extremes_and_complementarity() {
    let p = spiked();
    let y = ParticleConfig::new(vec![3, 1, 0]).unwrap();
    let c = default_circle(&p, -1, 6, 64).unwrap();
    let fam = nested_family_for(&p, -1, 6, 3, 128).unwrap();
    for m in -1..6 {
        let right_n = dist_tagged_right(&y, 3, m, 0.8, &p, &c).unwrap();
        assert!((right_n.value - dist_leftmost(&y, m, 0.8, &p, &c).unwrap().value).abs() < 1e-10);
        let left_n = dist_tagged_left(&y, 3, m, 0.8, &p, &fam).unwrap();
        assert!((left_n.value - dist_rightmost(&y, m, 0.8, &p, &fam).unwrap().value).abs() < 1e-10);
        for n in 1..=3 {
            let l = dist_tagged_left(&y, n, m, 0.8, &p, &fam).unwrap();
            let r = dist_tagged_right(&y, 3 - n + 1, m, 0.8, &p, &c).unwrap();
            assert!((l.value + r.value - 1.0).abs() < 1e-8, "n = {n}, M = {m}");
        }
    }
}

#[test]
fn left_tail_against_master_equation() {
    let p = spiked();
    let y = ParticleConfig::new(vec![1, 0]).unwrap();
    let t = 0.9;
    let me = MasterEquation::new(&p, &y, 5).unwrap();
    let d = me.evolve(t).unwrap();
    let fam = nested_family_for(&p, -1, 5, 2, 128).unwrap();
    for n in 1..=2 {
        for m in 0..5 {
            // P(x_{N-n+1} <= M) = 1 - P(x_{N-n+1} > M); the master equation is exact for tails at the cap.
            let oracle = 1.0 - me.tail(&d, 2 - n + 1, m);
            let v = dist_tagged_left(&y, n, m, t, &p, &fam).unwrap();
            assert!((v.value - oracle).abs() < 1e-7, "n = {n}, M = {m}");
        }
    }
}

#[test]
fn homogeneous_leftmost_is_consistent() {
    let p = RateProfile::homogeneous(0.5, 1.0).unwrap();
    let y = ParticleConfig::new(vec![2, 2, 0]).unwrap();
    let c = default_circle(&p, 0, 6, 64).unwrap();
    let big = Circle::centered(0.0, 2.5, 64).unwrap();
    let me = MasterEquation::new(&p, &y, 4).unwrap();
    let d = me.evolve(1.0).unwrap();
    for m in 0..4 {
        let a = dist_leftmost(&y, m, 1.0, &p, &c).unwrap().value;
        let b = dist_leftmost(&y, m, 1.0, &p, &big).unwrap().value;
        assert!((a - b).abs() < 1e-10);
        assert!((a - me.tail(&d, 3, m)).abs() < 1e-10);
    }
}

#[test]
fn nested_family_feasible_for_equal_rates() {
    let bs = vec![0.5; 4];
    let fam = nested_family_build(&bs, QParam::new(0.5).unwrap(), 3, NESTED_MARGIN, 64).unwrap();
    fam.verify(&bs, 0.5).unwrap();
    assert!(fam.convergence_rate(&bs, 0.5) < 1.0);
    let js = serde_json::to_string(&fam).unwrap();
    assert_eq!(serde_json::from_str::<NestedContourFamily<f64>>(&js).unwrap(), fam);
}

#[test]
fn nested_family_infeasible_for_wide_spread_and_small_q() {
    // Enclosing [b_min, b_max] while excluding 0 forces the centre above (b_min + b_max)/2;
    // nesting three q-images then runs out of room when b_max / b_min is large and q small.
    let bs = [0.01, 1.0];
    let e = nested_family_build(&bs, QParam::new(0.02).unwrap(), 3, NESTED_MARGIN, 64).unwrap_err();
    assert!(matches!(e, qtazrp::Error::Infeasible(_)), "{e}");
}

fn random_family_search(bs: &[f64], q: f64, count: usize, tries: usize, rng: &mut ChaCha8Rng) -> bool {
    let bmax = bs.iter().copied().fold(0.0, f64::max);
    (0..tries).any(|_| {
        let circles = (0..count)
            .map(|_| {
                let c = C::new(rng.random_range(0.0..2.0 * bmax), rng.random_range(-0.2..0.2) * bmax);
                Circle::new(c, rng.random_range(0.0..2.0 * bmax), 8).unwrap()
            })
            .collect();
        NestedContourFamily { circles, margin: NESTED_MARGIN }.verify(bs, q).is_ok()
    })
}

#[test]
fn nested_family_agrees_with_randomized_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (bs, q) in [(vec![0.1, 1.0], 0.4), (vec![0.3, 0.5], 0.5), (vec![0.01, 1.0], 0.02)] {
        for count in 1..=3 {
            let built = nested_family_build(&bs, QParam::new(q).unwrap(), count, NESTED_MARGIN, 64);
            if let Ok(fam) = &built {
                fam.verify(&bs, q).unwrap();
            } else {
                assert!(!random_family_search(&bs, q, count, 200_000, &mut rng), "{bs:?}, q = {q}, {count} circles");
            }
        }
    }
    // The spiked case is feasible.
    assert!(nested_family_build(&[0.1, 1.0], QParam::new(0.4).unwrap(), 3, NESTED_MARGIN, 64).is_ok());
}

#[test]
fn contour_relations_hold() {
    let hom = RateProfile::homogeneous(0.5, 1.0).unwrap();
    let p = spiked();
    let cases = [(vec![1], &hom, 1e-10), (vec![2, 0], &hom, 1e-8), (vec![2, 1, 0], &p, 1e-6)];
    for (ys, prof, tol) in cases {
        let y = ParticleConfig::new(ys.clone()).unwrap();
        let c = default_circle(prof, -1, 5, 64).unwrap();
        let fam = nested_family_for(prof, -1, 5, ys.len(), 128).unwrap();
        for m in [-1, 0, 2, 4] {
            let r = contour_relation_residual(&y, m, 0.6, prof, &c, &fam).unwrap();
            assert!(r < tol, "Y = {ys:?}, M = {m}: {r}");
        }
    }
}

#[test]
fn finite_step_tail_with_master_equation() {
    // For m = 1 the expansion must reproduce the leftmost tail of the stacked system itself
    // once N is large: compare N = 20 and N = 30.
    let p = RateProfile::with_rates(0.5, 1.0, 0, &[1.3, 0.8, 1.1]).unwrap();
    let q = p.q();
    let f = |n| finite_step_tail(n, 1, q, 1e-14, |r| oracle::step_leftmost_tail(&p, r, 2, 1.0)).unwrap();
    assert!((f(20) - f(30)).abs() < 1e-5);
}
