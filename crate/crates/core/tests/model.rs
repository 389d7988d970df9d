use proptest::prelude::*;
use qtazrp::model::*;
use qtazrp::simulator::{simulate_finite, Initial, SimRun};
use std::collections::BTreeMap;

#[test]
fn jump_rates() {
    let p = RateProfile::with_rates(0.5, 1.0, 3, &[2.0]).unwrap();
    assert_eq!(jump_rate(&p, 3, Occupancy::Finite(1)).unwrap(), 1.0);
    assert_eq!(jump_rate(&p, 3, Occupancy::Infinite).unwrap(), 2.0);
    assert!(jump_rate(&p, 3, Occupancy::Finite(0)).is_err());
    let p = RateProfile::homogeneous(0.3, 1.5).unwrap();
    assert!((jump_rate(&p, -7, Occupancy::Finite(4)).unwrap() - 1.5 * (1.0 - 0.3f64.powi(4))).abs() < 1e-15);
}

#[test]
fn profile_validation_and_serde() {
    assert!(RateProfile::new(0.5, 1.0, BTreeMap::from([(2, 3.0)]), 0.5, 2.0).is_err());
    assert!(RateProfile::new(1.2, 1.0, BTreeMap::new(), 0.5, 2.0).is_err());
    let p = RateProfile::with_rates(0.4, 1.0, -1, &[0.5, 1.7]).unwrap();
    assert_eq!(p.a(-1), 0.5);
    assert_eq!(p.a(0), 1.7);
    assert_eq!(p.a(40), 1.0);
    assert!((p.b(0) - 0.6 * 1.7).abs() < 1e-15);
    let js = serde_json::to_string(&p).unwrap();
    assert_eq!(serde_json::from_str::<RateProfile>(&js).unwrap(), p);
    let bad = r#"{"q":0.5,"default_a":1.0,"a_min":0.5,"a_max":2.0,"spike":3}"#;
    assert!(serde_json::from_str::<RateProfile>(bad).is_err());
    let out = r#"{"q":0.5,"default_a":1.0,"a_min":0.5,"a_max":2.0,"overrides":{"4":9.0}}"#;
    assert!(serde_json::from_str::<RateProfile>(out).is_err());
}

#[test]
fn permuted_profile() {
    let p = RateProfile::with_rates(0.5, 1.0, 0, &[0.5, 1.0, 2.0]).unwrap();
    let q = p.permuted(0, &[2, 0, 1]).unwrap();
    assert_eq!((q.a(0), q.a(1), q.a(2), q.a(3)), (2.0, 0.5, 1.0, 1.0));
    assert!(p.permuted(0, &[3, 0, 1]).is_err());
}

#[test]
fn configurations() {
    assert!(ParticleConfig::new(vec![0, 1]).is_err());
    assert!(ParticleConfig::new(vec![]).is_err());
    let x = ParticleConfig::new(vec![3, 3, 3, 1]).unwrap();
    assert_eq!(x.x(1), 3);
    assert_eq!(x.occupation(), BTreeMap::from([(1, 1), (3, 3)]));
    assert_eq!(ParticleConfig::from_occupation(&x.occupation()).unwrap(), x);
    assert!(serde_json::from_str::<ParticleConfig>("[0, 2]").is_err());
}

#[test]
fn duality_simple_cases() {
    let y = zrp_to_tasep(&BTreeMap::new(), 5).unwrap();
    for k in -3..6 {
        assert_eq!(y.position(k), Some(5 - k));
    }
    let y = zrp_to_tasep(&BTreeMap::from([(0, 3)]), 0).unwrap();
    assert_eq!(y.position(0), Some(0));
    assert_eq!(y.position(-1), Some(4));
    assert_eq!(y.position(-2), Some(5));
    assert_eq!(y.position(1), Some(-1));
}

#[test]
fn step_wedge_height() {
    // Sites <= 0 occupied, sites > 0 empty: the height falls to its minimum at 1/2 and
    // rises with slope one on either side.
    let y = TasepConfig::new(0, vec![0], RightTail::Empty).unwrap();
    let h = |k: i64| height_function(&y, 0, k);
    assert_eq!(h(-1), 0);
    for k in -8..8 {
        let slope = h(k + 1) - h(k);
        assert_eq!(slope, if k < 0 { -1 } else { 1 }, "k = {k}");
    }
    // Fully empty to the right of y_0: slope +1 there.
    let y = TasepConfig::new(0, vec![3, 0], RightTail::Empty).unwrap();
    for k in 3..10 {
        assert_eq!(height_function(&y, 2, k + 1) - height_function(&y, 2, k), 1);
    }
}

#[test]
fn event_counts() {
    assert_eq!(duality_event_count(&[]), 0);
    let ev = |site| JumpEvent { site, time: 0.0, label: 1 };
    assert_eq!(duality_event_count(&[ev(0), ev(0), ev(2), ev(0)]), 3);
}

#[test]
fn jumps_out_of_origin_balance_on_simulated_runs() {
    // Jumps out of 0 = jumps into 0 + n_0(0) - n_0(t): the dual particle y_0 moves by the
    // count read off the trajectory.
    let p = RateProfile::with_rates(0.5, 1.0, -2, &[1.5, 0.7, 1.9, 0.6]).unwrap();
    for seed in 0..50 {
        let y = ParticleConfig::new(vec![2, 0, 0, -1, -2]).unwrap();
        let run = SimRun { seed, profile: p.clone(), initial: Initial::Finite(y.clone()), horizon: 1.3 };
        let out = simulate_finite(&run, true).unwrap();
        let traj = out.trajectory.unwrap();
        let into = traj.iter().filter(|e| e.site == -1).count() as i64;
        let n0 = |c: &ParticleConfig| c.occupation().get(&0).copied().unwrap_or(0) as i64;
        assert_eq!(duality_event_count(&traj) as i64, into + n0(&y) - n0(&out.config));
        let k0 = duality_event_count(&traj) as i64;
        let start = zrp_to_tasep(&y.occupation(), 0).unwrap();
        let end = zrp_to_tasep(&out.config.occupation(), k0).unwrap();
        assert_eq!(end.position(0).unwrap() - start.position(0).unwrap(), k0);
    }
}

proptest! {
    #[test]
    fn duality_round_trip(occ in prop::collection::btree_map(-6i64..10, 1u32..5, 0..6), k0 in -20i64..20) {
        let y = zrp_to_tasep(&occ, k0).unwrap();
        prop_assert_eq!(y.position(0), Some(k0));
        let back = tasep_to_occupation(&y);
        let expect: BTreeMap<i64, u32> = occ.iter().filter(|(&k, _)| k > y.first_label()).map(|(&k, &v)| (k, v)).collect();
        prop_assert_eq!(back, expect);
    }

    #[test]
    fn height_telescopes(occ in prop::collection::btree_map(-6i64..10, 1u32..5, 0..6), k0 in -20i64..20, c in 0i64..5, a in -30i64..30, len in 0i64..30) {
        let y = zrp_to_tasep(&occ, k0).unwrap();
        let b = a + len;
        let occupied = (a + 1..=b).filter(|&j| y.is_occupied(j)).count() as i64;
        let dh = height_function(&y, c, b) - height_function(&y, c, a);
        prop_assert_eq!(dh, (b - a) - 2 * occupied);
    }
}
