use num_complex::Complex;
use qtazrp::fredholm::*;
use qtazrp::linalg::Matrix;
use qtazrp::model::RateProfile;
use qtazrp::qalgebra::QParam;
use qtazrp::quadrature::Circle;

type C = Complex<f64>;

fn profile() -> RateProfile {
    RateProfile::with_rates(0.5, 1.0, 0, &[1.4, 0.6, 1.0, 1.8, 0.9]).unwrap()
}

fn circle_grid(p: &RateProfile, m: i64, nodes: usize) -> NystromGrid<f64> {
    NystromGrid::Circle(finite_time_circle(p, m, nodes).unwrap())
}

fn q() -> QParam {
    QParam::new(0.5).unwrap()
}

#[test]
fn zeta_zero_gives_one() {
    let p = profile();
    let z = C::new(0.0, 0.0);
    assert_eq!(det_k_mt(z, 3, 1.0, &p, &circle_grid(&p, 3, 64)).unwrap().value, C::new(1.0, 0.0));
    assert_eq!(limiting_det(z, 0.3, &[], q(), &line_grid()).unwrap().value, C::new(1.0, 0.0));
    assert_eq!(mehler_det(z, 0.3, q(), &mehler_grid(0.3, q(), 64)).unwrap().value, C::new(1.0, 0.0));
}

#[test]
fn rank_one_determinant() {
    // det(I + ζ u vᵀ W) = 1 + ζ Σ u v w on a circle discretisation.
    let g: NystromGrid<f64> = NystromGrid::Circle(Circle::centered(0.0, 1.5, 32).unwrap());
    let pts = g.discretize().unwrap();
    let u = |z: C| z.exp();
    let v = |z: C| 1.0 / (z - 0.3);
    let zeta = C::new(0.7, -0.2);
    let m = Matrix::from_fn(pts.len(), |i, j| {
        let d = if i == j { C::new(1.0, 0.0) } else { C::new(0.0, 0.0) };
        d + zeta * u(pts[i].0) * v(pts[j].0) * pts[j].1
    });
    let closed: C = C::new(1.0, 0.0) + zeta * pts.iter().map(|(z, w)| u(*z) * v(*z) * w).sum::<C>();
    assert!((m.det().unwrap() - closed).norm() < 1e-13);
    // The quadrature sum is the contour integral of e^z/(z - 0.3).
    assert!((closed - (C::new(1.0, 0.0) + zeta * 0.3f64.exp())).norm() < 1e-13);
}

#[test]
fn finite_time_determinant_is_stable_and_contour_independent() {
    let p = profile();
    let z = C::new(1.0, 0.0);
    let d = det_k_mt(z, 3, 1.0, &p, &circle_grid(&p, 3, 64)).unwrap();
    assert!(d.grid_refinement_delta < 1e-10);
    for (center, radius) in [(0.0, 2.5), (0.3, 2.0), (-0.2, 3.2)] {
        let c = Circle::centered(center, radius, 128).unwrap();
        let e = det_k_mt(z, 3, 1.0, &p, &NystromGrid::Circle(c)).unwrap();
        assert!((e.value - d.value).norm() < 1e-9, "center {center}, radius {radius}");
    }
    // A circle that misses b_3 is rejected.
    let small = NystromGrid::Circle(Circle::centered(0.0, 0.5, 64).unwrap());
    assert!(det_k_mt(z, 3, 1.0, &p, &small).is_err());
}

#[test]
fn finite_time_determinant_invariant_under_rate_order() {
    let rates = [1.4, 0.6, 1.0, 1.8];
    let base = RateProfile::with_rates(0.5, 1.0, 0, &rates).unwrap();
    let z = C::new(0.8, 0.0);
    let d0 = det_k_mt(z, 3, 1.5, &base, &circle_grid(&base, 3, 64)).unwrap().value;
    for perm in [[3, 2, 1, 0], [1, 3, 0, 2], [2, 0, 3, 1]] {
        let p = base.permuted(0, &perm).unwrap();
        let d = det_k_mt(z, 3, 1.5, &p, &circle_grid(&p, 3, 64)).unwrap().value;
        assert!((d - d0).norm() < 1e-10);
    }
}

#[test]
fn fredholm_series_oracle() {
    // det(I + ζ A) = Σ_r ζ^r Σ_{|S| = r} det A_S, with the kernel of K_{0,t} rebuilt here.
    let p = profile();
    let (t, zeta) = (0.2, C::new(0.9, 0.0));
    let b = p.b(0);
    let qq = 0.5;
    let g = circle_grid(&p, 0, 32);
    let pts = g.discretize().unwrap();
    let n = pts.len();
    let k = |i: usize, j: usize| {
        let (w, wp) = (pts[i].0, pts[j].0);
        (-w * t).exp() * b / (b - w) / (wp * qq - w) * pts[j].1
    };
    let mut series = C::new(1.0, 0.0);
    for r in 1..=6usize {
        let mut acc = C::new(0.0, 0.0);
        let mut idx: Vec<usize> = (0..r).collect();
        loop {
            acc += Matrix::from_fn(r, |a, c| k(idx[a], idx[c])).det().unwrap();
            // Next r-subset in lexicographic order.
            let mut i = r;
            while i > 0 && idx[i - 1] == n - r + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..r {
                idx[j] = idx[j - 1] + 1;
            }
        }
        series += zeta.powu(r as u32) * acc;
    }
    let d = det_k_mt(zeta, 0, t, &p, &circle_grid(&p, 0, 64)).unwrap();
    assert!((series - d.value).norm() < 1e-8, "{series} vs {}", d.value);
}

#[test]
fn step_distribution_routes_agree() {
    let p = profile();
    let t = 1.2;
    for m_cut in 0..4 {
        let g = circle_grid(&p, m_cut, 64);
        let one = det_k_mt(C::new(1.0, 0.0), m_cut, t, &p, &g).unwrap().value.re;
        let v = step_distribution(1, m_cut, t, &p, &g, &zeta_circle(1, p.q()).unwrap()).unwrap();
        assert!((v.value - (1.0 - one)).abs() < 1e-8);
        let k = KernelSpec::FiniteTime { m_cut, t, profile: p.clone() };
        for m in 1..=3 {
            let quad = step_distribution(m, m_cut, t, &p, &g, &zeta_circle(m, p.q()).unwrap()).unwrap();
            let res = step_distribution_residues(&k, m, &g.with_nodes(128)).unwrap();
            assert!((quad.value - res.re).abs() < 1e-8);
            quad.certify(1e-9).unwrap();
        }
    }
    // At t = 0 nobody has left the origin.
    for m in 1..=3 {
        let v = step_distribution(m, 2, 0.0, &p, &circle_grid(&p, 2, 64), &zeta_circle(m, p.q()).unwrap()).unwrap();
        assert!(v.value.abs() < 1e-8);
    }
    // A ζ-circle that misses q^{1-m} is rejected.
    let bad = Circle::centered(0.0, 1.5, 64).unwrap();
    assert!(step_distribution(2, 1, 1.0, &p, &circle_grid(&p, 1, 64), &bad).is_err());
}

#[test]
fn limit_kernel_forms_agree() {
    for &tau in &[-1.5, 0.0, 0.7] {
        for zeta in [C::new(1.0, 0.0), C::new(-0.6, 0.0), C::new(0.4, 0.5)] {
            let a = limiting_det(zeta, tau, &[], q(), &line_grid()).unwrap();
            let b = halfline_det(zeta, tau, q(), &halfline_grid(tau, q(), HALFLINE_NODES)).unwrap();
            let c = mehler_det(zeta, tau, q(), &mehler_grid(tau, q(), HALFLINE_NODES)).unwrap();
            assert!((a.value - b.value).norm() < 1e-6 && (a.value - c.value).norm() < 1e-6);
            assert!(a.grid_refinement_delta < 1e-6);
        }
    }
    // Far right the restriction window is empty.
    let far = mehler_det(C::new(1.0, 0.0), 12.0, q(), &mehler_grid(12.0, q(), 64)).unwrap();
    assert!((far.value - 1.0).norm() < 1e-10);
}

#[test]
fn limiting_step_distribution_properties() {
    let zc = zeta_circle(1, q()).unwrap();
    let g = line_grid().with_nodes(100);
    let mut last = f64::INFINITY;
    for i in 0..9 {
        let tau = -2.0 + 0.5 * i as f64;
        let v = limiting_step_distribution(1, tau, &[], q(), &g, &zc).unwrap();
        let d = limiting_det(C::new(1.0, 0.0), tau, &[], q(), &g).unwrap();
        assert!((v.value - (1.0 - d.value.re)).abs() < 1e-8);
        assert!(v.value > -1e-8 && v.value < 1.0 + 1e-8);
        assert!(v.value <= last + 1e-12);
        last = v.value;
    }
}

#[test]
fn finite_n_determinants_approach_the_limit() {
    let ns = [50, 100, 200, 400];
    for betas in [vec![], vec![1.0]] {
        let rows = asymptotic_convergence_study(&ns, 0.0, &betas, C::new(1.0, 0.0), q(), SADDLE_NODES).unwrap();
        assert!(rows.windows(2).all(|w| w[1].deviation < w[0].deviation), "{betas:?}");
        assert!(loglog_slope(&rows) < 0.0);
        assert!(rows.iter().all(|r| r.det_n_delta < 1e-9));
    }
    // Uniformly over a compact ζ set.
    let mut worst = [0.0f64; 2];
    for zeta in [C::new(1.0, 0.0), C::new(-1.0, 0.0), C::new(0.0, 1.0), C::new(0.5, -0.5)] {
        let rows = asymptotic_convergence_study(&[100, 400], 0.5, &[], zeta, q(), SADDLE_NODES).unwrap();
        worst[0] = worst[0].max(rows[0].deviation);
        worst[1] = worst[1].max(rows[1].deviation);
    }
    assert!(worst[1] < worst[0]);
}

#[test]
fn kernel_specs_reject_bad_input() {
    let p = profile();
    let k = KernelSpec::FiniteTime { m_cut: -1, t: 1.0, profile: p.clone() };
    assert!(k.validate().is_err());
    let js = r#"{"kind":"mehler","q":0.5,"tau":0.1,"zeta":1}"#;
    assert!(serde_json::from_str::<KernelSpec>(js).is_err());
    let ok = r#"{"kind":"limiting","q":0.5,"tau":0.1,"betas":[1.0]}"#;
    assert!(serde_json::from_str::<KernelSpec>(ok).is_ok());
    let grid = r#"{"domain":"vertical_line","half_height":10.0,"nodes":100}"#;
    assert!(serde_json::from_str::<NystromGrid<f64>>(grid).is_ok());
    // Wrong grid for the kernel kind.
    assert!(det_k_mt(C::new(1.0, 0.0), 1, 1.0, &p, &line_grid()).is_err());
}
