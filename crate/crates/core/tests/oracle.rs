use num_complex::Complex;
use qtazrp::linalg::Matrix;
use qtazrp::model::{ParticleConfig, RateProfile};
use qtazrp::oracle::*;
use qtazrp::stats::*;

type C = Complex<f64>;

#[test]
fn master_equation_single_particle_is_poisson() {
    let p = RateProfile::homogeneous(0.5, 1.4).unwrap();
    let me = MasterEquation::new(&p, &ParticleConfig::new(vec![1]).unwrap(), 30).unwrap();
    let d = me.evolve(2.0).unwrap();
    assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for x in 1..12 {
        assert!((me.probability(&d, &[x]) - poisson_pmf(x - 1, 1.4)).abs() < 1e-12);
    }
    assert!((me.tail(&d, 1, 4) - poisson_tail(3, 1.4)).abs() < 1e-12);
}

#[test]
fn master_equation_limits() {
    let p = RateProfile::homogeneous(0.5, 1.0).unwrap();
    assert!(MasterEquation::new(&p, &ParticleConfig::new(vec![5, 0]).unwrap(), 3).is_err());
    assert!(MasterEquation::new(&p, &ParticleConfig::stacked(12, 0).unwrap(), 400).is_err());
    assert_eq!(poisson_depth(0.0, 1e-12), 0);
    assert!(poisson_tail(poisson_depth(3.0, 1e-10), 3.0) < 1e-10);
}

#[test]
fn chi_square_pools_sparse_cells() {
    let observed = [30, 50, 15, 4, 1];
    let expected = [0.3, 0.5, 0.15, 0.04, 0.01];
    let c = chi_square_gof(&observed, &expected).unwrap();
    assert!(c.statistic < 1e-12);
    assert!(c.p_value > 0.999);
    assert!(c.dof >= 1);
    let skewed = chi_square_gof(&[90, 10, 0, 0, 0], &expected).unwrap();
    assert!(skewed.p_value < 1e-6);
}

#[test]
fn lu_determinant() {
    // Needs a row swap: the (0,0) entry is zero.
    let m = Matrix::from_fn(3, |i, j| C::new([[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 4.0]][i][j], 0.0));
    assert!((m.det().unwrap() - C::new(-11.0, 0.0)).norm() < 1e-14);
    assert_eq!(Matrix::<f64>::identity(4).det().unwrap(), C::new(1.0, 0.0));
    let diag = Matrix::from_fn(3, |i, j| if i == j { C::new(1.0, i as f64) } else { C::new(0.0, 0.0) });
    assert!((diag.det().unwrap() - C::new(1.0, 0.0) * C::new(1.0, 1.0) * C::new(1.0, 2.0)).norm() < 1e-14);
    assert_eq!(Matrix::<f64>::zeros(2).det().unwrap(), C::new(0.0, 0.0));
}
