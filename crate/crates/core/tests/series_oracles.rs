use num_complex::Complex;

use ewald_core::geometry::{family_rotation, sample_rotations, RigidMotion, Sign};
use ewald_core::multi_index::all2;
use ewald_core::optics::{eval_h1, OpticsConfig};
use ewald_core::phantom::Phantom;
use ewald_core::recovery::c_constant;
use ewald_core::series::data_series;

type C64 = Complex<f64>;

fn centered() -> Phantom {
    Phantom::reference().centered()
}

#[test]
fn constant_and_first_order_coefficients() {
    let optics = OpticsConfig::default();
    let p = centered();
    let m000 = p.mass();
    let shift = [0.3, -0.45, optics.c0];
    let r = sample_rotations(1, 8)[0];
    let s = data_series(&p.taylor_of_hat::<f64>(4), &r, shift, &optics, 4).unwrap();
    let two_q = 2.0 * optics.q;
    assert!((s.coeff(0, 0) - C64::new(two_q * m000, 0.0)).norm() < 1e-15);
    let i = C64::new(0.0, 1.0);
    assert!((s.coeff(1, 0) + i * two_q * m000 * shift[0]).norm() < 1e-15);
    assert!((s.coeff(0, 1) + i * two_q * m000 * shift[1]).norm() < 1e-15);
}

#[test]
fn xi1_squared_coefficient_on_the_family() {
    let optics = OpticsConfig::default();
    let p = centered();
    let taylor = p.taylor_of_hat::<f64>(3);
    let a200 = taylor.coeff(2, 0, 0).re;
    let expected = 2.0 * optics.q * a200 + c_constant(p.mass(), &optics);
    for theta in [0.0, 0.3, 2.0, 4.5] {
        let s = data_series(&taylor, &family_rotation(Sign::Plus, theta), [0.0, 0.0, optics.c0], &optics, 3).unwrap();
        assert!((s.coeff(2, 0) - C64::new(expected, 0.0)).norm() < 1e-15, "θ = {theta}");
    }
}

fn relative_pointwise_gap(order: usize, radius_fraction: f64) -> f64 {
    let optics = OpticsConfig::default();
    let p = Phantom::reference();
    let pose = RigidMotion::new(sample_rotations(1, 4)[0], [0.2, 0.1, optics.c0]);
    let s = data_series(&p.taylor_of_hat::<f64>(order), &pose.rotation, pose.translation, &optics, order).unwrap();
    let mut worst = 0.0f64;
    for n in 0..16 {
        let (sn, cs) = (std::f64::consts::TAU * n as f64 / 16.0).sin_cos();
        let r = radius_fraction * optics.k;
        let xi = [r * cs, r * sn];
        let exact = eval_h1(xi, &p, &pose, &optics).unwrap();
        worst = worst.max((exact - s.eval(xi)).norm() / exact.norm());
    }
    worst
}

#[test]
fn composite_matches_pointwise_evaluation_near_the_origin() {
    assert!(relative_pointwise_gap(8, 0.01) < 1e-10);
}

#[test]
fn data_series_matches_the_forward_model() {
    assert!(relative_pointwise_gap(8, 0.02) < 1e-8);
}

#[test]
fn truncation_is_consistent() {
    let optics = OpticsConfig::default();
    let p = Phantom::reference();
    let r = sample_rotations(1, 9)[0];
    let c = [0.1, -0.3, optics.c0];
    let low = data_series(&p.taylor_of_hat::<f64>(7), &r, c, &optics, 5).unwrap();
    let high = data_series(&p.taylor_of_hat::<f64>(7), &r, c, &optics, 7).unwrap();
    for (i, j) in all2(5) {
        let (a, b) = (low.coeff(i, j), high.coeff(i, j));
        assert!((a - b).norm() <= 1e-15 * a.norm().max(1e-300), "{i}{j}: {a} vs {b}");
    }
}

#[test]
fn real_intensity_pairs_coefficients() {
    // h(−ξ) = conj h(ξ): even degrees real, odd degrees imaginary
    let optics = OpticsConfig::default();
    let p = Phantom::reference();
    for r in sample_rotations(4, 10) {
        let s = data_series(&p.taylor_of_hat::<f64>(8), &r, [0.4, 0.2, optics.c0], &optics, 8).unwrap();
        let scale = s.coeffs().iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (i, j) in all2(8) {
            let v = s.coeff(i, j);
            let stray = if (i + j) % 2 == 0 { v.im } else { v.re };
            assert!(stray.abs() <= 1e-12 * scale, "{i}{j}: {v}");
        }
    }
}
