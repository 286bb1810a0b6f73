use std::f64::consts::PI;

use gkflab::geomcore::{
    flag_coeff, gauss_tail, lk_model_space, tube_volume_euclid, LkVector, SpaceDescriptor,
};
use gkflab::gkf::{expected_ec, expected_ec_curve, expected_lk, expected_lk_composite, Composite};
use gkflab::gmf::{gmf_closed_form, DomainDescriptor, GmfVector};
use proptest::prelude::*;

fn halfline(dim: usize, u: f64) -> GmfVector {
    gmf_closed_form(&DomainDescriptor::half_line(u), dim)
        .unwrap()
        .unwrap()
}

proptest! {
    #[test]
    fn trivial_domain_returns_the_curvatures(values in prop::collection::vec(-5.0f64..5.0, 1..6)) {
        let lk = LkVector::new(values.clone()).unwrap();
        let gmf = gmf_closed_form(&DomainDescriptor::full_space(2).unwrap(), lk.dim()).unwrap().unwrap();
        for i in 0..=lk.dim() {
            prop_assert!((expected_lk(i, &lk, &gmf).unwrap().value - values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn extreme_thresholds(a in 0.5f64..20.0, b in 0.5f64..20.0) {
        let space = SpaceDescriptor::rectangle(vec![a, b], 1.0).unwrap();
        let lk = lk_model_space(&space).unwrap();
        // Far below, every intrinsic volume of M survives; far above, none do.
        for i in 0..=2 {
            let low = expected_lk(i, &lk, &halfline(2, -40.0)).unwrap().value;
            let high = expected_lk(i, &lk, &halfline(2, 40.0)).unwrap().value;
            prop_assert!((low - lk.get(i)).abs() < 1e-12 * (1.0 + lk.get(i)));
            prop_assert!(high.abs() < 1e-12);
        }
    }

    #[test]
    fn metric_scaling_matches_stretched_sides(a in 0.5f64..10.0, b in 0.5f64..10.0, lambda in 0.1f64..10.0, u in -2.0f64..4.0) {
        let scaled = SpaceDescriptor::rectangle(vec![a, b], lambda).unwrap();
        let s = lambda.sqrt();
        let stretched = SpaceDescriptor::rectangle(vec![a * s, b * s], 1.0).unwrap();
        let x = expected_ec(&scaled, u).unwrap().value;
        let y = expected_ec(&stretched, u).unwrap().value;
        prop_assert!((x - y).abs() < 1e-10 * (1.0 + y.abs()));
        let lk1 = lk_model_space(&SpaceDescriptor::rectangle(vec![a, b], 1.0).unwrap()).unwrap();
        let lk2 = lk_model_space(&scaled).unwrap();
        for j in 0..=2 {
            prop_assert!((lk2.get(j) - lk1.get(j) * lambda.powf(0.5 * j as f64)).abs() < 1e-10 * (1.0 + lk2.get(j)));
        }
    }

    #[test]
    fn curve_agrees_with_pointwise(us in prop::collection::vec(-3.0f64..5.0, 1..10)) {
        let space = SpaceDescriptor::rectangle(vec![3.0, 7.0], 2.0).unwrap();
        for (u, v) in expected_ec_curve(&space, &us).unwrap() {
            prop_assert_eq!(v, expected_ec(&space, u).unwrap().value);
        }
    }

    #[test]
    fn rectangle_tube_volume(a in 0.1f64..10.0, b in 0.1f64..10.0, rho in 0.0f64..3.0) {
        let lk = lk_model_space(&SpaceDescriptor::rectangle(vec![a, b], 1.0).unwrap()).unwrap();
        let exact = (a + 2.0 * rho) * (b + 2.0 * rho) - (4.0 - PI) * rho * rho;
        prop_assert!((tube_volume_euclid(&lk, 2, rho).unwrap() - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn flag_coefficients_are_symmetric(n in 0i64..40, k in 0i64..40) {
        prop_assume!(k <= n);
        let x = flag_coeff(n, k).unwrap();
        let y = flag_coeff(n, n - k).unwrap();
        prop_assert!((x - y).abs() <= 1e-12 * x.abs());
        prop_assert!(x > 0.0);
    }

    #[test]
    fn one_dimensional_chi_square_is_two_sided(t in 0.01f64..20.0, side in 0.5f64..20.0) {
        let space = SpaceDescriptor::rectangle(vec![side], 1.0).unwrap();
        let chi = expected_lk_composite(0, &space, 1, Composite::SumOfSquares, t).unwrap().value;
        let u = t.sqrt();
        let two_sided = 2.0 * (gauss_tail(u) + side * (-0.5 * u * u).exp() / (2.0 * PI));
        prop_assert!((chi - two_sided).abs() < 1e-12 * (1.0 + two_sided));
    }
}

#[test]
fn rectangle_ec_closed_form() {
    let space = SpaceDescriptor::rectangle(vec![10.0, 10.0], 1.0).unwrap();
    for u in [-1.0f64, 0.0, 1.0, 2.5] {
        let phi = (-0.5 * u * u).exp();
        let closed =
            gauss_tail(u) + 20.0 * phi / (2.0 * PI) + 100.0 * u * phi / (2.0 * PI).powf(1.5);
        assert!((expected_ec(&space, u).unwrap().value - closed).abs() < 1e-12);
    }
}

#[test]
fn order_beyond_dimension_is_rejected() {
    let lk = LkVector::new(vec![1.0, 2.0]).unwrap();
    assert!(expected_lk(2, &lk, &halfline(1, 0.0)).is_err());
    assert!(expected_lk(0, &lk, &halfline(0, 0.0)).is_err());
}
