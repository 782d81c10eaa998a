mod common;

use proptest::prelude::*;

#[test]
fn just_identified_identity() {
    common::just_identified_identity().unwrap();
}

#[test]
fn heckman_rho_zero_is_cca() {
    common::heckman_rho_zero_is_cca().unwrap();
}

#[test]
fn inverse_mills_shape() {
    common::inverse_mills_shape().unwrap();
}

#[test]
fn score_norms() {
    common::score_norms().unwrap();
}

#[test]
fn bit_identical_reruns() {
    common::bit_identical_reruns().unwrap();
}

fn variant() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (
        prop_oneof![-2.0..-0.01f64, 0.01..2.0f64],
        0.001..0.5f64,
        -2.0..2.0f64,
        0.001..0.5f64,
    )
}

proptest! {
    #[test]
    fn ivw_invariances(v in prop::collection::vec(variant(), 1..15)) {
        prop_assert!(common::ivw_invariances_on(&v).is_ok(), "{:?}", common::ivw_invariances_on(&v));
    }

    #[test]
    fn wald_se_at_least_first_order((bx, sx, by, sy) in variant()) {
        prop_assert!(common::wald_se_bound_on(bx, sx, by, sy).is_ok());
    }

    #[test]
    fn pi_equals_lambda(xb in -30.0..30.0f64, lambda in 0.001..0.999f64) {
        prop_assert!(common::pi_equals_lambda_on(xb, lambda).is_ok());
    }

    #[test]
    fn ttw_collapse(xb in -20.0..20.0f64, pi in 0.001..0.999f64) {
        prop_assert!(common::ttw_collapse_on(xb, pi).is_ok());
    }

    #[test]
    fn ivw_single_variant_is_wald((bx, sx, by, sy) in variant()) {
        let (t, s) = common::ivw_estimate(&[(bx, sx, by, sy)]).unwrap();
        prop_assert!((t - by / bx).abs() <= 1e-12 * (1.0 + t.abs()));
        prop_assert!((s - sy / bx.abs()).abs() <= 1e-12 * (1.0 + s));
    }
}
