mod common;

use proptest::prelude::*;
use tada::losses::{cycle_loss, disc_loss, gen_adversarial_loss, interpolate, DiscriminatorScores};
use tada_tensor::Tensor;

#[test]
fn losses_match_scalar_loops() {
    let detail = common::a1_loss_oracles(150, 11).unwrap();
    println!("{detail}");
}

fn t(v: &[f64]) -> Tensor<f64> {
    Tensor::from_vec(v.to_vec(), &[v.len()]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn least_squares_terms_are_nonnegative(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let s = DiscriminatorScores::new(t(&v)).unwrap();
        prop_assert!(gen_adversarial_loss(&s).unwrap().item().unwrap() >= 0.0);
        prop_assert!(disc_loss(&s, &s).unwrap().item().unwrap() >= 0.0);
    }

    #[test]
    fn perfect_reconstruction_has_zero_cycle_loss(v in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let x = t(&v);
        prop_assert_eq!(cycle_loss(&x, &x, &x, &x).unwrap().item().unwrap(), 0.0);
    }

    #[test]
    fn interpolation_is_affine_in_alpha(
        adv in 0.0f64..3.0,
        task in 0.0f64..3.0,
        gamma in 0.1f64..20.0,
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
    ) {
        let at = |alpha: f64| interpolate(&t(&[adv]), &t(&[task]), alpha, gamma).unwrap().item().unwrap();
        let mid = at((a + b) / 2.0);
        let avg = (at(a) + at(b)) / 2.0;
        prop_assert!((mid - avg).abs() <= 1e-12 * avg.abs().max(1.0));
    }
}
