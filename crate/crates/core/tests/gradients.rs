mod support;

use support::gradcheck::{analytic, check_kind, random_case, relative_error_of, LayerKind, TOLERANCE};

#[test]
fn every_layer_kind_matches_finite_differences() {
    for kind in LayerKind::ALL {
        let worst = check_kind(kind, 10, 0x6AD);
        println!("{:>8}: max relative error {worst:.3e}", kind.name());
        assert!(worst < TOLERANCE, "{} gradient error {worst:e}", kind.name());
    }
}

#[test]
fn wrong_gradients_are_rejected() {
    // Gradients for the opposite target must fail the same oracle.
    for kind in LayerKind::ALL {
        let case = random_case(kind, 11);
        let wrong = analytic(&case, 1.0 - case.target);
        assert!(relative_error_of(&case, &wrong) > 0.1, "{}", kind.name());
    }
}
