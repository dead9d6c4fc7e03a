//! Reverse-mode gradients against central finite differences (step 1e-6).

mod common;

use common::{arch_matrix, fm_grad_error, net_grad_errors, surrogate_case};

const TOL: f64 = 1e-5;

#[test]
fn net_gradients_match_finite_differences() {
    for (k, arch) in arch_matrix().iter().enumerate() {
        assert!(arch.param_count() <= 200);
        let (pe, xe) = net_grad_errors(arch, k as u64);
        assert!(pe < TOL, "{arch:?}: parameter gradient rel. error {pe}");
        assert!(xe < TOL, "{arch:?}: input gradient rel. error {xe}");
    }
}

#[test]
fn fm_gradient_matches_finite_differences() {
    let e = fm_grad_error();
    assert!(e < TOL, "flow-matching gradient rel. error {e}");
}

#[test]
fn surrogate_gradient_on_policy() {
    let (e, clip) = surrogate_case(0.0, 0.0, 0.2);
    assert_eq!(clip, 0.0);
    assert!(e < TOL, "rel. error {e}");
}

#[test]
fn surrogate_gradient_off_policy_with_kl() {
    let (e, clip) = surrogate_case(0.05, 0.6, 0.2);
    assert!(clip > 0.0 && clip < 1.0, "want a mix of clipped and unclipped terms, got {clip}");
    assert!(e < TOL, "rel. error {e}");
}
