use fogresnet::gradcheck::*;

const OP_TOL: f64 = 1e-5;
const NET_TOL: f64 = 1e-4;
const SHAPES: usize = 24;

#[test]
fn every_op_matches_finite_differences() {
    for check in check_all_ops(SHAPES, 1) {
        assert_eq!(check.cases, SHAPES);
        assert!(check.max_rel_err < OP_TOL, "{check:?}");
    }
}

#[test]
fn tiny_network_matches_finite_differences() {
    let check = check_tiny_network(SHAPES, 7);
    assert_eq!(check.cases, SHAPES);
    assert!(check.max_rel_err < NET_TOL, "{check:?}");
}

#[test]
fn a_wrong_gradient_is_detected() {
    let mut x = vec![0.3, -1.2, 2.0];
    let n = central_differences(&mut x, |v| v.iter().map(|a| a * a * a).sum());
    let right: Vec<f64> = x.iter().map(|a| 3.0 * a * a).collect();
    let wrong: Vec<f64> = x.iter().map(|a| 2.0 * a * a).collect();
    assert!(relative_error(&right, &n) < 1e-8);
    assert!(relative_error(&wrong, &n) > 0.1);
}
