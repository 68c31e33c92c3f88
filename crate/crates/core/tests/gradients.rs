mod common;

use common::*;
use spectralprior::{Tape, Tensor};

#[test]
fn every_primitive_matches_central_differences() {
    let mut failures = Vec::new();
    for (name, r) in gradient_suite() {
        assert!(r.probes >= 100);
        if !(r.max_rel_err < FD_TOL) {
            failures.push(format!("{name}: {:.3e}", r.max_rel_err));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = spectralprior::Rng::new(3);
    let x = random_tensor(&mut rng, &[2, 4, 4], -1.0, 1.0);
    let k = random_tensor(&mut rng, &[2, 2, 3, 3], -1.0, 1.0);
    let grad_of = |a: f64, b: f64| -> Tensor {
        let mut t = Tape::new();
        let xv = t.param(&x);
        let kv = t.constant(k.clone());
        let y = t.conv2d(xv, kv, 1, 1).unwrap();
        let s = t.sigmoid(y);
        let l1 = weighted_sum(&mut t, s, 1);
        let sq = t.square(xv);
        let l2 = t.sum(sq);
        let l1 = t.scale(l1, a);
        let l2 = t.scale(l2, b);
        let l = t.add(l1, l2).unwrap();
        t.backward(l).unwrap().get(xv).unwrap()
    };
    let (g1, g2) = (grad_of(1.0, 0.0), grad_of(0.0, 1.0));
    let combo = grad_of(2.5, -0.75);
    let expect = g1.axpby(2.5, &g2, -0.75).unwrap();
    assert!(combo.max_abs_diff(&expect).unwrap() < 1e-10);
}

#[test]
fn directional_derivative_of_one_weight() {
    // perturbing one weight by eps moves the loss by about eps * gradient
    let r = generator_fd(32, spectralprior::LossKind::DspMagnitude, 1e-6);
    assert!(r.max_rel_err < 1e-3, "{r:?}");
}
