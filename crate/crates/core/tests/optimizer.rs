mod common;

use std::sync::Arc;

use common::tiny_generator;
use spectralprior::degrade::{corrupt, DegradationOp, NoiseModel};
use spectralprior::diagnostics::moving_average;
use spectralprior::io::synthetic_image;
use spectralprior::optimize::Optimizer;
use spectralprior::{
    run, LinearMap, LossKind, LossSpec, OptimizerConfig, OptimizerKind, RunSpec, Tape, Tensor,
};

/// Adam on `(x - 3)^2` from `x = 0`, lr 0.1, evaluated step by step in
/// 50-digit arithmetic.
const ADAM_TRACE: [f64; 5] = [
    0.099999999833333333611,
    0.1998972925852117066,
    0.29961847654925339188,
    0.39908646894421574357,
    0.49822054377271428603,
];

#[test]
fn adam_matches_a_high_precision_trace() {
    let mut opt = Optimizer::new(OptimizerConfig {
        lr: 0.1,
        ..Default::default()
    });
    let mut x = Tensor::scalar(0.0);
    for expected in ADAM_TRACE {
        let g = Tensor::scalar(2.0 * (x.item().unwrap() - 3.0));
        opt.update([&mut x], &[g]).unwrap();
        let got = x.item().unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }
    assert_eq!(opt.steps(), 5);
}

#[test]
fn sgd_takes_a_plain_gradient_step() {
    let mut opt = Optimizer::new(OptimizerConfig {
        kind: OptimizerKind::Sgd,
        lr: 0.1,
        ..Default::default()
    });
    let mut x = Tensor::scalar(0.0);
    opt.update([&mut x], &[Tensor::scalar(-6.0)]).unwrap();
    assert!((x.item().unwrap() - 0.6).abs() < 1e-15);
}

#[test]
fn mismatched_gradients_are_rejected() {
    let mut opt = Optimizer::new(OptimizerConfig::default());
    let mut x = Tensor::zeros(&[3]);
    assert!(opt.update([&mut x], &[]).is_err());
    assert!(opt.update([&mut x], &[Tensor::zeros(&[2])]).is_err());
}

/// `p -> M p` for a fixed dense matrix.
#[derive(Debug)]
struct Dense {
    m: Vec<f64>,
    shape_in: [usize; 1],
    shape_out: [usize; 1],
}

impl LinearMap for Dense {
    fn in_shape(&self) -> &[usize] {
        &self.shape_in
    }
    fn out_shape(&self) -> &[usize] {
        &self.shape_out
    }
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..self.shape_out[0]).map(|i| (0..n).map(|j| self.m[i * n + j] * x[j]).sum()).collect()
    }
    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let n = self.shape_in[0];
        (0..n).map(|j| (0..y.len()).map(|i| self.m[i * n + j] * y[i]).sum()).collect()
    }
}

#[test]
fn a_linear_model_reaches_a_stationary_point() {
    let (rows, cols) = (6, 4);
    let mut rng = spectralprior::Rng::new(31);
    let map = Arc::new(Dense {
        m: rng.uniform_vec(rows * cols, -1.0, 1.0),
        shape_in: [cols],
        shape_out: [rows],
    });
    let target = Tensor::new(&[rows], rng.uniform_vec(rows, -1.0, 1.0)).unwrap();
    let mut p = Tensor::zeros(&[cols]).with_grad();
    let mut opt = Optimizer::new(OptimizerConfig {
        kind: OptimizerKind::Sgd,
        lr: 0.05,
        ..Default::default()
    });
    let mut grad_norm = f64::INFINITY;
    for _ in 0..5000 {
        let mut tape = Tape::new();
        let v = tape.param(&p);
        let y = tape.linear(v, map.clone()).unwrap();
        let t = tape.constant(target.clone());
        let r = tape.sub(y, t).unwrap();
        let sq = tape.square(r);
        let l = tape.sum(sq);
        let g = tape.backward(l).unwrap().get(v).unwrap();
        grad_norm = g.norm_sq().sqrt();
        opt.update([&mut p], &[g]).unwrap();
    }
    assert!(grad_norm < 1e-6, "{grad_norm:e}");
}

fn small_problem(lr: f64, iterations: usize) -> (spectralprior::Observation, RunSpec) {
    let clean = synthetic_image(16, 16);
    let op = DegradationOp::identity([1, 16, 16]).unwrap();
    let obs = corrupt(&clean, &op, &NoiseModel::gaussian(0.1, 2).unwrap()).unwrap();
    let spec = RunSpec::new(
        tiny_generator(2),
        LossSpec::of(LossKind::DipPixel),
        OptimizerConfig {
            lr,
            iterations,
            log_every: 1,
            ..Default::default()
        },
    );
    (obs, spec)
}

#[test]
fn zero_learning_rate_freezes_the_loss() {
    let (obs, spec) = small_problem(0.0, 10);
    let rec = run(&obs, &spec).unwrap();
    let l = rec.losses();
    assert!(l.iter().all(|v| *v == l[0]));
}

#[test]
fn one_iteration_logs_two_entries() {
    let (obs, mut spec) = small_problem(0.01, 1);
    spec.optimizer.log_every = 50;
    let rec = run(&obs, &spec).unwrap();
    assert_eq!(rec.iterations(), vec![0, 1]);
    assert!(rec.reconstruction.is_some());
}

#[test]
fn small_steps_descend_once_smoothed() {
    for lr in [1e-3, 5e-4] {
        let (obs, spec) = small_problem(lr, 600);
        let rec = run(&obs, &spec).unwrap();
        let iters = rec.iterations();
        let smooth = moving_average(&iters, &rec.losses(), 50);
        for (w, t) in smooth.windows(2).zip(&iters[1..]) {
            if *t > 100 {
                assert!(w[1] <= w[0], "lr {lr}: smoothed loss rises at iteration {t}");
            }
        }
    }
}

#[test]
fn invalid_settings_fail_before_running() {
    let (obs, mut spec) = small_problem(-1.0, 10);
    assert!(run(&obs, &spec).is_err());
    spec.optimizer.lr = 0.01;
    spec.optimizer.beta1 = 1.0;
    assert!(run(&obs, &spec).is_err());
    spec.optimizer.beta1 = 0.9;
    spec.optimizer.iterations = 0;
    assert!(run(&obs, &spec).is_err());
}
