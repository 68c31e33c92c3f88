#![allow(dead_code)]

use spectralprior::degrade::DegradationOp;
use spectralprior::generator::GeneratorConfig;
use spectralprior::{Rng, Tape, Tensor, Var};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;

pub fn random_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, rng.uniform_vec(n, lo, hi)).unwrap()
}

/// Values bounded away from zero, so that kinked primitives are probed
/// away from their kink.
pub fn away_from_zero(rng: &mut Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.uniform(0.05, 1.0);
            if rng.bernoulli(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// `sum(w * y)` with fixed random weights, so that every output element
/// contributes to the gradient with a generic coefficient.
pub fn weighted_sum(tape: &mut Tape, y: Var, seed: u64) -> Var {
    let mut rng = Rng::new(seed ^ 0x5eed);
    let shape = tape.value(y).shape().to_vec();
    let w = tape.constant(random_tensor(&mut rng, &shape, -1.0, 1.0));
    let p = tape.mul(y, w).unwrap();
    tape.sum(p)
}

#[derive(Debug)]
pub struct FdReport {
    pub probes: usize,
    pub max_rel_err: f64,
}

/// Compares reverse-mode gradients of `build` against central differences
/// at `probes` randomly chosen input coordinates.
pub fn fd_check(
    inputs: &[Tensor],
    build: impl Fn(&mut Tape, &[Var]) -> Var,
    probes: usize,
    seed: u64,
) -> FdReport {
    let eval = |xs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x)).collect();
        let l = build(&mut tape, &vars);
        tape.value(l).item().unwrap()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x)).collect();
    let l = build(&mut tape, &vars);
    let grads = tape.backward(l).unwrap();
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.get(*v).unwrap()).collect();

    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    let mut xs = inputs.to_vec();
    for _ in 0..probes {
        let i = rng.below(xs.len());
        let j = rng.below(xs[i].len());
        let orig = xs[i].data()[j];
        xs[i].data_mut()[j] = orig + FD_STEP;
        let up = eval(&xs);
        xs[i].data_mut()[j] = orig - FD_STEP;
        let down = eval(&xs);
        xs[i].data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        let a = analytic[i].data()[j];
        worst = worst.max((a - numeric).abs() / (a.abs() + 1e-8));
    }
    FdReport {
        probes,
        max_rel_err: worst,
    }
}

/// Direct `O(N^2)` 2-D DFT of one plane, unnormalized: `(re, im)`.
pub fn naive_dft_plane(plane: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let (mut sr, mut si) = (0.0, 0.0);
            for y in 0..h {
                for x in 0..w {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((u * y) as f64 / h as f64 + (v * x) as f64 / w as f64);
                    sr += plane[y * w + x] * phase.cos();
                    si += plane[y * w + x] * phase.sin();
                }
            }
            re[u * w + v] = sr;
            im[u * w + v] = si;
        }
    }
    (re, im)
}

/// One of the four operator kinds on a `[c, h, w]` grid, chosen by `kind`.
pub fn operator(kind: usize, shape: [usize; 3], rng: &mut Rng) -> DegradationOp {
    match kind % 4 {
        0 => DegradationOp::identity(shape).unwrap(),
        1 => DegradationOp::bernoulli_mask(shape, rng.uniform(0.1, 0.9), rng.below(1 << 30) as u64).unwrap(),
        2 => {
            let m = random_tensor(rng, &[1, shape[1], shape[2]], 0.0, 1.0);
            DegradationOp::region_mask(shape, &m).unwrap()
        }
        _ => {
            let max = shape[1].min(shape[2]).trailing_zeros() as usize;
            let factor = 1 << (1 + rng.below(max.max(1)));
            DegradationOp::downsample(shape, factor.min(shape[1].min(shape[2])), rng.bernoulli(0.5)).unwrap()
        }
    }
}

pub fn tiny_generator(depth: usize) -> GeneratorConfig {
    GeneratorConfig {
        depth,
        channels: vec![4; depth],
        skip_channels: vec![2; depth],
        kernel_size: 3,
        input_channels: 3,
        input_noise_std: 0.1,
        output_channels: 1,
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

pub fn probe_count() -> usize {
    120
}

/// Finite-difference reports for every differentiable primitive, the DFT
/// parts, all loss kinds and a whole small generator.
pub fn gradient_suite() -> Vec<(String, FdReport)> {
    use spectralprior::degrade::{corrupt, NoiseModel};
    use spectralprior::objective::{LossKind, LossSpec, PreparedLoss};
    use spectralprior::spectral::dft2_var;
    use spectralprior::Normalization;

    let n = probe_count();
    let mut rng = Rng::new(41);
    let mut out = Vec::new();
    let mut check = |name: &str, inputs: Vec<Tensor>, build: &dyn Fn(&mut Tape, &[Var]) -> Var| {
        let seed = out.len() as u64 + 1;
        let r = fd_check(&inputs, |t, v| build(t, v), n, seed);
        out.push((name.to_string(), r));
    };

    let x = random_tensor(&mut rng, &[2, 6, 6], -1.0, 1.0);
    let k3 = random_tensor(&mut rng, &[3, 2, 3, 3], -1.0, 1.0);
    check("conv2d", vec![x.clone(), k3.clone()], &|t, v| {
        let y = t.conv2d(v[0], v[1], 1, 1).unwrap();
        weighted_sum(t, y, 1)
    });
    check("conv2d_strided", vec![x.clone(), k3.clone()], &|t, v| {
        let y = t.conv2d(v[0], v[1], 2, 1).unwrap();
        weighted_sum(t, y, 2)
    });
    let k1 = random_tensor(&mut rng, &[3, 2, 1, 1], -1.0, 1.0);
    check("conv2d_pointwise", vec![x.clone(), k1], &|t, v| {
        let y = t.conv2d(v[0], v[1], 1, 0).unwrap();
        weighted_sum(t, y, 3)
    });
    let b = random_tensor(&mut rng, &[2], -1.0, 1.0);
    check("add_channel_bias", vec![x.clone(), b.clone()], &|t, v| {
        let y = t.add_channel_bias(v[0], v[1]).unwrap();
        let y = t.square(y);
        weighted_sum(t, y, 4)
    });
    let g = random_tensor(&mut rng, &[2], 0.5, 1.5);
    check("channel_affine", vec![x.clone(), g, b], &|t, v| {
        let y = t.channel_affine(v[0], v[1], v[2]).unwrap();
        let y = t.square(y);
        weighted_sum(t, y, 5)
    });
    check("upsample_nearest", vec![x.clone()], &|t, v| {
        let y = t.upsample_nearest(v[0], 2).unwrap();
        let y = t.square(y);
        weighted_sum(t, y, 6)
    });
    let xa = away_from_zero(&mut rng, &[2, 6, 6]);
    check("leaky_relu", vec![xa.clone()], &|t, v| {
        let y = t.leaky_relu(v[0], 0.2);
        let y = t.square(y);
        weighted_sum(t, y, 7)
    });
    check("sigmoid", vec![x.clone()], &|t, v| {
        let y = t.sigmoid(v[0]);
        weighted_sum(t, y, 8)
    });
    check("instance_norm", vec![x.clone()], &|t, v| {
        let y = t.instance_norm(v[0], 1e-5).unwrap();
        weighted_sum(t, y, 9)
    });
    let x2 = random_tensor(&mut rng, &[1, 6, 6], -1.0, 1.0);
    check("concat_channels", vec![x.clone(), x2], &|t, v| {
        let y = t.concat_channels(v[0], v[1]).unwrap();
        let y = t.square(y);
        weighted_sum(t, y, 10)
    });
    let y2 = random_tensor(&mut rng, &[2, 6, 6], -1.0, 1.0);
    check("add", vec![x.clone(), y2.clone()], &|t, v| {
        let y = t.add(v[0], v[1]).unwrap();
        let y = t.square(y);
        weighted_sum(t, y, 11)
    });
    check("sub", vec![x.clone(), y2.clone()], &|t, v| {
        let y = t.sub(v[0], v[1]).unwrap();
        let y = t.square(y);
        weighted_sum(t, y, 12)
    });
    check("mul", vec![x.clone(), y2.clone()], &|t, v| {
        let y = t.mul(v[0], v[1]).unwrap();
        weighted_sum(t, y, 13)
    });
    check("scale", vec![x.clone()], &|t, v| {
        let y = t.scale(v[0], -2.5);
        let y = t.square(y);
        weighted_sum(t, y, 14)
    });
    check("add_scalar", vec![x.clone()], &|t, v| {
        let y = t.add_scalar(v[0], 0.75);
        let y = t.square(y);
        weighted_sum(t, y, 15)
    });
    check("square", vec![x.clone()], &|t, v| {
        let y = t.square(v[0]);
        weighted_sum(t, y, 16)
    });
    let pos = random_tensor(&mut rng, &[2, 6, 6], 0.2, 2.0);
    check("sqrt", vec![pos.clone()], &|t, v| {
        let y = t.sqrt(v[0]);
        weighted_sum(t, y, 17)
    });
    check("ln", vec![pos], &|t, v| {
        let y = t.ln(v[0]);
        weighted_sum(t, y, 18)
    });
    check("sum", vec![x.clone()], &|t, v| {
        let y = t.square(v[0]);
        t.sum(y)
    });
    let img = random_tensor(&mut rng, &[2, 8, 4], -1.0, 1.0);
    for norm in [Normalization::Unitary, Normalization::Unnormalized] {
        check(&format!("dft2_{}", norm.as_str()), vec![img.clone()], &|t, v| {
            let (re, im) = dft2_var(t, v[0], norm).unwrap();
            let a = weighted_sum(t, re, 19);
            let re2 = t.square(re);
            let b = weighted_sum(t, re2, 20);
            let im2 = t.square(im);
            let c = weighted_sum(t, im, 21);
            let d = t.sum(im2);
            let s = t.add(a, b).unwrap();
            let s = t.add(s, c).unwrap();
            t.add(s, d).unwrap()
        });
    }

    // losses, each under an operator of a different kind
    let shape = [1, 8, 8];
    for (i, kind) in [LossKind::DspComplex, LossKind::DspMagnitude, LossKind::DspLogMagnitude, LossKind::DipPixel]
        .into_iter()
        .enumerate()
    {
        for op_kind in 0..4 {
            let op = operator(op_kind, shape, &mut rng);
            let clean = random_tensor(&mut rng, &shape, 0.0, 1.0);
            let obs = corrupt(&clean, &op, &NoiseModel::gaussian(0.1, i as u64).unwrap()).unwrap();
            let mut spec = LossSpec::of(kind);
            spec.eps = 1e-6;
            let loss = PreparedLoss::new(&spec, &obs).unwrap();
            let pred = random_tensor(&mut rng, &shape, 0.0, 1.0);
            check(&format!("loss_{}_op{op_kind}", kind.as_str()), vec![pred], &|t, v| {
                loss.record(t, v[0]).unwrap()
            });
        }
    }
    let mut spec = LossSpec::of(LossKind::DspComplex);
    spec.normalization = Normalization::Unnormalized;
    let op = operator(3, shape, &mut rng);
    let obs = corrupt(&random_tensor(&mut rng, &shape, 0.0, 1.0), &op, &NoiseModel::none()).unwrap();
    let loss = PreparedLoss::new(&spec, &obs).unwrap();
    check("loss_dsp_complex_unnormalized", vec![random_tensor(&mut rng, &shape, 0.0, 1.0)], &|t, v| {
        loss.record(t, v[0]).unwrap()
    });

    out.push(("generator_dsp_complex".into(), generator_fd(n, LossKind::DspComplex, 0.0)));
    out.push(("generator_dsp_magnitude".into(), generator_fd(n, LossKind::DspMagnitude, 1e-6)));
    out
}

/// Whole-network check: perturbs individual parameters of a small
/// generator under `kind` on a 16x16 image.
///
pub fn generator_fd(probes: usize, kind: spectralprior::LossKind, eps: f64) -> FdReport {
    use spectralprior::degrade::{corrupt, NoiseModel};
    use spectralprior::objective::{LossSpec, PreparedLoss};
    use spectralprior::GeneratorState;

    let mut rng = Rng::new(77);
    let shape = [1, 16, 16];
    let op = DegradationOp::identity(shape).unwrap();
    let obs = corrupt(&random_tensor(&mut rng, &shape, 0.0, 1.0), &op, &NoiseModel::gaussian(0.1, 3).unwrap()).unwrap();
    let mut spec = LossSpec::of(kind);
    spec.eps = eps;
    let loss = PreparedLoss::new(&spec, &obs).unwrap();
    let mut state = GeneratorState::init(tiny_generator(2), 5, 16, 16).unwrap();
    let mut tape = Tape::new();
    let (out, params) = state.forward(&mut tape).unwrap();
    let l = loss.record(&mut tape, out).unwrap();
    let grads = tape.backward(l).unwrap();
    let analytic: Vec<Tensor> = params.iter().map(|p| grads.get(*p).unwrap()).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let i = rng.below(analytic.len());
        let j = rng.below(analytic[i].len());
        let orig = state.params()[i].1.data()[j];
        let eval = |x: f64, state: &mut GeneratorState| {
            state.params_mut().nth(i).unwrap().data_mut()[j] = x;
            loss.value(&state.output().unwrap()).unwrap()
        };
        let a = analytic[i].data()[j];
        // A leaky ReLU input sitting within one step of zero bends the
        // secant; a gradient bug would not go away at a finer step.
        let err = [FD_STEP, FD_STEP / 10.0]
            .iter()
            .map(|&h| {
                let up = eval(orig + h, &mut state);
                let down = eval(orig - h, &mut state);
                (a - (up - down) / (2.0 * h)).abs() / (a.abs() + 1e-8)
            })
            .fold(f64::INFINITY, f64::min);
        eval(orig, &mut state);
        worst = worst.max(err);
    }
    FdReport {
        probes,
        max_rel_err: worst,
    }
}
