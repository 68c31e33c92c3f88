mod common;

use common::tiny_generator;
use spectralprior::degrade::{corrupt, DegradationOp, NoiseModel};
use spectralprior::diagnostics::{median, spectral_ordering_with, Verdict};
use spectralprior::generator::GeneratorConfig;
use spectralprior::io::synthetic_image;
use spectralprior::objective::PreparedLoss;
use spectralprior::optimize::{step, Optimizer};
use spectralprior::{run, GeneratorState, LossKind, LossSpec, OptimizerConfig, RunSpec};

fn small_generator() -> GeneratorConfig {
    GeneratorConfig {
        depth: 3,
        channels: vec![8, 16, 16],
        skip_channels: vec![4; 3],
        kernel_size: 3,
        input_channels: 8,
        input_noise_std: 0.1,
        output_channels: 1,
    }
}

fn denoise_spec(kind: LossKind, seed: u64, iterations: usize, log_every: usize) -> RunSpec {
    RunSpec::new(
        small_generator(),
        LossSpec::of(kind),
        OptimizerConfig {
            iterations,
            log_every,
            seed,
            ..Default::default()
        },
    )
}

#[test]
fn low_bands_are_fitted_first() {
    let clean = synthetic_image(32, 32);
    let op = DegradationOp::identity([1, 32, 32]).unwrap();
    let obs = corrupt(&clean, &op, &NoiseModel::gaussian(25.0 / 255.0, 7).unwrap()).unwrap();
    let mut passes = 0;
    for seed in 0..5 {
        let rec = run(&obs, &denoise_spec(LossKind::DipPixel, seed, 400, 5)).unwrap();
        let traj = spectral_ordering_with(&rec, 25, 4).unwrap();
        passes += (traj.verdict == Verdict::Pass) as usize;
    }
    assert!(passes >= 4, "{passes} of 5 seeds ordered");
}

#[test]
fn the_input_code_never_changes() {
    let clean = synthetic_image(16, 16);
    let op = DegradationOp::identity([1, 16, 16]).unwrap();
    let obs = corrupt(&clean, &op, &NoiseModel::gaussian(0.1, 1).unwrap()).unwrap();
    let loss = PreparedLoss::new(&LossSpec::of(LossKind::DspMagnitude), &obs).unwrap();
    let mut state = GeneratorState::init(tiny_generator(2), 3, 16, 16).unwrap();
    let z = state.z().fingerprint();
    let before = state.flat_params();
    let mut opt = Optimizer::new(OptimizerConfig::default());
    for _ in 0..10 {
        step(&mut state, &loss, &mut opt).unwrap();
    }
    assert_eq!(state.z().fingerprint(), z);
    assert_ne!(state.flat_params(), before);
}

#[test]
fn identical_specs_give_identical_records() {
    let clean = synthetic_image(16, 16);
    let op = DegradationOp::bernoulli_mask([1, 16, 16], 0.5, 4).unwrap();
    let obs = corrupt(&clean, &op, &NoiseModel::none()).unwrap();
    let spec = denoise_spec(LossKind::DspMagnitude, 9, 40, 5);
    let a = run(&obs, &spec).unwrap();
    let b = run(&obs, &spec).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.reconstruction, b.reconstruction);
    let other = run(&obs, &denoise_spec(LossKind::DspMagnitude, 10, 40, 5)).unwrap();
    assert_ne!(a.to_csv(), other.to_csv());
}

#[test]
fn default_network_descends_at_full_size() {
    let clean = synthetic_image(64, 64);
    let op = DegradationOp::identity([1, 64, 64]).unwrap();
    let obs = corrupt(&clean, &op, &NoiseModel::gaussian(25.0 / 255.0, 0).unwrap()).unwrap();
    for kind in [LossKind::DspMagnitude, LossKind::DipPixel] {
        let ratios: Vec<f64> = (0..3)
            .map(|seed| {
                let spec = RunSpec::new(
                    GeneratorConfig::default(),
                    LossSpec::of(kind),
                    OptimizerConfig {
                        iterations: 500,
                        log_every: 10,
                        seed,
                        ..Default::default()
                    },
                );
                let rec = run(&obs, &spec).unwrap();
                let at = |t: usize| rec.entries.iter().find(|e| e.iter == t).unwrap().loss;
                at(500) / at(10)
            })
            .collect();
        assert!(median(&ratios) < 1.0, "{kind:?}: {ratios:?}");
    }
}
