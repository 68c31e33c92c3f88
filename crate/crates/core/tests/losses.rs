mod common;

use common::{operator, random_tensor};
use proptest::prelude::*;
use spectralprior::degrade::{corrupt, DegradationOp, NoiseModel, Observation};
use spectralprior::objective::{dip_pixel_loss, dsp_complex_loss, dsp_magnitude_loss, evaluate, per_band_residual};
use spectralprior::{BandMask, LossKind, LossSpec, Normalization, Rng, Tensor};

fn random_case(rng: &mut Rng, kind: usize) -> (Tensor, Observation) {
    let c = 1 + rng.below(3);
    let h = 1 << (1 + rng.below(5));
    let w = 1 << (1 + rng.below(5));
    let op = operator(kind, [c, h, w], rng);
    let clean = random_tensor(rng, &[c, h, w], 0.0, 1.0);
    let sigma = rng.uniform(0.0, 0.3);
    let obs = corrupt(&clean, &op, &NoiseModel::gaussian(sigma, rng.below(1000) as u64).unwrap()).unwrap();
    (random_tensor(rng, &[c, h, w], -0.5, 1.5), obs)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn unitary_complex_loss_is_the_pixel_loss() {
    let mut rng = Rng::new(21);
    for case in 0..400 {
        let (pred, obs) = random_case(&mut rng, case);
        let a = dsp_complex_loss(&pred, &obs, Normalization::Unitary).unwrap();
        let b = dip_pixel_loss(&pred, &obs).unwrap();
        assert!(rel(a, b) < 1e-9, "case {case}: {a} vs {b}");
    }
}

#[test]
fn unnormalized_loss_scales_by_the_grid_size() {
    let mut rng = Rng::new(22);
    let x = random_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0);
    let obs = corrupt(&x, &DegradationOp::identity([1, 8, 8]).unwrap(), &NoiseModel::gaussian(0.1, 1).unwrap()).unwrap();
    let pred = random_tensor(&mut rng, &[1, 8, 8], 0.0, 1.0);
    let raw = dsp_complex_loss(&pred, &obs, Normalization::Unnormalized).unwrap();
    let px = dip_pixel_loss(&pred, &obs).unwrap();
    assert!(rel(raw, 64.0 * px) < 1e-12);
}

#[test]
fn unit_offset_lands_entirely_in_the_dc_bin() {
    let mut rng = Rng::new(23);
    let x = random_tensor(&mut rng, &[1, 16, 16], 0.0, 1.0);
    let obs = Observation::new(x.clone(), DegradationOp::identity([1, 16, 16]).unwrap(), None).unwrap();
    let pred = x.map(|v| v + 1.0);
    let loss = dsp_complex_loss(&pred, &obs, Normalization::Unitary).unwrap();
    assert!((loss - 256.0).abs() < 1e-9);
    let bands = per_band_residual(&pred, &obs, &BandMask::radial(16, 16, 8).unwrap()).unwrap();
    assert!((bands[0] - 256.0).abs() < 1e-9);
    assert!(bands[1..].iter().all(|b| b.abs() < 1e-9));
}

#[test]
fn band_residuals_sum_to_the_complex_loss() {
    let mut rng = Rng::new(24);
    for case in 0..40 {
        let (pred, obs) = random_case(&mut rng, case);
        let [_, h, w] = obs.op.out_shape();
        let bands = BandMask::radial(h, w, 8).unwrap();
        let total: f64 = per_band_residual(&pred, &obs, &bands).unwrap().iter().sum();
        let loss = dsp_complex_loss(&pred, &obs, Normalization::Unitary).unwrap();
        assert!(rel(total, loss) < 1e-12);
    }
}

#[test]
fn magnitude_loss_ignores_circular_shifts() {
    let mut rng = Rng::new(25);
    let x = random_tensor(&mut rng, &[1, 16, 16], 0.0, 1.0);
    let obs = Observation::new(x.clone(), DegradationOp::identity([1, 16, 16]).unwrap(), None).unwrap();
    let mut shifted = Tensor::zeros(&[1, 16, 16]);
    for i in 0..16 {
        for j in 0..16 {
            shifted.data_mut()[((i + 3) % 16) * 16 + (j + 5) % 16] = x.data()[i * 16 + j];
        }
    }
    assert!(dsp_magnitude_loss(&shifted, &obs, 1e-8).unwrap() < 1e-18);
    assert!(dsp_complex_loss(&shifted, &obs, Normalization::Unitary).unwrap() > 1.0);
}

#[test]
fn every_loss_vanishes_at_an_exact_fit() {
    let mut rng = Rng::new(26);
    for kind in [LossKind::DspComplex, LossKind::DspMagnitude, LossKind::DspLogMagnitude, LossKind::DipPixel] {
        let x = random_tensor(&mut rng, &[2, 8, 8], 0.0, 1.0);
        let obs = corrupt(&x, &DegradationOp::identity([2, 8, 8]).unwrap(), &NoiseModel::none()).unwrap();
        assert!(evaluate(&x, &obs, &LossSpec::of(kind)).unwrap().abs() < 1e-20, "{kind:?}");
    }
}

#[test]
fn magnitude_eps_must_be_positive() {
    let mut rng = Rng::new(27);
    let (pred, obs) = random_case(&mut rng, 0);
    let mut spec = LossSpec::of(LossKind::DspMagnitude);
    spec.eps = 0.0;
    assert!(evaluate(&pred, &obs, &spec).is_err());
}

#[test]
fn band_weights_of_one_change_nothing() {
    let mut rng = Rng::new(28);
    let (pred, obs) = random_case(&mut rng, 1);
    for kind in [LossKind::DspComplex, LossKind::DspMagnitude] {
        let plain = evaluate(&pred, &obs, &LossSpec::of(kind)).unwrap();
        let mut spec = LossSpec::of(kind);
        spec.band_weights = Some(vec![1.0; 8]);
        assert!(rel(plain, evaluate(&pred, &obs, &spec).unwrap()) < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn equivalence_holds_for_any_case(seed in any::<u64>(), kind in 0usize..4) {
        let (pred, obs) = random_case(&mut Rng::new(seed), kind);
        let a = dsp_complex_loss(&pred, &obs, Normalization::Unitary).unwrap();
        let b = dip_pixel_loss(&pred, &obs).unwrap();
        prop_assert!(rel(a, b) < 1e-9);
    }

    #[test]
    fn magnitude_loss_never_exceeds_complex_loss(seed in any::<u64>(), kind in 0usize..4, log_eps in -10.0f64..-1.0) {
        let (pred, obs) = random_case(&mut Rng::new(seed), kind);
        let mag = dsp_magnitude_loss(&pred, &obs, 10f64.powf(log_eps)).unwrap();
        let cpx = dsp_complex_loss(&pred, &obs, Normalization::Unitary).unwrap();
        prop_assert!(mag <= cpx * (1.0 + 1e-12) + 1e-15);
    }

    #[test]
    fn losses_are_nonnegative(seed in any::<u64>(), kind in 0usize..4) {
        let (pred, obs) = random_case(&mut Rng::new(seed), kind);
        for k in [LossKind::DspComplex, LossKind::DspMagnitude, LossKind::DspLogMagnitude, LossKind::DipPixel] {
            prop_assert!(evaluate(&pred, &obs, &LossSpec::of(k)).unwrap() >= 0.0);
        }
    }
}
