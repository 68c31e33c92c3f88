//! Drives the generator and optimizer directly instead of through
//! `run`, with a band-weighted loss and a checkpoint halfway.

use spectralprior::degrade::{corrupt, DegradationOp, NoiseModel};
use spectralprior::diagnostics::psnr;
use spectralprior::io::synthetic_image;
use spectralprior::objective::PreparedLoss;
use spectralprior::optimize::{step, Optimizer};
use spectralprior::{GeneratorConfig, GeneratorState, LossKind, LossSpec, OptimizerConfig};

fn main() -> anyhow::Result<()> {
    let clean = synthetic_image(32, 32);
    let obs = corrupt(&clean, &DegradationOp::identity([1, 32, 32])?, &NoiseModel::gaussian(0.1, 1)?)?;
    let mut spec = LossSpec::of(LossKind::DspMagnitude);
    // down-weight the top two radial bands
    spec.band_weights = Some(vec![1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.25]);
    let loss = PreparedLoss::new(&spec, &obs)?;

    let config = GeneratorConfig {
        depth: 4,
        channels: vec![16, 32, 32, 32],
        skip_channels: vec![4; 4],
        ..GeneratorConfig::default()
    };
    let mut state = GeneratorState::init(config.clone(), 7, 32, 32)?;
    println!("{} parameters", state.parameter_count());
    let mut opt = Optimizer::new(OptimizerConfig::default());
    let ckpt = std::env::temp_dir().join("spectralprior_example.ckpt");
    for t in 0..=300 {
        let l = step(&mut state, &loss, &mut opt)?;
        if t % 50 == 0 {
            println!("iter {t:>3}: loss {l:.4e}  PSNR {:.2} dB", psnr(&state.output()?, &clean, 1.0)?);
        }
        if t == 150 {
            state.save_checkpoint(&ckpt)?;
        }
    }
    let restored = GeneratorState::load_checkpoint(config, &ckpt)?;
    println!("checkpoint from iteration 150: PSNR {:.2} dB", psnr(&restored.output()?, &clean, 1.0)?);
    Ok(())
}
