//! Under the unitary transform the complex spectral loss and the pixel loss
//! are the same number; the magnitude loss is never larger.

use spectralprior::degrade::{corrupt, DegradationOp, NoiseModel};
use spectralprior::io::synthetic_image;
use spectralprior::objective::{dip_pixel_loss, dsp_complex_loss, dsp_magnitude_loss};
use spectralprior::{Normalization, Rng, Tensor};

fn main() -> anyhow::Result<()> {
    let clean = synthetic_image(32, 32);
    let ops = [
        ("identity", DegradationOp::identity([1, 32, 32])?),
        ("random mask", DegradationOp::bernoulli_mask([1, 32, 32], 0.5, 3)?),
        ("downsample x4", DegradationOp::downsample([1, 32, 32], 4, true)?),
    ];
    let mut rng = Rng::new(2);
    let guess = Tensor::new(&[1, 32, 32], rng.uniform_vec(1024, 0.0, 1.0))?;
    for (name, op) in ops {
        let obs = corrupt(&clean, &op, &NoiseModel::gaussian(0.1, 7)?)?;
        let px = dip_pixel_loss(&guess, &obs)?;
        let cx = dsp_complex_loss(&guess, &obs, Normalization::Unitary)?;
        let raw = dsp_complex_loss(&guess, &obs, Normalization::Unnormalized)?;
        let mag = dsp_magnitude_loss(&guess, &obs, 1e-8)?;
        println!("{name:>14}: pixel {px:.10}  complex {cx:.10}  (unnormalized / N = {:.10})  magnitude {mag:.6}",
            raw / obs.y.len() as f64);
    }
    Ok(())
}
