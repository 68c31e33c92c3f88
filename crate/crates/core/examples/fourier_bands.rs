//! Radial frequency bands of a 64x64 grid and how the energy of the test
//! image and of white noise spreads across them.

use spectralprior::degrade::NoiseModel;
use spectralprior::io::synthetic_image;
use spectralprior::spectral::band_energy;
use spectralprior::{dft2, BandMask, Normalization};

fn main() -> anyhow::Result<()> {
    let bands = BandMask::radial(64, 64, 8)?;
    let image = dft2(&synthetic_image(64, 64), Normalization::Unitary)?;
    let noise = dft2(&NoiseModel::gaussian(25.0 / 255.0, 0)?.sample(&[1, 64, 64]), Normalization::Unitary)?;
    let (ei, en) = (band_energy(&image, &bands)?, band_energy(&noise, &bands)?);
    let counts = bands.coefficient_counts();
    println!("band  radius          coeffs  image energy  noise energy");
    for b in 0..bands.count() {
        let (lo, hi) = bands.bounds(b);
        println!("{b:>4}  [{lo:.3}, {hi:.3}]  {:>6}  {:>12.4}  {:>12.4}", counts[b], ei[b], en[b]);
    }
    println!("total image energy {:.4} (pixel-domain {:.4})", image.energy(), synthetic_image(64, 64).norm_sq());
    Ok(())
}
