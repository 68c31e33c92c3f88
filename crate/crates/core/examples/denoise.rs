//! Denoise the built-in test image (or an image given as the first
//! argument) with the spectral magnitude loss.
//!
//!     cargo run --release --example denoise [-- path/to/image.png [iterations]]

use spectralprior::diagnostics::psnr_summary;
use spectralprior::experiment::{execute, write_outputs, RunConfig, Task};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let input = args.next().unwrap_or_else(|| "synthetic:64x64".into());
    let mut cfg = RunConfig::new(Task::Denoise, input);
    cfg.optimizer.iterations = args.next().map(|s| s.parse()).transpose()?.unwrap_or(600);
    cfg.optimizer.log_every = 10;
    cfg.output_dir = "out/examples".into();

    let outcome = execute(&cfg)?;
    for p in write_outputs(&outcome)?.paths {
        println!("wrote {}", p.display());
    }
    let s = psnr_summary(&outcome.record)?;
    println!(
        "sigma {:.0}/255: final PSNR {:.2} dB, peak {:.2} dB at iteration {}",
        cfg.sigma, s.final_psnr, s.peak, s.peak_iter
    );
    Ok(())
}
