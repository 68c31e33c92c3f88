//! Fill in pixels dropped at random. Half of the pixels are kept by default;
//! pass another keep probability as the first argument.

use spectralprior::diagnostics::psnr_summary;
use spectralprior::experiment::{execute, write_outputs, RunConfig, Task};

fn main() -> anyhow::Result<()> {
    let mut cfg = RunConfig::new(Task::Restore, "synthetic:64x64");
    cfg.p = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0.5);
    cfg.optimizer.iterations = 800;
    cfg.optimizer.log_every = 20;
    cfg.output_dir = "out/examples".into();

    let outcome = execute(&cfg)?;
    write_outputs(&outcome)?;
    let first = outcome.record.entries[0].psnr.unwrap_or(f64::NAN);
    let s = psnr_summary(&outcome.record)?;
    println!("keep p = {}: PSNR {first:.2} dB at start, {:.2} dB after {} iterations", cfg.p, s.final_psnr, cfg.optimizer.iterations);
    Ok(())
}
