//! Repeats a 32x32 denoising run over several noise draws and splits the
//! spectral error of the reconstructions into bias and variance per band.
//! Uses all cores unless SPECTRALPRIOR_THREADS says otherwise.

use spectralprior::experiment::{bias_variance, thread_count, RunConfig, Task};

fn main() -> anyhow::Result<()> {
    let n = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let mut cfg = RunConfig::new(Task::Denoise, "synthetic:32x32");
    cfg.optimizer.iterations = 800;
    cfg.optimizer.log_every = 100;
    let report = bias_variance(&cfg, n, thread_count())?;
    print!("{}", report.summary());
    Ok(())
}
