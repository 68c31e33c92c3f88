//! Tracks the distance between the fitted measurement and the clean one in
//! the Fourier domain, against the energy of the noise in the lowest bands.

use spectralprior::diagnostics::noise_stability_report;
use spectralprior::experiment::{execute, RunConfig, Task};
use spectralprior::BandMask;

fn main() -> anyhow::Result<()> {
    let mut cfg = RunConfig::new(Task::Denoise, "synthetic:64x64");
    cfg.optimizer.iterations = 1000;
    cfg.optimizer.log_every = 10;
    let outcome = execute(&cfg)?;
    let obs = &outcome.prepared.obs;
    let [_, h, w] = obs.op.out_shape();
    let report = noise_stability_report(&outcome.record, obs, &BandMask::radial(h, w, cfg.bands)?, cfg.low_band)?;
    print!("{}", report.summary());
    for i in (0..report.iters.len()).step_by(report.iters.len() / 10) {
        println!("  iter {:>5}: error {:.4e}", report.iters[i], report.error[i]);
    }
    Ok(())
}
