//! Runs the pixel loss and the spectral magnitude loss under the same
//! schedule and reports how far each falls from its best PSNR.

use spectralprior::experiment::{compare, write_comparison, RunConfig, Task};

fn main() -> anyhow::Result<()> {
    let iterations = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1500);
    let mut cfg = RunConfig::new(Task::Denoise, "synthetic:64x64");
    cfg.optimizer.iterations = iterations;
    cfg.optimizer.log_every = 10;
    cfg.output_dir = "out/examples".into();

    let cmp = compare(&cfg)?;
    write_comparison(&cmp)?;
    print!("{}", cmp.report.summary());
    Ok(())
}
