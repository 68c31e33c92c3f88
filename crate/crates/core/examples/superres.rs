//! Super-resolution. With `simulate` on, the built-in image is downsampled
//! by the factor and then recovered; with a real low-resolution file, pass
//! its path and the output is `factor` times larger.
//!
//!     cargo run --release --example superres [-- lowres.png]

use spectralprior::experiment::{execute, write_outputs, RunConfig, Task};

fn main() -> anyhow::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => {
            let mut c = RunConfig::new(Task::Superres, path);
            c.simulate = false;
            c
        }
        None => {
            let mut c = RunConfig::new(Task::Superres, "synthetic:64x64");
            c.simulate = true;
            c
        }
    };
    let mut cfg = cfg;
    cfg.factor = 4;
    cfg.optimizer.iterations = 600;
    cfg.optimizer.log_every = 20;
    cfg.output_dir = "out/examples".into();

    let outcome = execute(&cfg)?;
    write_outputs(&outcome)?;
    let shape = outcome.reconstruction.shape();
    println!("reconstruction {}x{}", shape[2], shape[1]);
    if let Some(p) = outcome.record.entries.last().and_then(|e| e.psnr) {
        println!("PSNR against the original: {p:.2} dB");
    }
    Ok(())
}
