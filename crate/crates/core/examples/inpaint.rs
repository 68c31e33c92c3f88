//! Inpainting with a region mask. The mask here is drawn on the fly (a set
//! of horizontal scratches) and written next to the outputs, the same way
//! a user-supplied mask file would be passed with `--mask`.

use spectralprior::experiment::{execute, write_outputs, RunConfig, Task};
use spectralprior::io::{save_image, ImageBuffer};

fn main() -> anyhow::Result<()> {
    let n = 64;
    std::fs::create_dir_all("out/examples")?;
    let mask_path = std::path::PathBuf::from("out/examples/scratches.png");
    let samples = (0..n * n)
        .map(|i| {
            let (y, x) = (i / n, i % n);
            let scratch = y % 12 == 5 || (y + x / 8) % 23 == 0;
            if scratch { 0 } else { 255 }
        })
        .collect();
    save_image(&ImageBuffer::new(n, n, 1, samples)?, &mask_path)?;

    let mut cfg = RunConfig::new(Task::Inpaint, format!("synthetic:{n}x{n}"));
    cfg.mask = Some(mask_path);
    cfg.optimizer.iterations = 800;
    cfg.optimizer.log_every = 20;
    cfg.output_dir = "out/examples".into();
    let outcome = execute(&cfg)?;
    write_outputs(&outcome)?;
    let last = outcome.record.entries.last().unwrap();
    println!("inpainted: PSNR {:.2} dB, loss {:.3e}", last.psnr.unwrap_or(f64::NAN), last.loss);
    Ok(())
}
