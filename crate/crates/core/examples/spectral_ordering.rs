//! Which frequency bands does the network fit first? Prints the smoothed
//! half-time of every radial band's residual and the fitted decay exponent.

use spectralprior::diagnostics::spectral_ordering_report;
use spectralprior::experiment::{execute, RunConfig, Task};
use spectralprior::LossKind;

fn main() -> anyhow::Result<()> {
    for kind in [LossKind::DipPixel, LossKind::DspMagnitude] {
        let mut cfg = RunConfig::new(Task::Denoise, "synthetic:64x64");
        cfg.loss.kind = kind;
        cfg.optimizer.iterations = 500;
        cfg.optimizer.log_every = 5;
        let outcome = execute(&cfg)?;
        let traj = spectral_ordering_report(&outcome.record)?;
        println!("{}:", kind.as_str());
        for (b, (t, a)) in traj.t_half.iter().zip(&traj.alpha_fit).enumerate() {
            let (lo, hi) = (if b == 0 { 0.0 } else { traj.band_edges[b - 1] }, traj.band_edges[b]);
            println!(
                "  band {b} [{lo:.3}, {hi:.3}]: t_half {:>5}  alpha {}",
                t.map_or("never".into(), |t| t.to_string()),
                a.map_or("n/a".into(), |a| format!("{a:.2}"))
            );
        }
        println!("  ordering over the lowest bands: {}", traj.verdict);
    }
    Ok(())
}
