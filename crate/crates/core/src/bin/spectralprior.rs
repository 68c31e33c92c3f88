use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use spectralprior::experiment::{self, ExperimentError, RunConfig, Task};
use spectralprior::io::KeyValues;

#[derive(Parser)]
#[command(name = "spectralprior", allow_negative_numbers = true, version, about = "Untrained-generator image reconstruction with a Fourier-domain loss")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Remove additive Gaussian noise.
    Denoise(RunArgs),
    /// Fill pixels dropped by a random Bernoulli mask.
    Restore(RunArgs),
    /// Fill the region outside a given mask.
    Inpaint(RunArgs),
    /// Upsample by a power-of-two factor.
    Superres(RunArgs),
    /// Re-analyse a record CSV.
    Report {
        #[arg(long)]
        csv: PathBuf,
        /// The run's manifest; adds the noise-stability check.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Bias-variance decomposition over n noise realizations.
    BiasVariance {
        #[arg(long, default_value = "denoise")]
        task: String,
        #[arg(short, long, default_value_t = 8)]
        n: usize,
        /// Worker threads; defaults to SPECTRALPRIOR_THREADS or the core count.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pixel-loss and spectral-loss runs under one schedule.
    Compare {
        #[arg(long, default_value = "denoise")]
        task: String,
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Every flag maps onto the config key of the same name (dashes become
/// underscores) and overrides the config file.
#[derive(Args)]
struct RunArgs {
    /// key = value configuration file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image path or synthetic:HxW.
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    ground_truth: Option<String>,
    /// Treat the input as clean and simulate the measurement.
    #[arg(long)]
    simulate: Option<bool>,
    /// dsp_magnitude, dsp_complex, dsp_log_magnitude or dip_pixel.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    normalization: Option<String>,
    #[arg(long)]
    loss_eps: Option<String>,
    #[arg(long)]
    band_weights: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    channels: Option<String>,
    #[arg(long)]
    skip_channels: Option<String>,
    #[arg(long)]
    kernel_size: Option<String>,
    #[arg(long)]
    input_channels: Option<String>,
    #[arg(long)]
    input_noise_std: Option<String>,
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    #[arg(long)]
    eps_adam: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    log_every: Option<String>,
    /// Noise standard deviation on the 0..255 scale.
    #[arg(long)]
    sigma: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    mask: Option<String>,
    #[arg(long)]
    factor: Option<String>,
    #[arg(long)]
    antialias: Option<bool>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    noise_seed: Option<String>,
    #[arg(long)]
    bands: Option<String>,
    #[arg(long)]
    low_band: Option<String>,
}

impl RunArgs {
    fn config(&self, task: Task) -> anyhow::Result<RunConfig> {
        let mut kv = match &self.config {
            Some(p) => KeyValues::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => KeyValues::new(),
        };
        let flags: [(&str, Option<String>); 30] = [
            ("input", self.input.clone()),
            ("ground_truth", self.ground_truth.clone()),
            ("simulate", self.simulate.map(|b| b.to_string())),
            ("loss", self.loss.clone()),
            ("normalization", self.normalization.clone()),
            ("loss_eps", self.loss_eps.clone()),
            ("band_weights", self.band_weights.clone()),
            ("depth", self.depth.clone()),
            ("channels", self.channels.clone()),
            ("skip_channels", self.skip_channels.clone()),
            ("kernel_size", self.kernel_size.clone()),
            ("input_channels", self.input_channels.clone()),
            ("input_noise_std", self.input_noise_std.clone()),
            ("optimizer", self.optimizer.clone()),
            ("lr", self.lr.clone()),
            ("beta1", self.beta1.clone()),
            ("beta2", self.beta2.clone()),
            ("eps_adam", self.eps_adam.clone()),
            ("iterations", self.iterations.clone()),
            ("log_every", self.log_every.clone()),
            ("sigma", self.sigma.clone()),
            ("p", self.p.clone()),
            ("mask", self.mask.clone()),
            ("factor", self.factor.clone()),
            ("antialias", self.antialias.map(|b| b.to_string())),
            ("output_dir", self.output_dir.clone()),
            ("seed", self.seed.clone()),
            ("noise_seed", self.noise_seed.clone()),
            ("bands", self.bands.clone()),
            ("low_band", self.low_band.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                kv.set(k, v);
            }
        }
        Ok(RunConfig::from_key_values(&kv, Some(task))?)
    }
}

fn print_paths(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn run_task(task: Task, args: &RunArgs) -> anyhow::Result<()> {
    let cfg = args.config(task)?;
    let outcome = experiment::execute(&cfg)?;
    let written = experiment::write_outputs(&outcome)?;
    print_paths(&written.paths);
    if let Some(last) = outcome.record.entries.last() {
        match last.psnr {
            Some(p) => println!("final loss {:.6e}, PSNR {p:.2} dB", last.loss),
            None => println!("final loss {:.6e}", last.loss),
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Denoise(a) => run_task(Task::Denoise, &a),
        Command::Restore(a) => run_task(Task::Restore, &a),
        Command::Inpaint(a) => run_task(Task::Inpaint, &a),
        Command::Superres(a) => run_task(Task::Superres, &a),
        Command::Report { csv, manifest } => {
            let (ordering, stability) = experiment::report(&csv, manifest.as_deref())?;
            print!("{}", ordering.summary());
            if let Some(s) = stability {
                print!("{}", s.summary());
            }
            Ok(())
        }
        Command::BiasVariance { task, n, threads, run } => {
            let cfg = run.config(task.parse()?)?;
            let threads = threads.unwrap_or_else(experiment::thread_count);
            let report = experiment::bias_variance(&cfg, n, threads)?;
            print_paths(&experiment::write_bias_variance(&cfg, &report)?.paths);
            print!("{}", report.summary());
            Ok(())
        }
        Command::Compare { task, run } => {
            let cfg = run.config(task.parse()?)?;
            let cmp = experiment::compare(&cfg)?;
            print_paths(&experiment::write_comparison(&cmp)?.paths);
            print!("{}", cmp.report.summary());
            Ok(())
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<spectralprior::Error>() {
            return e.exit_code() as u8;
        }
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            return e.error().exit_code() as u8;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
