//! End-to-end runs driven by a flat configuration.
//!
//! A [`RunConfig`] holds every value that affects a run. It converts to and
//! from [`KeyValues`], and the written manifest is exactly that conversion,
//! so a manifest alone reproduces its run.
//!
//! The `input` key is either an image path or `synthetic:HxW`, the built-in
//! test image.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::degrade::{corrupt, DegradationOp, NoiseModel, Observation};
use crate::diagnostics::{
    bias_variance_experiment, early_stopping_report, noise_stability_report, spectral_ordering_report,
    BiasVarianceReport, EarlyStoppingReport, NoiseStabilityReport, NoiseTrial, SpectralTrajectory,
    DEFAULT_K,
};
use crate::error::{Error, Result};
use crate::generator::GeneratorConfig;
use crate::io::{load_image, load_mask, output_path, pad_to_pow2, save_image, synthetic_image, ImageBuffer, KeyValues};
use crate::objective::{LossKind, LossSpec};
use crate::optimize::{fmt_f64, run, OptimizerConfig, RunFailure, RunRecord, RunSpec};
use crate::spectral::{BandMask, DEFAULT_BANDS};
use crate::tensor::Tensor;

/// Environment variable capping the worker pool of fan-out experiments.
pub const THREADS_ENV: &str = "SPECTRALPRIOR_THREADS";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    Denoise,
    Restore,
    Inpaint,
    Superres,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Denoise => "denoise",
            Task::Restore => "restore",
            Task::Inpaint => "inpaint",
            Task::Superres => "superres",
        }
    }

    /// Default noise level on the 0..255 scale.
    pub fn default_sigma(self) -> f64 {
        match self {
            Task::Denoise => 25.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "denoise" => Task::Denoise,
            "restore" => Task::Restore,
            "inpaint" => Task::Inpaint,
            "superres" => Task::Superres,
            _ => return Err(Error::Config(format!("unknown task '{s}'"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    /// Image path, or `synthetic:HxW`.
    pub input: String,
    pub ground_truth: Option<PathBuf>,
    /// Treat `input` as the clean image and synthesize the measurement.
    /// When false, `input` is the measurement itself.
    pub simulate: bool,
    pub loss: LossSpec,
    pub generator: GeneratorConfig,
    pub optimizer: OptimizerConfig,
    /// Noise standard deviation on the 0..255 scale.
    pub sigma: f64,
    /// Keep-probability of the restoration mask.
    pub p: f64,
    pub mask: Option<PathBuf>,
    pub factor: usize,
    pub antialias: bool,
    pub output_dir: PathBuf,
    /// Seeds the generator, the mask and, unless overridden, the noise.
    pub seed: u64,
    pub noise_seed: Option<u64>,
    pub bands: usize,
    pub low_band: usize,
}

impl RunConfig {
    pub fn new(task: Task, input: impl Into<String>) -> Self {
        Self {
            task,
            input: input.into(),
            ground_truth: None,
            simulate: task != Task::Superres,
            loss: LossSpec::default(),
            generator: GeneratorConfig::default(),
            optimizer: OptimizerConfig::default(),
            sigma: task.default_sigma(),
            p: crate::degrade::DEFAULT_KEEP_PROB,
            mask: None,
            factor: 4,
            antialias: true,
            output_dir: PathBuf::from("out"),
            seed: 0,
            noise_seed: None,
            bands: DEFAULT_BANDS,
            low_band: DEFAULT_K,
        }
    }

    pub fn noise_seed(&self) -> u64 {
        self.noise_seed.unwrap_or(self.seed)
    }

    /// `task_loss_sSEED`, the stem of every output file.
    pub fn stem(&self) -> String {
        format!("{}_{}_s{}", self.task, self.loss.kind.as_str(), self.seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return bad(format!("sigma {} must be >= 0", self.sigma));
        }
        match self.task {
            Task::Restore if !(self.p > 0.0 && self.p <= 1.0) => return bad(format!("p {} outside (0, 1]", self.p)),
            Task::Inpaint if self.mask.is_none() => return bad("inpaint needs a mask".into()),
            Task::Superres if self.factor < 2 || !self.factor.is_power_of_two() => {
                return bad(format!("factor {} must be a power of two >= 2", self.factor))
            }
            _ => {}
        }
        if self.low_band > self.bands {
            return bad(format!("low_band {} exceeds bands {}", self.low_band, self.bands));
        }
        self.loss.validate()?;
        self.optimizer.validate()
    }

    pub fn to_key_values(&self) -> KeyValues {
        let list = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut kv = KeyValues::new();
        kv.set("task", self.task);
        kv.set("input", &self.input);
        if let Some(g) = &self.ground_truth {
            kv.set("ground_truth", g.display());
        }
        kv.set("simulate", self.simulate);
        kv.set("loss", self.loss.kind.as_str());
        kv.set("normalization", self.loss.normalization.as_str());
        kv.set("loss_eps", fmt_f64(self.loss.eps));
        if let Some(w) = &self.loss.band_weights {
            kv.set("band_weights", w.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        }
        let g = &self.generator;
        kv.set("depth", g.depth);
        kv.set("channels", list(&g.channels));
        kv.set("skip_channels", list(&g.skip_channels));
        kv.set("kernel_size", g.kernel_size);
        kv.set("input_channels", g.input_channels);
        kv.set("input_noise_std", fmt_f64(g.input_noise_std));
        let o = &self.optimizer;
        kv.set("optimizer", o.kind.as_str());
        kv.set("lr", fmt_f64(o.lr));
        kv.set("beta1", fmt_f64(o.beta1));
        kv.set("beta2", fmt_f64(o.beta2));
        kv.set("eps_adam", fmt_f64(o.eps_adam));
        kv.set("iterations", o.iterations);
        kv.set("log_every", o.log_every);
        kv.set("sigma", fmt_f64(self.sigma));
        kv.set("p", fmt_f64(self.p));
        if let Some(m) = &self.mask {
            kv.set("mask", m.display());
        }
        kv.set("factor", self.factor);
        kv.set("antialias", self.antialias);
        kv.set("output_dir", self.output_dir.display());
        kv.set("seed", self.seed);
        if let Some(s) = self.noise_seed {
            kv.set("noise_seed", s);
        }
        kv.set("bands", self.bands);
        kv.set("low_band", self.low_band);
        kv
    }

    /// Builds a config from `kv`. `task` may come from `kv` or `task`;
    /// unknown keys are rejected so typos do not pass silently.
    pub fn from_key_values(kv: &KeyValues, task: Option<Task>) -> Result<Self> {
        const KNOWN: &[&str] = &[
            "task", "input", "ground_truth", "simulate", "loss", "normalization", "loss_eps", "band_weights",
            "depth", "channels", "skip_channels", "kernel_size", "input_channels", "input_noise_std",
            "optimizer", "lr", "beta1", "beta2", "eps_adam", "iterations", "log_every", "sigma", "p", "mask",
            "factor", "antialias", "output_dir", "seed", "noise_seed", "bands", "low_band",
        ];
        if let Some(k) = kv.keys().find(|k| !KNOWN.contains(k)) {
            return Err(Error::Config(format!("unknown config key '{k}'")));
        }
        let task = match (kv.parse_key::<Task>("task")?, task) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config(format!("config is for task {a}, invoked as {b}")))
            }
            (a, b) => a.or(b).ok_or_else(|| Error::Config("no task given".into()))?,
        };
        let input = kv
            .get("input")
            .ok_or_else(|| Error::Config("no input given".into()))?;
        let mut c = RunConfig::new(task, input);
        let list = |key: &str| -> Result<Option<Vec<usize>>> {
            kv.get(key)
                .map(|v| {
                    v.split(',')
                        .map(|s| s.trim().parse().map_err(|e| Error::Config(format!("{key} = {v:?}: {e}"))))
                        .collect()
                })
                .transpose()
        };
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.parse_key($key)? {
                    $field = v;
                }
            };
        }
        c.ground_truth = kv.get("ground_truth").map(PathBuf::from);
        set!(c.simulate, "simulate");
        set!(c.loss.kind, "loss");
        set!(c.loss.normalization, "normalization");
        set!(c.loss.eps, "loss_eps");
        if let Some(w) = kv.get("band_weights") {
            c.loss.band_weights = Some(
                w.split(',')
                    .map(|s| s.trim().parse().map_err(|e| Error::Config(format!("band_weights: {e}"))))
                    .collect::<Result<_>>()?,
            );
        }
        set!(c.generator.depth, "depth");
        if let Some(v) = list("channels")? {
            c.generator.channels = v;
        }
        if let Some(v) = list("skip_channels")? {
            c.generator.skip_channels = v;
        }
        set!(c.generator.kernel_size, "kernel_size");
        set!(c.generator.input_channels, "input_channels");
        set!(c.generator.input_noise_std, "input_noise_std");
        set!(c.optimizer.kind, "optimizer");
        set!(c.optimizer.lr, "lr");
        set!(c.optimizer.beta1, "beta1");
        set!(c.optimizer.beta2, "beta2");
        set!(c.optimizer.eps_adam, "eps_adam");
        set!(c.optimizer.iterations, "iterations");
        set!(c.optimizer.log_every, "log_every");
        set!(c.sigma, "sigma");
        set!(c.p, "p");
        c.mask = kv.get("mask").map(PathBuf::from);
        set!(c.factor, "factor");
        set!(c.antialias, "antialias");
        if let Some(d) = kv.get("output_dir") {
            c.output_dir = PathBuf::from(d);
        }
        set!(c.seed, "seed");
        c.noise_seed = kv.parse_key("noise_seed")?;
        set!(c.bands, "bands");
        set!(c.low_band, "low_band");
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path, task: Option<Task>) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?, task)
    }

    pub fn run_spec(&self, channels: usize) -> RunSpec {
        let mut generator = self.generator.clone();
        generator.output_channels = channels;
        let mut optimizer = self.optimizer.clone();
        optimizer.seed = self.seed;
        let mut spec = RunSpec::new(generator, self.loss.clone(), optimizer);
        spec.bands = self.bands;
        spec
    }
}

fn load_input(spec: &str) -> Result<Tensor> {
    if let Some(dims) = spec.strip_prefix("synthetic:") {
        let (h, w) = dims
            .split_once('x')
            .and_then(|(h, w)| Some((h.parse().ok()?, w.parse().ok()?)))
            .filter(|(h, w): &(usize, usize)| *h > 0 && *w > 0)
            .ok_or_else(|| Error::Config(format!("bad synthetic input '{spec}', expected synthetic:HxW")))?;
        return Ok(synthetic_image(h, w));
    }
    Ok(load_image(Path::new(spec))?.to_tensor())
}

/// A measurement ready to fit, with the grid bookkeeping needed to report
/// results at the input's original size.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub obs: Observation,
    pub spec: RunSpec,
    /// Clean image on the padded reconstruction grid, when known.
    pub clean: Option<Tensor>,
    pub sigma: f64,
}

/// Loads the input, pads to power-of-two extents and builds `(y, A)`.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let min_grid = 1usize << cfg.generator.depth;
    let sigma = cfg.sigma / 255.0;
    let input = load_input(&cfg.input)?;
    let (c, h, w) = input.dims3()?;
    let spec = cfg.run_spec(c);

    let load_gt = |expect: (usize, usize)| -> Result<Option<Tensor>> {
        let Some(p) = &cfg.ground_truth else { return Ok(None) };
        let gt = load_image(p)?.to_tensor();
        let s = gt.dims3()?;
        if s != (c, expect.0, expect.1) {
            return Err(Error::Config(format!(
                "ground truth is {}x{}x{}, expected {c}x{}x{}",
                s.0, s.1, s.2, expect.0, expect.1
            )));
        }
        Ok(Some(gt))
    };

    if cfg.task == Task::Superres && !cfg.simulate {
        // input is the low-resolution measurement
        let f = cfg.factor;
        let lr = pad_to_pow2(&input, min_grid.div_ceil(f))?;
        let (_, lh, lw) = lr.tensor.dims3()?;
        let op = DegradationOp::downsample([c, lh * f, lw * f], f, cfg.antialias)?;
        let op = if lr.is_padded() { op.with_support(lr.support.clone())? } else { op };
        let clean = load_gt((h * f, w * f))?
            .map(|gt| pad_to_pow2(&gt, min_grid).map(|p| p.tensor))
            .transpose()?;
        let clean = match clean {
            Some(t) if t.shape() != op.in_shape() => {
                return Err(Error::Config("ground truth does not match the upsampled grid".into()))
            }
            other => other,
        };
        let obs = Observation::new(lr.tensor, op, clean.clone())?.with_valid_region(h * f, w * f)?;
        return Ok(Prepared { obs, spec, clean, sigma });
    }

    let padded = pad_to_pow2(&input, min_grid)?;
    let (pc, ph, pw) = padded.tensor.dims3()?;
    let shape = [pc, ph, pw];
    let mut op = match cfg.task {
        Task::Denoise => DegradationOp::identity(shape)?,
        Task::Restore => DegradationOp::bernoulli_mask(shape, cfg.p, cfg.seed)?,
        Task::Inpaint => {
            let mask = load_mask(cfg.mask.as_deref().expect("validated"))?;
            let (_, mh, mw) = mask.dims3()?;
            if (mh, mw) != (h, w) {
                return Err(Error::Config(format!("mask is {mh}x{mw}, image is {h}x{w}")));
            }
            let mask = pad_to_pow2(&mask, min_grid)?.tensor;
            DegradationOp::region_mask(shape, &mask)?
        }
        Task::Superres => DegradationOp::downsample(shape, cfg.factor, cfg.antialias)?,
    };
    if padded.is_padded() {
        let support = if cfg.task == Task::Superres {
            // measurement cells lying entirely inside the image
            let f = cfg.factor;
            let (oh, ow) = (shape[1] / f, shape[2] / f);
            (0..oh * ow)
                .map(|i| if (i / ow + 1) * f <= h && (i % ow + 1) * f <= w { 1.0 } else { 0.0 })
                .collect()
        } else {
            padded.support.clone()
        };
        op = op.with_support(support)?;
    }
    let obs = if cfg.simulate {
        let clean = match load_gt((h, w))? {
            Some(gt) => pad_to_pow2(&gt, min_grid)?.tensor,
            None => padded.tensor.clone(),
        };
        let noise = if sigma > 0.0 {
            NoiseModel::gaussian(sigma, cfg.noise_seed())?
        } else {
            NoiseModel::none()
        };
        corrupt(&clean, &op, &noise)?
    } else {
        if cfg.task == Task::Superres {
            unreachable!("handled above");
        }
        let y = op.apply(&padded.tensor)?;
        let gt = load_gt((h, w))?
            .map(|g| pad_to_pow2(&g, min_grid).map(|p| p.tensor))
            .transpose()?;
        Observation::new(y, op, gt)?
    };
    let clean = obs.ground_truth.clone();
    let obs = obs.with_valid_region(h, w)?;
    Ok(Prepared { obs, spec, clean, sigma })
}

/// Result of one configured run.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub config: RunConfig,
    pub record: RunRecord,
    pub prepared: Prepared,
    /// Final reconstruction cropped to the input's extent.
    pub reconstruction: Tensor,
}

/// Why a configured run stopped.
#[derive(Debug)]
pub enum ExperimentError {
    Setup(Error),
    Run(Box<RunFailure>),
}

impl ExperimentError {
    pub fn error(&self) -> &Error {
        match self {
            ExperimentError::Setup(e) => e,
            ExperimentError::Run(f) => &f.error,
        }
    }
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentError::Setup(e) => e.fmt(f),
            ExperimentError::Run(r) => r.fmt(f),
        }
    }
}

impl std::error::Error for ExperimentError {}

impl From<Error> for ExperimentError {
    fn from(e: Error) -> Self {
        ExperimentError::Setup(e)
    }
}

pub fn execute(cfg: &RunConfig) -> std::result::Result<Outcome, ExperimentError> {
    let prepared = prepare(cfg)?;
    let record = run(&prepared.obs, &prepared.spec).map_err(ExperimentError::Run)?;
    let full = record.reconstruction.as_ref().expect("completed run keeps its output");
    let reconstruction = prepared.obs.crop_valid(full)?;
    Ok(Outcome {
        config: cfg.clone(),
        record,
        prepared,
        reconstruction,
    })
}

/// Files written for one run.
#[derive(Clone, Debug, Default)]
pub struct Written {
    pub paths: Vec<PathBuf>,
}

impl Written {
    fn text(&mut self, dir: &Path, stem: &str, ext: &str, body: &str) -> Result<()> {
        let p = output_path(dir, stem, ext)?;
        std::fs::write(&p, body)?;
        self.paths.push(p);
        Ok(())
    }
}

/// Reports that follow from a finished run.
#[derive(Clone, Debug)]
pub struct RunReports {
    pub ordering: Option<SpectralTrajectory>,
    pub stability: Option<NoiseStabilityReport>,
}

pub fn run_reports(outcome: &Outcome) -> RunReports {
    let obs = &outcome.prepared.obs;
    let ordering = spectral_ordering_report(&outcome.record).ok();
    let stability = BandMask::radial(obs.op.out_shape()[1], obs.op.out_shape()[2], outcome.config.bands)
        .and_then(|b| noise_stability_report(&outcome.record, obs, &b, outcome.config.low_band))
        .ok();
    RunReports { ordering, stability }
}

/// Writes reconstruction, measurement, record CSV, manifest and reports
/// into the configured output directory.
pub fn write_outputs(outcome: &Outcome) -> Result<Written> {
    let cfg = &outcome.config;
    let dir = &cfg.output_dir;
    let stem = cfg.stem();
    let mut w = Written::default();
    let recon = output_path(dir, &stem, "png")?;
    save_image(&ImageBuffer::from_tensor(&outcome.reconstruction)?, &recon)?;
    w.paths.push(recon);
    let meas = output_path(dir, &format!("{stem}_measurement"), "png")?;
    save_image(&ImageBuffer::from_tensor(&outcome.prepared.obs.y)?, &meas)?;
    w.paths.push(meas);
    let csv = output_path(dir, &stem, "csv")?;
    outcome.record.write_csv(&csv)?;
    w.paths.push(csv);
    let manifest = output_path(dir, &stem, "manifest")?;
    cfg.to_key_values().write(&manifest)?;
    w.paths.push(manifest);
    let reports = run_reports(outcome);
    if let Some(r) = &reports.ordering {
        w.text(dir, &format!("{stem}_ordering"), "csv", &r.to_csv())?;
        w.text(dir, &format!("{stem}_ordering"), "txt", &r.summary())?;
    }
    if let Some(r) = &reports.stability {
        w.text(dir, &format!("{stem}_stability"), "csv", &r.to_csv())?;
        w.text(dir, &format!("{stem}_stability"), "txt", &r.summary())?;
    }
    Ok(w)
}

/// DIP and DSP runs under the same schedule.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub dip: Outcome,
    pub dsp: Outcome,
    pub report: EarlyStoppingReport,
}

/// Runs the pixel loss and `cfg`'s spectral loss (magnitude when `cfg`
/// names the pixel loss) back to back.
pub fn compare(cfg: &RunConfig) -> std::result::Result<Comparison, ExperimentError> {
    let mut dip_cfg = cfg.clone();
    dip_cfg.loss = LossSpec {
        kind: LossKind::DipPixel,
        ..cfg.loss.clone()
    };
    let mut dsp_cfg = cfg.clone();
    if cfg.loss.kind == LossKind::DipPixel {
        dsp_cfg.loss.kind = LossKind::DspMagnitude;
    }
    let dip = execute(&dip_cfg)?;
    let dsp = execute(&dsp_cfg)?;
    let report = early_stopping_report(&dip.record, &dsp.record)?;
    Ok(Comparison { dip, dsp, report })
}

pub fn write_comparison(c: &Comparison) -> Result<Written> {
    let mut w = write_outputs(&c.dip)?;
    w.paths.extend(write_outputs(&c.dsp)?.paths);
    let cfg = &c.dsp.config;
    let stem = format!("{}_compare_s{}", cfg.task, cfg.seed);
    w.text(&cfg.output_dir, &stem, "csv", &c.report.to_csv())?;
    w.text(&cfg.output_dir, &stem, "txt", &c.report.summary())?;
    Ok(w)
}

/// Worker count from the environment, else the number of cores.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `n` runs over noise seeds `noise_seed .. noise_seed + n` with the
/// generator seed held fixed.
pub fn bias_variance(cfg: &RunConfig, n: usize, threads: usize) -> Result<BiasVarianceReport> {
    if !cfg.simulate {
        return Err(Error::Config("bias-variance needs simulate = true".into()));
    }
    let prepared = prepare(cfg)?;
    let clean = prepared
        .clean
        .clone()
        .ok_or_else(|| Error::MissingGroundTruth("bias-variance needs the clean image".into()))?;
    let trial = NoiseTrial {
        clean,
        op: prepared.obs.op.clone(),
        sigma: prepared.sigma,
        spec: prepared.spec.clone(),
    };
    let seeds: Vec<u64> = (0..n as u64).map(|i| cfg.noise_seed() + i).collect();
    bias_variance_experiment(&trial, &seeds, threads)
        .map(|(r, _)| r)
        .map_err(|f| f.error)
}

pub fn write_bias_variance(cfg: &RunConfig, report: &BiasVarianceReport) -> Result<Written> {
    let stem = format!("{}_bias_variance_s{}", cfg.stem(), report.samples);
    let mut w = Written::default();
    w.text(&cfg.output_dir, &stem, "csv", &report.to_csv())?;
    w.text(&cfg.output_dir, &stem, "txt", &report.summary())?;
    Ok(w)
}

/// Re-analyses a written record. With its manifest, the noise-stability
/// check is included as well.
pub fn report(csv: &Path, manifest: Option<&Path>) -> Result<(SpectralTrajectory, Option<NoiseStabilityReport>)> {
    let record = RunRecord::read_csv(csv)?;
    let ordering = spectral_ordering_report(&record)?;
    let stability = match manifest {
        Some(m) => {
            let cfg = RunConfig::load(m, None)?;
            let prepared = prepare(&cfg)?;
            let [_, h, w] = prepared.obs.op.out_shape();
            Some(noise_stability_report(
                &record,
                &prepared.obs,
                &BandMask::radial(h, w, cfg.bands)?,
                cfg.low_band,
            )?)
        }
        None => None,
    };
    Ok((ordering, stability))
}
