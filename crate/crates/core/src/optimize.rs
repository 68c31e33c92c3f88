//! First-order optimizers and the reconstruction loop.
//!
//! The loop never stops early: it runs the configured number of iterations
//! and leaves trajectory analysis to [`crate::diagnostics`].

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use crate::autodiff::Tape;
use crate::degrade::Observation;
use crate::diagnostics::psnr;
use crate::error::{Error, Result};
use crate::generator::{GeneratorConfig, GeneratorState};
use crate::objective::{per_band_residual, LossSpec, PreparedLoss};
use crate::spectral::{dft2, BandMask, Normalization, DEFAULT_BANDS};
use crate::tensor::Tensor;

/// Abort when the loss exceeds this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::Config(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub iterations: usize,
    pub log_every: usize,
    /// Seeds the generator's parameters and input.
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            iterations: 3000,
            log_every: 50,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    /// `lr = 0` is accepted; it freezes the parameters.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(format!("optimizer: {m}")));
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return fail(format!("lr {} must be finite and >= 0", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return fail(format!("{name} {b} outside [0, 1)"));
            }
        }
        if !(self.eps_adam > 0.0) {
            return fail(format!("eps_adam {} must be > 0", self.eps_adam));
        }
        if self.iterations == 0 {
            return fail("iterations must be at least 1".into());
        }
        if self.log_every == 0 {
            return fail("log_every must be at least 1".into());
        }
        Ok(())
    }
}

/// Optimizer with its moment buffers. Buffers are created lazily at the
/// first update, sized to the parameters.
#[derive(Clone, Debug)]
pub struct Optimizer {
    config: OptimizerConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update to `params` given matching `grads`.
    pub fn update<'a>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut Tensor>,
        grads: &[Tensor],
    ) -> Result<()> {
        let params: Vec<&mut Tensor> = params.into_iter().collect();
        if params.len() != grads.len() {
            return Err(Error::shape(
                "Optimizer::update",
                format!("{} parameters, {} gradients", params.len(), grads.len()),
            ));
        }
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c = &self.config;
        match c.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.into_iter().zip(grads) {
                    p.check_same_shape(g, "Optimizer::update")?;
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= c.lr * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - c.beta1.powi(self.t as i32);
                let bc2 = 1.0 - c.beta2.powi(self.t as i32);
                for (i, (p, g)) in params.into_iter().zip(grads).enumerate() {
                    p.check_same_shape(g, "Optimizer::update")?;
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for (j, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                        m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gv;
                        v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gv * gv;
                        let mhat = m[j] / bc1;
                        let vhat = v[j] / bc2;
                        *pv -= c.lr * mhat / (vhat.sqrt() + c.eps_adam);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Loss, gradients and prediction at the current parameters.
pub struct Evaluation {
    pub loss: f64,
    pub prediction: Tensor,
    pub grads: Vec<Tensor>,
}

/// Forward and backward pass of `state` under `loss`.
pub fn evaluate(state: &GeneratorState, loss: &PreparedLoss) -> Result<Evaluation> {
    let mut tape = Tape::new();
    let (out, vars) = state.forward(&mut tape)?;
    let l = loss.record(&mut tape, out)?;
    let value = tape.value(l).item()?;
    if !value.is_finite() {
        return Err(Error::NonFinite {
            context: "loss".into(),
        });
    }
    let g = tape.backward(l)?;
    let grads = vars.iter().map(|v| g.get(*v)).collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        loss: value,
        prediction: tape.value(out).clone(),
        grads,
    })
}

/// One forward, backward and parameter update. Returns the loss at the
/// parameters before the update.
pub fn step(state: &mut GeneratorState, loss: &PreparedLoss, opt: &mut Optimizer) -> Result<f64> {
    let e = evaluate(state, loss)?;
    opt.update(state.params_mut(), &e.grads)?;
    Ok(e.loss)
}

/// Everything a reconstruction run needs besides the observation.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunSpec {
    pub generator: GeneratorConfig,
    pub loss: LossSpec,
    pub optimizer: OptimizerConfig,
    /// Number of radial bands for the logged residuals.
    pub bands: usize,
    /// Write wall-clock milliseconds into the record. Off by default so
    /// that records of identical configurations are bit-identical.
    pub record_timing: bool,
}

impl RunSpec {
    pub fn new(generator: GeneratorConfig, loss: LossSpec, optimizer: OptimizerConfig) -> Self {
        Self {
            generator,
            loss,
            optimizer,
            bands: DEFAULT_BANDS,
            record_timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.loss.validate()?;
        self.optimizer.validate()?;
        if self.bands == 0 {
            return Err(Error::Config("bands must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub iter: usize,
    pub loss: f64,
    /// PSNR of the valid region against the ground truth (peak 1).
    pub psnr: Option<f64>,
    /// Band-wise unitary residual `|F(A f) - F(y)|^2`.
    pub bands: Vec<f64>,
    /// `|F(A f) - F(A x)|^2` against the clean signal, when known.
    pub clean_error: Option<f64>,
    pub ms: f64,
}

/// Trajectory of one run plus its final reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub entries: Vec<LogEntry>,
    pub band_edges: Vec<f64>,
    pub reconstruction: Option<Tensor>,
}

impl RunRecord {
    pub fn new(band_edges: Vec<f64>) -> Self {
        Self {
            entries: Vec::new(),
            band_edges,
            reconstruction: None,
        }
    }

    pub fn band_count(&self) -> usize {
        self.band_edges.len()
    }

    pub fn iterations(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.iter).collect()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.loss).collect()
    }

    pub fn psnrs(&self) -> Option<Vec<f64>> {
        self.entries.iter().map(|e| e.psnr).collect()
    }

    pub fn band_series(&self, b: usize) -> Vec<f64> {
        self.entries.iter().map(|e| e.bands[b]).collect()
    }

    /// Appends an entry; iterations must increase and the band count stay fixed.
    pub fn push(&mut self, e: LogEntry) -> Result<()> {
        if let Some(last) = self.entries.last() {
            if e.iter <= last.iter {
                return Err(Error::invalid("RunRecord", "iterations must increase"));
            }
        }
        if e.bands.len() != self.band_count() {
            return Err(Error::shape("RunRecord", "band vector length changed"));
        }
        self.entries.push(e);
        Ok(())
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec!["iter".to_string(), "loss".into(), "psnr".into(), "clean_error".into()];
        cols.extend((0..self.band_count()).map(|b| format!("band_{b}")));
        cols.push("ms".into());
        cols.join(",")
    }

    /// CSV with columns `iter,loss,psnr,clean_error,band_0..band_{B-1},ms`.
    /// Floats are written in shortest round-trip form, missing values as
    /// `nan`.
    pub fn to_csv(&self) -> String {
        let mut s = self.csv_header();
        s.push('\n');
        for e in &self.entries {
            let mut row = vec![e.iter.to_string(), fmt_f64(e.loss)];
            row.push(e.psnr.map_or_else(|| "nan".into(), fmt_f64));
            row.push(e.clean_error.map_or_else(|| "nan".into(), fmt_f64));
            row.extend(e.bands.iter().map(|v| fmt_f64(*v)));
            row.push(fmt_f64(e.ms));
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| crate::io::with_path(e, path))?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    /// Reads a record written by [`RunRecord::write_csv`]. Band edges are
    /// reconstructed as equal-width annuli.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = BufReader::new(std::fs::File::open(path).map_err(|e| crate::io::with_path(e, path))?);
        let mut lines = f.lines();
        let bad = |offset: usize, detail: String| Error::Format {
            path: path.to_path_buf(),
            offset,
            detail,
        };
        let header = lines.next().ok_or_else(|| bad(0, "empty file".into()))??;
        let cols: Vec<&str> = header.split(',').collect();
        let n_bands = cols.iter().filter(|c| c.starts_with("band_")).count();
        if cols.len() != n_bands + 5 || cols[..4] != ["iter", "loss", "psnr", "clean_error"] || cols.last() != Some(&"ms") {
            return Err(bad(0, format!("unexpected header '{header}'")));
        }
        let mut offset = header.len() + 1;
        let edges = BandMask::radial(2, 2, n_bands.max(1))?.edges().to_vec();
        let mut rec = RunRecord::new(edges);
        for line in lines {
            let line = line?;
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != cols.len() {
                return Err(bad(offset, format!("expected {} fields", cols.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(offset, format!("bad number '{s}'")));
            let psnr = num(f[2])?;
            let clean_error = num(f[3])?;
            rec.push(LogEntry {
                iter: f[0].parse().map_err(|_| bad(offset, format!("bad iteration '{}'", f[0])))?,
                loss: num(f[1])?,
                psnr: (!psnr.is_nan()).then_some(psnr),
                bands: f[4..4 + n_bands].iter().map(|s| num(s)).collect::<Result<_>>()?,
                clean_error: (!clean_error.is_nan()).then_some(clean_error),
                ms: num(f[4 + n_bands])?,
            })?;
            offset += line.len() + 1;
        }
        Ok(rec)
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

/// A failed run and whatever it logged before failing.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: RunRecord,
}

impl fmt::Display for RunFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} log entries)", self.error, self.partial.entries.len())
    }
}

impl std::error::Error for RunFailure {}

struct Logger<'a> {
    obs: &'a Observation,
    bands: BandMask,
    clean: Option<crate::spectral::Spectrum>,
    gt: Option<Tensor>,
    start: Instant,
    timing: bool,
}

impl<'a> Logger<'a> {
    fn new(obs: &'a Observation, n_bands: usize, timing: bool) -> Result<Self> {
        let [_, h, w] = obs.op.out_shape();
        let clean = match &obs.ground_truth {
            Some(gt) => Some(dft2(&obs.op.apply(gt)?, Normalization::Unitary)?),
            None => None,
        };
        let gt = match &obs.ground_truth {
            Some(gt) => Some(obs.crop_valid(gt)?),
            None => None,
        };
        Ok(Self {
            obs,
            bands: BandMask::radial(h, w, n_bands)?,
            clean,
            gt,
            start: Instant::now(),
            timing,
        })
    }

    fn entry(&self, iter: usize, loss: f64, pred: &Tensor) -> Result<LogEntry> {
        let psnr = match &self.gt {
            Some(gt) => Some(psnr(&self.obs.crop_valid(pred)?, gt, 1.0)?),
            None => None,
        };
        let clean_error = match &self.clean {
            Some(c) => Some(dft2(&self.obs.op.apply(pred)?, Normalization::Unitary)?.sub(c)?.energy()),
            None => None,
        };
        Ok(LogEntry {
            iter,
            loss,
            psnr,
            bands: per_band_residual(pred, self.obs, &self.bands)?,
            clean_error,
            ms: if self.timing {
                self.start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        })
    }
}

/// Runs `spec.optimizer.iterations` updates from a fresh generator.
///
/// Iteration 0 (before any update), every multiple of `log_every`, and the
/// last iteration are logged.
pub fn run(obs: &Observation, spec: &RunSpec) -> std::result::Result<RunRecord, Box<RunFailure>> {
    let fail = |error: Error, partial: RunRecord| Box::new(RunFailure { error, partial });
    let empty = RunRecord::new(Vec::new());
    if let Err(e) = spec.validate() {
        return Err(fail(e, empty));
    }
    let setup = || -> Result<_> {
        let [c, h, w] = obs.op.in_shape();
        if c != spec.generator.output_channels {
            return Err(Error::Config(format!(
                "generator produces {} channels, observation needs {c}",
                spec.generator.output_channels
            )));
        }
        let state = GeneratorState::init(spec.generator.clone(), spec.optimizer.seed, h, w)?;
        let loss = PreparedLoss::new(&spec.loss, obs)?;
        let logger = Logger::new(obs, spec.bands, spec.record_timing)?;
        Ok((state, loss, logger))
    };
    let (mut state, loss, logger) = setup().map_err(|e| fail(e, RunRecord::new(Vec::new())))?;
    run_from(&mut state, &loss, &logger, &spec.optimizer)
}

fn run_from(
    state: &mut GeneratorState,
    loss: &PreparedLoss,
    logger: &Logger<'_>,
    cfg: &OptimizerConfig,
) -> std::result::Result<RunRecord, Box<RunFailure>> {
    let mut record = RunRecord::new(logger.bands.edges().to_vec());
    let mut opt = Optimizer::new(cfg.clone());
    let mut initial = None;
    for t in 0..=cfg.iterations {
        let outcome = (|| -> Result<Option<Evaluation>> {
            let e = evaluate(state, loss)?;
            let first = *initial.get_or_insert(e.loss);
            if e.loss > DIVERGENCE_FACTOR * first {
                return Err(Error::Divergence {
                    iteration: t,
                    reason: format!("loss {} exceeds {DIVERGENCE_FACTOR} x initial {first}", e.loss),
                });
            }
            if t == 0 || t % cfg.log_every == 0 || t == cfg.iterations {
                record.push(logger.entry(t, e.loss, &e.prediction)?)?;
            }
            if t == cfg.iterations {
                record.reconstruction = Some(e.prediction);
                return Ok(None);
            }
            Ok(Some(e))
        })();
        match outcome {
            Ok(Some(e)) => {
                if let Err(err) = opt.update(state.params_mut(), &e.grads) {
                    return Err(Box::new(RunFailure { error: err, partial: record }));
                }
            }
            Ok(None) => {}
            Err(error) => return Err(Box::new(RunFailure { error, partial: record })),
        }
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_grad(x: f64) -> Tensor {
        Tensor::scalar(2.0 * (x - 3.0))
    }

    #[test]
    fn sgd_quadratic_first_step() {
        let cfg = OptimizerConfig {
            kind: OptimizerKind::Sgd,
            lr: 0.1,
            ..Default::default()
        };
        let mut opt = Optimizer::new(cfg);
        let mut x = Tensor::scalar(0.0);
        let g = quad_grad(0.0);
        opt.update([&mut x], &[g]).unwrap();
        assert!((x.item().unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_freezes() {
        for kind in [OptimizerKind::Adam, OptimizerKind::Sgd] {
            let mut opt = Optimizer::new(OptimizerConfig {
                kind,
                lr: 0.0,
                ..Default::default()
            });
            let mut x = Tensor::scalar(1.25);
            opt.update([&mut x], &[quad_grad(1.25)]).unwrap();
            assert_eq!(x.item().unwrap(), 1.25);
        }
    }

    #[test]
    fn config_validation() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            OptimizerConfig { lr: -1.0, ..ok.clone() },
            OptimizerConfig { beta1: 1.0, ..ok.clone() },
            OptimizerConfig { iterations: 0, ..ok.clone() },
            OptimizerConfig { log_every: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn csv_round_trip() {
        let mut r = RunRecord::new(vec![0.25, 0.5]);
        for (i, t) in [0usize, 5, 10].iter().enumerate() {
            r.push(LogEntry {
                iter: *t,
                loss: 1.0 / (i as f64 + 1.0),
                psnr: if i == 1 { None } else { Some(20.0 + i as f64) },
                bands: vec![0.1 * i as f64, 1e-17],
                clean_error: (i == 2).then_some(0.5),
                ms: 0.0,
            })
            .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        r.write_csv(&p).unwrap();
        let back = RunRecord::read_csv(&p).unwrap();
        assert_eq!(back.to_csv(), r.to_csv());
        assert!(r.to_csv().starts_with("iter,loss,psnr,clean_error,band_0,band_1,ms\n"));
    }

    #[test]
    fn record_rejects_non_increasing() {
        let mut r = RunRecord::new(vec![1.0]);
        let e = LogEntry {
            iter: 3,
            loss: 0.0,
            psnr: None,
            bands: vec![0.0],
            clean_error: None,
            ms: 0.0,
        };
        r.push(e.clone()).unwrap();
        assert!(r.push(e.clone()).is_err());
        assert!(r.push(LogEntry { iter: 4, bands: vec![], ..e }).is_err());
    }
}
