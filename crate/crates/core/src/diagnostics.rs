//! Post-hoc analysis of reconstruction runs.
//!
//! Trajectory checks work on trailing moving averages over a fixed window
//! of iterations (50 by default) and report three-valued verdicts, so a
//! degenerate run reads as `INCONCLUSIVE` rather than as a confirmation.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::degrade::{corrupt, DegradationOp, NoiseModel, Observation};
use crate::error::{Error, Result};
use crate::objective::dsp_complex_loss;
use crate::optimize::{fmt_f64, run, RunRecord, RunSpec};
use crate::spectral::{band_energy, dft2, BandMask, Normalization, DEFAULT_LOW_BAND};
use crate::tensor::Tensor;

pub const SMOOTHING_WINDOW: usize = 50;
/// Number of lowest bands whose convergence order is checked.
pub const ORDERED_BANDS: usize = 4;
/// Minimum number of log entries for trajectory analysis.
pub const MIN_LOG_ENTRIES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

/// `10 log10(peak^2 / MSE)`; `+inf` for identical inputs.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    a.check_same_shape(b, "psnr")?;
    if !(peak > 0.0) {
        return Err(Error::invalid("psnr", format!("peak {peak} must be > 0")));
    }
    let mse = a.sub(b)?.norm_sq() / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Median; NaN for an empty slice. NaNs sort last.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Trailing mean over the samples whose iteration lies in `(t - window, t]`.
pub fn moving_average(iters: &[usize], values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut lo = 0;
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        while iters[i] - iters[lo] >= window.max(1) {
            sum -= values[lo];
            lo += 1;
        }
        out.push(sum / (i - lo + 1) as f64);
    }
    out
}

/// First iteration whose value is at most half the first value.
fn half_time(iters: &[usize], values: &[f64]) -> Option<usize> {
    let target = 0.5 * values.first()?;
    if !(target > 0.0) {
        return None;
    }
    iters.iter().zip(values).find(|(_, v)| **v <= target).map(|(t, _)| *t)
}

/// Least-squares slope of `ln v` against `ln t` for `t >= t_max / 10`.
/// Returns `alpha = -slope`, or `None` with fewer than two usable points.
pub fn fit_decay_exponent(iters: &[usize], values: &[f64]) -> Option<f64> {
    let t_max = *iters.last()? as f64;
    let pts: Vec<(f64, f64)> = iters
        .iter()
        .zip(values)
        .filter(|(t, v)| **t > 0 && (**t as f64) >= t_max / 10.0 && **v > 0.0)
        .map(|(t, v)| ((*t as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(-sxy / sxx)
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

fn check_density(record: &RunRecord) -> Result<()> {
    if record.entries.len() < MIN_LOG_ENTRIES {
        return Err(Error::InsufficientData(format!(
            "{} log entries, need at least {MIN_LOG_ENTRIES}; lower log_every",
            record.entries.len()
        )));
    }
    Ok(())
}

/// Band-wise convergence of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralTrajectory {
    pub iters: Vec<usize>,
    /// Smoothed residual series per band.
    pub residuals: Vec<Vec<f64>>,
    pub band_edges: Vec<f64>,
    /// First iteration at which the smoothed residual halves; `None` if never.
    pub t_half: Vec<Option<usize>>,
    pub alpha_fit: Vec<Option<f64>>,
    pub verdict: Verdict,
}

/// Spectral-ordering verdict over the lowest `ORDERED_BANDS` bands.
///
/// A band that never halves counts as later than any band that does.
/// `PASS` needs at least two of the checked bands to halve and the half
/// times to be non-decreasing with band index; fewer than two halvings is
/// `INCONCLUSIVE`.
pub fn spectral_ordering_report(record: &RunRecord) -> Result<SpectralTrajectory> {
    spectral_ordering_with(record, SMOOTHING_WINDOW, ORDERED_BANDS)
}

pub fn spectral_ordering_with(record: &RunRecord, window: usize, checked: usize) -> Result<SpectralTrajectory> {
    check_density(record)?;
    let iters = record.iterations();
    let residuals: Vec<Vec<f64>> = (0..record.band_count())
        .map(|b| moving_average(&iters, &record.band_series(b), window))
        .collect();
    let t_half: Vec<Option<usize>> = residuals.iter().map(|r| half_time(&iters, r)).collect();
    let alpha_fit = residuals.iter().map(|r| fit_decay_exponent(&iters, r)).collect();
    let low = &t_half[..checked.min(t_half.len())];
    let reached = low.iter().filter(|t| t.is_some()).count();
    let key = |t: &Option<usize>| t.unwrap_or(usize::MAX);
    let verdict = if reached < 2.min(low.len()) || reached == 0 {
        Verdict::Inconclusive
    } else if low.windows(2).all(|p| key(&p[0]) <= key(&p[1])) {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(SpectralTrajectory {
        iters,
        residuals,
        band_edges: record.band_edges.clone(),
        t_half,
        alpha_fit,
        verdict,
    })
}

impl SpectralTrajectory {
    /// One row per band: radial bounds, half time, fitted exponent.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("band,radius_lo,radius_hi,t_half,alpha\n");
        for b in 0..self.t_half.len() {
            let lo = if b == 0 { 0.0 } else { self.band_edges[b - 1] };
            let _ = writeln!(
                s,
                "{b},{},{},{},{}",
                fmt_f64(lo),
                fmt_f64(self.band_edges[b]),
                self.t_half[b].map_or("nan".into(), |t| t.to_string()),
                self.alpha_fit[b].map_or("nan".into(), fmt_f64),
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("spectral ordering\n");
        let _ = writeln!(s, "verdict: {}", self.verdict);
        for (b, t) in self.t_half.iter().enumerate() {
            let _ = writeln!(
                s,
                "  band {b}: t_half = {}",
                t.map_or("never".into(), |t| t.to_string())
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsnrSummary {
    pub peak: f64,
    pub peak_iter: usize,
    pub final_psnr: f64,
    /// `peak - final`.
    pub drop: f64,
}

pub fn psnr_summary(record: &RunRecord) -> Result<PsnrSummary> {
    let series = record
        .psnrs()
        .ok_or_else(|| Error::MissingGroundTruth("record has no PSNR column".into()))?;
    if series.is_empty() {
        return Err(Error::InsufficientData("empty record".into()));
    }
    let iters = record.iterations();
    let (mut peak, mut peak_iter) = (series[0], iters[0]);
    for (t, p) in iters.iter().zip(&series) {
        if *p > peak {
            peak = *p;
            peak_iter = *t;
        }
    }
    let final_psnr = *series.last().expect("non-empty");
    Ok(PsnrSummary {
        peak,
        peak_iter,
        final_psnr,
        drop: peak - final_psnr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EarlyStoppingReport {
    pub dip: PsnrSummary,
    pub dsp: PsnrSummary,
}

pub fn early_stopping_report(record_dip: &RunRecord, record_dsp: &RunRecord) -> Result<EarlyStoppingReport> {
    Ok(EarlyStoppingReport {
        dip: psnr_summary(record_dip)?,
        dsp: psnr_summary(record_dsp)?,
    })
}

impl EarlyStoppingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,peak_psnr,peak_iter,final_psnr,drop\n");
        for (name, r) in [("dip", &self.dip), ("dsp", &self.dsp)] {
            let _ = writeln!(
                s,
                "{name},{},{},{},{}",
                fmt_f64(r.peak),
                r.peak_iter,
                fmt_f64(r.final_psnr),
                fmt_f64(r.drop)
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("early stopping comparison (PSNR, dB)\n");
        for (name, r) in [("DIP", &self.dip), ("DSP", &self.dsp)] {
            let _ = writeln!(
                s,
                "  {name}: peak {:.2} at iteration {}, final {:.2}, drop {:.2}",
                r.peak, r.peak_iter, r.final_psnr, r.drop
            );
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandBiasVariance {
    pub bias2: f64,
    pub variance: f64,
    /// `bias2 + variance`.
    pub total: f64,
    /// Mean squared spectral error computed directly.
    pub mse: f64,
}

impl BandBiasVariance {
    pub fn variance_share(&self) -> f64 {
        if self.total > 0.0 {
            self.variance / self.total
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasVarianceReport {
    pub samples: usize,
    pub band_edges: Vec<f64>,
    pub bands: Vec<BandBiasVariance>,
}

impl BiasVarianceReport {
    /// Largest relative gap between `bias2 + variance` and the direct MSE.
    pub fn identity_error(&self) -> f64 {
        self.bands
            .iter()
            .map(|b| {
                let scale = b.mse.abs().max(f64::MIN_POSITIVE);
                if b.mse == 0.0 && b.total == 0.0 {
                    0.0
                } else {
                    (b.total - b.mse).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("band,radius_lo,radius_hi,bias2,variance,total,mse,variance_share\n");
        for (i, b) in self.bands.iter().enumerate() {
            let lo = if i == 0 { 0.0 } else { self.band_edges[i - 1] };
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{}",
                fmt_f64(lo),
                fmt_f64(self.band_edges[i]),
                fmt_f64(b.bias2),
                fmt_f64(b.variance),
                fmt_f64(b.total),
                fmt_f64(b.mse),
                fmt_f64(b.variance_share())
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("bias-variance over {} noise realizations\n", self.samples);
        let _ = writeln!(s, "max identity error: {:.3e}", self.identity_error());
        for (i, b) in self.bands.iter().enumerate() {
            let _ = writeln!(
                s,
                "  band {i}: bias2 {:.4e} variance {:.4e} share {:.3}",
                b.bias2,
                b.variance,
                b.variance_share()
            );
        }
        s
    }
}

/// Empirical decomposition of the spectral error of `reconstructions`
/// against `clean`, per band, using the unitary DFT. All moments share the
/// same sample mean, so `bias2 + variance == mse` up to rounding.
pub fn bias_variance_decomposition(
    reconstructions: &[Tensor],
    clean: &Tensor,
    bands: &BandMask,
) -> Result<BiasVarianceReport> {
    if reconstructions.len() < 2 {
        return Err(Error::invalid("bias_variance", "need at least two samples"));
    }
    let n = reconstructions.len() as f64;
    let target = dft2(clean, Normalization::Unitary)?;
    bands.check_grid(target.height, target.width, "bias_variance")?;
    let spectra = reconstructions
        .iter()
        .map(|r| {
            r.check_same_shape(clean, "bias_variance")?;
            dft2(r, Normalization::Unitary)
        })
        .collect::<Result<Vec<_>>>()?;
    let m = target.len();
    let mut bias2 = vec![0.0; m];
    let mut var = vec![0.0; m];
    let mut mse = vec![0.0; m];
    for i in 0..m {
        let mr = spectra.iter().map(|s| s.re[i]).sum::<f64>() / n;
        let mi = spectra.iter().map(|s| s.im[i]).sum::<f64>() / n;
        bias2[i] = (mr - target.re[i]).powi(2) + (mi - target.im[i]).powi(2);
        var[i] = spectra
            .iter()
            .map(|s| (s.re[i] - mr).powi(2) + (s.im[i] - mi).powi(2))
            .sum::<f64>()
            / n;
        mse[i] = spectra
            .iter()
            .map(|s| (s.re[i] - target.re[i]).powi(2) + (s.im[i] - target.im[i]).powi(2))
            .sum::<f64>()
            / n;
    }
    let (b, v, e) = (bands.accumulate(&bias2), bands.accumulate(&var), bands.accumulate(&mse));
    Ok(BiasVarianceReport {
        samples: reconstructions.len(),
        band_edges: bands.edges().to_vec(),
        bands: (0..bands.count())
            .map(|i| BandBiasVariance {
                bias2: b[i],
                variance: v[i],
                total: b[i] + v[i],
                mse: e[i],
            })
            .collect(),
    })
}

/// A reconstruction task that can be repeated with different noise draws.
#[derive(Clone, Debug)]
pub struct NoiseTrial {
    pub clean: Tensor,
    pub op: DegradationOp,
    pub sigma: f64,
    pub spec: RunSpec,
}

impl NoiseTrial {
    pub fn observation(&self, noise_seed: u64) -> Result<Observation> {
        corrupt(&self.clean, &self.op, &NoiseModel::gaussian(self.sigma, noise_seed)?)
    }
}

#[derive(Debug)]
pub struct BiasVarianceFailure {
    pub error: Error,
    /// Decomposition over the runs that completed, when at least two did.
    pub partial: Option<BiasVarianceReport>,
}

impl fmt::Display for BiasVarianceFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bias-variance experiment failed: {}", self.error)
    }
}

impl std::error::Error for BiasVarianceFailure {}

/// Runs one reconstruction per noise seed (at most `threads` at a time)
/// and decomposes the reconstructions' spectral error against the clean
/// image.
pub fn bias_variance_experiment(
    trial: &NoiseTrial,
    noise_seeds: &[u64],
    threads: usize,
) -> std::result::Result<(BiasVarianceReport, Vec<RunRecord>), Box<BiasVarianceFailure>> {
    let fail = |error: Error, partial| Box::new(BiasVarianceFailure { error, partial });
    if noise_seeds.len() < 2 {
        return Err(fail(Error::invalid("bias_variance_experiment", "need n >= 2"), None));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| fail(Error::Config(e.to_string()), None))?;
    let results: Vec<Result<RunRecord>> = pool.install(|| {
        noise_seeds
            .par_iter()
            .map(|seed| {
                let obs = trial.observation(*seed)?;
                run(&obs, &trial.spec).map_err(|f| f.error)
            })
            .collect()
    });
    let [_, h, w] = trial.op.in_shape();
    let bands = BandMask::radial(h, w, trial.spec.bands).map_err(|e| fail(e, None))?;
    let mut records = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let recon: Vec<Tensor> = records.iter().filter_map(|r| r.reconstruction.clone()).collect();
    if let Some(e) = first_err {
        let partial = bias_variance_decomposition(&recon, &trial.clean, &bands).ok();
        return Err(fail(e, partial));
    }
    let report = bias_variance_decomposition(&recon, &trial.clean, &bands).map_err(|e| fail(e, None))?;
    Ok((report, records))
}

/// `||F(A x_hat) - F(y)||` under the unitary DFT: distance of `x_hat` from
/// satisfying the measurement's spectrum exactly.
pub fn manifold_residual(x_hat: &Tensor, obs: &Observation) -> Result<f64> {
    Ok(dsp_complex_loss(x_hat, obs, Normalization::Unitary)?.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseStabilityReport {
    /// `||F(eta_<k)||^2`: noise energy in bands below `k`.
    pub bound: f64,
    pub iters: Vec<usize>,
    /// Smoothed `||F(A f_t) - F(A x)||^2`.
    pub error: Vec<f64>,
    /// Smoothed `error - bound`.
    pub excess: Vec<f64>,
    pub alpha: Option<f64>,
    pub asymptote: f64,
    pub excess_decreasing: bool,
    pub within_bound: bool,
    pub verdict: Verdict,
}

/// Energy of the noise projected onto bands `0..k`.
pub fn low_band_noise_energy(noise: &Tensor, bands: &BandMask, k: usize) -> Result<f64> {
    let e = band_energy(&dft2(noise, Normalization::Unitary)?, bands)?;
    Ok(e.iter().take(k).sum())
}

/// Checks the run's error against the clean signal settles within twice
/// the low-band noise energy while decreasing.
///
/// "Decreasing" means the smoothed error has a non-positive least-squares
/// slope over the second half of the run. With zero low-band noise the
/// bound check reduces to the error decaying below its starting value.
pub fn noise_stability_report(
    record: &RunRecord,
    obs: &Observation,
    bands: &BandMask,
    k: usize,
) -> Result<NoiseStabilityReport> {
    let noise = obs
        .noise()
        .ok_or_else(|| Error::MissingGroundTruth("noise stability needs the clean image".into()))?;
    check_density(record)?;
    if k > bands.count() {
        return Err(Error::invalid("noise_stability", format!("k = {k} exceeds {} bands", bands.count())));
    }
    let raw: Vec<f64> = record
        .entries
        .iter()
        .map(|e| e.clean_error)
        .collect::<Option<_>>()
        .ok_or_else(|| Error::MissingGroundTruth("record carries no clean-signal error".into()))?;
    let bound = low_band_noise_energy(&noise, bands, k)?;
    let iters = record.iterations();
    let error = moving_average(&iters, &raw, SMOOTHING_WINDOW);
    let excess: Vec<f64> = error.iter().map(|e| e - bound).collect();
    let half = error.len() / 2;
    let xs: Vec<f64> = iters[half..].iter().map(|t| *t as f64).collect();
    let excess_decreasing = slope(&xs, &error[half..]) <= 0.0;
    let asymptote = *error.last().expect("density checked");
    let within_bound = if bound > 0.0 {
        asymptote <= 2.0 * bound
    } else {
        asymptote < error[0]
    };
    let positive: Vec<(usize, f64)> = iters
        .iter()
        .zip(&excess)
        .filter(|(_, e)| **e > 0.0)
        .map(|(t, e)| (*t, *e))
        .collect();
    let (pi, pe): (Vec<usize>, Vec<f64>) = positive.into_iter().unzip();
    let alpha = fit_decay_exponent(&pi, &pe);
    let verdict = if excess_decreasing && within_bound {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(NoiseStabilityReport {
        bound,
        iters,
        error,
        excess,
        alpha,
        asymptote,
        excess_decreasing,
        within_bound,
        verdict,
    })
}

impl NoiseStabilityReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,error,bound,excess\n");
        for i in 0..self.iters.len() {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                self.iters[i],
                fmt_f64(self.error[i]),
                fmt_f64(self.bound),
                fmt_f64(self.excess[i])
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "noise stability\nverdict: {}\n  low-band noise energy: {:.4e}\n  final error: {:.4e} ({:.2}x bound)\n  excess decreasing: {}\n  alpha: {}\n",
            self.verdict,
            self.bound,
            self.asymptote,
            if self.bound > 0.0 { self.asymptote / self.bound } else { f64::INFINITY },
            self.excess_decreasing,
            self.alpha.map_or("n/a".into(), |a| format!("{a:.3}")),
        )
    }
}

/// Bands `0..k` as a keep-set for [`crate::spectral::band_project`].
pub fn low_bands(k: usize) -> BTreeSet<usize> {
    (0..k).collect()
}

/// Default `k` for the low-frequency split.
pub const DEFAULT_K: usize = DEFAULT_LOW_BAND;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::LogEntry;

    fn record(series: impl Fn(usize, usize) -> f64, bands: usize, iters: &[usize]) -> RunRecord {
        let mut r = RunRecord::new(BandMask::radial(8, 8, bands).unwrap().edges().to_vec());
        for t in iters {
            r.entries.push(LogEntry {
                iter: *t,
                loss: 1.0,
                psnr: None,
                bands: (0..bands).map(|b| series(*t, b)).collect(),
                clean_error: None,
                ms: 0.0,
            });
        }
        r
    }

    #[test]
    fn psnr_cases() {
        let a = Tensor::full(&[1, 4, 4], 0.5);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-10);
        assert!(psnr(&a, &Tensor::zeros(&[1, 4, 5]), 1.0).is_err());
        assert!(psnr(&a, &b, 0.0).is_err());
    }

    #[test]
    fn moving_average_window() {
        let iters = [0, 10, 20, 30];
        let v = [4.0, 2.0, 0.0, 2.0];
        assert_eq!(moving_average(&iters, &v, 20), vec![4.0, 3.0, 1.0, 1.0]);
        assert_eq!(moving_average(&iters, &v, 1), v.to_vec());
    }

    #[test]
    fn geometric_decay_faster_in_low_bands_passes() {
        let iters: Vec<usize> = (0..=100).map(|i| i * 10).collect();
        let r = record(|t, b| (-(t as f64) / (50.0 * (b + 1) as f64)).exp(), 8, &iters);
        let s = spectral_ordering_report(&r).unwrap();
        assert_eq!(s.verdict, Verdict::Pass);
        assert!(s.t_half[0] < s.t_half[3]);
    }

    #[test]
    fn reversed_order_fails() {
        let iters: Vec<usize> = (0..=100).map(|i| i * 10).collect();
        let r = record(|t, b| (-(t as f64) / (50.0 * (8 - b) as f64)).exp(), 8, &iters);
        assert_eq!(spectral_ordering_report(&r).unwrap().verdict, Verdict::Fail);
    }

    #[test]
    fn constant_residuals_inconclusive() {
        let iters: Vec<usize> = (0..10).map(|i| i * 50).collect();
        let s = spectral_ordering_report(&record(|_, _| 3.0, 8, &iters)).unwrap();
        assert!(s.t_half.iter().all(Option::is_none));
        assert_eq!(s.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn sparse_record_is_error() {
        let r = record(|_, _| 1.0, 8, &[0, 10]);
        assert!(matches!(spectral_ordering_report(&r), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn psnr_arithmetic() {
        let mut r = record(|_, _| 0.0, 1, &[0, 1, 2]);
        for (e, p) in r.entries.iter_mut().zip([20.0, 25.0, 22.0]) {
            e.psnr = Some(p);
        }
        let s = psnr_summary(&r).unwrap();
        assert_eq!((s.peak, s.peak_iter, s.final_psnr, s.drop), (25.0, 1, 22.0, 3.0));
        let mut m = r.clone();
        for (e, p) in m.entries.iter_mut().zip([20.0, 21.0, 22.0]) {
            e.psnr = Some(p);
        }
        assert_eq!(psnr_summary(&m).unwrap().drop, 0.0);
        let none = record(|_, _| 0.0, 1, &[0, 1]);
        assert!(matches!(psnr_summary(&none), Err(Error::MissingGroundTruth(_))));
    }

    #[test]
    fn decay_exponent_of_power_law() {
        let iters: Vec<usize> = (1..=1000).collect();
        let v: Vec<f64> = iters.iter().map(|t| 3.0 * (*t as f64).powf(-0.7)).collect();
        assert!((fit_decay_exponent(&iters, &v).unwrap() - 0.7).abs() < 1e-10);
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
