//! Data-fidelity losses: Fourier-domain variants and the pixel baseline.
//!
//! All losses compare `A * pred` with the measurement `y` of an
//! [`Observation`]; the ground truth is never read here.
//!
//! * `DspComplex`: `sum |F(A pred) - F(y)|^2`. Under the unitary DFT this is
//!   the pixel loss written in another basis.
//! * `DspMagnitude`: `sum (|F(A pred)|_e - |F(y)|_e)^2` with the smoothed
//!   modulus `|z|_e = sqrt(|z|^2 + eps)`, differentiable at zero.
//! * `DspLogMagnitude`: the same on `ln |z|_e`.
//! * `DipPixel`: `||A pred - y||^2`.

use std::sync::Arc;

use crate::autodiff::{Tape, Var};
use crate::degrade::Observation;
use crate::error::{Error, Result};
use crate::spectral::{band_energy, dft2, dft2_var, BandMask, Normalization, Spectrum, DEFAULT_BANDS};
use crate::tensor::Tensor;

pub const DEFAULT_MAGNITUDE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum LossKind {
    DspComplex,
    #[default]
    DspMagnitude,
    DspLogMagnitude,
    DipPixel,
}

impl LossKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::DspComplex => "dsp_complex",
            LossKind::DspMagnitude => "dsp_magnitude",
            LossKind::DspLogMagnitude => "dsp_log_magnitude",
            LossKind::DipPixel => "dip_pixel",
        }
    }

    pub fn is_magnitude(self) -> bool {
        matches!(self, LossKind::DspMagnitude | LossKind::DspLogMagnitude)
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "dsp_complex" => LossKind::DspComplex,
            "dsp_magnitude" => LossKind::DspMagnitude,
            "dsp_log_magnitude" => LossKind::DspLogMagnitude,
            "dip_pixel" => LossKind::DipPixel,
            _ => return Err(Error::Config(format!("unknown loss kind '{s}'"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub normalization: Normalization,
    pub eps: f64,
    /// Optional per-band weights over the default radial bands of the
    /// measurement grid. Ignored by the pixel loss.
    pub band_weights: Option<Vec<f64>>,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            kind: LossKind::default(),
            normalization: Normalization::Unitary,
            eps: DEFAULT_MAGNITUDE_EPS,
            band_weights: None,
        }
    }
}

impl LossSpec {
    pub fn of(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_magnitude() && !(self.eps > 0.0) {
            return Err(Error::Config(format!(
                "loss eps must be > 0 for {}, got {}",
                self.kind.as_str(),
                self.eps
            )));
        }
        if let Some(w) = &self.band_weights {
            if w.len() != DEFAULT_BANDS || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!(
                    "band_weights needs {DEFAULT_BANDS} nonnegative values, got {w:?}"
                )));
            }
        }
        Ok(())
    }
}

/// A loss bound to one observation with the measurement's spectrum cached.
#[derive(Debug)]
pub struct PreparedLoss {
    spec: LossSpec,
    op: Arc<crate::degrade::DegradationOp>,
    y: Tensor,
    target_re: Tensor,
    target_im: Tensor,
    target_mag: Option<Tensor>,
    weights: Option<Tensor>,
}

impl PreparedLoss {
    pub fn new(spec: &LossSpec, obs: &Observation) -> Result<Self> {
        spec.validate()?;
        let y = obs.y.clone();
        let shape = y.shape().to_vec();
        let (target_re, target_im, target_mag) = if spec.kind == LossKind::DipPixel {
            (Tensor::zeros(&shape), Tensor::zeros(&shape), None)
        } else {
            let s = dft2(&y, spec.normalization)?;
            let mag = match spec.kind {
                LossKind::DspMagnitude => Some(smoothed_modulus(&s, spec.eps, false)),
                LossKind::DspLogMagnitude => Some(smoothed_modulus(&s, spec.eps, true)),
                _ => None,
            };
            let re = Tensor::from_parts(shape.clone(), s.re);
            let im = Tensor::from_parts(shape.clone(), s.im);
            (re, im, mag.map(|m| Tensor::from_parts(shape.clone(), m)))
        };
        let weights = match (&spec.band_weights, spec.kind) {
            (Some(w), k) if k != LossKind::DipPixel => {
                let (c, h, wd) = y.dims3()?;
                let bands = BandMask::radial(h, wd, DEFAULT_BANDS)?;
                let plane: Vec<f64> = bands.assignments().iter().map(|b| w[*b]).collect();
                let data = (0..c).flat_map(|_| plane.iter().copied()).collect();
                Some(Tensor::from_parts(shape.clone(), data))
            }
            _ => None,
        };
        Ok(Self {
            spec: spec.clone(),
            op: Arc::new(obs.op.clone()),
            y,
            target_re,
            target_im,
            target_mag,
            weights,
        })
    }

    pub fn spec(&self) -> &LossSpec {
        &self.spec
    }

    fn weighted_sum(&self, tape: &mut Tape, sq: Var) -> Result<Var> {
        let sq = match &self.weights {
            Some(w) => {
                let wv = tape.constant(w.clone());
                tape.mul(sq, wv)?
            }
            None => sq,
        };
        Ok(tape.sum(sq))
    }

    /// Records the loss of generator output `pred` on the tape.
    pub fn record(&self, tape: &mut Tape, pred: Var) -> Result<Var> {
        let ap = tape.linear(pred, self.op.clone())?;
        if self.spec.kind == LossKind::DipPixel {
            let y = tape.constant(self.y.clone());
            let d = tape.sub(ap, y)?;
            let sq = tape.square(d);
            return Ok(tape.sum(sq));
        }
        let (re, im) = dft2_var(tape, ap, self.spec.normalization)?;
        match self.spec.kind {
            LossKind::DspComplex => {
                let tr = tape.constant(self.target_re.clone());
                let ti = tape.constant(self.target_im.clone());
                let dr = tape.sub(re, tr)?;
                let di = tape.sub(im, ti)?;
                let sr = tape.square(dr);
                let si = tape.square(di);
                let s = tape.add(sr, si)?;
                self.weighted_sum(tape, s)
            }
            LossKind::DspMagnitude | LossKind::DspLogMagnitude => {
                let sr = tape.square(re);
                let si = tape.square(im);
                let p = tape.add(sr, si)?;
                let p = tape.add_scalar(p, self.spec.eps);
                let mut m = tape.sqrt(p);
                if self.spec.kind == LossKind::DspLogMagnitude {
                    m = tape.ln(m);
                }
                let t = tape.constant(self.target_mag.clone().expect("magnitude target"));
                let d = tape.sub(m, t)?;
                let sq = tape.square(d);
                self.weighted_sum(tape, sq)
            }
            LossKind::DipPixel => unreachable!(),
        }
    }

    /// Loss value for a fixed prediction.
    pub fn value(&self, pred: &Tensor) -> Result<f64> {
        let mut tape = Tape::new();
        let p = tape.constant(pred.clone());
        let l = self.record(&mut tape, p)?;
        tape.value(l).item()
    }
}

fn smoothed_modulus(s: &Spectrum, eps: f64, log: bool) -> Vec<f64> {
    s.re
        .iter()
        .zip(&s.im)
        .map(|(a, b)| {
            let m = (a * a + b * b + eps).sqrt();
            if log {
                m.ln()
            } else {
                m
            }
        })
        .collect()
}

fn measurement_spectra(
    pred: &Tensor,
    obs: &Observation,
    normalization: Normalization,
) -> Result<(Spectrum, Spectrum)> {
    let ap = obs.op.apply(pred)?;
    Ok((dft2(&ap, normalization)?, dft2(&obs.y, normalization)?))
}

/// `sum |F(A pred) - F(y)|^2`.
pub fn dsp_complex_loss(pred: &Tensor, obs: &Observation, normalization: Normalization) -> Result<f64> {
    let (p, y) = measurement_spectra(pred, obs, normalization)?;
    Ok(p.sub(&y)?.energy())
}

/// `sum (|F(A pred)|_e - |F(y)|_e)^2` under the unitary DFT.
pub fn dsp_magnitude_loss(pred: &Tensor, obs: &Observation, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::invalid("dsp_magnitude_loss", format!("eps must be > 0, got {eps}")));
    }
    let (p, y) = measurement_spectra(pred, obs, Normalization::Unitary)?;
    Ok(smoothed_modulus(&p, eps, false)
        .iter()
        .zip(smoothed_modulus(&y, eps, false))
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `||A pred - y||^2`.
pub fn dip_pixel_loss(pred: &Tensor, obs: &Observation) -> Result<f64> {
    let ap = obs.op.apply(pred)?;
    Ok(ap.sub(&obs.y)?.norm_sq())
}

/// Loss value for any [`LossSpec`].
pub fn evaluate(pred: &Tensor, obs: &Observation, spec: &LossSpec) -> Result<f64> {
    PreparedLoss::new(spec, obs)?.value(pred)
}

/// Band-wise split of the unitary complex residual `F(A pred) - F(y)`.
pub fn per_band_residual(pred: &Tensor, obs: &Observation, bands: &BandMask) -> Result<Vec<f64>> {
    let (p, y) = measurement_spectra(pred, obs, Normalization::Unitary)?;
    band_energy(&p.sub(&y)?, bands)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::degrade::{DegradationOp, NoiseModel};
    use crate::rng::Rng;

    fn setup(seed: u64) -> (Tensor, Observation) {
        let mut r = Rng::new(seed);
        let x = Tensor::new(&[1, 8, 8], r.uniform_vec(64, 0.0, 1.0)).unwrap();
        let op = DegradationOp::identity([1, 8, 8]).unwrap();
        let obs = crate::degrade::corrupt(&x, &op, &NoiseModel::gaussian(0.1, seed).unwrap()).unwrap();
        let pred = Tensor::new(&[1, 8, 8], r.uniform_vec(64, 0.0, 1.0)).unwrap();
        (pred, obs)
    }

    #[test]
    fn exact_fit_is_zero() {
        let (_, obs) = setup(1);
        let pred = obs.y.clone();
        for kind in [LossKind::DspComplex, LossKind::DspMagnitude, LossKind::DspLogMagnitude, LossKind::DipPixel] {
            assert!(evaluate(&pred, &obs, &LossSpec::of(kind)).unwrap().abs() < 1e-24, "{kind:?}");
        }
    }

    #[test]
    fn unnormalized_scales_by_pixel_count() {
        let (pred, obs) = setup(2);
        let pix = dip_pixel_loss(&pred, &obs).unwrap();
        let un = dsp_complex_loss(&pred, &obs, Normalization::Unnormalized).unwrap();
        assert!((un / pix - 64.0).abs() < 1e-9 * 64.0);
    }

    #[test]
    fn constant_offset_pixel_loss() {
        let (_, obs) = setup(3);
        let pred = obs.y.map(|v| v + 1.0);
        assert!((dip_pixel_loss(&pred, &obs).unwrap() - 64.0).abs() < 1e-9);
    }

    #[test]
    fn tape_matches_value_routes() {
        let (pred, obs) = setup(4);
        let pc = evaluate(&pred, &obs, &LossSpec::of(LossKind::DspComplex)).unwrap();
        assert!((pc - dsp_complex_loss(&pred, &obs, Normalization::Unitary).unwrap()).abs() < 1e-10 * pc);
        let pm = evaluate(&pred, &obs, &LossSpec::of(LossKind::DspMagnitude)).unwrap();
        assert!((pm - dsp_magnitude_loss(&pred, &obs, DEFAULT_MAGNITUDE_EPS).unwrap()).abs() < 1e-10 * pm);
    }

    #[test]
    fn validation() {
        let mut s = LossSpec::of(LossKind::DspMagnitude);
        s.eps = 0.0;
        assert!(s.validate().is_err());
        s.kind = LossKind::DspComplex;
        assert!(s.validate().is_ok());
        s.band_weights = Some(vec![1.0; 3]);
        assert!(s.validate().is_err());
        assert!("dsp_phase".parse::<LossKind>().is_err());
    }

    #[test]
    fn band_weights_scale_complex_loss() {
        let (pred, obs) = setup(5);
        let base = evaluate(&pred, &obs, &LossSpec::of(LossKind::DspComplex)).unwrap();
        let mut s = LossSpec::of(LossKind::DspComplex);
        s.band_weights = Some(vec![2.0; DEFAULT_BANDS]);
        assert!((evaluate(&pred, &obs, &s).unwrap() - 2.0 * base).abs() < 1e-10 * base);
    }
}
