//! 2D discrete Fourier transforms with an explicit normalization, tape
//! integration, and radial frequency bands.
//!
//! Sides must be powers of two. Images that are not are padded at the I/O
//! layer (see [`crate::io::pad_to_pow2`]).

mod bands;
mod fft;

pub use bands::{band_energy, band_project, BandMask, DEFAULT_BANDS, DEFAULT_LOW_BAND};

use std::sync::Arc;

use num_complex::Complex64;

use crate::autodiff::{LinearMap, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scaling convention of the forward transform.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Normalization {
    /// Forward and inverse both scale by `1/sqrt(H*W)`; norm preserving.
    #[default]
    Unitary,
    /// Forward unscaled, inverse scaled by `1/(H*W)`.
    Unnormalized,
}

impl Normalization {
    fn forward_scale(self, n: usize) -> f64 {
        match self {
            Normalization::Unitary => 1.0 / (n as f64).sqrt(),
            Normalization::Unnormalized => 1.0,
        }
    }

    fn inverse_scale(self, n: usize) -> f64 {
        match self {
            Normalization::Unitary => 1.0 / (n as f64).sqrt(),
            Normalization::Unnormalized => 1.0 / n as f64,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Normalization::Unitary => "unitary",
            Normalization::Unnormalized => "unnormalized",
        }
    }
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unitary" => Ok(Normalization::Unitary),
            "unnormalized" => Ok(Normalization::Unnormalized),
            _ => Err(Error::Config(format!("unknown normalization '{s}'"))),
        }
    }
}

/// Complex `[C, H, W]` spectrum stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub normalization: Normalization,
}

impl Spectrum {
    pub fn zeros(channels: usize, height: usize, width: usize, normalization: Normalization) -> Self {
        let n = channels * height * width;
        Self {
            channels,
            height,
            width,
            re: vec![0.0; n],
            im: vec![0.0; n],
            normalization,
        }
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn get(&self, c: usize, u: usize, v: usize) -> Complex64 {
        let i = (c * self.height + u) * self.width + v;
        Complex64::new(self.re[i], self.im[i])
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(a, b)| a * a + b * b).sum()
    }

    fn check_compatible(&self, other: &Spectrum, op: &'static str) -> Result<()> {
        if self.normalization != other.normalization {
            return Err(Error::invalid(
                op,
                format!(
                    "normalization mismatch: {} vs {}",
                    self.normalization.as_str(),
                    other.normalization.as_str()
                ),
            ));
        }
        if (self.channels, self.height, self.width) != (other.channels, other.height, other.width) {
            return Err(Error::shape(
                op,
                format!(
                    "{}x{}x{} vs {}x{}x{}",
                    self.channels, self.height, self.width, other.channels, other.height, other.width
                ),
            ));
        }
        Ok(())
    }

    /// Coefficientwise difference; both spectra must share a convention.
    pub fn sub(&self, other: &Spectrum) -> Result<Spectrum> {
        self.check_compatible(other, "Spectrum::sub")?;
        Ok(Spectrum {
            re: self.re.iter().zip(&other.re).map(|(a, b)| a - b).collect(),
            im: self.im.iter().zip(&other.im).map(|(a, b)| a - b).collect(),
            ..self.clone()
        })
    }

    /// Largest deviation from conjugate symmetry `X(u,v) = conj X(-u,-v)`.
    pub fn hermitian_defect(&self) -> f64 {
        let (h, w) = (self.height, self.width);
        let mut worst = 0.0f64;
        for c in 0..self.channels {
            for u in 0..h {
                for v in 0..w {
                    let a = self.get(c, u, v);
                    let b = self.get(c, (h - u) % h, (w - v) % w).conj();
                    worst = worst.max((a - b).norm());
                }
            }
        }
        worst
    }
}

fn check_pow2(op: &'static str, h: usize, w: usize) -> Result<()> {
    for s in [h, w] {
        if !s.is_power_of_two() {
            return Err(Error::NotPowerOfTwo { op, size: s });
        }
    }
    Ok(())
}

fn transform_planes(
    re: &[f64],
    im: Option<&[f64]>,
    c: usize,
    h: usize,
    w: usize,
    inverse: bool,
    scale: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = h * w;
    let mut out_re = vec![0.0; c * n];
    let mut out_im = vec![0.0; c * n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for ch in 0..c {
        for i in 0..n {
            buf[i] = Complex64::new(re[ch * n + i], im.map_or(0.0, |v| v[ch * n + i]));
        }
        fft::fft2_plane(&mut buf, h, w, inverse);
        for i in 0..n {
            out_re[ch * n + i] = buf[i].re * scale;
            out_im[ch * n + i] = buf[i].im * scale;
        }
    }
    (out_re, out_im)
}

/// Per-channel 2D DFT of a real `[C, H, W]` tensor.
pub fn dft2(x: &Tensor, normalization: Normalization) -> Result<Spectrum> {
    let (c, h, w) = x.dims3()?;
    check_pow2("dft2", h, w)?;
    let (re, im) = transform_planes(
        x.data(),
        None,
        c,
        h,
        w,
        false,
        normalization.forward_scale(h * w),
    );
    Ok(Spectrum {
        channels: c,
        height: h,
        width: w,
        re,
        im,
        normalization,
    })
}

/// Inverse of [`dft2`] under the spectrum's own convention. Returns the
/// real part; for Hermitian spectra the imaginary part vanishes.
pub fn idft2(s: &Spectrum) -> Result<Tensor> {
    let n = s.channels * s.height * s.width;
    if s.re.len() != n || s.im.len() != n {
        return Err(Error::shape(
            "idft2",
            format!("planes hold {}/{} values for {n} coefficients", s.re.len(), s.im.len()),
        ));
    }
    check_pow2("idft2", s.height, s.width)?;
    let (re, _) = transform_planes(
        &s.re,
        Some(&s.im),
        s.channels,
        s.height,
        s.width,
        true,
        s.normalization.inverse_scale(s.height * s.width),
    );
    Ok(Tensor::from_parts(vec![s.channels, s.height, s.width], re))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Part {
    Re,
    Im,
}

/// One component (real or imaginary) of the DFT as a real linear map.
///
/// For cotangent `g` the adjoint is `Re(F^H g)` for the real part and
/// `Re(F^H (i g)) = -Im(F^H g)` for the imaginary part.
#[derive(Debug)]
struct DftPart {
    part: Part,
    normalization: Normalization,
    shape: [usize; 3],
}

impl LinearMap for DftPart {
    fn in_shape(&self) -> &[usize] {
        &self.shape
    }

    fn out_shape(&self) -> &[usize] {
        &self.shape
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let [c, h, w] = self.shape;
        let (re, im) = transform_planes(x, None, c, h, w, false, self.normalization.forward_scale(h * w));
        match self.part {
            Part::Re => re,
            Part::Im => im,
        }
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let [c, h, w] = self.shape;
        // F^H is the unscaled inverse transform times the forward scale.
        let scale = self.normalization.forward_scale(h * w);
        let (re, im) = transform_planes(y, None, c, h, w, true, scale);
        match self.part {
            Part::Re => re,
            Part::Im => im.into_iter().map(|v| -v).collect(),
        }
    }
}

/// Records the DFT of `x` on the tape, returning `(re, im)` nodes.
pub fn dft2_var(tape: &mut Tape, x: Var, normalization: Normalization) -> Result<(Var, Var)> {
    let (c, h, w) = tape.value(x).dims3()?;
    check_pow2("dft2", h, w)?;
    let shape = [c, h, w];
    let re = tape.linear(
        x,
        Arc::new(DftPart {
            part: Part::Re,
            normalization,
            shape,
        }),
    )?;
    let im = tape.linear(
        x,
        Arc::new(DftPart {
            part: Part::Im,
            normalization,
            shape,
        }),
    )?;
    Ok((re, im))
}
