//! Linear measurement operators, the additive noise model, and observations.
//!
//! Mask operators keep the full image grid as measurement space and write
//! zeros at dropped pixels, so the DFT of a measurement is always taken on
//! a rectangular power-of-two grid.

use std::sync::Arc;

use crate::autodiff::LinearMap;
use crate::error::{Error, Result};
use crate::rng::{stream, Rng};
use crate::tensor::Tensor;

/// Default Gaussian noise level for denoising, on the `[0, 1]` scale.
pub const DEFAULT_SIGMA: f64 = 25.0 / 255.0;
/// Default keep-probability of the Bernoulli mask.
pub const DEFAULT_KEEP_PROB: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    Identity,
    /// Each pixel kept independently with probability `p`, shared across channels.
    BernoulliMask { p: f64, seed: u64 },
    /// Fixed observed-pixel mask, shared across channels.
    RegionMask,
    /// Box average over `factor x factor` blocks, or plain subsampling of
    /// the block's top-left pixel when `antialias` is false.
    Downsample { factor: usize, antialias: bool },
}

/// A linear forward model `A` with its adjoint.
///
/// An optional support mask on the measurement grid is applied after the
/// kind's map; padded images use it so that padding never enters a loss.
#[derive(Clone, Debug, PartialEq)]
pub struct DegradationOp {
    kind: OpKind,
    in_shape: [usize; 3],
    out_shape: [usize; 3],
    mask: Option<Arc<Vec<f64>>>,
    support: Option<Arc<Vec<f64>>>,
}

fn check_shape(op: &'static str, shape: [usize; 3]) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::shape(op, format!("empty shape {shape:?}")));
    }
    Ok(())
}

impl DegradationOp {
    pub fn identity(shape: [usize; 3]) -> Result<Self> {
        check_shape("identity", shape)?;
        Ok(Self {
            kind: OpKind::Identity,
            in_shape: shape,
            out_shape: shape,
            mask: None,
            support: None,
        })
    }

    pub fn bernoulli_mask(shape: [usize; 3], p: f64, seed: u64) -> Result<Self> {
        check_shape("bernoulli_mask", shape)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("bernoulli_mask", format!("p = {p} outside [0, 1]")));
        }
        let mut rng = Rng::derived(seed, stream::MASK);
        let mask: Vec<f64> = (0..shape[1] * shape[2])
            .map(|_| if rng.bernoulli(p) { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            kind: OpKind::BernoulliMask { p, seed },
            in_shape: shape,
            out_shape: shape,
            mask: Some(Arc::new(mask)),
            support: None,
        })
    }

    /// `mask` is a `[1, H, W]` (or `[H, W]`) image; values above 0.5 are observed.
    pub fn region_mask(shape: [usize; 3], mask: &Tensor) -> Result<Self> {
        check_shape("region_mask", shape)?;
        let plane = shape[1] * shape[2];
        let ok = match mask.shape() {
            [1, h, w] | [h, w] => (*h, *w) == (shape[1], shape[2]),
            _ => false,
        };
        if !ok {
            return Err(Error::shape(
                "region_mask",
                format!("mask {:?} does not cover a {}x{} image", mask.shape(), shape[1], shape[2]),
            ));
        }
        let bits: Vec<f64> = mask.data()[..plane]
            .iter()
            .map(|v| if *v > 0.5 { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            kind: OpKind::RegionMask,
            in_shape: shape,
            out_shape: shape,
            mask: Some(Arc::new(bits)),
            support: None,
        })
    }

    pub fn downsample(shape: [usize; 3], factor: usize, antialias: bool) -> Result<Self> {
        check_shape("downsample", shape)?;
        if factor == 0 {
            return Err(Error::invalid("downsample", "factor must be at least 1"));
        }
        if shape[1] % factor != 0 || shape[2] % factor != 0 {
            return Err(Error::shape(
                "downsample",
                format!("{}x{} not divisible by factor {factor}", shape[1], shape[2]),
            ));
        }
        Ok(Self {
            kind: OpKind::Downsample { factor, antialias },
            in_shape: shape,
            out_shape: [shape[0], shape[1] / factor, shape[2] / factor],
            mask: None,
            support: None,
        })
    }

    /// Restricts measurements to the pixels where `support` (a `[H, W]`
    /// plane on the measurement grid) is nonzero.
    pub fn with_support(mut self, support: Vec<f64>) -> Result<Self> {
        if support.len() != self.out_shape[1] * self.out_shape[2] {
            return Err(Error::shape(
                "with_support",
                format!("{} values for a {}x{} grid", support.len(), self.out_shape[1], self.out_shape[2]),
            ));
        }
        self.support = Some(Arc::new(support.into_iter().map(|v| if v != 0.0 { 1.0 } else { 0.0 }).collect()));
        Ok(self)
    }

    pub fn kind(&self) -> &OpKind {
        &self.kind
    }

    pub fn in_shape(&self) -> [usize; 3] {
        self.in_shape
    }

    pub fn out_shape(&self) -> [usize; 3] {
        self.out_shape
    }

    /// The `[H, W]` keep-mask of mask operators.
    pub fn mask(&self) -> Option<&[f64]> {
        self.mask.as_deref().map(|v| &v[..])
    }

    pub fn support(&self) -> Option<&[f64]> {
        self.support.as_deref().map(|v| &v[..])
    }

    fn mul_plane(data: &mut [f64], plane: &[f64]) {
        let n = plane.len();
        for (i, v) in data.iter_mut().enumerate() {
            *v *= plane[i % n];
        }
    }

    fn forward_raw(&self, x: &[f64]) -> Vec<f64> {
        let [c, h, w] = self.in_shape;
        let mut out = match &self.kind {
            OpKind::Identity => x.to_vec(),
            OpKind::BernoulliMask { .. } | OpKind::RegionMask => {
                let mut y = x.to_vec();
                Self::mul_plane(&mut y, self.mask.as_ref().expect("mask kinds carry a mask"));
                y
            }
            OpKind::Downsample { factor, antialias } => {
                let f = *factor;
                let (ho, wo) = (h / f, w / f);
                let mut y = vec![0.0; c * ho * wo];
                let inv = 1.0 / (f * f) as f64;
                for ch in 0..c {
                    for i in 0..ho {
                        for j in 0..wo {
                            let base = ch * h * w + i * f * w + j * f;
                            y[(ch * ho + i) * wo + j] = if *antialias {
                                let mut s = 0.0;
                                for a in 0..f {
                                    for b in 0..f {
                                        s += x[base + a * w + b];
                                    }
                                }
                                s * inv
                            } else {
                                x[base]
                            };
                        }
                    }
                }
                y
            }
        };
        if let Some(s) = &self.support {
            Self::mul_plane(&mut out, s);
        }
        out
    }

    fn adjoint_raw(&self, y: &[f64]) -> Vec<f64> {
        let [c, h, w] = self.in_shape;
        let masked;
        let y = match &self.support {
            Some(s) => {
                let mut t = y.to_vec();
                Self::mul_plane(&mut t, s);
                masked = t;
                &masked[..]
            }
            None => y,
        };
        match &self.kind {
            OpKind::Identity => y.to_vec(),
            OpKind::BernoulliMask { .. } | OpKind::RegionMask => {
                let mut x = y.to_vec();
                Self::mul_plane(&mut x, self.mask.as_ref().expect("mask kinds carry a mask"));
                x
            }
            OpKind::Downsample { factor, antialias } => {
                let f = *factor;
                let (ho, wo) = (h / f, w / f);
                let mut x = vec![0.0; c * h * w];
                let inv = 1.0 / (f * f) as f64;
                for ch in 0..c {
                    for i in 0..ho {
                        for j in 0..wo {
                            let v = y[(ch * ho + i) * wo + j];
                            let base = ch * h * w + i * f * w + j * f;
                            if *antialias {
                                for a in 0..f {
                                    for b in 0..f {
                                        x[base + a * w + b] = v * inv;
                                    }
                                }
                            } else {
                                x[base] = v;
                            }
                        }
                    }
                }
                x
            }
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape() != self.in_shape {
            return Err(Error::shape(
                "DegradationOp::apply",
                format!("input {:?}, operator expects {:?}", x.shape(), self.in_shape),
            ));
        }
        Ok(Tensor::from_parts(self.out_shape.to_vec(), self.forward_raw(x.data())))
    }

    pub fn adjoint(&self, y: &Tensor) -> Result<Tensor> {
        if y.shape() != self.out_shape {
            return Err(Error::shape(
                "DegradationOp::adjoint",
                format!("input {:?}, operator produces {:?}", y.shape(), self.out_shape),
            ));
        }
        Ok(Tensor::from_parts(self.in_shape.to_vec(), self.adjoint_raw(y.data())))
    }

    /// Plane of measurement pixels that carry data (1) or are dropped (0).
    pub fn observed_plane(&self) -> Vec<f64> {
        let n = self.out_shape[1] * self.out_shape[2];
        let mut plane = match &self.mask {
            Some(m) => m.to_vec(),
            None => vec![1.0; n],
        };
        if let Some(s) = &self.support {
            for (p, v) in plane.iter_mut().zip(s.iter()) {
                *p *= v;
            }
        }
        plane
    }
}

impl LinearMap for DegradationOp {
    fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_raw(x)
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        self.adjoint_raw(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    None,
    Gaussian { sigma: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("NoiseModel", format!("sigma {sigma} must be >= 0")));
        }
        Ok(Self {
            kind: NoiseKind::Gaussian { sigma },
            seed,
        })
    }

    pub fn sigma(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian { sigma } => sigma,
        }
    }

    /// One draw of the noise field; identical for identical seeds.
    pub fn sample(&self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = match self.kind {
            NoiseKind::None => vec![0.0; n],
            NoiseKind::Gaussian { sigma } => {
                let mut rng = Rng::derived(self.seed, stream::NOISE);
                (0..n).map(|_| sigma * rng.normal()).collect()
            }
        };
        Tensor::from_parts(shape.to_vec(), data)
    }
}

/// A measurement together with its forward model. The ground truth, when
/// known, is only read by metrics.
#[derive(Clone, Debug)]
pub struct Observation {
    pub y: Tensor,
    pub op: DegradationOp,
    pub ground_truth: Option<Tensor>,
    /// Top-left `(height, width)` of the reconstruction grid holding real
    /// image content; `None` means the whole grid. Metrics ignore the rest.
    pub valid_region: Option<(usize, usize)>,
}

impl Observation {
    pub fn new(y: Tensor, op: DegradationOp, ground_truth: Option<Tensor>) -> Result<Self> {
        if y.shape() != op.out_shape() {
            return Err(Error::shape(
                "Observation",
                format!("measurement {:?}, operator produces {:?}", y.shape(), op.out_shape()),
            ));
        }
        if let Some(gt) = &ground_truth {
            if gt.shape() != op.in_shape() {
                return Err(Error::shape(
                    "Observation",
                    format!("ground truth {:?}, operator expects {:?}", gt.shape(), op.in_shape()),
                ));
            }
        }
        Ok(Self {
            y,
            op,
            ground_truth,
            valid_region: None,
        })
    }

    pub fn with_valid_region(mut self, h: usize, w: usize) -> Result<Self> {
        let [_, hh, ww] = self.op.in_shape();
        if h == 0 || w == 0 || h > hh || w > ww {
            return Err(Error::shape(
                "Observation::with_valid_region",
                format!("{h}x{w} outside the {hh}x{ww} grid"),
            ));
        }
        self.valid_region = Some((h, w));
        Ok(self)
    }

    /// Crops a reconstruction-grid tensor to the valid region.
    pub fn crop_valid(&self, x: &Tensor) -> Result<Tensor> {
        match self.valid_region {
            Some((h, w)) => x.crop(h, w),
            None => Ok(x.clone()),
        }
    }

    /// Realized measurement noise `y - A x`, when the ground truth is known.
    pub fn noise(&self) -> Option<Tensor> {
        let gt = self.ground_truth.as_ref()?;
        let ax = self.op.apply(gt).ok()?;
        self.y.sub(&ax).ok()
    }
}

/// Simulates `y = A x + eta`. Noise is drawn on the measurement grid and
/// zeroed wherever the operator drops pixels.
pub fn corrupt(x_clean: &Tensor, op: &DegradationOp, noise: &NoiseModel) -> Result<Observation> {
    let clean = op.apply(x_clean)?;
    let mut eta = noise.sample(clean.shape());
    DegradationOp::mul_plane(eta.data_mut(), &op.observed_plane());
    let y = clean.add(&eta)?;
    Observation::new(y, op.clone(), Some(x_clean.clone()))
}
