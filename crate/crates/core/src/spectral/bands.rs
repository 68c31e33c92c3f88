use std::collections::BTreeSet;

use super::{dft2, idft2, Normalization, Spectrum};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_BANDS: usize = 8;
/// Bands strictly below this index form the "low frequency" set
/// (the lowest quarter of the radial range with 8 bands).
pub const DEFAULT_LOW_BAND: usize = 2;

/// Largest radial frequency on any grid: `sqrt(0.5^2 + 0.5^2)`.
pub const MAX_RADIUS: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Assignment of each `(u, v)` coefficient of an `H x W` grid to a radial
/// annulus.
///
/// Indices are folded to the signed range `[-H/2, H/2)` and the radius is
/// `sqrt((u/H)^2 + (v/W)^2)`. A coefficient belongs to the first band whose
/// upper edge it does not exceed; the last band is closed at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct BandMask {
    height: usize,
    width: usize,
    edges: Vec<f64>,
    band_of: Vec<usize>,
}

fn signed(i: usize, n: usize) -> f64 {
    if i < n.div_ceil(2) {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

/// Normalized radial frequency of coefficient `(u, v)`.
pub fn radius(u: usize, v: usize, h: usize, w: usize) -> f64 {
    let fu = signed(u, h) / h as f64;
    let fv = signed(v, w) / w as f64;
    (fu * fu + fv * fv).sqrt()
}

impl BandMask {
    /// `bands` equal-width annuli over `(0, sqrt(2)/2]`.
    pub fn radial(height: usize, width: usize, bands: usize) -> Result<Self> {
        if bands == 0 {
            return Err(Error::invalid("BandMask::radial", "need at least one band"));
        }
        let edges = (1..=bands)
            .map(|i| MAX_RADIUS * i as f64 / bands as f64)
            .collect();
        Self::with_edges(height, width, edges)
    }

    /// Custom upper edges; must be positive and strictly increasing.
    pub fn with_edges(height: usize, width: usize, edges: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("BandMask", "empty grid"));
        }
        if edges.is_empty() || !(edges[0] > 0.0) || edges.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::invalid(
                "BandMask",
                format!("edges must be positive and strictly increasing, got {edges:?}"),
            ));
        }
        let last = edges.len() - 1;
        let mut band_of = Vec::with_capacity(height * width);
        for u in 0..height {
            for v in 0..width {
                let r = radius(u, v, height, width);
                band_of.push(edges.iter().position(|e| r <= *e).unwrap_or(last));
            }
        }
        Ok(Self {
            height,
            width,
            edges,
            band_of,
        })
    }

    pub fn count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// `(lower, upper)` radial bounds of band `b`.
    pub fn bounds(&self, b: usize) -> (f64, f64) {
        let lo = if b == 0 { 0.0 } else { self.edges[b - 1] };
        (lo, self.edges[b])
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn band(&self, u: usize, v: usize) -> usize {
        self.band_of[u * self.width + v]
    }

    /// Band index per coefficient of one `H x W` plane.
    pub fn assignments(&self) -> &[usize] {
        &self.band_of
    }

    /// Number of coefficients of one plane in each band.
    pub fn coefficient_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.count()];
        for b in &self.band_of {
            counts[*b] += 1;
        }
        counts
    }

    pub(crate) fn check_grid(&self, h: usize, w: usize, op: &'static str) -> Result<()> {
        if (h, w) != (self.height, self.width) {
            return Err(Error::shape(
                op,
                format!("bands built for {}x{} applied to {h}x{w}", self.height, self.width),
            ));
        }
        Ok(())
    }

    /// Sums a per-coefficient quantity over `channels` stacked planes into bands.
    pub fn accumulate(&self, per_coefficient: &[f64]) -> Vec<f64> {
        let n = self.band_of.len();
        let mut out = vec![0.0; self.count()];
        for (i, v) in per_coefficient.iter().enumerate() {
            out[self.band_of[i % n]] += v;
        }
        out
    }
}

/// Per-band sum of squared magnitudes.
pub fn band_energy(s: &Spectrum, bands: &BandMask) -> Result<Vec<f64>> {
    bands.check_grid(s.height, s.width, "band_energy")?;
    let power: Vec<f64> = s.re.iter().zip(&s.im).map(|(a, b)| a * a + b * b).collect();
    Ok(bands.accumulate(&power))
}

/// Keeps only the coefficients in the `keep` bands. Radial bands are
/// symmetric under `(u, v) -> (-u, -v)`, so the result is real.
pub fn band_project(x: &Tensor, bands: &BandMask, keep: &BTreeSet<usize>) -> Result<Tensor> {
    let (_, h, w) = x.dims3()?;
    bands.check_grid(h, w, "band_project")?;
    if let Some(bad) = keep.iter().find(|b| **b >= bands.count()) {
        return Err(Error::invalid(
            "band_project",
            format!("band {bad} out of range for {} bands", bands.count()),
        ));
    }
    let mut s = dft2(x, Normalization::Unitary)?;
    let n = h * w;
    for i in 0..s.len() {
        if !keep.contains(&bands.band_of[i % n]) {
            s.re[i] = 0.0;
            s.im[i] = 0.0;
        }
    }
    idft2(&s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn partitions_with_dc_in_band_zero() {
        let m = BandMask::radial(16, 8, 8).unwrap();
        assert_eq!(m.band(0, 0), 0);
        assert_eq!(m.coefficient_counts().iter().sum::<usize>(), 128);
        // the Nyquist corner is the largest radius and sits in the top band
        assert_eq!(m.band(8, 4), 7);
    }

    #[test]
    fn bands_symmetric_under_negation() {
        let (h, w) = (8, 16);
        let m = BandMask::radial(h, w, 8).unwrap();
        for u in 0..h {
            for v in 0..w {
                assert_eq!(m.band(u, v), m.band((h - u) % h, (w - v) % w));
            }
        }
    }

    #[test]
    fn edges_validated() {
        assert!(BandMask::with_edges(4, 4, vec![0.3, 0.2]).is_err());
        assert!(BandMask::with_edges(4, 4, vec![]).is_err());
        assert!(BandMask::with_edges(4, 4, vec![0.0, 0.5]).is_err());
        assert!(BandMask::radial(4, 4, 0).is_err());
    }

    #[test]
    fn constant_energy_in_band_zero() {
        let m = BandMask::radial(8, 8, 8).unwrap();
        let s = dft2(&Tensor::full(&[1, 8, 8], 0.4), Normalization::Unitary).unwrap();
        let e = band_energy(&s, &m).unwrap();
        assert!(e[0] > 0.0);
        assert!(e[1..].iter().all(|v| v.abs() < 1e-24));
    }

    #[test]
    fn projection_keep_all_and_empty() {
        let m = BandMask::radial(8, 8, 8).unwrap();
        let x = Tensor::new(&[2, 8, 8], Rng::new(9).uniform_vec(128, 0.0, 1.0)).unwrap();
        let all: BTreeSet<usize> = (0..8).collect();
        assert!(band_project(&x, &m, &all).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
        let none = band_project(&x, &m, &BTreeSet::new()).unwrap();
        assert!(none.data().iter().all(|v| v.abs() < 1e-15));
        assert!(band_project(&x, &m, &BTreeSet::from([8])).is_err());
    }
}
