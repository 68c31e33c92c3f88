//! Iterative radix-2 Cooley-Tukey FFT.

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub(crate) struct Radix2 {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Radix2 {
    /// `n` must be a power of two; callers validate.
    pub fn new(n: usize) -> Self {
        debug_assert!(n.is_power_of_two());
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if n == 1 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        // exp(-2 pi i k / n), computed per entry rather than by recurrence
        let twiddles = (0..n / 2)
            .map(|k| {
                let a = -2.0 * PI * k as f64 / n as f64;
                Complex64::new(a.cos(), a.sin())
            })
            .collect();
        Self { n, twiddles, bitrev }
    }

    /// Unscaled transform in place; `inverse` conjugates the twiddles.
    pub fn run(&self, buf: &mut [Complex64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n);
        for i in 0..n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let step = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * step];
                    if inverse {
                        w = w.conj();
                    }
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Unscaled 2D transform of one `h x w` plane, rows then columns.
pub(crate) fn fft2_plane(plane: &mut [Complex64], h: usize, w: usize, inverse: bool) {
    let rows = Radix2::new(w);
    for r in plane.chunks_exact_mut(w) {
        rows.run(r, inverse);
    }
    let cols = Radix2::new(h);
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            col[y] = plane[y * w + x];
        }
        cols.run(&mut col, inverse);
        for y in 0..h {
            plane[y * w + x] = col[y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let a = sign * 2.0 * PI * ((j * k) % n) as f64 / n as f64;
                        v * Complex64::new(a.cos(), a.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_1d() {
        for n in [1, 2, 4, 8, 32] {
            let x: Vec<Complex64> = (0..n)
                .map(|i| Complex64::new((i as f64 * 1.3).sin(), (i as f64 * 0.7).cos()))
                .collect();
            for inverse in [false, true] {
                let mut y = x.clone();
                Radix2::new(n).run(&mut y, inverse);
                let r = naive(&x, inverse);
                for (a, b) in y.iter().zip(&r) {
                    assert!((a - b).norm() < 1e-12, "n={n}");
                }
            }
        }
    }
}
