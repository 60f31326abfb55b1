use std::sync::Arc;

use rustfft::num_complex::Complex64;

use super::fft::Fft2;
use crate::error::{Error, Result};

/// Circular convolution with a small kernel normalised to unit sum.
#[derive(Debug, Clone)]
pub struct BlurOperator {
    kernel: Vec<f64>,
    kernel_width: usize,
    kernel_height: usize,
    width: usize,
    height: usize,
    spectrum: Vec<Complex64>,
    fft: Arc<Fft2>,
}

impl BlurOperator {
    /// `kernel` is row-major with the given width; it is centred at
    /// `(kernel_height / 2, kernel_width / 2)`.
    pub fn new(kernel: &[f64], kernel_width: usize, width: usize, height: usize) -> Result<Self> {
        if kernel_width == 0 || kernel.is_empty() || !kernel.len().is_multiple_of(kernel_width) {
            return Err(Error::Config("kernel is not a rectangular array".into()));
        }
        let kernel_height = kernel.len() / kernel_width;
        if kernel_width > width || kernel_height > height {
            return Err(Error::Config(format!(
                "{kernel_width}x{kernel_height} kernel does not fit a {width}x{height} image"
            )));
        }
        if kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("kernel has non-finite entries".into()));
        }
        let sum: f64 = kernel.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::Config("kernel must have a positive sum".into()));
        }
        let kernel: Vec<f64> = kernel.iter().map(|v| v / sum).collect();
        let fft = Arc::new(Fft2::new(width, height));
        let (ci, cj) = (kernel_height / 2, kernel_width / 2);
        let mut pad = vec![Complex64::default(); width * height];
        for a in 0..kernel_height {
            for b in 0..kernel_width {
                let i = (a + height - ci) % height;
                let j = (b + width - cj) % width;
                pad[i * width + j].re += kernel[a * kernel_width + b];
            }
        }
        fft.forward(&mut pad);
        // Unnormalised DFT of the kernel, so that H = F* diag(h) F.
        let root_d = ((width * height) as f64).sqrt();
        let spectrum = pad.into_iter().map(|v| v * root_d).collect();
        Ok(Self {
            kernel,
            kernel_width,
            kernel_height,
            width,
            height,
            spectrum,
            fft,
        })
    }

    /// `size x size` box blur.
    pub fn uniform(size: usize, width: usize, height: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::Config("blur size must be positive".into()));
        }
        Self::new(&vec![1.0; size * size], size, width, height)
    }

    pub fn identity(width: usize, height: usize) -> Result<Self> {
        Self::new(&[1.0], 1, width, height)
    }

    pub fn kernel(&self) -> (&[f64], usize, usize) {
        (&self.kernel, self.kernel_width, self.kernel_height)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    pub(crate) fn fft(&self) -> &Arc<Fft2> {
        &self.fft
    }

    /// `max_k |h_k|`.
    pub fn operator_norm(&self) -> f64 {
        self.spectrum.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    fn filter(&self, x: &[f64], conj: bool) -> Vec<f64> {
        let mut buf = self.fft.forward_real(x);
        for (v, h) in buf.iter_mut().zip(&self.spectrum) {
            *v *= if conj { h.conj() } else { *h };
        }
        self.fft.inverse(&mut buf);
        buf.into_iter().map(|v| v.re).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.filter(x, false)
    }

    pub fn apply_adjoint(&self, x: &[f64]) -> Vec<f64> {
        self.filter(x, true)
    }

    /// Direct spatial evaluation of the circular convolution.
    pub fn apply_spatial(&self, x: &[f64]) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let (ci, cj) = (self.kernel_height / 2, self.kernel_width / 2);
        let mut out = vec![0.0; w * h];
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for a in 0..self.kernel_height {
                    let si = (i + h + ci - a) % h;
                    for b in 0..self.kernel_width {
                        let sj = (j + w + cj - b) % w;
                        acc += self.kernel[a * self.kernel_width + b] * x[si * w + sj];
                    }
                }
                out[i * w + j] = acc;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probe(n: usize, seed: u64) -> Vec<f64> {
        (0..n)
            .map(|k| (((k as u64 + 1) * (seed * 2 + 1) * 2654435761) % 1000) as f64 / 100.0 - 5.0)
            .collect()
    }

    #[test]
    fn fft_convolution_matches_spatial() {
        for size in [3usize, 5, 6] {
            let b = BlurOperator::uniform(size, 12, 10).unwrap();
            let x = probe(120, size as u64);
            let a = b.apply(&x);
            let s = b.apply_spatial(&x);
            for (u, v) in a.iter().zip(&s) {
                assert!((u - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn asymmetric_kernel_matches_spatial() {
        let k = [0.0, 1.0, 2.0, 0.5, 3.0, 1.0];
        let b = BlurOperator::new(&k, 3, 7, 5).unwrap();
        let x = probe(35, 3);
        for (u, v) in b.apply(&x).iter().zip(b.apply_spatial(&x)) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_identity() {
        let k = [0.0, 1.0, 2.0, 0.5, 3.0, 1.0];
        let b = BlurOperator::new(&k, 3, 8, 6).unwrap();
        let x = probe(48, 1);
        let z = probe(48, 2);
        let lhs: f64 = b.apply(&x).iter().zip(&z).map(|(a, c)| a * c).sum();
        let rhs: f64 = x.iter().zip(b.apply_adjoint(&z)).map(|(a, c)| a * c).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn normalised_kernel_has_unit_norm() {
        let b = BlurOperator::uniform(5, 16, 16).unwrap();
        assert!((b.operator_norm() - 1.0).abs() < 1e-12);
        let id = BlurOperator::identity(4, 4).unwrap();
        let x = probe(16, 9);
        for (u, v) in id.apply(&x).iter().zip(&x) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_kernels_rejected() {
        assert!(BlurOperator::new(&[1.0, -1.0], 2, 4, 4).is_err());
        assert!(BlurOperator::uniform(9, 4, 4).is_err());
        assert!(BlurOperator::new(&[1.0, 1.0, 1.0], 2, 4, 4).is_err());
    }
}
