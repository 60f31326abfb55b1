use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::special::{dist_sq, norm_sq};

/// A linear map `Psi` with `Psi^T Psi = Psi Psi^T = I`.
#[allow(clippy::len_without_is_empty)]
pub trait OrthonormalTransform: Send + Sync + fmt::Debug {
    fn len(&self) -> usize;
    fn forward(&self, x: &[f64]) -> Vec<f64>;
    fn inverse(&self, c: &[f64]) -> Vec<f64>;
    fn describe(&self) -> String;
}

/// Probes `Psi^T Psi x = x` and `Psi Psi^T x = x` on fixed random vectors.
pub(crate) fn check_orthonormal(t: &dyn OrthonormalTransform) -> Result<()> {
    let n = t.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 0..3 {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scale = norm_sq(&x).sqrt().max(f64::MIN_POSITIVE);
        let a = t.inverse(&t.forward(&x));
        let b = t.forward(&t.inverse(&x));
        if a.len() != n || b.len() != n {
            return Err(Error::Config(format!(
                "transform {} changes the signal length",
                t.describe()
            )));
        }
        if dist_sq(&a, &x).sqrt() > 1e-10 * scale || dist_sq(&b, &x).sqrt() > 1e-10 * scale {
            return Err(Error::Config(format!(
                "transform {} is not orthonormal",
                t.describe()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityTransform(pub usize);

impl OrthonormalTransform for IdentityTransform {
    fn len(&self) -> usize {
        self.0
    }
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn inverse(&self, c: &[f64]) -> Vec<f64> {
        c.to_vec()
    }
    fn describe(&self) -> String {
        format!("identity({})", self.0)
    }
}

fn analysis_step(buf: &mut [f64], tmp: &mut Vec<f64>, stride: usize, m: usize) {
    // Transforms buf[0], buf[stride], ..., buf[(m-1)*stride] in place.
    tmp.clear();
    tmp.extend((0..m).map(|i| buf[i * stride]));
    let h = m / 2;
    for i in 0..h {
        let (a, b) = (tmp[2 * i], tmp[2 * i + 1]);
        buf[i * stride] = (a + b) * FRAC_1_SQRT_2;
        buf[(h + i) * stride] = (a - b) * FRAC_1_SQRT_2;
    }
}

fn synthesis_step(buf: &mut [f64], tmp: &mut Vec<f64>, stride: usize, m: usize) {
    tmp.clear();
    tmp.extend((0..m).map(|i| buf[i * stride]));
    let h = m / 2;
    for i in 0..h {
        let (s, d) = (tmp[i], tmp[h + i]);
        buf[2 * i * stride] = (s + d) * FRAC_1_SQRT_2;
        buf[(2 * i + 1) * stride] = (s - d) * FRAC_1_SQRT_2;
    }
}

/// Orthonormal Haar wavelet transform of a 1D signal.
#[derive(Debug, Clone, Copy)]
pub struct Haar1d {
    n: usize,
    levels: usize,
}

impl Haar1d {
    pub fn new(n: usize, levels: usize) -> Result<Self> {
        if levels == 0 || n == 0 || !n.is_multiple_of(1 << levels) {
            return Err(Error::Config(format!(
                "Haar length {n} is not divisible by 2^{levels}"
            )));
        }
        Ok(Self { n, levels })
    }
}

impl OrthonormalTransform for Haar1d {
    fn len(&self) -> usize {
        self.n
    }
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut c = x.to_vec();
        let mut tmp = Vec::with_capacity(self.n);
        let mut m = self.n;
        for _ in 0..self.levels {
            analysis_step(&mut c, &mut tmp, 1, m);
            m /= 2;
        }
        c
    }
    fn inverse(&self, c: &[f64]) -> Vec<f64> {
        let mut x = c.to_vec();
        let mut tmp = Vec::with_capacity(self.n);
        let mut m = self.n >> (self.levels - 1);
        for _ in 0..self.levels {
            synthesis_step(&mut x, &mut tmp, 1, m);
            m *= 2;
        }
        x
    }
    fn describe(&self) -> String {
        format!("haar1d({},{})", self.n, self.levels)
    }
}

/// Separable orthonormal Haar transform of a row-major image; each level
/// splits the current low-pass block along rows then columns.
#[derive(Debug, Clone, Copy)]
pub struct Haar2d {
    width: usize,
    height: usize,
    levels: usize,
}

impl Haar2d {
    pub fn new(width: usize, height: usize, levels: usize) -> Result<Self> {
        let q = 1usize << levels;
        if levels == 0
            || width == 0
            || height == 0
            || !width.is_multiple_of(q)
            || !height.is_multiple_of(q)
        {
            return Err(Error::Config(format!(
                "Haar image {width}x{height} is not divisible by 2^{levels}"
            )));
        }
        Ok(Self {
            width,
            height,
            levels,
        })
    }
}

impl OrthonormalTransform for Haar2d {
    fn len(&self) -> usize {
        self.width * self.height
    }
    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut c = x.to_vec();
        let mut tmp = Vec::new();
        let (mut w, mut h) = (self.width, self.height);
        for _ in 0..self.levels {
            for r in 0..h {
                analysis_step(&mut c[r * self.width..], &mut tmp, 1, w);
            }
            for col in 0..w {
                analysis_step(&mut c[col..], &mut tmp, self.width, h);
            }
            w /= 2;
            h /= 2;
        }
        c
    }
    fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut x = coeffs.to_vec();
        let mut tmp = Vec::new();
        let mut w = self.width >> (self.levels - 1);
        let mut h = self.height >> (self.levels - 1);
        for _ in 0..self.levels {
            for col in 0..w {
                synthesis_step(&mut x[col..], &mut tmp, self.width, h);
            }
            for r in 0..h {
                synthesis_step(&mut x[r * self.width..], &mut tmp, 1, w);
            }
            w *= 2;
            h *= 2;
        }
        x
    }
    fn describe(&self) -> String {
        format!("haar2d({}x{},{})", self.width, self.height, self.levels)
    }
}
