//! Likelihood terms and the composite potential `U = f + g`.

mod blur;
mod fft;
mod mask;
pub mod synth;

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::image::ImageField;
use crate::prox::{SharedTerm, Weighted};
use crate::special::norm_sq;

pub use blur::BlurOperator;
pub use fft::Fft2;
pub use mask::FourierMask;
pub use rustfft::num_complex::Complex64 as Complex;

/// A convex function with an `L_f`-Lipschitz gradient.
pub trait SmoothTerm: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn grad_into(&self, x: &[f64], out: &mut [f64]);
    fn lipschitz(&self) -> f64;

    /// `f(x)` and `grad f(x)` together; overridden where they share work.
    fn eval_grad(&self, x: &[f64], out: &mut [f64]) -> f64 {
        self.grad_into(x, out);
        self.eval(x)
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        self.grad_into(x, &mut g);
        g
    }
}

pub type SharedSmooth = Arc<dyn SmoothTerm>;

/// `f = 0`.
#[derive(Debug, Clone, Copy)]
pub struct ZeroSmooth(pub usize);

impl SmoothTerm for ZeroSmooth {
    fn dim(&self) -> usize {
        self.0
    }
    fn eval(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn grad_into(&self, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn lipschitz(&self) -> f64 {
        0.0
    }
}

/// `f(x) = precision * |x - center|^2 / 2`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    center: Vec<f64>,
    precision: f64,
}

impl Quadratic {
    pub fn new(center: Vec<f64>, precision: f64) -> Result<Self> {
        if !(precision > 0.0 && precision.is_finite()) {
            return Err(Error::Input(format!(
                "precision must be positive, got {precision}"
            )));
        }
        Ok(Self { center, precision })
    }
}

impl SmoothTerm for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn eval(&self, x: &[f64]) -> f64 {
        0.5 * self.precision * crate::special::dist_sq(x, &self.center)
    }
    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(x).zip(&self.center) {
            *o = self.precision * (a - c);
        }
    }
    fn lipschitz(&self) -> f64 {
        self.precision
    }
}

/// `f(x) = |y - Hx|^2 / (2 sigma^2)` for a circulant blur `H`.
#[derive(Debug, Clone)]
pub struct Deconvolution {
    blur: BlurOperator,
    y: Vec<f64>,
    y_hat: Vec<Complex64>,
    hty_hat: Vec<Complex64>,
    abs2: Vec<f64>,
    inv_var: f64,
}

impl Deconvolution {
    pub fn new(y: &ImageField, blur: BlurOperator, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        if blur.shape() != (y.width, y.height) {
            return Err(Error::Config(format!(
                "blur operator is {:?} but the observation is {}x{}",
                blur.shape(),
                y.width,
                y.height
            )));
        }
        let y_hat = blur.fft().forward_real(&y.data);
        let hty_hat = y_hat
            .iter()
            .zip(blur.spectrum())
            .map(|(a, h)| h.conj() * a)
            .collect();
        let abs2 = blur.spectrum().iter().map(|h| h.norm_sqr()).collect();
        Ok(Self {
            blur,
            y: y.data.clone(),
            y_hat,
            hty_hat,
            abs2,
            inv_var: 1.0 / (sigma * sigma),
        })
    }

    pub fn blur(&self) -> &BlurOperator {
        &self.blur
    }

    pub fn observation(&self) -> &[f64] {
        &self.y
    }

    fn residual_energy(&self, x_hat: &[Complex64]) -> f64 {
        x_hat
            .iter()
            .zip(self.blur.spectrum())
            .zip(&self.y_hat)
            .map(|((xv, h), yv)| (h * xv - yv).norm_sqr())
            .sum()
    }
}

impl SmoothTerm for Deconvolution {
    fn dim(&self) -> usize {
        self.y.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let x_hat = self.blur.fft().forward_real(x);
        0.5 * self.inv_var * self.residual_energy(&x_hat)
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.eval_grad(x, out);
    }

    fn eval_grad(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let mut buf = self.blur.fft().forward_real(x);
        let value = 0.5 * self.inv_var * self.residual_energy(&buf);
        for ((v, a2), hty) in buf.iter_mut().zip(&self.abs2).zip(&self.hty_hat) {
            *v = *v * *a2 - hty;
        }
        self.blur.fft().inverse(&mut buf);
        for (o, v) in out.iter_mut().zip(&buf) {
            *o = v.re * self.inv_var;
        }
        value
    }

    fn lipschitz(&self) -> f64 {
        let n = self.blur.operator_norm();
        n * n * self.inv_var
    }
}

/// `f(x) = |y - A F x|^2 / (2 sigma^2)` for a binary Fourier mask `A`.
#[derive(Debug, Clone)]
pub struct Tomography {
    fft: Arc<Fft2>,
    mask: FourierMask,
    indices: Vec<usize>,
    samples: Vec<Complex64>,
    inv_var: f64,
}

impl Tomography {
    /// `samples` holds the observed coefficients in mask order.
    pub fn new(samples: &[Complex64], mask: FourierMask, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        let indices = mask.indices();
        if samples.len() != indices.len() {
            return Err(Error::Config(format!(
                "{} samples supplied for a mask with {} entries",
                samples.len(),
                indices.len()
            )));
        }
        let (w, h) = mask.shape();
        Ok(Self {
            fft: Arc::new(Fft2::new(w, h)),
            mask,
            indices,
            samples: samples.to_vec(),
            inv_var: 1.0 / (sigma * sigma),
        })
    }

    pub fn mask(&self) -> &FourierMask {
        &self.mask
    }

    /// `A F x`.
    pub fn measure(&self, x: &[f64]) -> Vec<Complex64> {
        let x_hat = self.fft.forward_real(x);
        self.indices.iter().map(|&k| x_hat[k]).collect()
    }

    /// `Re(F* A^T z)`.
    pub fn adjoint(&self, z: &[Complex64]) -> Vec<f64> {
        let mut buf = vec![Complex64::default(); self.fft.len()];
        for (&k, v) in self.indices.iter().zip(z) {
            buf[k] = *v;
        }
        self.fft.inverse(&mut buf);
        buf.into_iter().map(|v| v.re).collect()
    }
}

impl SmoothTerm for Tomography {
    fn dim(&self) -> usize {
        self.fft.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let x_hat = self.fft.forward_real(x);
        let r: f64 = self
            .indices
            .iter()
            .zip(&self.samples)
            .map(|(&k, y)| (x_hat[k] - y).norm_sqr())
            .sum();
        0.5 * self.inv_var * r
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.eval_grad(x, out);
    }

    fn eval_grad(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let x_hat = self.fft.forward_real(x);
        let mut buf = vec![Complex64::default(); x_hat.len()];
        let mut r = 0.0;
        for (&k, y) in self.indices.iter().zip(&self.samples) {
            let res = x_hat[k] - y;
            r += res.norm_sqr();
            buf[k] = res;
        }
        self.fft.inverse(&mut buf);
        for (o, v) in out.iter_mut().zip(&buf) {
            *o = v.re * self.inv_var;
        }
        0.5 * self.inv_var * r
    }

    fn lipschitz(&self) -> f64 {
        self.inv_var
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!(
            "noise level must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// The potential `U = f + g` of a log-concave posterior.
#[derive(Debug, Clone)]
pub struct CompositeModel {
    pub smooth: SharedSmooth,
    pub nonsmooth: SharedTerm,
    pub sigma: f64,
    pub beta: f64,
    pub label: String,
    width: usize,
    height: usize,
    prior_key: String,
}

impl CompositeModel {
    /// `g = beta * prior`.
    pub fn new(
        smooth: SharedSmooth,
        prior: SharedTerm,
        beta: f64,
        sigma: f64,
        width: usize,
        height: usize,
        label: impl Into<String>,
    ) -> Result<Self> {
        if smooth.dim() != width * height {
            return Err(Error::Config(format!(
                "smooth term has dimension {} but the image is {width}x{height}",
                smooth.dim()
            )));
        }
        let prior_key = format!("{}|{}", prior.describe(), beta);
        let nonsmooth: SharedTerm = if beta == 1.0 {
            prior
        } else {
            Arc::new(Weighted::new(prior, beta)?)
        };
        Ok(Self {
            smooth,
            nonsmooth,
            sigma,
            beta,
            label: label.into(),
            width,
            height,
            prior_key,
        })
    }

    pub fn dim(&self) -> usize {
        self.width * self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn lipschitz_f(&self) -> f64 {
        self.smooth.lipschitz()
    }

    /// Identifies the prior factor `g`; models with equal keys share a prior.
    pub fn prior_key(&self) -> &str {
        &self.prior_key
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        let g = self.nonsmooth.eval(x);
        if g == f64::INFINITY {
            return g;
        }
        self.smooth.eval(x) + g
    }
}

/// `U(x) = f(x) + g(x)`.
pub fn potential_eval(model: &CompositeModel, x: &ImageField) -> Result<f64> {
    if (x.width, x.height) != model.shape() {
        return Err(Error::Input(format!(
            "image is {}x{} but the model expects {:?}",
            x.width,
            x.height,
            model.shape()
        )));
    }
    Ok(model.potential(&x.data))
}

pub fn make_deconv_model(
    y: &ImageField,
    blur: &BlurOperator,
    sigma: f64,
    prior: SharedTerm,
    beta: f64,
) -> Result<CompositeModel> {
    let smooth = Deconvolution::new(y, blur.clone(), sigma)?;
    CompositeModel::new(
        Arc::new(smooth),
        prior,
        beta,
        sigma,
        y.width,
        y.height,
        "deconvolution",
    )
}

pub fn make_tomography_model(
    samples: &[Complex64],
    mask: &FourierMask,
    sigma: f64,
    prior: SharedTerm,
    beta: f64,
) -> Result<CompositeModel> {
    let (w, h) = mask.shape();
    let smooth = Tomography::new(samples, mask.clone(), sigma)?;
    CompositeModel::new(Arc::new(smooth), prior, beta, sigma, w, h, "tomography")
}

/// Largest eigenvalue of the Hessian of `f` by power iteration on gradient
/// differences.
pub fn power_lipschitz(f: &dyn SmoothTerm, iters: usize) -> f64 {
    let d = f.dim();
    let zero = vec![0.0; d];
    let g0 = f.grad(&zero);
    let mut v: Vec<f64> = (0..d)
        .map(|k| 1.0 + ((k * 7919) % 13) as f64 / 13.0)
        .collect();
    let mut est = 0.0;
    for _ in 0..iters {
        let n = norm_sq(&v).sqrt();
        v.iter_mut().for_each(|a| *a /= n);
        let gv = f.grad(&v);
        let hv: Vec<f64> = gv.iter().zip(&g0).map(|(a, b)| a - b).collect();
        est = norm_sq(&hv).sqrt();
        v = hv;
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prox::{BoxIndicator, TotalVariation, Zero};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> ImageField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageField::new(
            (0..w * h).map(|_| rng.random_range(-2.0..2.0)).collect(),
            w,
            h,
        )
        .unwrap()
    }

    #[test]
    fn identity_deconvolution() {
        let y = random_image(6, 5, 1);
        let blur = BlurOperator::identity(6, 5).unwrap();
        let m = make_deconv_model(&y, &blur, 1.0, Arc::new(Zero), 0.0).unwrap();
        assert!((m.lipschitz_f() - 1.0).abs() < 1e-12);
        let x = random_image(6, 5, 2);
        let g = m.smooth.grad(&x.data);
        for ((gk, xk), yk) in g.iter().zip(&x.data).zip(&y.data) {
            assert!((gk - (xk - yk)).abs() < 1e-10);
        }
        assert!(potential_eval(&m, &y).unwrap().abs() < 1e-20);
    }

    #[test]
    fn deconvolution_value_matches_spatial_oracle() {
        let (w, h) = (10, 9);
        let y = random_image(w, h, 3);
        let blur = BlurOperator::uniform(5, w, h).unwrap();
        let sigma = 0.47;
        let m = make_deconv_model(&y, &blur, sigma, Arc::new(Zero), 0.0).unwrap();
        let x = random_image(w, h, 4);
        let hx = blur.apply_spatial(&x.data);
        let direct: f64 = hx
            .iter()
            .zip(&y.data)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / (2.0 * sigma * sigma);
        let u = potential_eval(&m, &x).unwrap();
        assert!((u - direct).abs() < 1e-9 * direct);
        assert!((m.lipschitz_f() - 1.0 / (sigma * sigma)).abs() < 1e-9);
    }

    fn check_fd(f: &dyn SmoothTerm, x: &[f64]) {
        let g = f.grad(x);
        let h = 1e-5;
        for k in [0usize, 3, x.len() / 2, x.len() - 1] {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += h;
            xm[k] -= h;
            let fd = (f.eval(&xp) - f.eval(&xm)) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1.0),
                "k={k} fd={fd} g={}",
                g[k]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (w, h) = (8, 8);
        let y = random_image(w, h, 5);
        let blur = BlurOperator::uniform(3, w, h).unwrap();
        let m = make_deconv_model(&y, &blur, 0.5, Arc::new(Zero), 0.0).unwrap();
        check_fd(m.smooth.as_ref(), &random_image(w, h, 6).data);

        let mask = FourierMask::radial(w, h, 4).unwrap();
        let samples: Vec<Complex64> = (0..mask.count())
            .map(|k| Complex64::new((k as f64).sin(), (k as f64).cos()))
            .collect();
        let t = make_tomography_model(&samples, &mask, 0.7, Arc::new(Zero), 0.0).unwrap();
        check_fd(t.smooth.as_ref(), &random_image(w, h, 7).data);
    }

    #[test]
    fn full_mask_is_fourier_denoising() {
        let (w, h) = (6, 4);
        let truth = random_image(w, h, 8);
        let fft = Fft2::new(w, h);
        let y = fft.forward_real(&truth.data);
        let t = Tomography::new(&y, FourierMask::full(w, h), 0.5).unwrap();
        let x = random_image(w, h, 9);
        let g = t.grad(&x.data);
        for ((gk, xk), tk) in g.iter().zip(&x.data).zip(&truth.data) {
            assert!((gk - (xk - tk) / 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn tomography_adjoint() {
        let (w, h) = (8, 6);
        let mask = FourierMask::radial(w, h, 3).unwrap();
        let t = Tomography::new(&vec![Complex64::default(); mask.count()], mask, 1.0).unwrap();
        let x = random_image(w, h, 10);
        let z: Vec<Complex64> = (0..t.indices.len())
            .map(|k| Complex64::new((k as f64 * 0.3).cos(), (k as f64 * 0.7).sin()))
            .collect();
        let lhs: f64 = t
            .measure(&x.data)
            .iter()
            .zip(&z)
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        let rhs: f64 = x.data.iter().zip(t.adjoint(&z)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn power_method_reaches_declared_lipschitz() {
        let (w, h) = (16, 16);
        let y = random_image(w, h, 11);
        let blur = BlurOperator::uniform(5, w, h).unwrap();
        let m = make_deconv_model(&y, &blur, 0.47, Arc::new(Zero), 0.0).unwrap();
        let est = power_lipschitz(m.smooth.as_ref(), 200);
        assert!((est / m.lipschitz_f() - 1.0).abs() < 0.01, "{est}");
    }

    #[test]
    fn indicator_prior_gives_infinite_potential() {
        let y = random_image(4, 4, 12);
        let blur = BlurOperator::identity(4, 4).unwrap();
        let m = make_deconv_model(
            &y,
            &blur,
            1.0,
            Arc::new(BoxIndicator::new(0.0, 1.0).unwrap()),
            1.0,
        )
        .unwrap();
        assert_eq!(
            potential_eval(&m, &ImageField::filled(4, 4, 3.0)).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let y = random_image(4, 4, 13);
        let blur = BlurOperator::identity(5, 4).unwrap();
        assert!(matches!(
            make_deconv_model(
                &y,
                &blur,
                1.0,
                Arc::new(TotalVariation::new(4, 4).unwrap()),
                1.0
            ),
            Err(Error::Config(_))
        ));
    }
}
