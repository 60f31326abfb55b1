//! Proximal operators, Moreau-Yosida envelopes and a MAP solver.

mod fista;
mod haar;
mod tv;

use std::fmt;
use std::sync::Arc;

use crate::error::{ensure_finite, Error, Result};
use crate::special::{dist_sq, norm_sq};

pub use fista::{map_fista, FistaResult};
pub use haar::{Haar1d, Haar2d, IdentityTransform, OrthonormalTransform};
pub use tv::{prox_tv_chambolle, total_variation, ChambolleReport, TotalVariation};

/// Scratch state carried between successive prox calls on the same term.
///
/// Iterative operators (TV) keep their dual field here so a chain can
/// warm-start each call from the previous solution. Closed-form operators
/// ignore it.
#[derive(Debug, Clone, Default)]
pub struct ProxWorkspace {
    pub(crate) dual: Vec<f64>,
    pub(crate) buf: Vec<f64>,
    /// Iterations used by the most recent iterative prox call.
    pub last_iterations: usize,
    /// Whether the most recent iterative prox call met its tolerance.
    pub last_converged: bool,
}

impl ProxWorkspace {
    pub fn new() -> Self {
        Self::default()
    }
}

/// A proper, convex, lower semicontinuous, lower-bounded function with a
/// computable proximal operator.
pub trait NonSmoothTerm: Send + Sync + fmt::Debug {
    /// `g(x)`, possibly `+inf`.
    fn eval(&self, x: &[f64]) -> f64;

    /// Writes `argmin_y g(y) + |x - y|^2 / (2 theta)` into `out`.
    /// `theta >= 0` is assumed; callers validate.
    fn prox_into(&self, x: &[f64], theta: f64, out: &mut [f64], ws: &mut ProxWorkspace);

    fn prox(&self, x: &[f64], theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.prox_into(x, theta, &mut out, &mut ProxWorkspace::default());
        out
    }

    /// Lipschitz constant of `g`, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }

    /// Short stable description, used to check that models share a prior.
    fn describe(&self) -> String;
}

pub type SharedTerm = Arc<dyn NonSmoothTerm>;

fn check_theta(theta: f64) -> Result<()> {
    if theta.is_nan() || theta < 0.0 {
        return Err(Error::Input(format!(
            "prox parameter must be >= 0, got {theta}"
        )));
    }
    Ok(())
}

/// Componentwise soft threshold.
pub fn prox_l1(x: &[f64], theta: f64) -> Result<Vec<f64>> {
    check_theta(theta)?;
    Ok(x.iter().map(|&v| soft(v, theta)).collect())
}

#[inline]
pub(crate) fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Block soft threshold `max(0, 1 - theta/|x|) x`, with `prox(0) = 0`.
pub fn prox_l2norm(x: &[f64], theta: f64) -> Result<Vec<f64>> {
    check_theta(theta)?;
    let mut out = vec![0.0; x.len()];
    block_soft_into(x, theta, &mut out);
    Ok(out)
}

fn block_soft_into(x: &[f64], theta: f64, out: &mut [f64]) {
    let n = norm_sq(x).sqrt();
    let scale = if n > 0.0 {
        (1.0 - theta / n).max(0.0)
    } else {
        0.0
    };
    for (o, &v) in out.iter_mut().zip(x) {
        *o = scale * v;
    }
}

/// Projection onto the box `[lo, hi]^d`.
pub fn prox_box(x: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::Input(format!(
            "box bounds [{lo}, {hi}] are inverted"
        )));
    }
    Ok(x.iter().map(|&v| v.clamp(lo, hi)).collect())
}

/// `g = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl NonSmoothTerm for Zero {
    fn eval(&self, _x: &[f64]) -> f64 {
        0.0
    }
    fn prox_into(&self, x: &[f64], _theta: f64, out: &mut [f64], _ws: &mut ProxWorkspace) {
        out.copy_from_slice(x);
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
    fn describe(&self) -> String {
        "zero".into()
    }
}

/// `g = |x|_1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct L1Norm;

impl NonSmoothTerm for L1Norm {
    fn eval(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.abs()).sum()
    }
    fn prox_into(&self, x: &[f64], theta: f64, out: &mut [f64], _ws: &mut ProxWorkspace) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = soft(v, theta);
        }
    }
    // |x|_1 is sqrt(d)-Lipschitz in the Euclidean norm; d is unknown here.
    fn describe(&self) -> String {
        "l1".into()
    }
}

/// `g = |x|_2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct L2Norm;

impl NonSmoothTerm for L2Norm {
    fn eval(&self, x: &[f64]) -> f64 {
        norm_sq(x).sqrt()
    }
    fn prox_into(&self, x: &[f64], theta: f64, out: &mut [f64], _ws: &mut ProxWorkspace) {
        block_soft_into(x, theta, out);
    }
    fn lipschitz(&self) -> Option<f64> {
        Some(1.0)
    }
    fn describe(&self) -> String {
        "l2".into()
    }
}

/// Convex indicator of `[lo, hi]^d`.
#[derive(Debug, Clone, Copy)]
pub struct BoxIndicator {
    lo: f64,
    hi: f64,
}

impl BoxIndicator {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Input(format!(
                "box bounds [{lo}, {hi}] are inverted"
            )));
        }
        Ok(Self { lo, hi })
    }
}

impl NonSmoothTerm for BoxIndicator {
    fn eval(&self, x: &[f64]) -> f64 {
        if x.iter().all(|&v| v >= self.lo && v <= self.hi) {
            0.0
        } else {
            f64::INFINITY
        }
    }
    fn prox_into(&self, x: &[f64], _theta: f64, out: &mut [f64], _ws: &mut ProxWorkspace) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = v.clamp(self.lo, self.hi);
        }
    }
    fn describe(&self) -> String {
        format!("box[{},{}]", self.lo, self.hi)
    }
}

/// `g = |x|^2 / (2 s^2)`. Smooth, but handy as a proxable Gaussian term in
/// evidence toys.
#[derive(Debug, Clone, Copy)]
pub struct GaussianTerm {
    scale: f64,
}

impl GaussianTerm {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Input(format!(
                "gaussian scale must be positive, got {scale}"
            )));
        }
        Ok(Self { scale })
    }
}

impl NonSmoothTerm for GaussianTerm {
    fn eval(&self, x: &[f64]) -> f64 {
        norm_sq(x) / (2.0 * self.scale * self.scale)
    }
    fn prox_into(&self, x: &[f64], theta: f64, out: &mut [f64], _ws: &mut ProxWorkspace) {
        let s2 = self.scale * self.scale;
        let c = s2 / (s2 + theta);
        for (o, &v) in out.iter_mut().zip(x) {
            *o = c * v;
        }
    }
    fn describe(&self) -> String {
        format!("gaussian({})", self.scale)
    }
}

/// `g = |Psi x|_1` for an orthonormal transform `Psi`.
#[derive(Debug, Clone)]
pub struct OrthonormalL1 {
    transform: Arc<dyn OrthonormalTransform>,
}

impl OrthonormalL1 {
    /// Fails with a configuration error if the transform is not orthonormal
    /// on a set of fixed probe vectors.
    pub fn new(transform: Arc<dyn OrthonormalTransform>) -> Result<Self> {
        haar::check_orthonormal(transform.as_ref())?;
        Ok(Self { transform })
    }
}

impl NonSmoothTerm for OrthonormalL1 {
    fn eval(&self, x: &[f64]) -> f64 {
        self.transform.forward(x).iter().map(|v| v.abs()).sum()
    }
    fn prox_into(&self, x: &[f64], theta: f64, out: &mut [f64], _ws: &mut ProxWorkspace) {
        let mut c = self.transform.forward(x);
        for v in c.iter_mut() {
            *v = soft(*v, theta);
        }
        out.copy_from_slice(&self.transform.inverse(&c));
    }
    fn describe(&self) -> String {
        format!("l1[{}]", self.transform.describe())
    }
}

/// `Psi^T soft_theta(Psi x)`.
pub fn prox_l1_orthonormal(
    x: &[f64],
    transform: &dyn OrthonormalTransform,
    theta: f64,
) -> Result<Vec<f64>> {
    check_theta(theta)?;
    if x.len() != transform.len() {
        return Err(Error::Input(format!(
            "signal length {} does not match transform length {}",
            x.len(),
            transform.len()
        )));
    }
    haar::check_orthonormal(transform)?;
    let mut c = transform.forward(x);
    for v in c.iter_mut() {
        *v = soft(*v, theta);
    }
    Ok(transform.inverse(&c))
}

/// `beta * g`.
#[derive(Debug, Clone)]
pub struct Weighted {
    inner: SharedTerm,
    weight: f64,
}

impl Weighted {
    pub fn new(inner: SharedTerm, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Input(format!(
                "prior weight must be >= 0, got {weight}"
            )));
        }
        Ok(Self { inner, weight })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

impl NonSmoothTerm for Weighted {
    fn eval(&self, x: &[f64]) -> f64 {
        if self.weight == 0.0 {
            return 0.0;
        }
        self.weight * self.inner.eval(x)
    }
    fn prox_into(&self, x: &[f64], theta: f64, out: &mut [f64], ws: &mut ProxWorkspace) {
        if self.weight == 0.0 {
            out.copy_from_slice(x);
        } else {
            self.inner.prox_into(x, self.weight * theta, out, ws);
        }
    }
    fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz().map(|l| l * self.weight)
    }
    fn describe(&self) -> String {
        format!("{}*{}", self.weight, self.inner.describe())
    }
}

/// The Moreau-Yosida envelope `g^lambda`.
#[derive(Debug, Clone)]
pub struct MyEnvelope {
    inner: SharedTerm,
    lambda: f64,
}

impl MyEnvelope {
    pub fn new(inner: SharedTerm, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Input(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        Ok(Self { inner, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn inner(&self) -> &SharedTerm {
        &self.inner
    }
}

/// `g(p) + |x - p|^2 / (2 lambda)` with `p = prox_g^lambda(x)`.
pub fn my_envelope_eval(env: &MyEnvelope, x: &[f64]) -> Result<f64> {
    my_envelope_eval_ws(env, x, &mut ProxWorkspace::default())
}

/// As [`my_envelope_eval`], warm-starting iterative proxes from `ws`.
pub fn my_envelope_eval_ws(env: &MyEnvelope, x: &[f64], ws: &mut ProxWorkspace) -> Result<f64> {
    ensure_finite(x, "envelope argument")?;
    let mut p = vec![0.0; x.len()];
    env.inner.prox_into(x, env.lambda, &mut p, ws);
    Ok(envelope_from_prox(env.inner.as_ref(), env.lambda, x, &p))
}

pub(crate) fn envelope_from_prox(g: &dyn NonSmoothTerm, lambda: f64, x: &[f64], p: &[f64]) -> f64 {
    g.eval(p) + dist_sq(x, p) / (2.0 * lambda)
}

/// `(x - prox_g^lambda(x)) / lambda`.
pub fn my_envelope_grad(env: &MyEnvelope, x: &[f64]) -> Result<Vec<f64>> {
    my_envelope_grad_ws(env, x, &mut ProxWorkspace::default())
}

/// As [`my_envelope_grad`], warm-starting iterative proxes from `ws`.
pub fn my_envelope_grad_ws(
    env: &MyEnvelope,
    x: &[f64],
    ws: &mut ProxWorkspace,
) -> Result<Vec<f64>> {
    ensure_finite(x, "envelope argument")?;
    let mut p = vec![0.0; x.len()];
    env.inner.prox_into(x, env.lambda, &mut p, ws);
    Ok(x.iter()
        .zip(&p)
        .map(|(a, b)| (a - b) / env.lambda)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_env(lambda: f64) -> MyEnvelope {
        MyEnvelope::new(Arc::new(L1Norm), lambda).unwrap()
    }

    fn grid_envelope_abs(x: f64, lambda: f64) -> f64 {
        (0..=60_000)
            .map(|i| -3.0 + i as f64 * 1e-4)
            .map(|y| y.abs() + (x - y).powi(2) / (2.0 * lambda))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn envelope_of_zero_is_zero() {
        let env = MyEnvelope::new(Arc::new(Zero), 0.7).unwrap();
        assert_eq!(my_envelope_eval(&env, &[1.0, -2.0]).unwrap(), 0.0);
        assert_eq!(
            my_envelope_grad(&env, &[1.0, -2.0]).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn huber_values_match_grid_search() {
        for &(x, expected) in &[(0.5, 0.125), (2.0, 1.5)] {
            let oracle = grid_envelope_abs(x, 1.0);
            assert!((oracle - expected).abs() < 1e-7);
            let v = my_envelope_eval(&abs_env(1.0), &[x]).unwrap();
            assert!((v - expected).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn huber_gradient() {
        assert_eq!(my_envelope_grad(&abs_env(1.0), &[2.0]).unwrap(), vec![1.0]);
        assert_eq!(my_envelope_grad(&abs_env(1.0), &[0.0]).unwrap(), vec![0.0]);
        let h = 1e-6;
        let e = abs_env(1.0);
        let fd = (my_envelope_eval(&e, &[2.0 + h]).unwrap()
            - my_envelope_eval(&e, &[2.0 - h]).unwrap())
            / (2.0 * h);
        assert!((fd - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_argument_rejected() {
        assert!(matches!(
            my_envelope_eval(&abs_env(1.0), &[f64::NAN]),
            Err(Error::Input(_))
        ));
        assert!(matches!(
            my_envelope_grad(&abs_env(1.0), &[f64::INFINITY]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn closed_form_proxes() {
        assert_eq!(
            prox_l1(&[2.0, -0.5, 0.0], 1.0).unwrap(),
            vec![1.0, 0.0, 0.0]
        );
        assert_eq!(prox_l1(&[2.0, -0.5], 0.0).unwrap(), vec![2.0, -0.5]);
        assert!(prox_l1(&[1.0], -0.1).is_err());

        assert_eq!(prox_l2norm(&[3.0, 4.0], 5.0).unwrap(), vec![0.0, 0.0]);
        let p = prox_l2norm(&[3.0, 4.0], 1.0).unwrap();
        assert!((p[0] - 2.4).abs() < 1e-12 && (p[1] - 3.2).abs() < 1e-12);
        assert_eq!(prox_l2norm(&[0.0, 0.0], 2.0).unwrap(), vec![0.0, 0.0]);
        assert!(prox_l2norm(&[1.0], -1.0).is_err());

        assert_eq!(
            prox_box(&[-2.0, 0.5, 3.0], -1.0, 1.0).unwrap(),
            vec![-1.0, 0.5, 1.0]
        );
        assert_eq!(prox_box(&[0.2, -0.3], -1.0, 1.0).unwrap(), vec![0.2, -0.3]);
        assert!(prox_box(&[0.0], 1.0, -1.0).is_err());
    }

    #[test]
    fn block_soft_matches_ray_search() {
        // The minimiser lies on the ray t*x; search t on a fine grid.
        let x = [3.0, 4.0];
        let theta = 1.0;
        let best_t = (0..=100_000)
            .map(|i| i as f64 * 1e-5)
            .min_by(|a, b| {
                let obj = |t: f64| theta * 5.0 * t + 25.0 * (1.0 - t).powi(2) / 2.0;
                obj(*a).partial_cmp(&obj(*b)).unwrap()
            })
            .unwrap();
        let p = prox_l2norm(&x, theta).unwrap();
        assert!((p[0] - 3.0 * best_t).abs() < 1e-4);
        assert!((p[1] - 4.0 * best_t).abs() < 1e-4);
    }

    #[test]
    fn weighted_zero_is_identity_even_for_indicator() {
        let w = Weighted::new(Arc::new(BoxIndicator::new(0.0, 1.0).unwrap()), 0.0).unwrap();
        assert_eq!(w.eval(&[5.0]), 0.0);
        assert_eq!(w.prox(&[5.0], 1.0), vec![5.0]);
    }

    #[test]
    fn pointwise_convergence_is_monotone() {
        let x = [0.3];
        let mut prev = f64::INFINITY;
        for &lambda in &[1.0, 0.1, 0.01, 0.001] {
            let gap = (0.3 - my_envelope_eval(&abs_env(lambda), &x).unwrap()).abs();
            assert!(gap < prev);
            prev = gap;
        }
    }
}
