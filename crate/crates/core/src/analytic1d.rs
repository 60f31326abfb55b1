//! Closed-form 1D targets (Laplace and uniform) and their Moreau-Yosida
//! regularisations, used as ground truth for envelopes and samplers.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    Laplace,
    Uniform,
}

/// A 1D density with its closed-form regularisation and a quadrature grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analytic1DTarget {
    pub kind: TargetKind,
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl Analytic1DTarget {
    /// `[-40, 40]` for Laplace, `[-1 - 20 sqrt(lambda), 1 + 20 sqrt(lambda)]`
    /// for uniform, with `2e5` points.
    pub fn with_default_grid(kind: TargetKind, lambda: f64) -> Self {
        let (lo, hi) = match kind {
            TargetKind::Laplace => (-40.0, 40.0),
            TargetKind::Uniform => {
                let r = 1.0 + 20.0 * lambda.sqrt();
                (-r, r)
            }
        };
        Self {
            kind,
            lo,
            hi,
            n_points: 200_000,
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match self.kind {
            TargetKind::Laplace => 0.5 * (-x.abs()).exp(),
            TargetKind::Uniform => {
                if x.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    pub fn regularized_density(&self, x: f64, lambda: f64) -> f64 {
        match self.kind {
            TargetKind::Laplace => laplace_pilambda(x, lambda),
            TargetKind::Uniform => uniform_pilambda(x, lambda),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self.kind {
            TargetKind::Laplace => {
                if x < 0.0 {
                    0.5 * x.exp()
                } else {
                    1.0 - 0.5 * (-x).exp()
                }
            }
            TargetKind::Uniform => ((x + 1.0) / 2.0).clamp(0.0, 1.0),
        }
    }

    pub fn regularized_cdf(&self, x: f64, lambda: f64) -> f64 {
        match self.kind {
            TargetKind::Laplace => laplace_pilambda_cdf(x, lambda),
            TargetKind::Uniform => uniform_pilambda_cdf(x, lambda),
        }
    }

    /// Mass of `pi` plus mass of `pi^lambda` outside `[lo, hi]`. Both
    /// densities are even, so the upper tail is read off the lower CDF.
    pub fn tail_mass(&self, lambda: f64) -> f64 {
        let a = self.cdf(self.lo) + self.cdf(-self.hi);
        let b = self.regularized_cdf(self.lo, lambda) + self.regularized_cdf(-self.hi, lambda);
        a + b
    }

    fn breakpoints(&self, lambda: f64) -> Vec<f64> {
        match self.kind {
            TargetKind::Laplace => vec![-lambda, 0.0, lambda],
            TargetKind::Uniform => vec![-1.0, 1.0],
        }
    }
}

fn laplace_normaliser(lambda: f64) -> f64 {
    2.0 * ((-lambda / 2.0).exp() + (2.0 * PI * lambda).sqrt() * (normal_cdf(lambda.sqrt()) - 0.5))
}

/// The regularised Laplace density: a Huber-type exponent over its
/// normalising constant.
pub fn laplace_pilambda(x: f64, lambda: f64) -> f64 {
    let a = x.abs();
    let e = if a >= lambda {
        lambda / 2.0 - a
    } else {
        -x * x / (2.0 * lambda)
    };
    e.exp() / laplace_normaliser(lambda)
}

fn laplace_pilambda_cdf(x: f64, lambda: f64) -> f64 {
    let z = laplace_normaliser(lambda);
    let s = lambda.sqrt();
    let lower = |t: f64| -> f64 {
        // Mass of (-inf, t] for t <= 0.
        if t <= -lambda {
            (lambda / 2.0 + t).exp() / z
        } else {
            ((-lambda / 2.0).exp()
                + (2.0 * PI * lambda).sqrt() * (normal_cdf(t / s) - normal_cdf(-s)))
                / z
        }
    };
    if x <= 0.0 {
        lower(x)
    } else {
        1.0 - lower(-x)
    }
}

/// The regularised uniform density on `[-1, 1]`.
pub fn uniform_pilambda(x: f64, lambda: f64) -> f64 {
    let m = (x.abs() - 1.0).max(0.0);
    (-m * m / (2.0 * lambda)).exp() / (2.0 + (2.0 * PI * lambda).sqrt())
}

fn uniform_pilambda_cdf(x: f64, lambda: f64) -> f64 {
    let z = 2.0 + (2.0 * PI * lambda).sqrt();
    let r = (2.0 * PI * lambda).sqrt();
    let lower = |t: f64| -> f64 {
        if t <= -1.0 {
            r * normal_cdf((t + 1.0) / lambda.sqrt()) / z
        } else {
            (r / 2.0 + (t + 1.0)) / z
        }
    };
    if x <= 0.0 {
        lower(x)
    } else {
        1.0 - lower(-x)
    }
}

/// Composite Simpson rule with `n` (rounded up to even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// `int |f|` over `[lo, hi]`, splitting at `breaks` and at sign changes of
/// `f` so each Simpson panel sees a smooth integrand.
fn integrate_abs<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, breaks: &[f64], n: usize) -> f64 {
    let mut knots = vec![lo];
    knots.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    knots.push(hi);
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let span = hi - lo;
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let m = ((n as f64 * (b - a) / span).ceil() as usize).max(256);
        // Locate sign changes on the panel grid.
        let h = (b - a) / m as f64;
        let mut cuts = vec![a];
        let mut prev = f(a + 0.5 * h * 1e-6);
        for i in 1..=m {
            let x = if i == m {
                b - 0.5 * h * 1e-6
            } else {
                a + i as f64 * h
            };
            let cur = f(x);
            if prev * cur < 0.0 {
                let (mut l, mut r) = (x - h, x);
                for _ in 0..200 {
                    let mid = 0.5 * (l + r);
                    if f(mid) * prev > 0.0 {
                        l = mid;
                    } else {
                        r = mid;
                    }
                }
                cuts.push(0.5 * (l + r));
            }
            prev = cur;
        }
        cuts.push(b);
        for c in cuts.windows(2) {
            let k = ((m as f64 * (c[1] - c[0]) / (b - a)).ceil() as usize).max(64);
            total += simpson(&f, c[0], c[1], k).abs();
        }
    }
    total
}

/// `(1/2) int |pi - pi^lambda|`, the total variation distance between the
/// two probability measures.
pub fn tv_distance_1d(target: &Analytic1DTarget, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Input(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !(target.lo < target.hi) || target.n_points < 2 {
        return Err(Error::Config("quadrature grid is empty".into()));
    }
    if target.kind == TargetKind::Uniform && (target.lo > -1.0 || target.hi < 1.0) {
        return Err(Error::Config(
            "quadrature grid does not cover [-1, 1]".into(),
        ));
    }
    let tail = target.tail_mass(lambda);
    if tail > 1e-10 {
        return Err(Error::Config(format!(
            "quadrature grid [{}, {}] leaves mass {tail:.3e} outside",
            target.lo, target.hi
        )));
    }
    let f = |x: f64| target.density(x) - target.regularized_density(x, lambda);
    Ok(0.5
        * integrate_abs(
            f,
            target.lo,
            target.hi,
            &target.breakpoints(lambda),
            target.n_points,
        ))
}

/// `int pi^lambda` on the target's grid.
pub fn regularized_mass(target: &Analytic1DTarget, lambda: f64) -> f64 {
    let mut knots = vec![target.lo];
    knots.extend(
        target
            .breakpoints(lambda)
            .into_iter()
            .filter(|&b| b > target.lo && b < target.hi),
    );
    knots.push(target.hi);
    let span = target.hi - target.lo;
    knots
        .windows(2)
        .map(|w| {
            let m = ((target.n_points as f64 * (w[1] - w[0]) / span).ceil() as usize).max(256);
            simpson(|x| target.regularized_density(x, lambda), w[0], w[1], m)
        })
        .sum()
}

/// `(x, pi(x), pi^lambda(x))` on `n` equispaced points of `[lo, hi]`.
pub fn density_curve(kind: TargetKind, lambda: f64, lo: f64, hi: f64, n: usize) -> Vec<[f64; 3]> {
    let t = Analytic1DTarget::with_default_grid(kind, lambda);
    (0..n)
        .map(|i| {
            let x = if n > 1 {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            } else {
                lo
            };
            [x, t.density(x), t.regularized_density(x, lambda)]
        })
        .collect()
}

/// `(lambda, TV)` pairs for the given `lambdas`, each on its default grid.
pub fn tv_curve(kind: TargetKind, lambdas: &[f64]) -> Result<Vec<[f64; 2]>> {
    lambdas
        .iter()
        .map(|&l| {
            let t = Analytic1DTarget::with_default_grid(kind, l);
            Ok([l, tv_distance_1d(&t, l)?])
        })
        .collect()
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_values() {
        assert!((laplace_pilambda(0.0, 1.0) - 0.3420).abs() < 5e-5);
        let quad = simpson(|t| uniform_pilambda(t, 0.01), -3.0, 3.0, 200_000);
        assert!((quad - 1.0).abs() < 1e-8);
        assert!((uniform_pilambda(0.0, 0.01) - 1.0 / (2.0 + (0.02 * PI).sqrt())).abs() < 1e-15);
        assert!((uniform_pilambda(0.0, 0.01) - 0.4443).abs() < 5e-5);
        assert!((laplace_pilambda(0.0, 1e-8) - 0.5).abs() < 1e-4);
        for &x in &[0.3, 1.7, 5.0] {
            assert_eq!(laplace_pilambda(x, 0.4), laplace_pilambda(-x, 0.4));
        }
        let c = uniform_pilambda(0.0, 0.3);
        assert_eq!(uniform_pilambda(0.99, 0.3), c);
    }

    #[test]
    fn densities_integrate_to_one() {
        for &l in &[1.0, 0.1, 0.01, 0.001] {
            for kind in [TargetKind::Laplace, TargetKind::Uniform] {
                let t = Analytic1DTarget::with_default_grid(kind, l);
                assert!((regularized_mass(&t, l) - 1.0).abs() < 1e-8, "{kind:?} {l}");
            }
        }
    }

    #[test]
    fn cdfs_match_quadrature() {
        for kind in [TargetKind::Laplace, TargetKind::Uniform] {
            let l = 0.3;
            let t = Analytic1DTarget::with_default_grid(kind, l);
            for &x in &[-2.0, -0.2, 0.1, 1.5] {
                let lo = t.lo;
                let knots: Vec<f64> = [lo, -1.0, -l, 0.0, l, 1.0, x]
                    .into_iter()
                    .filter(|&k| k >= lo && k <= x)
                    .collect::<Vec<_>>();
                let mut ks = knots.clone();
                ks.sort_by(f64::total_cmp);
                ks.dedup();
                let q: f64 = ks
                    .windows(2)
                    .map(|w| simpson(|s| t.regularized_density(s, l), w[0], w[1], 20_000))
                    .sum();
                assert!((q - t.regularized_cdf(x, l)).abs() < 1e-9, "{kind:?} {x}");
            }
        }
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let mut t = Analytic1DTarget::with_default_grid(TargetKind::Laplace, 0.1);
        t.lo = -5.0;
        t.hi = 5.0;
        assert!(matches!(tv_distance_1d(&t, 0.1), Err(Error::Config(_))));
    }

    #[test]
    fn slope_of_power_law() {
        let xs = log_grid(1e-3, 1e-1, 5);
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((loglog_slope(&xs, &ys) - 2.0).abs() < 1e-12);
    }
}
