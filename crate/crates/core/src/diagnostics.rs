//! Autocorrelation, effective sample size, HPD thresholds and PSNR.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::CompositeModel;
use crate::image::ImageField;

/// Biased autocovariances `c_k = (1/n) sum (x_t - m)(x_{t+k} - m)` for all
/// lags, via a zero-padded FFT.
fn autocovariance(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = series
        .iter()
        .map(|&v| Complex64::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex64::default()))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex64::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    let scale = 1.0 / (size as f64 * n as f64);
    buf.iter().take(n).map(|v| v.re * scale).collect()
}

fn autocorrelation_all(series: &[f64]) -> Result<Vec<f64>> {
    let c = autocovariance(series);
    let c0 = c[0];
    let scale = series.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(c0 > 1e-28 * scale * scale) || !c0.is_finite() {
        return Err(Error::Input("series has degenerate variance".into()));
    }
    let mut r: Vec<f64> = c.iter().map(|v| v / c0).collect();
    r[0] = 1.0;
    Ok(r)
}

/// Autocorrelations at lags `0..=max_lag`; lag 0 is exactly 1.
pub fn acf(series: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag == 0 || series.len() <= max_lag {
        return Err(Error::Input(format!(
            "series of length {} is too short for lag {max_lag}",
            series.len()
        )));
    }
    let mut r = autocorrelation_all(series)?;
    r.truncate(max_lag + 1);
    Ok(r)
}

/// Integrated autocorrelation time with Geyer's initial monotone positive
/// sequence, floored at `1 / log10(n)`.
pub fn iact(series: &[f64]) -> Result<f64> {
    let n = series.len();
    if n < 4 {
        return Err(Error::Input(
            "series is too short for an IACT estimate".into(),
        ));
    }
    let r = autocorrelation_all(series)?;
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = r[2 * m] + r[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        m += 1;
    }
    let tau = -1.0 + 2.0 * sum;
    Ok(tau.max(1.0 / (n as f64).log10()))
}

/// `n / IACT`.
pub fn ess(series: &[f64]) -> Result<f64> {
    Ok(series.len() as f64 / iact(series)?)
}

/// Type-7 quantile (linear interpolation between order statistics) of a
/// sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HpdResult {
    pub alpha: f64,
    pub eta_alpha: f64,
    pub n_used: usize,
    pub quantile_convention: String,
}

/// `eta_alpha`, the `(1 - alpha)` quantile of the potential trace.
pub fn hpd_threshold(u_trace: &[f64], alpha: f64) -> Result<HpdResult> {
    Ok(hpd_thresholds(u_trace, &[alpha])?.remove(0))
}

/// Thresholds for several levels with a single sort.
pub fn hpd_thresholds(u_trace: &[f64], alphas: &[f64]) -> Result<Vec<HpdResult>> {
    if u_trace.is_empty() {
        return Err(Error::Input("potential trace is empty".into()));
    }
    if u_trace.iter().any(|v| v.is_nan()) {
        return Err(Error::Input("potential trace contains NaN".into()));
    }
    let mut sorted = u_trace.to_vec();
    sorted.sort_by(f64::total_cmp);
    alphas
        .iter()
        .map(|&alpha| {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Input(format!(
                    "alpha must lie in (0, 1), got {alpha}"
                )));
            }
            Ok(HpdResult {
                alpha,
                eta_alpha: quantile_sorted(&sorted, 1.0 - alpha),
                n_used: sorted.len(),
                quantile_convention: "type7-linear".into(),
            })
        })
        .collect()
}

/// `U(x) <= eta_alpha`.
pub fn hpd_membership(model: &CompositeModel, x: &ImageField, hpd: &HpdResult) -> Result<bool> {
    Ok(crate::forward::potential_eval(model, x)? <= hpd.eta_alpha)
}

/// `10 log10(peak^2 d / |x - ref|^2)`; `+inf` for identical images.
pub fn psnr(x: &ImageField, reference: &ImageField, peak: f64) -> Result<f64> {
    if !x.same_shape(reference) {
        return Err(Error::Input("PSNR images differ in shape".into()));
    }
    if !(peak > 0.0) {
        return Err(Error::Input("PSNR peak must be positive".into()));
    }
    let err: f64 = x
        .data
        .iter()
        .zip(&reference.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak * x.len() as f64 / err).log10())
}

/// Kolmogorov-Smirnov distance between the empirical CDF of `samples` and
/// `cdf`. Sorts `samples` in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &mut [f64], cdf: F) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let z = normals(n, seed);
        let s = (1.0 - rho * rho).sqrt();
        let mut x = Vec::with_capacity(n);
        let mut v = z[0];
        for zi in z {
            v = rho * v + s * zi;
            x.push(v);
        }
        x
    }

    fn direct_acf(x: &[f64], k: usize) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let c0: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
        let ck: f64 = x.iter().zip(&x[k..]).map(|(a, b)| (a - m) * (b - m)).sum();
        ck / c0
    }

    #[test]
    fn fft_acf_matches_direct_sum() {
        let x = ar1(1000, 0.5, 1);
        let r = acf(&x, 20).unwrap();
        assert_eq!(r[0], 1.0);
        for (k, rk) in r.iter().enumerate().skip(1) {
            assert!((rk - direct_acf(&x, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn iid_acf_is_small() {
        for seed in 0..3 {
            let r = acf(&normals(100_000, seed), 50).unwrap();
            assert!(r[1..].iter().all(|v| v.abs() < 0.02));
            let e = ess(&normals(100_000, seed + 10)).unwrap() / 100_000.0;
            assert!((0.9..=1.1).contains(&e), "{e}");
        }
    }

    #[test]
    fn ar1_acf_and_ess() {
        let x = ar1(1_000_000, 0.9, 7);
        let r = acf(&x, 20).unwrap();
        for (k, v) in r.iter().enumerate() {
            assert!((v - 0.9f64.powi(k as i32)).abs() < 0.03);
        }
        let ratio = ess(&x).unwrap() / 1e6;
        assert!((ratio / (0.1 / 1.9) - 1.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn alternating_series_has_positive_ess() {
        let x: Vec<f64> = (0..1000)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let e = ess(&x).unwrap();
        assert!(e > 0.0 && e.is_finite());
    }

    #[test]
    fn trend_and_constant_series() {
        let trend: Vec<f64> = (0..500).map(|i| i as f64).collect();
        assert!(acf(&trend, 10).unwrap().iter().all(|v| v.is_finite()));
        assert!(acf(&[2.0; 100], 5).is_err());
    }

    #[test]
    fn type7_quantile() {
        let u: Vec<f64> = (1..=100).map(f64::from).collect();
        let h = hpd_threshold(&u, 0.1).unwrap();
        assert!((h.eta_alpha - 90.1).abs() < 1e-12);
        assert!((hpd_threshold(&u, 1.0 - 1e-12).unwrap().eta_alpha - 1.0).abs() < 1e-6);
        assert!((hpd_threshold(&u, 1e-12).unwrap().eta_alpha - 100.0).abs() < 1e-6);
        assert!(hpd_threshold(&[], 0.1).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = ImageField::filled(4, 4, 10.0);
        assert_eq!(psnr(&a, &a, 255.0).unwrap(), f64::INFINITY);
        let b = ImageField::filled(4, 4, 11.0);
        let p1 = psnr(&b, &a, 255.0).unwrap();
        assert!((p1 - 48.1308).abs() < 1e-4);
        let c = ImageField::filled(4, 4, 12.0);
        let p2 = psnr(&c, &a, 255.0).unwrap();
        assert!((p1 - p2 - 20.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let mut s: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_statistic(&mut s, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.0005).abs() < 1e-12);
    }
}
