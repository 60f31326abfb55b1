//! wasm-bindgen entry points for the static page in `www/`. Each export is a
//! thin wrapper over a plain function so the numerics are tested natively.

use std::sync::Arc;

use wasm_bindgen::prelude::*;

use myula::analytic1d::{self, log_grid, TargetKind};
use myula::forward::ZeroSmooth;
use myula::prox::{BoxIndicator, L1Norm, SharedTerm};
use myula::{run_myula, CompositeModel, SamplerConfig};

/// Upper bound on chain length so a page cannot lock up the tab.
pub const MAX_ITER: usize = 5_000_000;

fn target(name: &str) -> Result<TargetKind, String> {
    match name {
        "laplace" => Ok(TargetKind::Laplace),
        "uniform" => Ok(TargetKind::Uniform),
        other => Err(format!(
            "unknown target {other:?}, expected laplace or uniform"
        )),
    }
}

/// Rows `(x, pi, pi_lambda)` flattened.
pub fn density_rows(
    name: &str,
    lambda: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<f64>, String> {
    let kind = target(name)?;
    if !(lambda > 0.0) || !(hi > lo) || n < 2 {
        return Err("need lambda > 0, hi > lo and at least two points".into());
    }
    Ok(analytic1d::density_curve(kind, lambda, lo, hi, n).concat())
}

/// Rows `(lambda, tv)` on a log grid, flattened.
pub fn tv_rows(name: &str, lambda_min: f64, lambda_max: f64, n: usize) -> Result<Vec<f64>, String> {
    let kind = target(name)?;
    if !(lambda_min > 0.0 && lambda_max > lambda_min) || n < 2 {
        return Err("need 0 < lambda_min < lambda_max and at least two points".into());
    }
    let curve = analytic1d::tv_curve(kind, &log_grid(lambda_min, lambda_max, n))
        .map_err(|e| e.to_string())?;
    Ok(curve.concat())
}

fn model(kind: TargetKind) -> Result<CompositeModel, String> {
    let prior: SharedTerm = match kind {
        TargetKind::Laplace => Arc::new(L1Norm),
        TargetKind::Uniform => Arc::new(BoxIndicator::new(-1.0, 1.0).map_err(|e| e.to_string())?),
    };
    CompositeModel::new(Arc::new(ZeroSmooth(1)), prior, 1.0, 1.0, 1, 1, "demo")
        .map_err(|e| e.to_string())
}

/// Density histogram of a MYULA chain on `bins` equal cells of `[lo, hi]`.
/// Mass outside the window is dropped, so the bars integrate to the
/// fraction of samples inside it.
#[allow(clippy::too_many_arguments)]
pub fn chain_histogram(
    name: &str,
    lambda: f64,
    gamma: f64,
    n_iter: usize,
    seed: u64,
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<f64>, String> {
    let kind = target(name)?;
    if n_iter > MAX_ITER {
        return Err(format!("at most {MAX_ITER} iterations"));
    }
    if bins == 0 || !(hi > lo) {
        return Err("need at least one bin and hi > lo".into());
    }
    let m = model(kind)?;
    let mut cfg = SamplerConfig::new(lambda, gamma, n_iter, seed);
    cfg.record_u_trace = false;
    cfg.sample_stride = Some(1);
    let out = run_myula(&m, &cfg, &[0.0]).map_err(|e| e.to_string())?;
    let samples = out.samples.expect("stride set").data;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0.0; bins];
    for x in &samples {
        if *x >= lo && *x < hi {
            counts[(((x - lo) / width) as usize).min(bins - 1)] += 1.0;
        }
    }
    let scale = 1.0 / (samples.len().max(1) as f64 * width);
    Ok(counts.into_iter().map(|c| c * scale).collect())
}

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = densityCurve)]
pub fn density_curve(
    name: &str,
    lambda: f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    js(density_rows(name, lambda, lo, hi, n))
}

#[wasm_bindgen(js_name = tvCurve)]
pub fn tv_curve(
    name: &str,
    lambda_min: f64,
    lambda_max: f64,
    n: usize,
) -> Result<Vec<f64>, JsError> {
    js(tv_rows(name, lambda_min, lambda_max, n))
}

#[wasm_bindgen(js_name = myulaHistogram)]
#[allow(clippy::too_many_arguments)]
pub fn myula_histogram(
    name: &str,
    lambda: f64,
    gamma: f64,
    n_iter: usize,
    seed: u64,
    bins: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<f64>, JsError> {
    js(chain_histogram(
        name, lambda, gamma, n_iter, seed, bins, lo, hi,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_rows_are_triples() {
        let r = density_rows("laplace", 0.1, -3.0, 3.0, 61).unwrap();
        assert_eq!(r.len(), 183);
        // x = 0 sits in the middle row
        let mid = &r[90..93];
        assert!(mid[0].abs() < 1e-12);
        assert!((mid[1] - 0.5).abs() < 1e-12);
        assert!(mid[2] < mid[1]);
        assert!(density_rows("cauchy", 0.1, -1.0, 1.0, 3).is_err());
        assert!(density_rows("laplace", 0.0, -1.0, 1.0, 3).is_err());
    }

    #[test]
    fn tv_decreases_with_lambda() {
        let r = tv_rows("uniform", 1e-3, 1.0, 7).unwrap();
        let tv: Vec<f64> = r.chunks(2).map(|p| p[1]).collect();
        assert!(tv.windows(2).all(|w| w[0] < w[1]));
        assert!(tv_rows("uniform", 1.0, 0.1, 7).is_err());
    }

    #[test]
    fn histogram_tracks_the_regularised_density() {
        let (lo, hi, bins, lambda) = (-4.0, 4.0, 40, 0.05);
        let h = chain_histogram("laplace", lambda, 0.01, 2_000_000, 7, bins, lo, hi).unwrap();
        let width = (hi - lo) / bins as f64;
        let mass: f64 = h.iter().sum::<f64>() * width;
        assert!((mass - 1.0).abs() < 0.03, "{mass}");
        // central mass on [-0.6, 0.6] (bins 17..23) against pi_lambda
        let t = analytic1d::Analytic1DTarget::with_default_grid(TargetKind::Laplace, lambda);
        let exact = t.regularized_cdf(0.6, lambda) - t.regularized_cdf(-0.6, lambda);
        let got: f64 = h[17..23].iter().sum::<f64>() * width;
        assert!((got - exact).abs() < 0.05 * exact, "{got} vs {exact}");
        assert_eq!(
            h,
            chain_histogram("laplace", lambda, 0.01, 2_000_000, 7, bins, lo, hi).unwrap()
        );
    }

    #[test]
    fn chains_are_bounded_and_validated() {
        assert!(chain_histogram("laplace", 0.1, 0.05, MAX_ITER + 1, 1, 10, -1.0, 1.0).is_err());
        assert!(chain_histogram("laplace", 0.1, 0.5, 1000, 1, 10, -1.0, 1.0).is_err());
        assert!(chain_histogram("uniform", 0.1, 0.05, 1000, 1, 0, -1.0, 1.0).is_err());
    }
}
