use super::ChainOutput;
use crate::error::{Error, Result};
use crate::forward::CompositeModel;
use crate::prox::envelope_from_prox;

/// Self-normalised weights `w_k ∝ exp(g^lambda(X_k) - g(X_k))` that correct
/// MYULA output toward the non-regularised target.
#[derive(Debug, Clone)]
pub struct ImportanceWeights {
    pub weights: Vec<f64>,
    pub log_weights_raw: Vec<f64>,
}

impl ImportanceWeights {
    pub fn from_log(log_weights_raw: Vec<f64>) -> Result<Self> {
        if log_weights_raw.is_empty() {
            return Err(Error::Config("no samples to weight".into()));
        }
        let m = log_weights_raw
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::Config(
                "importance log-weights are not finite".into(),
            ));
        }
        let mut weights: Vec<f64> = log_weights_raw.iter().map(|l| (l - m).exp()).collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        Ok(Self {
            weights,
            log_weights_raw,
        })
    }

    /// `sum_k w_k h(X_k)` for precomputed `h(X_k)`.
    pub fn weighted_mean(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.weights.len() {
            return Err(Error::Input(format!(
                "{} values for {} weights",
                values.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(values).map(|(w, v)| w * v).sum())
    }

    /// `1 / sum w_k^2`.
    pub fn effective_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Weights for the stored samples of `chain`, or for every kept iterate
/// when the chain recorded `g^lambda - g` directly.
pub fn importance_reweight(
    chain: &ChainOutput,
    model: &CompositeModel,
    lambda: f64,
) -> Result<ImportanceWeights> {
    if let Some(trace) = &chain.gbar_trace {
        return ImportanceWeights::from_log(trace.clone());
    }
    let samples = chain.samples.as_ref().ok_or_else(|| {
        Error::Config("chain stored neither samples nor envelope gaps; cannot reweight".into())
    })?;
    let g = model.nonsmooth.as_ref();
    let raw = samples
        .iter()
        .map(|x| {
            let p = g.prox(x, lambda);
            (envelope_from_prox(g, lambda, x, &p) - g.eval(x)).min(0.0)
        })
        .collect();
    ImportanceWeights::from_log(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::tests::{gauss_model, laplace_model};
    use crate::samplers::{run_myula, SamplerConfig};

    #[test]
    fn zero_prior_gives_uniform_weights() {
        let m = gauss_model();
        let mut cfg = SamplerConfig::new(1.0, 0.1, 1000, 1);
        cfg.sample_stride = Some(1);
        let out = run_myula(&m, &cfg, &[0.0]).unwrap();
        let w = importance_reweight(&out, &m, 1.0).unwrap();
        let n = out.kept_count as f64;
        assert!(w.weights.iter().all(|&v| (v - 1.0 / n).abs() < 1e-15));
    }

    #[test]
    fn huber_tails_give_equal_raw_weights() {
        let m = laplace_model();
        let mut cfg = SamplerConfig::new(0.5, 0.1, 4000, 2);
        cfg.sample_stride = Some(1);
        let mut out = run_myula(&m, &cfg, &[0.0]).unwrap();
        let block = out.samples.as_mut().unwrap();
        // Keep only samples in the linear region of the envelope.
        block.data.retain(|v| v.abs() >= 0.5);
        let w = importance_reweight(&out, &m, 0.5).unwrap();
        assert!(w.log_weights_raw.iter().all(|&l| (l + 0.25).abs() < 1e-12));
        let s: f64 = w.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_samples_are_a_config_error() {
        let m = laplace_model();
        let out = run_myula(&m, &SamplerConfig::new(0.5, 0.1, 100, 2), &[0.0]).unwrap();
        assert!(matches!(
            importance_reweight(&out, &m, 0.5),
            Err(Error::Config(_))
        ));
    }
}
