//! Bayesian model selection with the truncated harmonic-mean estimator.

use serde::{Deserialize, Serialize};

use crate::diagnostics::hpd_thresholds;
use crate::error::{Error, Result};
use crate::forward::{CompositeModel, ZeroSmooth};
use crate::prox::SharedTerm;
use crate::samplers::{run_myula_with, ChainOutput, SamplerConfig};

/// Union of per-model HPD sets `{x : U_j(x) <= eta_j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub alpha: f64,
    pub thresholds: Vec<f64>,
}

impl Region {
    /// `u[j]` is `U_j(x)` for the sample under test.
    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter().zip(&self.thresholds).any(|(v, eta)| v <= eta)
    }
}

/// Per-model thresholds `eta_{j, alpha}`, each from that model's own trace.
pub fn build_region(u_traces: &[&[f64]], alpha: f64) -> Result<Region> {
    if u_traces.is_empty() {
        return Err(Error::Input("no traces to build a region from".into()));
    }
    let thresholds = u_traces
        .iter()
        .map(|t| Ok(hpd_thresholds(t, &[alpha])?[0].eta_alpha))
        .collect::<Result<Vec<_>>>()?;
    Ok(Region { alpha, thresholds })
}

/// Streaming `log sum_k 1_A(X_k) exp(-log f(X_k))`.
#[derive(Debug, Clone, Copy)]
pub struct HmeAccumulator {
    max: f64,
    scaled: f64,
    n_in: usize,
    n_total: usize,
}

impl Default for HmeAccumulator {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
            n_in: 0,
            n_total: 0,
        }
    }
}

impl HmeAccumulator {
    pub fn push(&mut self, log_joint: f64, in_region: bool) {
        self.n_total += 1;
        if !in_region {
            return;
        }
        self.n_in += 1;
        let v = -log_joint;
        if v > self.max {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.scaled += (v - self.max).exp();
        }
    }

    pub fn finish(self, region: Option<Region>) -> Result<TruncatedHme> {
        if self.n_in == 0 {
            return Err(Error::EstimatorUndefined(format!(
                "none of {} samples fell in the truncation region; enlarge it (smaller alpha)",
                self.n_total
            )));
        }
        Ok(TruncatedHme {
            log_sum: self.max + self.scaled.ln(),
            n_in: self.n_in,
            n_total: self.n_total,
            region,
        })
    }
}

/// `I_A = sum_k 1_A(X_k) / f(X_k, y)`, kept in log form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedHme {
    pub log_sum: f64,
    pub n_in: usize,
    pub n_total: usize,
    pub region: Option<Region>,
}

impl TruncatedHme {
    pub fn i_hat(&self) -> f64 {
        self.log_sum.exp()
    }

    /// `log (I_A / n)`: the per-sample estimate of `Vol(A) / Z`, comparable
    /// across chains of different lengths.
    pub fn log_mean(&self) -> f64 {
        self.log_sum - (self.n_total as f64).ln()
    }
}

pub fn truncated_hme<S, I, L, R>(samples: I, log_joint: L, region: R) -> Result<TruncatedHme>
where
    I: IntoIterator<Item = S>,
    L: Fn(&S) -> f64,
    R: Fn(&S) -> bool,
{
    let mut acc = HmeAccumulator::default();
    for s in samples {
        let inside = region(&s);
        acc.push(if inside { log_joint(&s) } else { 0.0 }, inside);
    }
    acc.finish(None)
}

fn check_same_region(a: &TruncatedHme, b: &TruncatedHme) -> Result<()> {
    if a.region != b.region {
        return Err(Error::Config(
            "evidence estimates come from different truncation regions".into(),
        ));
    }
    Ok(())
}

/// `log B_{i,j} = log(Z_j / Z_i) + log I_j - log I_i`, estimating
/// `p(y | M_i) / p(y | M_j)` where `Z` are the normalisers of the joints.
pub fn log_bayes_factor(
    e_i: &TruncatedHme,
    e_j: &TruncatedHme,
    log_norm_ratio: f64,
) -> Result<f64> {
    check_same_region(e_i, e_j)?;
    Ok(log_norm_ratio + e_j.log_mean() - e_i.log_mean())
}

pub fn bayes_factor(e_i: &TruncatedHme, e_j: &TruncatedHme, norm_ratio: f64) -> Result<f64> {
    if !(norm_ratio > 0.0) {
        return Err(Error::Input(format!(
            "normalisation ratio must be positive, got {norm_ratio}"
        )));
    }
    Ok(log_bayes_factor(e_i, e_j, norm_ratio.ln())?.exp())
}

/// Posterior model probabilities under a uniform model prior.
pub fn posterior_model_probs(evidences: &[f64]) -> Result<Vec<f64>> {
    if evidences.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::Input("evidences must be positive".into()));
    }
    let logs: Vec<f64> = evidences.iter().map(|e| e.ln()).collect();
    posterior_model_probs_log(&logs)
}

pub fn posterior_model_probs_log(log_evidences: &[f64]) -> Result<Vec<f64>> {
    if log_evidences.is_empty()
        || log_evidences
            .iter()
            .any(|v| v.is_nan() || *v == f64::INFINITY)
    {
        return Err(Error::Input("log evidences must be finite or -inf".into()));
    }
    let m = log_evidences
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Input("all evidences vanish".into()));
    }
    let w: Vec<f64> = log_evidences.iter().map(|v| (v - m).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// A positive number carried as its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScalar(pub f64);

impl LogScalar {
    pub fn ln(self) -> f64 {
        self.0
    }

    /// May overflow to `inf`; use [`LogScalar::ln`] for arithmetic.
    pub fn value(self) -> f64 {
        self.0.exp()
    }
}

/// `(lambda1 / lambda2)^d`, the normaliser ratio of `g(lambda_i x)`.
pub fn norm_ratio_scaling(lambda1: f64, lambda2: f64, d: usize) -> Result<LogScalar> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) || d == 0 {
        return Err(Error::Input("scales must be positive and d >= 1".into()));
    }
    Ok(LogScalar(d as f64 * (lambda1.ln() - lambda2.ln())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRatioOptions {
    pub dim: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub thin: usize,
    pub alpha: f64,
    pub seed: u64,
    pub batches: usize,
}

impl Default for NormRatioOptions {
    fn default() -> Self {
        Self {
            dim: 1,
            lambda: 0.01,
            gamma: 0.005,
            thin: 10,
            alpha: 0.5,
            seed: 1,
            batches: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloRatio {
    pub ratio: f64,
    pub std_error: f64,
}

/// Estimates `int e^{-g2} / int e^{-g1}`.
///
/// One MYULA chain targets each `e^{-g_i}`; both are truncated to the union
/// of their HPD sets, and the ratio of the two harmonic-mean estimates gives
/// the ratio of normalisers. The standard error is a delete-one-batch
/// jackknife.
pub fn norm_ratio_monte_carlo(
    g1: SharedTerm,
    g2: SharedTerm,
    sampler_budget: usize,
    opts: &NormRatioOptions,
) -> Result<MonteCarloRatio> {
    let d = opts.dim;
    let terms = [g1, g2];
    let models = terms
        .iter()
        .enumerate()
        .map(|(i, g)| {
            CompositeModel::new(
                std::sync::Arc::new(ZeroSmooth(d)),
                g.clone(),
                1.0,
                1.0,
                d,
                1,
                format!("g{}", i + 1),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cfg = SamplerConfig::new(opts.lambda, opts.gamma, sampler_budget, opts.seed);
    cfg.thin = opts.thin.max(1);
    cfg.record_u_trace = false;
    // traces[j][i] = g_i at the kept samples of the chain targeting e^{-g_j}.
    let mut traces: Vec<[Vec<f64>; 2]> = Vec::with_capacity(2);
    for (j, model) in models.iter().enumerate() {
        let mut c = cfg.clone();
        c.seed = opts.seed.wrapping_add(j as u64);
        let mut local = [Vec::new(), Vec::new()];
        run_myula_with(model, &c, &vec![0.0; d], |s| {
            local[0].push(terms[0].eval(s.x));
            local[1].push(terms[1].eval(s.x));
        })?;
        traces.push(local);
    }
    let region = build_region(&[&traces[0][0], &traces[1][1]], opts.alpha)?;
    // Contribution of each kept sample: log(1_A / e^{-g_j}) = g_j, or None.
    let contrib: Vec<Vec<Option<f64>>> = (0..2)
        .map(|j| {
            (0..traces[j][0].len())
                .map(|k| {
                    let u = [traces[j][0][k], traces[j][1][k]];
                    region.contains(&u).then_some(u[j])
                })
                .collect()
        })
        .collect();
    let log_ratio_from = |skip: Option<(usize, usize)>| -> Result<f64> {
        let mut est = [0.0; 2];
        for j in 0..2 {
            let mut acc = HmeAccumulator::default();
            for (k, c) in contrib[j].iter().enumerate() {
                if let Some((lo, hi)) = skip {
                    let n = contrib[j].len();
                    if k >= lo * n / hi && k < (lo + 1) * n / hi {
                        continue;
                    }
                }
                match c {
                    Some(v) => acc.push(-v, true),
                    None => acc.push(0.0, false),
                }
            }
            est[j] = acc.finish(Some(region.clone()))?.log_mean();
        }
        // Vol(A)/Z_j estimated by est[j]; Z2/Z1 = est[0]/est[1].
        Ok(est[0] - est[1])
    };
    let full = log_ratio_from(None)?;
    let b = opts.batches.max(2);
    let jack = (0..b)
        .map(|i| log_ratio_from(Some((i, b))).map(f64::exp))
        .collect::<Result<Vec<_>>>()?;
    let mean = jack.iter().sum::<f64>() / b as f64;
    let var = jack.iter().map(|r| (r - mean).powi(2)).sum::<f64>() * (b - 1) as f64 / b as f64;
    Ok(MonteCarloRatio {
        ratio: full.exp(),
        std_error: var.sqrt(),
    })
}

/// Potentials of every model evaluated on the kept samples of one chain.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CrossPotentials {
    /// `u[k][i] = U_i(X_k)` for the k-th recorded sample.
    pub u: Vec<Vec<f64>>,
    /// Index of the model the chain targets.
    pub owner: usize,
}

impl CrossPotentials {
    pub fn own_trace(&self) -> Vec<f64> {
        self.u.iter().map(|r| r[self.owner]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvidence {
    pub label: String,
    /// `log(I_A / n)`.
    pub log_i_hat: f64,
    pub n_in_region: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub alpha: f64,
    pub posterior_probs: Vec<f64>,
    pub n_in_region: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    Equal,
    ExplicitRatio,
    ScalingPower,
    MonteCarloRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub per_model: Vec<ModelEvidence>,
    pub region: Region,
    /// `log_bayes_factors[i][j] = log B_{i,j}`.
    pub log_bayes_factors: Vec<Vec<f64>>,
    pub bayes_factors: Vec<Vec<f64>>,
    pub posterior_probs: Vec<f64>,
    pub normalization_mode: NormalizationMode,
    pub seeds: Vec<u64>,
    pub sensitivity: Vec<SensitivityRow>,
}

impl EvidenceReport {
    pub fn best_model(&self) -> usize {
        (0..self.posterior_probs.len())
            .max_by(|&a, &b| self.posterior_probs[a].total_cmp(&self.posterior_probs[b]))
            .unwrap_or(0)
    }
}

fn hme_for_region(chains: &[CrossPotentials], region: &Region) -> Result<Vec<TruncatedHme>> {
    chains
        .iter()
        .map(|c| {
            let mut acc = HmeAccumulator::default();
            for row in &c.u {
                let inside = region.contains(row);
                // log f_j = -U_j up to a constant shared by all models.
                acc.push(if inside { -row[c.owner] } else { 0.0 }, inside);
            }
            acc.finish(Some(region.clone()))
        })
        .collect()
}

/// Evidence for models that share one (possibly improper) prior: the prior
/// normalisers cancel, so Bayes factors are ratios of truncated HMEs on a
/// common region. `chains[j]` must come from a chain targeting `models[j]`.
pub fn improper_prior_evidence(
    models: &[CompositeModel],
    chains: &[CrossPotentials],
    alpha: f64,
    sensitivity_alphas: &[f64],
    seeds: &[u64],
) -> Result<EvidenceReport> {
    let k = models.len();
    if k == 0 || chains.len() != k {
        return Err(Error::Config(format!(
            "{} models but {} chains",
            k,
            chains.len()
        )));
    }
    if let Some(m) = models
        .iter()
        .find(|m| m.prior_key() != models[0].prior_key())
    {
        return Err(Error::Config(format!(
            "model '{}' uses prior {} but '{}' uses {}; evidence needs a shared prior",
            m.label,
            m.prior_key(),
            models[0].label,
            models[0].prior_key()
        )));
    }
    for (j, c) in chains.iter().enumerate() {
        if c.owner != j || c.u.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!(
                "chain {j} does not carry {k} potentials"
            )));
        }
    }
    let evaluate = |alpha: f64| -> Result<(Region, Vec<TruncatedHme>, Vec<f64>)> {
        let own: Vec<Vec<f64>> = chains.iter().map(|c| c.own_trace()).collect();
        let refs: Vec<&[f64]> = own.iter().map(|v| v.as_slice()).collect();
        let region = build_region(&refs, alpha)?;
        let hme = hme_for_region(chains, &region)?;
        let log_ev: Vec<f64> = hme.iter().map(|h| -h.log_mean()).collect();
        let probs = posterior_model_probs_log(&log_ev)?;
        Ok((region, hme, probs))
    };
    let (region, hme, probs) = evaluate(alpha)?;
    let mut log_bf = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            log_bf[i][j] = log_bayes_factor(&hme[i], &hme[j], 0.0)?;
        }
    }
    let bf = log_bf
        .iter()
        .map(|r| r.iter().map(|v| v.exp()).collect())
        .collect();
    let sensitivity = sensitivity_alphas
        .iter()
        .map(|&a| {
            let (_, h, p) = evaluate(a)?;
            Ok(SensitivityRow {
                alpha: a,
                posterior_probs: p,
                n_in_region: h.iter().map(|e| e.n_in).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvidenceReport {
        per_model: models
            .iter()
            .zip(&hme)
            .map(|(m, h)| ModelEvidence {
                label: m.label.clone(),
                log_i_hat: h.log_mean(),
                n_in_region: h.n_in,
                n_samples: h.n_total,
            })
            .collect(),
        region,
        log_bayes_factors: log_bf,
        bayes_factors: bf,
        posterior_probs: probs,
        normalization_mode: NormalizationMode::Equal,
        seeds: seeds.to_vec(),
        sensitivity,
    })
}

/// Runs MYULA on `models[owner]` and evaluates every model's potential on
/// each kept sample.
pub fn collect_cross_potentials(
    models: &[CompositeModel],
    owner: usize,
    cfg: &SamplerConfig,
    x0: &[f64],
) -> Result<(CrossPotentials, ChainOutput)> {
    let mut rows = Vec::with_capacity(cfg.kept_count());
    let out = run_myula_with(&models[owner], cfg, x0, |s| {
        let row = models
            .iter()
            .enumerate()
            .map(|(i, m)| if i == owner { s.u } else { m.potential(s.x) })
            .collect();
        rows.push(row);
    })?;
    Ok((CrossPotentials { u: rows, owner }, out))
}
