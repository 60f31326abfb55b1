//! ULA, MYULA and the proximal MALA benchmark.

mod importance;
mod pxmala;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::CompositeModel;
use crate::image::ImageField;
use crate::prox::{envelope_from_prox, ProxWorkspace};

pub use importance::{importance_reweight, ImportanceWeights};
pub use pxmala::{pxmala_log_ratio, pxmala_step, run_pxmala, run_pxmala_with};

/// The generator behind every chain: one seeded stream per chain.
pub type ChainRng = ChaCha8Rng;

pub fn chain_rng(seed: u64) -> ChainRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Robbins-Monro control of the Px-MALA step during burn-in:
/// `log gamma += rate / k^0.6 * (acceptance - target)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepAdaptation {
    pub target: f64,
    pub rate: f64,
}

impl Default for StepAdaptation {
    fn default() -> Self {
        Self {
            target: 0.45,
            rate: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub record_u_trace: bool,
    /// Store every `s`-th kept iterate.
    pub sample_stride: Option<usize>,
    /// Store `g^lambda(X_k) - g(X_k)` for each kept iterate.
    pub record_gbar: bool,
    /// Only used by Px-MALA.
    pub adaptation: Option<StepAdaptation>,
}

impl SamplerConfig {
    /// Burn-in defaults to 5% of the run, thinning to 1.
    pub fn new(lambda: f64, gamma: f64, n_iter: usize, seed: u64) -> Self {
        Self {
            lambda,
            gamma,
            n_iter,
            burn_in: n_iter / 20,
            thin: 1,
            seed,
            record_u_trace: true,
            sample_stride: None,
            record_gbar: false,
            adaptation: None,
        }
    }

    pub fn kept_count(&self) -> usize {
        self.n_iter.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    /// Is the state after `k` transitions kept?
    #[inline]
    pub(crate) fn keeps(&self, k: usize) -> bool {
        k > self.burn_in && (k - self.burn_in).is_multiple_of(self.thin)
    }

    /// Checks `0 < gamma <= lambda / (lambda L_f + 1)` and the run lengths.
    pub fn validate(&self, model: &CompositeModel) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        let cap = step_cap(self.lambda, model.lipschitz_f());
        if self.gamma > cap * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "gamma = {} exceeds lambda / (lambda L_f + 1) = {cap}",
                self.gamma
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in >= self.n_iter {
            return Err(Error::Config(format!(
                "burn-in {} leaves nothing of {} iterations",
                self.burn_in, self.n_iter
            )));
        }
        if self.sample_stride == Some(0) {
            return Err(Error::Config("sample stride must be at least 1".into()));
        }
        if let Some(a) = self.adaptation {
            if !(a.target > 0.0 && a.target < 1.0 && a.rate > 0.0) {
                return Err(Error::Config("adaptation target must lie in (0, 1)".into()));
            }
        }
        Ok(())
    }
}

pub fn step_cap(lambda: f64, lf: f64) -> f64 {
    lambda / (lambda * lf + 1.0)
}

/// Kept iterates stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    pub dim: usize,
    pub stride: usize,
    pub data: Vec<f64>,
}

impl SampleBlock {
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    /// Trace of one coordinate.
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.iter().map(|s| s[index]).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainOutput {
    pub u_trace: Vec<f64>,
    pub samples: Option<SampleBlock>,
    pub gbar_trace: Option<Vec<f64>>,
    pub running_mean: ImageField,
    /// Per-pixel variance of the kept iterates (Welford).
    pub running_second_moment: ImageField,
    pub kept_count: usize,
    pub seed_used: u64,
    pub final_state: Vec<f64>,
    /// Accepted proposals after burn-in (Px-MALA only).
    pub accepted: Option<usize>,
    pub gamma_final: f64,
}

impl ChainOutput {
    pub fn acceptance_rate(&self, cfg: &SamplerConfig) -> Option<f64> {
        self.accepted
            .map(|a| a as f64 / (cfg.n_iter - cfg.burn_in).max(1) as f64)
    }

    /// Pixel with the largest posterior variance.
    pub fn slowest_component(&self) -> usize {
        let v = &self.running_second_moment.data;
        (0..v.len())
            .max_by(|&a, &b| v[a].total_cmp(&v[b]))
            .unwrap_or(0)
    }
}

/// A kept iterate as seen by chain observers.
#[derive(Debug, Clone, Copy)]
pub struct KeptState<'a> {
    pub index: usize,
    pub iteration: usize,
    pub x: &'a [f64],
    pub u: f64,
}

/// Running per-pixel mean and variance.
#[derive(Debug, Clone)]
pub(crate) struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub(crate) fn new(d: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    pub(crate) fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let n = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    pub(crate) fn finish(self, width: usize, height: usize) -> (ImageField, ImageField) {
        let n = self.count.max(1) as f64;
        let var = self.m2.into_iter().map(|s| s / n).collect();
        (
            ImageField {
                data: self.mean,
                width,
                height,
            },
            ImageField {
                data: var,
                width,
                height,
            },
        )
    }
}

/// Collects the optional per-iterate records shared by both samplers.
pub(crate) struct Recorder {
    pub u_trace: Vec<f64>,
    pub samples: Option<SampleBlock>,
    pub gbar: Option<Vec<f64>>,
    pub moments: Moments,
    pub kept: usize,
}

impl Recorder {
    pub(crate) fn new(cfg: &SamplerConfig, d: usize) -> Self {
        let n = cfg.kept_count();
        Self {
            u_trace: Vec::with_capacity(if cfg.record_u_trace { n } else { 0 }),
            samples: cfg.sample_stride.map(|s| SampleBlock {
                dim: d,
                stride: s,
                data: Vec::with_capacity(d * n.div_ceil(s)),
            }),
            gbar: cfg.record_gbar.then(|| Vec::with_capacity(n)),
            moments: Moments::new(d),
            kept: 0,
        }
    }

    pub(crate) fn record(&mut self, cfg: &SamplerConfig, x: &[f64], u: f64, gbar: Option<f64>) {
        if cfg.record_u_trace {
            self.u_trace.push(u);
        }
        if let Some(block) = self.samples.as_mut() {
            if self.kept.is_multiple_of(block.stride) {
                block.data.extend_from_slice(x);
            }
        }
        if let (Some(trace), Some(v)) = (self.gbar.as_mut(), gbar) {
            trace.push(v);
        }
        self.moments.push(x);
        self.kept += 1;
    }

    pub(crate) fn finish(
        self,
        model: &CompositeModel,
        cfg: &SamplerConfig,
        final_state: Vec<f64>,
        accepted: Option<usize>,
        gamma_final: f64,
    ) -> ChainOutput {
        let (w, h) = model.shape();
        let kept = self.kept;
        let (running_mean, running_second_moment) = self.moments.finish(w, h);
        ChainOutput {
            u_trace: self.u_trace,
            samples: self.samples,
            gbar_trace: self.gbar,
            running_mean,
            running_second_moment,
            kept_count: kept,
            seed_used: cfg.seed,
            final_state,
            accepted,
            gamma_final,
        }
    }
}

pub(crate) fn draw_noise(rng: &mut ChainRng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

fn check_state(x: &[f64], iteration: usize, last: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical {
            iteration,
            message: "chain state became non-finite".into(),
            last_state: Some(last.to_vec()),
        })
    }
}

/// `grad U^lambda(x) = grad f(x) + (x - prox_g^lambda(x)) / lambda`.
pub fn grad_u_lambda(model: &CompositeModel, lambda: f64, x: &[f64]) -> Vec<f64> {
    let mut g = model.smooth.grad(x);
    let p = model.nonsmooth.prox(x, lambda);
    for ((gv, xv), pv) in g.iter_mut().zip(x).zip(&p) {
        *gv += (xv - pv) / lambda;
    }
    g
}

/// One Euler-Maruyama step `x - gamma grad + sqrt(2 gamma) z`.
pub fn ula_step(x: &[f64], grad: &[f64], gamma: f64, noise: &[f64]) -> Vec<f64> {
    let s = (2.0 * gamma).sqrt();
    x.iter()
        .zip(grad)
        .zip(noise)
        .map(|((a, g), z)| a - gamma * g + s * z)
        .collect()
}

/// `(1 - gamma/lambda) x - gamma grad f(x) + (gamma/lambda) prox(x)`.
#[inline]
pub(crate) fn drift_into(
    x: &[f64],
    grad: &[f64],
    prox: &[f64],
    lambda: f64,
    gamma: f64,
    out: &mut [f64],
) {
    let a = 1.0 - gamma / lambda;
    let b = gamma / lambda;
    for i in 0..x.len() {
        out[i] = a * x[i] - gamma * grad[i] + b * prox[i];
    }
}

/// A single MYULA transition with an explicit noise vector.
pub fn myula_step(
    x: &[f64],
    model: &CompositeModel,
    lambda: f64,
    gamma: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if x.len() != model.dim() || noise.len() != model.dim() {
        return Err(Error::Input(
            "state or noise has the wrong dimension".into(),
        ));
    }
    let grad = model.smooth.grad(x);
    let prox = model.nonsmooth.prox(x, lambda);
    let mut out = vec![0.0; x.len()];
    drift_into(x, &grad, &prox, lambda, gamma, &mut out);
    let s = (2.0 * gamma).sqrt();
    for (o, z) in out.iter_mut().zip(noise) {
        *o += s * z;
    }
    check_state(&out, 0, x)?;
    Ok(out)
}

/// Runs MYULA from `x0`.
pub fn run_myula(model: &CompositeModel, cfg: &SamplerConfig, x0: &[f64]) -> Result<ChainOutput> {
    run_myula_with(model, cfg, x0, |_| {})
}

/// Runs MYULA and hands every kept iterate to `observer`.
pub fn run_myula_with<F>(
    model: &CompositeModel,
    cfg: &SamplerConfig,
    x0: &[f64],
    mut observer: F,
) -> Result<ChainOutput>
where
    F: FnMut(KeptState<'_>),
{
    cfg.validate(model)?;
    let d = model.dim();
    if x0.len() != d {
        return Err(Error::Input(format!(
            "initial state has length {}, model dimension is {d}",
            x0.len()
        )));
    }
    let mut rng = chain_rng(cfg.seed);
    let mut ws = ProxWorkspace::default();
    let mut rec = Recorder::new(cfg, d);
    let mut x = x0.to_vec();
    let mut next = vec![0.0; d];
    let mut grad = vec![0.0; d];
    let mut prox = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let s = (2.0 * cfg.gamma).sqrt();
    for k in 0..=cfg.n_iter {
        let kept = cfg.keeps(k);
        if k == cfg.n_iter && !kept {
            break;
        }
        let f = model.smooth.eval_grad(&x, &mut grad);
        model
            .nonsmooth
            .prox_into(&x, cfg.lambda, &mut prox, &mut ws);
        if kept {
            let g = model.nonsmooth.eval(&x);
            let gbar = cfg.record_gbar.then(|| {
                (envelope_from_prox(model.nonsmooth.as_ref(), cfg.lambda, &x, &prox) - g).min(0.0)
            });
            let u = f + g;
            observer(KeptState {
                index: rec.kept,
                iteration: k,
                x: &x,
                u,
            });
            rec.record(cfg, &x, u, gbar);
        }
        if k == cfg.n_iter {
            break;
        }
        drift_into(&x, &grad, &prox, cfg.lambda, cfg.gamma, &mut next);
        draw_noise(&mut rng, &mut noise);
        for (o, z) in next.iter_mut().zip(&noise) {
            *o += s * z;
        }
        check_state(&next, k + 1, &x)?;
        std::mem::swap(&mut x, &mut next);
    }
    Ok(rec.finish(model, cfg, x, None, cfg.gamma))
}

/// Runs one job per element of `jobs` on a pool of `workers` threads.
/// Results come back in input order and the reported error is the first in
/// input order, so neither depends on `workers`.
pub fn run_chains<T, R, F>(workers: usize, jobs: Vec<T>, run: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<R>> = pool.install(|| jobs.into_par_iter().map(&run).collect());
    results.into_iter().collect()
}

/// `lambda = 1/L_f`, `gamma` in `[1/(10 L_f), 1/(4 L_f)]`, capped at
/// `lambda / (lambda L_f + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepSizeGuideline {
    pub lambda: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    pub gamma_cap: f64,
}

pub fn step_size_guideline(lf: f64) -> Result<StepSizeGuideline> {
    if !(lf > 0.0 && lf.is_finite()) {
        return Err(Error::Input(format!("L_f must be positive, got {lf}")));
    }
    let lambda = 1.0 / lf;
    let g = StepSizeGuideline {
        lambda,
        gamma_lo: 1.0 / (10.0 * lf),
        gamma_hi: 1.0 / (4.0 * lf),
        gamma_cap: step_cap(lambda, lf),
    };
    debug_assert!(g.gamma_lo > 0.0 && g.gamma_hi <= g.gamma_cap);
    Ok(g)
}
