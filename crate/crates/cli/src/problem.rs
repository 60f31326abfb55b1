//! Builds the candidate models, observation and start point of an experiment.

use std::sync::Arc;

use myula::analytic1d::TargetKind;
use myula::forward::synth::{
    add_complex_noise, add_gaussian_noise, shapes_phantom, shepp_logan, sparse_spikes,
};
use myula::forward::{
    make_deconv_model, make_tomography_model, BlurOperator, Complex, CompositeModel, FourierMask,
    Tomography, ZeroSmooth,
};
use myula::io::{read_kernel, read_mask, read_pgm};
use myula::prox::{
    map_fista, BoxIndicator, Haar2d, L1Norm, OrthonormalL1, SharedTerm, TotalVariation,
};
use myula::samplers::{step_cap, step_size_guideline, SamplerConfig, StepAdaptation};
use myula::ImageField;

use crate::config::{ExperimentKind, LoadedConfig, PriorKind, StartKind};
use crate::error::CliResult;

/// Everything a sampling workflow needs.
#[derive(Debug, Clone)]
pub struct Problem {
    pub models: Vec<CompositeModel>,
    pub truth: Option<ImageField>,
    /// Start point of every chain.
    pub x0: Vec<f64>,
    pub shape: (usize, usize),
}

fn default_prior(kind: ExperimentKind) -> PriorKind {
    match kind {
        ExperimentKind::DeconvWaveletL1 => PriorKind::WaveletL1,
        ExperimentKind::DeconvL1Sparse => PriorKind::L1,
        _ => PriorKind::Tv,
    }
}

fn prior_term(cfg: &LoadedConfig) -> CliResult<SharedTerm> {
    let c = &cfg.config;
    let (w, h) = (c.image.width, c.image.height);
    let m = &c.model;
    let kind = m.prior.unwrap_or_else(|| default_prior(c.experiment));
    let at = |key: &str, e: myula::Error| cfg.error_at(Some("model"), key, e.to_string());
    Ok(match kind {
        PriorKind::Tv => Arc::new(
            TotalVariation::new(w, h)
                .and_then(|t| t.with_solver(m.tv_max_iter, m.tv_tol))
                .map_err(|e| at("tv_tol", e))?,
        ),
        PriorKind::L1 => Arc::new(L1Norm),
        PriorKind::WaveletL1 => {
            let t = Haar2d::new(w, h, m.wavelet_levels).map_err(|e| at("wavelet_levels", e))?;
            Arc::new(OrthonormalL1::new(Arc::new(t)).map_err(|e| at("wavelet_levels", e))?)
        }
        PriorKind::Box => {
            Arc::new(BoxIndicator::new(m.box_lo, m.box_hi).map_err(|e| at("box_hi", e))?)
        }
    })
}

fn truth_image(cfg: &LoadedConfig) -> CliResult<ImageField> {
    let img = &cfg.config.image;
    let (w, h) = (img.width, img.height);
    let field = match img.truth.as_str() {
        "shapes" => shapes_phantom(w, h),
        "shepp_logan" => shepp_logan(w, h),
        "spikes" => sparse_spikes(w, h, img.spikes, img.noise_seed),
        path => {
            let mut f = read_pgm(cfg.resolve(path))?.to_field();
            if (f.width, f.height) != (w, h) {
                return Err(cfg.error_at(
                    Some("image"),
                    "truth",
                    format!(
                        "truth image is {}x{}, config says {w}x{h}",
                        f.width, f.height
                    ),
                ));
            }
            f.data.iter_mut().for_each(|v| *v *= img.truth_scale);
            f
        }
    };
    Ok(field)
}

fn blurs(cfg: &LoadedConfig) -> CliResult<Vec<(String, BlurOperator)>> {
    let c = &cfg.config;
    let (w, h) = (c.image.width, c.image.height);
    if c.model.kernels.is_empty() {
        c.model
            .blur_sizes
            .iter()
            .map(|&k| {
                let b = BlurOperator::uniform(k, w, h)
                    .map_err(|e| cfg.error_at(Some("model"), "blur_sizes", e.to_string()))?;
                Ok((format!("blur{k}x{k}"), b))
            })
            .collect()
    } else {
        c.model
            .kernels
            .iter()
            .map(|p| {
                let (values, kw) = read_kernel(cfg.resolve(p))?;
                let b = BlurOperator::new(&values, kw, w, h)
                    .map_err(|e| cfg.error_at(Some("model"), "kernels", e.to_string()))?;
                let stem = std::path::Path::new(p)
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.clone());
                Ok((stem, b))
            })
            .collect()
    }
}

pub fn build_problem(cfg: &LoadedConfig) -> CliResult<Problem> {
    let c = &cfg.config;
    let (w, h) = (c.image.width, c.image.height);
    let m = &c.model;
    let prior = prior_term(cfg)?;
    let truth = truth_image(cfg)?;
    let (models, start_obs) = if c.experiment == ExperimentKind::TomographyTv {
        let mask = match &m.mask {
            Some(p) => read_mask(cfg.resolve(p))?,
            None => FourierMask::radial_with_rate(w, h, m.mask_rate)
                .map_err(|e| cfg.error_at(Some("model"), "mask_rate", e.to_string()))?,
        };
        if mask.shape() != (w, h) {
            return Err(cfg.error_at(
                Some("model"),
                "mask",
                "mask shape differs from the image shape",
            ));
        }
        let probe = Tomography::new(
            &vec![Complex::default(); mask.count()],
            mask.clone(),
            m.sigma,
        )?;
        let y = add_complex_noise(&probe.measure(&truth.data), m.sigma, c.image.noise_seed);
        let mut model = make_tomography_model(&y, &mask, m.sigma, prior, m.beta)?;
        model.label = "tomography".into();
        (vec![model], probe.adjoint(&y))
    } else {
        let candidates = blurs(cfg)?;
        let y = match &c.image.observation {
            Some(p) => {
                let mut f = read_pgm(cfg.resolve(p))?.to_field();
                if (f.width, f.height) != (w, h) {
                    return Err(cfg.error_at(
                        Some("image"),
                        "observation",
                        "observation shape differs from the image shape",
                    ));
                }
                f.data.iter_mut().for_each(|v| *v *= c.image.truth_scale);
                f
            }
            None => {
                let clean = candidates[m.generating].1.apply(&truth.data);
                add_gaussian_noise(&ImageField::new(clean, w, h)?, m.sigma, c.image.noise_seed)
            }
        };
        let models = candidates
            .iter()
            .map(|(label, b)| {
                let mut model = make_deconv_model(&y, b, m.sigma, prior.clone(), m.beta)?;
                model.label = label.clone();
                Ok(model)
            })
            .collect::<CliResult<Vec<_>>>()?;
        (models, y.data)
    };
    let x0 = match c.sampler.start {
        StartKind::Observation => start_obs,
        StartKind::Zero => vec![0.0; w * h],
        StartKind::Map => map_fista(&models[0], &start_obs, c.sampler.map_iters, 1e-6)?.x,
    };
    Ok(Problem {
        models,
        truth: Some(truth),
        x0,
        shape: (w, h),
    })
}

/// 1D target of an analytic config, as a model for the samplers.
pub fn analytic_problem(kind: TargetKind) -> CliResult<Problem> {
    let prior: SharedTerm = match kind {
        TargetKind::Laplace => Arc::new(L1Norm),
        TargetKind::Uniform => Arc::new(BoxIndicator::new(-1.0, 1.0)?),
    };
    let label = match kind {
        TargetKind::Laplace => "laplace",
        TargetKind::Uniform => "uniform",
    };
    let model = CompositeModel::new(Arc::new(ZeroSmooth(1)), prior, 1.0, 1.0, 1, 1, label)?;
    Ok(Problem {
        models: vec![model],
        truth: None,
        x0: vec![0.0],
        shape: (1, 1),
    })
}

/// Smoothing level shared by all candidate models: the explicit value or
/// the smallest guideline value. Evidence ratios need a common level so the
/// prior normalisers cancel.
pub fn common_lambda(cfg: &LoadedConfig, models: &[CompositeModel]) -> CliResult<Option<f64>> {
    if let Some(l) = cfg.config.sampler.lambda {
        return Ok(Some(l));
    }
    let mut out: Option<f64> = None;
    for m in models {
        let lf = m.lipschitz_f();
        if lf > 0.0 {
            let l = step_size_guideline(lf)?.lambda;
            out = Some(out.map_or(l, |o| o.min(l)));
        }
    }
    Ok(out)
}

/// Sampler settings for `model` and `seed`: explicit values or the
/// step-size guideline, checked against the stability cap. `lambda`
/// overrides the per-model guideline.
pub fn sampler_config(
    cfg: &LoadedConfig,
    model: &CompositeModel,
    seed: u64,
    lambda: Option<f64>,
) -> CliResult<SamplerConfig> {
    let s = &cfg.config.sampler;
    let lf = model.lipschitz_f();
    let guideline = if lf > 0.0 {
        Some(step_size_guideline(lf)?)
    } else {
        None
    };
    let lambda = match (lambda.or(s.lambda), guideline) {
        (Some(l), _) => l,
        (None, Some(g)) => g.lambda,
        (None, None) => {
            return Err(cfg.error_at(
                Some("sampler"),
                "lambda",
                "the likelihood has no curvature (L_f = 0); set lambda explicitly",
            ))
        }
    };
    let gamma = match (s.gamma, lf > 0.0) {
        (Some(g), _) => g,
        (None, true) => s.gamma_fraction / lf,
        (None, false) => {
            return Err(cfg.error_at(
                Some("sampler"),
                "gamma",
                "set gamma explicitly when L_f = 0",
            ))
        }
    };
    let cap = step_cap(lambda, lf);
    if gamma > cap {
        return Err(cfg.error_at(
            Some("sampler"),
            if s.gamma.is_some() { "gamma" } else { "gamma_fraction" },
            format!(
                "gamma = {gamma} exceeds the stability cap lambda/(lambda L_f + 1) = {cap} for model {}",
                model.label
            ),
        ));
    }
    let mut out = SamplerConfig::new(lambda, gamma, s.n_iter, seed);
    if let Some(b) = s.burn_in {
        out.burn_in = b;
    }
    out.thin = s.thin;
    out.adaptation = s.adapt_target.map(|target| StepAdaptation {
        target,
        rate: s.adapt_rate,
    });
    out.validate(model)
        .map_err(|e| cfg.error_at(Some("sampler"), "n_iter", e.to_string()))?;
    Ok(out)
}
