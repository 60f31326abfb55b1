//! Experiment configuration: one TOML file per experiment.
//!
//! Relative paths inside the file are resolved against the file's directory.
//! Errors carry the line of the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use myula::analytic1d::TargetKind;
use myula::bounds::{ConvexBoundInputs, StrongBoundInputs};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    DeconvTv,
    DeconvWaveletL1,
    TomographyTv,
    DeconvL1Sparse,
    Analytic1d,
    Bounds,
}

impl ExperimentKind {
    pub fn is_imaging(self) -> bool {
        !matches!(self, ExperimentKind::Analytic1d | ExperimentKind::Bounds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Tv,
    L1,
    WaveletL1,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Myula,
    Pxmala,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartKind {
    Observation,
    Zero,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Convex,
    Strong,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Relative paths are placed under the output root.
    #[serde(default = "defaults::output_dir")]
    pub output_dir: String,
    /// Size of the worker pool for independent chains.
    #[serde(default = "defaults::workers")]
    pub workers: usize,
    #[serde(default)]
    pub image: ImageBlock,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub sampler: SamplerBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic1d: Option<Analytic1dBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageBlock {
    pub width: usize,
    pub height: usize,
    /// `shapes`, `shepp_logan`, `spikes`, or a path to a PGM file.
    pub truth: String,
    /// Multiplies the pixel values of a PGM truth image.
    pub truth_scale: f64,
    pub spikes: usize,
    pub noise_seed: u64,
    /// PGM observation used as `y` instead of a synthetic one (deblurring).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<String>,
}

impl Default for ImageBlock {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            truth: "shapes".into(),
            truth_scale: 1.0,
            spikes: 40,
            noise_seed: 1,
            observation: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub sigma: f64,
    pub beta: f64,
    /// Defaults to the experiment's prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorKind>,
    /// Uniform blur widths, one candidate model each.
    pub blur_sizes: Vec<usize>,
    /// Kernel files; when present they replace `blur_sizes`.
    pub kernels: Vec<String>,
    /// Index of the candidate that generates the synthetic observation.
    pub generating: usize,
    pub mask_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
    pub wavelet_levels: usize,
    pub box_lo: f64,
    pub box_hi: f64,
    pub tv_max_iter: usize,
    pub tv_tol: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            beta: 1.0,
            prior: None,
            blur_sizes: vec![5],
            kernels: vec![],
            generating: 0,
            mask_rate: 0.15,
            mask: None,
            wavelet_levels: 3,
            box_lo: 0.0,
            box_hi: 255.0,
            tv_max_iter: 200,
            tv_tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerBlock {
    pub samplers: Vec<SamplerKind>,
    /// Explicit `lambda`; the guideline `1/L_f` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Explicit `gamma`; otherwise `gamma_fraction / L_f`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// `gamma * L_f`, within the guideline range `[0.1, 0.25]`.
    pub gamma_fraction: f64,
    pub n_iter: usize,
    /// Defaults to 5% of `n_iter`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub seeds: Vec<u64>,
    /// Px-MALA acceptance-rate target for burn-in step tuning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adapt_target: Option<f64>,
    pub adapt_rate: f64,
    pub start: StartKind,
    pub map_iters: usize,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        Self {
            samplers: vec![SamplerKind::Myula],
            lambda: None,
            gamma: None,
            gamma_fraction: 0.2,
            n_iter: 100_000,
            burn_in: None,
            thin: 1,
            seeds: vec![1],
            adapt_target: None,
            adapt_rate: 1.0,
            start: StartKind::Observation,
            map_iters: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisBlock {
    pub hpd_alphas: Vec<f64>,
    pub selection_alpha: f64,
    pub sensitivity_alphas: Vec<f64>,
    /// Only equal weights are supported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_prior: Option<Vec<f64>>,
    pub max_lag: usize,
    /// PGM images tested for membership of the HPD regions.
    pub test_images: Vec<String>,
    pub test_image_scale: f64,
    pub mean_rel_threshold: f64,
    pub hpd_rel_threshold: f64,
}

impl Default for AnalysisBlock {
    fn default() -> Self {
        Self {
            hpd_alphas: vec![0.05, 0.1, 0.2, 0.5],
            selection_alpha: 0.5,
            sensitivity_alphas: vec![],
            model_prior: None,
            max_lag: 100,
            test_images: vec![],
            test_image_scale: 1.0,
            mean_rel_threshold: 0.03,
            hpd_rel_threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analytic1dBlock {
    pub targets: Vec<TargetKind>,
    /// Regularisation levels for the density curves.
    pub lambdas: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    pub tv_lambda_min: f64,
    pub tv_lambda_max: f64,
    pub tv_points: usize,
}

impl Default for Analytic1dBlock {
    fn default() -> Self {
        Self {
            targets: vec![TargetKind::Laplace, TargetKind::Uniform],
            lambdas: vec![1.0, 0.1, 0.01],
            x_min: -4.0,
            x_max: 4.0,
            points: 801,
            tv_lambda_min: 1e-3,
            tv_lambda_max: 1.0,
            tv_points: 31,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    pub kind: BoundKind,
    pub d: usize,
    pub l_lip: f64,
    pub gamma_bar: f64,
    pub epsilon: f64,
    pub x_dist: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_s: Option<f64>,
}

/// Inputs of one budget computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundInputs {
    Convex(ConvexBoundInputs),
    Strong(StrongBoundInputs),
}

impl BoundsBlock {
    /// Fails with the name of the missing constant.
    pub fn inputs(&self) -> Result<BoundInputs, String> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| format!("{name} is required for {:?} bounds", self.kind).to_lowercase())
        };
        Ok(match self.kind {
            BoundKind::Convex => BoundInputs::Convex(ConvexBoundInputs {
                eta_c: need(self.eta_c, "eta_c")?,
                r_c: need(self.r_c, "r_c")?,
                d: self.d,
                l_lip: self.l_lip,
                gamma_bar: self.gamma_bar,
                epsilon: self.epsilon,
                x_dist: self.x_dist,
            }),
            BoundKind::Strong => BoundInputs::Strong(StrongBoundInputs {
                m: need(self.m, "m")?,
                r_s: need(self.r_s, "r_s")?,
                d: self.d,
                l_lip: self.l_lip,
                gamma_bar: self.gamma_bar,
                epsilon: self.epsilon,
                x_dist: self.x_dist,
            }),
        })
    }
}

mod defaults {
    pub fn output_dir() -> String {
        "run".into()
    }
    pub fn workers() -> usize {
        1
    }
}

/// A parsed config together with its source, for error locations.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub path: PathBuf,
    pub text: String,
}

impl LoadedConfig {
    pub fn load(path: impl AsRef<Path>) -> CliResult<Self> {
        let path = path.as_ref().to_path_buf();
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config {
            path: path.clone(),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::from_text(&text, path)
    }

    pub fn from_text(text: &str, path: PathBuf) -> CliResult<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: path.clone(),
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        let loaded = Self {
            config,
            path,
            text: text.to_string(),
        };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn base_dir(&self) -> PathBuf {
        self.path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir().join(p)
        }
    }

    /// A config error pointing at `key` inside `[section]` (or the top level).
    pub fn error_at(
        &self,
        section: Option<&str>,
        key: &str,
        message: impl Into<String>,
    ) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            line: locate_key(&self.text, section, key),
            message: message.into(),
        }
    }

    fn validate(&self) -> CliResult<()> {
        let c = &self.config;
        let fail = |s: Option<&str>, k: &str, m: String| Err(self.error_at(s, k, m));
        if c.workers == 0 {
            return fail(None, "workers", "workers must be at least 1".into());
        }
        let img = &c.image;
        let m = &c.model;
        let s = &c.sampler;
        let a = &c.analysis;
        if c.experiment.is_imaging() {
            if img.width == 0 || img.height == 0 {
                return fail(
                    Some("image"),
                    "width",
                    "image dimensions must be positive".into(),
                );
            }
            if !matches!(img.truth.as_str(), "shapes" | "shepp_logan" | "spikes")
                && !self.resolve(&img.truth).is_file()
            {
                return fail(
                    Some("image"),
                    "truth",
                    format!("truth image '{}' not found", img.truth),
                );
            }
            if !(img.truth_scale > 0.0 && img.truth_scale.is_finite()) {
                return fail(
                    Some("image"),
                    "truth_scale",
                    "truth_scale must be positive".into(),
                );
            }
            if let Some(obs) = &img.observation {
                if c.experiment == ExperimentKind::TomographyTv {
                    return fail(
                        Some("image"),
                        "observation",
                        "tomography observations are synthesised; remove `observation`".into(),
                    );
                }
                if !self.resolve(obs).is_file() {
                    return fail(
                        Some("image"),
                        "observation",
                        format!("observation '{obs}' not found"),
                    );
                }
            }
            if !(m.sigma > 0.0 && m.sigma.is_finite()) {
                return fail(
                    Some("model"),
                    "sigma",
                    format!("sigma must be positive, got {}", m.sigma),
                );
            }
            if !(m.beta >= 0.0 && m.beta.is_finite()) {
                return fail(
                    Some("model"),
                    "beta",
                    format!("beta must be >= 0, got {}", m.beta),
                );
            }
            for k in &m.kernels {
                if !self.resolve(k).is_file() {
                    return fail(
                        Some("model"),
                        "kernels",
                        format!("kernel file '{k}' not found"),
                    );
                }
            }
            if m.kernels.is_empty() && m.blur_sizes.is_empty() {
                return fail(
                    Some("model"),
                    "blur_sizes",
                    "at least one blur is required".into(),
                );
            }
            if m.blur_sizes.contains(&0) {
                return fail(
                    Some("model"),
                    "blur_sizes",
                    "blur sizes must be positive".into(),
                );
            }
            let n_models = if m.kernels.is_empty() {
                m.blur_sizes.len()
            } else {
                m.kernels.len()
            };
            if c.experiment != ExperimentKind::TomographyTv && m.generating >= n_models {
                return fail(
                    Some("model"),
                    "generating",
                    format!(
                        "generating index {} but only {n_models} candidate models",
                        m.generating
                    ),
                );
            }
            if let Some(mask) = &m.mask {
                if !self.resolve(mask).is_file() {
                    return fail(
                        Some("model"),
                        "mask",
                        format!("mask file '{mask}' not found"),
                    );
                }
            } else if !(m.mask_rate > 0.0 && m.mask_rate <= 1.0) {
                return fail(
                    Some("model"),
                    "mask_rate",
                    "mask_rate must lie in (0, 1]".into(),
                );
            }
            if !(m.box_lo < m.box_hi) {
                return fail(
                    Some("model"),
                    "box_hi",
                    "box_lo must be below box_hi".into(),
                );
            }
            if m.tv_max_iter == 0 || !(m.tv_tol > 0.0) {
                return fail(
                    Some("model"),
                    "tv_tol",
                    "TV solver needs tv_max_iter >= 1 and tv_tol > 0".into(),
                );
            }
            for t in &a.test_images {
                if !self.resolve(t).is_file() {
                    return fail(
                        Some("analysis"),
                        "test_images",
                        format!("test image '{t}' not found"),
                    );
                }
            }
        }
        if s.samplers.is_empty() {
            return fail(
                Some("sampler"),
                "samplers",
                "name at least one sampler".into(),
            );
        }
        if s.seeds.is_empty() {
            return fail(Some("sampler"), "seeds", "give at least one seed".into());
        }
        if s.n_iter == 0 {
            return fail(Some("sampler"), "n_iter", "n_iter must be positive".into());
        }
        if s.thin == 0 {
            return fail(Some("sampler"), "thin", "thin must be at least 1".into());
        }
        if let Some(b) = s.burn_in {
            if b >= s.n_iter {
                return fail(
                    Some("sampler"),
                    "burn_in",
                    "burn_in must be below n_iter".into(),
                );
            }
        }
        if s.lambda.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
            return fail(Some("sampler"), "lambda", "lambda must be positive".into());
        }
        if s.gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
            return fail(Some("sampler"), "gamma", "gamma must be positive".into());
        }
        if !(0.1..=0.25).contains(&s.gamma_fraction) {
            return fail(
                Some("sampler"),
                "gamma_fraction",
                format!(
                    "gamma_fraction must lie in [0.1, 0.25], got {}",
                    s.gamma_fraction
                ),
            );
        }
        if s.adapt_target.is_some_and(|t| !(t > 0.0 && t < 1.0)) {
            return fail(
                Some("sampler"),
                "adapt_target",
                "adapt_target must lie in (0, 1)".into(),
            );
        }
        for (key, list) in [
            ("hpd_alphas", &a.hpd_alphas),
            ("sensitivity_alphas", &a.sensitivity_alphas),
        ] {
            if list.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
                return fail(Some("analysis"), key, "levels must lie in (0, 1)".into());
            }
        }
        if a.hpd_alphas.is_empty() {
            return fail(
                Some("analysis"),
                "hpd_alphas",
                "give at least one level".into(),
            );
        }
        if !(a.selection_alpha > 0.0 && a.selection_alpha < 1.0) {
            return fail(
                Some("analysis"),
                "selection_alpha",
                "selection_alpha must lie in (0, 1)".into(),
            );
        }
        if let Some(p) = &a.model_prior {
            if p.is_empty() || p.iter().any(|v| *v != p[0]) || !(p[0] > 0.0) {
                return fail(
                    Some("analysis"),
                    "model_prior",
                    "only a uniform prior over models is supported".into(),
                );
            }
        }
        if a.max_lag == 0 {
            return fail(
                Some("analysis"),
                "max_lag",
                "max_lag must be positive".into(),
            );
        }
        if c.experiment == ExperimentKind::Analytic1d {
            let b = c.analytic1d.clone().unwrap_or_default();
            if b.targets.is_empty() {
                return fail(
                    Some("analytic1d"),
                    "targets",
                    "give at least one target".into(),
                );
            }
            if b.lambdas.iter().any(|l| !(*l > 0.0)) {
                return fail(
                    Some("analytic1d"),
                    "lambdas",
                    "lambdas must be positive".into(),
                );
            }
            if !(b.x_min < b.x_max) || b.points < 2 {
                return fail(
                    Some("analytic1d"),
                    "x_max",
                    "need x_min < x_max and points >= 2".into(),
                );
            }
            if !(b.tv_lambda_min > 0.0 && b.tv_lambda_min < b.tv_lambda_max) || b.tv_points < 2 {
                return fail(
                    Some("analytic1d"),
                    "tv_lambda_max",
                    "need 0 < tv_lambda_min < tv_lambda_max and tv_points >= 2".into(),
                );
            }
        }
        if c.experiment == ExperimentKind::Bounds {
            match &c.bounds {
                None => {
                    return fail(
                        None,
                        "experiment",
                        "bounds experiments need a [bounds] section".into(),
                    )
                }
                Some(b) => {
                    if let Err(msg) = b.inputs() {
                        return fail(Some("bounds"), "kind", msg);
                    }
                }
            }
        }
        Ok(())
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of `key = ...` inside `[section]`, or of the section header
/// when the key is absent.
pub fn locate_key(text: &str, section: Option<&str>, key: &str) -> Option<usize> {
    let mut current: Option<String> = None;
    let mut header_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.trim_end_matches(']').trim().to_string();
            if section == Some(name.as_str()) {
                header_line = Some(i + 1);
            }
            current = Some(name);
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some((k, _)) = line.split_once('=') {
            if k.trim().trim_matches('"') == key {
                return Some(i + 1);
            }
        }
    }
    header_line
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialise")
    }
}
