//! The subcommand workflows. Chains run on a bounded pool; every file goes
//! through one [`RunWriter`] after the chains return, in a fixed order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use myula::analytic1d::{density_curve, log_grid, loglog_slope, tv_curve, TargetKind};
use myula::bounds::{convex_budget, strong_budget, BoundBudget};
use myula::diagnostics::{acf, hpd_thresholds, iact, psnr, HpdResult};
use myula::forward::CompositeModel;
use myula::io::{u_trace_csv, Checkpoint, GrayImage};
use myula::samplers::{
    run_chains, run_myula, run_myula_with, run_pxmala_with, KeptState, SamplerConfig,
};
use myula::selection::{improper_prior_evidence, CrossPotentials, EvidenceReport};
use myula::{ChainOutput, ImageField};

use crate::config::{BoundInputs, ExperimentKind, LoadedConfig, SamplerKind};
use crate::error::CliResult;
use crate::problem::{analytic_problem, build_problem, common_lambda, sampler_config, Problem};
use crate::writer::{RunWriter, Verification};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Sample,
    Compare,
    Select,
    Hpd,
    Bounds,
    Analytic1d,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Sample => "sample",
            Subcommand::Compare => "compare",
            Subcommand::Select => "select",
            Subcommand::Hpd => "hpd",
            Subcommand::Bounds => "bounds",
            Subcommand::Analytic1d => "analytic1d",
        }
    }
}

/// What a finished run reports on the terminal.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub verification: Verification,
    pub lines: Vec<String>,
}

/// `<root>/<output_dir>/<subcommand>`, with absolute `output_dir` kept as is.
pub fn run_directory(root: &Path, output_dir: &str, sub: Subcommand) -> PathBuf {
    let p = Path::new(output_dir);
    let base = if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    };
    base.join(sub.name())
}

pub fn run(cfg: &LoadedConfig, sub: Subcommand, root: &Path) -> CliResult<RunSummary> {
    let c = &cfg.config;
    let dir = run_directory(root, &c.output_dir, sub);
    let mut w = RunWriter::create(&dir)?;
    let mut lines = vec![];
    let outcome = match (sub, c.experiment) {
        (Subcommand::Bounds, _) | (Subcommand::Sample, ExperimentKind::Bounds) => {
            let block = c.bounds.as_ref().ok_or_else(|| {
                cfg.error_at(
                    None,
                    "experiment",
                    "this subcommand needs a [bounds] section",
                )
            })?;
            let inputs = block
                .inputs()
                .map_err(|m| cfg.error_at(Some("bounds"), "kind", m))?;
            bounds_outputs(&mut w, &inputs, &mut lines)
        }
        (Subcommand::Analytic1d, _) | (Subcommand::Sample, ExperimentKind::Analytic1d) => {
            analytic_outputs(cfg, &mut w, &mut lines)
        }
        (Subcommand::Sample, _) => sample(cfg, &mut w, &mut lines, Outputs::Full),
        (Subcommand::Select, _) => select(cfg, &mut w, &mut lines),
        (Subcommand::Hpd, _) => sample(cfg, &mut w, &mut lines, Outputs::Hpd),
        (Subcommand::Compare, _) => compare(cfg, &mut w, &mut lines),
    };
    // The manifest is written even when the workflow failed part way, so
    // the failure checkpoint is listed.
    let verification = w.finish(
        sub.name(),
        &experiment_name(c.experiment),
        &cfg.text,
        &c.sampler.seeds,
    )?;
    outcome?;
    Ok(RunSummary {
        dir,
        verification,
        lines,
    })
}

fn experiment_name(kind: ExperimentKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

// ---------------------------------------------------------------------------
// chains

#[derive(Debug, Clone)]
struct ChainJob {
    model: usize,
    sampler: SamplerKind,
    seed: u64,
    cfg: SamplerConfig,
    /// Component whose trace feeds the ACF.
    pixel: usize,
    cross: bool,
}

#[derive(Debug)]
struct ChainResult {
    job: ChainJob,
    out: ChainOutput,
    cross: Option<Vec<Vec<f64>>>,
    pixel_trace: Vec<f64>,
}

type JobOutcome = Result<ChainResult, Box<(ChainJob, myula::Error)>>;

fn run_job(models: &[CompositeModel], x0: &[f64], job: ChainJob) -> JobOutcome {
    let mut cross = job.cross.then(Vec::new);
    let mut pixel_trace = vec![];
    let model = &models[job.model];
    let observer = |s: KeptState<'_>| {
        pixel_trace.push(s.x[job.pixel]);
        if let Some(rows) = cross.as_mut() {
            rows.push(
                models
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        if i == job.model {
                            s.u
                        } else {
                            m.potential(s.x)
                        }
                    })
                    .collect(),
            );
        }
    };
    let result = match job.sampler {
        SamplerKind::Myula => run_myula_with(model, &job.cfg, x0, observer),
        SamplerKind::Pxmala => run_pxmala_with(model, &job.cfg, x0, observer),
    };
    match result {
        Ok(out) => Ok(ChainResult {
            job,
            out,
            cross,
            pixel_trace,
        }),
        Err(e) => Err(Box::new((job, e))),
    }
}

/// Component with the largest variance in a short MYULA pilot run.
fn slowest_component(model: &CompositeModel, cfg: &SamplerConfig, x0: &[f64]) -> CliResult<usize> {
    if model.dim() == 1 {
        return Ok(0);
    }
    let mut pilot = cfg.clone();
    pilot.n_iter = (cfg.n_iter / 10).max(20);
    pilot.burn_in = pilot.n_iter / 20;
    pilot.thin = 1;
    pilot.adaptation = None;
    pilot.seed = cfg.seed.wrapping_add(0x9e37_79b9);
    Ok(run_myula(model, &pilot, x0)?.slowest_component())
}

fn problem_for(cfg: &LoadedConfig) -> CliResult<Problem> {
    if cfg.config.experiment == ExperimentKind::Analytic1d {
        let target = cfg
            .config
            .analytic1d
            .clone()
            .unwrap_or_default()
            .targets
            .first()
            .copied()
            .unwrap_or(TargetKind::Laplace);
        analytic_problem(target)
    } else if cfg.config.experiment.is_imaging() {
        build_problem(cfg)
    } else {
        Err(cfg.error_at(
            None,
            "experiment",
            "this subcommand needs an imaging or analytic1d experiment",
        ))
    }
}

fn chain_dir(model: &CompositeModel, sampler: SamplerKind, seed: u64) -> String {
    let s = match sampler {
        SamplerKind::Myula => "myula",
        SamplerKind::Pxmala => "pxmala",
    };
    format!("{}/{s}/seed-{seed}", model.label)
}

/// Runs `jobs`; on failure writes a checkpoint of the last finite state of
/// each failed chain and returns the first error in job order.
fn execute(
    cfg: &LoadedConfig,
    problem: &Problem,
    jobs: Vec<ChainJob>,
    w: &mut RunWriter,
) -> CliResult<Vec<ChainResult>> {
    let outcomes: Vec<JobOutcome> = run_chains(cfg.config.workers, jobs, |job| {
        Ok(run_job(&problem.models, &problem.x0, job))
    })?;
    let mut results = vec![];
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(r) => results.push(r),
            Err(failed) => {
                let (job, e) = *failed;
                if let myula::Error::Numerical {
                    iteration,
                    last_state: Some(state),
                    ..
                } = &e
                {
                    let (wd, ht) = problem.shape;
                    let ck =
                        Checkpoint::from_state(&job.cfg, *iteration - 1, state.clone(), wd, ht);
                    let dir = chain_dir(&problem.models[job.model], job.sampler, job.seed);
                    w.write_checkpoint(&format!("{dir}/failed_checkpoint.bin"), &ck)?;
                }
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => Ok(results),
    }
}

fn build_jobs(
    cfg: &LoadedConfig,
    problem: &Problem,
    models: &[usize],
    samplers: &[SamplerKind],
    cross: bool,
) -> CliResult<Vec<ChainJob>> {
    let seeds = &cfg.config.sampler.seeds;
    let lambda = common_lambda(cfg, &problem.models)?;
    let mut jobs = vec![];
    for &m in models {
        let model = &problem.models[m];
        let pilot_cfg = sampler_config(cfg, model, seeds[0], lambda)?;
        let pixel = slowest_component(model, &pilot_cfg, &problem.x0)?;
        for &sampler in samplers {
            for &seed in seeds {
                jobs.push(ChainJob {
                    model: m,
                    sampler,
                    seed,
                    cfg: sampler_config(cfg, model, seed, lambda)?,
                    pixel,
                    cross,
                });
            }
        }
    }
    Ok(jobs)
}

// ---------------------------------------------------------------------------
// per-chain outputs

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outputs {
    Full,
    Hpd,
}

#[derive(Debug, Serialize)]
struct ChainSummary {
    model: String,
    sampler: SamplerKind,
    seed: u64,
    lambda: f64,
    gamma: f64,
    gamma_final: f64,
    n_iter: usize,
    burn_in: usize,
    thin: usize,
    kept: usize,
    acceptance_rate: Option<f64>,
    slowest_component: usize,
    iact_u: Option<f64>,
    ess_u: Option<f64>,
    iact_slowest: Option<f64>,
    ess_slowest: Option<f64>,
    hpd: Vec<HpdResult>,
    psnr_mean_db: Option<f64>,
}

fn summarise(problem: &Problem, r: &ChainResult, alphas: &[f64]) -> CliResult<ChainSummary> {
    let cfg = &r.job.cfg;
    let psnr_mean_db = match &problem.truth {
        Some(t) if t.len() > 1 => {
            let peak = t.min_max().1.max(f64::MIN_POSITIVE);
            Some(psnr(&r.out.running_mean, t, peak)?)
        }
        _ => None,
    };
    let iact_u = iact(&r.out.u_trace).ok();
    let iact_slowest = iact(&r.pixel_trace).ok();
    Ok(ChainSummary {
        model: problem.models[r.job.model].label.clone(),
        sampler: r.job.sampler,
        seed: r.job.seed,
        lambda: cfg.lambda,
        gamma: cfg.gamma,
        gamma_final: r.out.gamma_final,
        n_iter: cfg.n_iter,
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        kept: r.out.kept_count,
        acceptance_rate: r.out.acceptance_rate(cfg),
        slowest_component: r.job.pixel,
        iact_u,
        ess_u: iact_u.map(|t| r.out.u_trace.len() as f64 / t),
        iact_slowest,
        ess_slowest: iact_slowest.map(|t| r.pixel_trace.len() as f64 / t),
        hpd: hpd_thresholds(&r.out.u_trace, alphas)?,
        psnr_mean_db,
    })
}

/// ACF columns for the given series, each padded with NaN when too short
/// or degenerate.
fn acf_rows(series: &[&[f64]], max_lag: usize) -> Vec<Vec<f64>> {
    let cols: Vec<Vec<f64>> = series
        .iter()
        .map(|s| {
            let lag = max_lag.min(s.len().saturating_sub(1));
            let mut v = if lag == 0 {
                vec![]
            } else {
                acf(s, lag).unwrap_or_default()
            };
            v.resize(max_lag + 1, f64::NAN);
            v
        })
        .collect();
    (0..=max_lag)
        .map(|k| {
            std::iter::once(k as f64)
                .chain(cols.iter().map(|c| c[k]))
                .collect()
        })
        .collect()
}

const HPD_GRID: usize = 99;

fn write_chain(
    cfg: &LoadedConfig,
    problem: &Problem,
    r: &ChainResult,
    w: &mut RunWriter,
    outputs: Outputs,
) -> CliResult<ChainSummary> {
    let a = &cfg.config.analysis;
    let dir = chain_dir(&problem.models[r.job.model], r.job.sampler, r.job.seed);
    let summary = summarise(problem, r, &a.hpd_alphas)?;
    w.write_csv(
        &format!("{dir}/hpd.csv"),
        &["alpha", "eta_alpha"],
        summary.hpd.iter().map(|h| vec![h.alpha, h.eta_alpha]),
    )?;
    match outputs {
        Outputs::Full => {
            w.write_checkpoint(
                &format!("{dir}/checkpoint.bin"),
                &Checkpoint::from_chain(&r.job.cfg, &r.out),
            )?;
            w.write_bytes(
                &format!("{dir}/u_trace.csv"),
                u_trace_csv(&r.out.u_trace)?.as_bytes(),
            )?;
            w.write_csv(
                &format!("{dir}/acf.csv"),
                &["lag", "acf_u", "acf_slowest"],
                acf_rows(&[&r.out.u_trace, &r.pixel_trace], a.max_lag),
            )?;
            if problem.models[r.job.model].dim() > 1 {
                w.write_image(&format!("{dir}/mean"), &r.out.running_mean)?;
            }
        }
        Outputs::Hpd => {
            let grid: Vec<f64> = (1..=HPD_GRID)
                .map(|i| i as f64 / (HPD_GRID + 1) as f64)
                .collect();
            let curve = hpd_thresholds(&r.out.u_trace, &grid)?;
            w.write_csv(
                &format!("{dir}/hpd_curve.csv"),
                &["alpha", "eta_alpha"],
                curve.iter().map(|h| vec![h.alpha, h.eta_alpha]),
            )?;
            w.write_json(
                &format!("{dir}/hpd_membership.json"),
                &membership(cfg, problem, r, &summary.hpd)?,
            )?;
        }
    }
    w.write_json(&format!("{dir}/summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
struct Membership {
    image: String,
    u: f64,
    levels: Vec<MembershipLevel>,
}

#[derive(Debug, Serialize)]
struct MembershipLevel {
    alpha: f64,
    eta_alpha: f64,
    inside: bool,
}

fn membership(
    cfg: &LoadedConfig,
    problem: &Problem,
    r: &ChainResult,
    hpd: &[HpdResult],
) -> CliResult<Vec<Membership>> {
    let model = &problem.models[r.job.model];
    let mut images: Vec<(String, Vec<f64>)> =
        vec![("posterior_mean".into(), r.out.running_mean.data.clone())];
    if let Some(t) = &problem.truth {
        images.push(("truth".into(), t.data.clone()));
    }
    for p in &cfg.config.analysis.test_images {
        let img: GrayImage = myula::io::read_pgm(cfg.resolve(p))?;
        let f = img.to_field();
        if f.len() != model.dim() {
            return Err(cfg.error_at(
                Some("analysis"),
                "test_images",
                format!("{p} does not match the model size"),
            ));
        }
        let scale = cfg.config.analysis.test_image_scale;
        images.push((p.clone(), f.data.iter().map(|v| v * scale).collect()));
    }
    Ok(images
        .into_iter()
        .map(|(image, x)| {
            let u = model.potential(&x);
            Membership {
                image,
                u,
                levels: hpd
                    .iter()
                    .map(|h| MembershipLevel {
                        alpha: h.alpha,
                        eta_alpha: h.eta_alpha,
                        inside: u <= h.eta_alpha,
                    })
                    .collect(),
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// sample / hpd / select

fn sample(
    cfg: &LoadedConfig,
    w: &mut RunWriter,
    lines: &mut Vec<String>,
    outputs: Outputs,
) -> CliResult<()> {
    let problem = problem_for(cfg)?;
    let all: Vec<usize> = (0..problem.models.len()).collect();
    let samplers = match outputs {
        Outputs::Full => cfg.config.sampler.samplers.clone(),
        Outputs::Hpd => vec![cfg.config.sampler.samplers[0]],
    };
    let multi = problem.models.len() > 1 && outputs == Outputs::Full;
    let jobs = build_jobs(cfg, &problem, &all, &samplers, multi)?;
    let results = execute(cfg, &problem, jobs, w)?;
    for r in &results {
        let s = write_chain(cfg, &problem, r, w, outputs)?;
        let etas: Vec<String> = s
            .hpd
            .iter()
            .map(|h| format!("{}:{:.6e}", h.alpha, h.eta_alpha))
            .collect();
        lines.push(format!(
            "{} {:?} seed {}: kept {}, ESS(U) {:.1}, eta [{}]",
            s.model,
            s.sampler,
            s.seed,
            s.kept,
            s.ess_u.unwrap_or(f64::NAN),
            etas.join(", ")
        ));
    }
    if multi {
        evidence_outputs(cfg, &problem, &results, samplers[0], w, lines)?;
    }
    Ok(())
}

fn select(cfg: &LoadedConfig, w: &mut RunWriter, lines: &mut Vec<String>) -> CliResult<()> {
    let problem = problem_for(cfg)?;
    if problem.models.len() < 2 {
        return Err(cfg.error_at(
            Some("model"),
            "blur_sizes",
            "model selection needs at least two candidate models",
        ));
    }
    let all: Vec<usize> = (0..problem.models.len()).collect();
    let sampler = cfg.config.sampler.samplers[0];
    let jobs = build_jobs(cfg, &problem, &all, &[sampler], true)?;
    let results = execute(cfg, &problem, jobs, w)?;
    for r in &results {
        let dir = chain_dir(&problem.models[r.job.model], r.job.sampler, r.job.seed);
        w.write_bytes(
            &format!("{dir}/u_trace.csv"),
            u_trace_csv(&r.out.u_trace)?.as_bytes(),
        )?;
    }
    evidence_outputs(cfg, &problem, &results, sampler, w, lines)
}

#[derive(Debug, Serialize)]
struct Replication {
    seed: u64,
    report: EvidenceReport,
}

#[derive(Debug, Serialize)]
struct EvidenceFile {
    selection_alpha: f64,
    model_prior: &'static str,
    replications: Vec<Replication>,
    /// Replications in which each model had the highest probability.
    wins: BTreeMap<String, usize>,
}

fn evidence_outputs(
    cfg: &LoadedConfig,
    problem: &Problem,
    results: &[ChainResult],
    sampler: SamplerKind,
    w: &mut RunWriter,
    lines: &mut Vec<String>,
) -> CliResult<()> {
    let a = &cfg.config.analysis;
    let k = problem.models.len();
    let mut reps = vec![];
    let mut wins: BTreeMap<String, usize> = problem
        .models
        .iter()
        .map(|m| (m.label.clone(), 0))
        .collect();
    let mut sens_rows = vec![];
    for &seed in &cfg.config.sampler.seeds {
        let chains: Vec<CrossPotentials> = (0..k)
            .map(|m| {
                let r = results
                    .iter()
                    .find(|r| r.job.model == m && r.job.seed == seed && r.job.sampler == sampler)
                    .expect("one chain per model and seed");
                CrossPotentials {
                    u: r.cross.clone().unwrap_or_default(),
                    owner: m,
                }
            })
            .collect();
        let chain_seeds: Vec<u64> = vec![seed; k];
        let report = improper_prior_evidence(
            &problem.models,
            &chains,
            a.selection_alpha,
            &a.sensitivity_alphas,
            &chain_seeds,
        )?;
        let best = report.best_model();
        *wins
            .get_mut(&problem.models[best].label)
            .expect("label present") += 1;
        let probs: Vec<String> = report
            .per_model
            .iter()
            .zip(&report.posterior_probs)
            .map(|(m, p)| format!("{} {p:.4}", m.label))
            .collect();
        lines.push(format!("seed {seed}: p(M|y) = {}", probs.join(", ")));
        sens_rows.push(
            [seed as f64, report.region.alpha]
                .into_iter()
                .chain(report.posterior_probs.iter().copied())
                .collect::<Vec<f64>>(),
        );
        for row in &report.sensitivity {
            sens_rows.push(
                [seed as f64, row.alpha]
                    .into_iter()
                    .chain(row.posterior_probs.iter().copied())
                    .collect(),
            );
        }
        reps.push(Replication { seed, report });
    }
    let header: Vec<String> = ["seed".to_string(), "alpha".to_string()]
        .into_iter()
        .chain(problem.models.iter().map(|m| format!("p_{}", m.label)))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    w.write_csv("evidence_sensitivity.csv", &header, sens_rows)?;
    w.write_json(
        "evidence.json",
        &EvidenceFile {
            selection_alpha: a.selection_alpha,
            model_prior: "uniform",
            replications: reps,
            wins,
        },
    )
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Serialize)]
struct HpdPair {
    alpha: f64,
    eta_a: f64,
    eta_b: f64,
    rel_diff: f64,
}

#[derive(Debug, Serialize)]
struct SeedComparison {
    seed: u64,
    hpd: Vec<HpdPair>,
    /// `|m_a - m_b| / max(|m_b|, |sd_b|)` over all components.
    mean_rel_diff: f64,
    a: ChainSummary,
    b: ChainSummary,
}

#[derive(Debug, Serialize)]
struct CompareReport {
    model: String,
    samplers: [SamplerKind; 2],
    seeds: Vec<u64>,
    max_hpd_rel_diff: f64,
    hpd_rel_threshold: f64,
    hpd_within_threshold: bool,
    max_mean_rel_diff: f64,
    mean_rel_threshold: f64,
    mean_within_threshold: bool,
    per_seed: Vec<SeedComparison>,
}

fn norm(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

fn compare(cfg: &LoadedConfig, w: &mut RunWriter, lines: &mut Vec<String>) -> CliResult<()> {
    let s = &cfg.config.sampler;
    let a = &cfg.config.analysis;
    if s.samplers.len() != 2 {
        return Err(cfg.error_at(
            Some("sampler"),
            "samplers",
            "compare needs exactly two samplers, e.g. [\"myula\", \"pxmala\"]",
        ));
    }
    let pair = [s.samplers[0], s.samplers[1]];
    let problem = problem_for(cfg)?;
    let jobs = build_jobs(cfg, &problem, &[0], &pair, false)?;
    let results = execute(cfg, &problem, jobs, w)?;
    let find = |sampler: SamplerKind, seed: u64| {
        results
            .iter()
            .filter(|r| r.job.sampler == sampler && r.job.seed == seed)
            .nth(if pair[0] == pair[1] && sampler == pair[1] {
                1
            } else {
                0
            })
            .expect("chain for every sampler and seed")
    };
    let mut per_seed = vec![];
    for &seed in &s.seeds {
        let (ra, rb) = (find(pair[0], seed), find(pair[1], seed));
        let sa = summarise(&problem, ra, &a.hpd_alphas)?;
        let sb = summarise(&problem, rb, &a.hpd_alphas)?;
        let hpd: Vec<HpdPair> = sa
            .hpd
            .iter()
            .zip(&sb.hpd)
            .map(|(x, y)| HpdPair {
                alpha: x.alpha,
                eta_a: x.eta_alpha,
                eta_b: y.eta_alpha,
                rel_diff: rel(x.eta_alpha, y.eta_alpha),
            })
            .collect();
        let (ma, mb) = (&ra.out.running_mean.data, &rb.out.running_mean.data);
        let diff = norm(ma.iter().zip(mb).map(|(x, y)| x - y));
        let scale = norm(mb.iter().copied()).max(norm(
            rb.out.running_second_moment.data.iter().map(|v| v.sqrt()),
        ));
        let mean_rel_diff = if diff == 0.0 { 0.0 } else { diff / scale };
        w.write_csv(
            &format!("compare/hpd_seed-{seed}.csv"),
            &["alpha", "eta_a", "eta_b", "rel_diff"],
            hpd.iter()
                .map(|h| vec![h.alpha, h.eta_a, h.eta_b, h.rel_diff]),
        )?;
        w.write_csv(
            &format!("compare/acf_seed-{seed}.csv"),
            &["lag", "a_u", "b_u", "a_slowest", "b_slowest"],
            acf_rows(
                &[
                    &ra.out.u_trace,
                    &rb.out.u_trace,
                    &ra.pixel_trace,
                    &rb.pixel_trace,
                ],
                a.max_lag,
            ),
        )?;
        for (tag, r) in [("a", ra), ("b", rb)] {
            w.write_bytes(
                &format!("compare/u_trace_{tag}_seed-{seed}.csv"),
                u_trace_csv(&r.out.u_trace)?.as_bytes(),
            )?;
        }
        per_seed.push(SeedComparison {
            seed,
            hpd,
            mean_rel_diff,
            a: sa,
            b: sb,
        });
    }
    let max_hpd = per_seed
        .iter()
        .flat_map(|p| p.hpd.iter().map(|h| h.rel_diff))
        .fold(0.0, f64::max);
    let max_mean = per_seed.iter().map(|p| p.mean_rel_diff).fold(0.0, f64::max);
    let report = CompareReport {
        model: problem.models[0].label.clone(),
        samplers: pair,
        seeds: s.seeds.clone(),
        max_hpd_rel_diff: max_hpd,
        hpd_rel_threshold: a.hpd_rel_threshold,
        hpd_within_threshold: max_hpd <= a.hpd_rel_threshold,
        max_mean_rel_diff: max_mean,
        mean_rel_threshold: a.mean_rel_threshold,
        mean_within_threshold: max_mean <= a.mean_rel_threshold,
        per_seed,
    };
    lines.push(format!(
        "{:?} vs {:?} on {}: max HPD threshold rel diff {:.4} (threshold {}), max posterior-mean rel diff {:.4} (threshold {})",
        pair[0], pair[1], report.model, max_hpd, a.hpd_rel_threshold, max_mean, a.mean_rel_threshold
    ));
    w.write_json("compare/report.json", &report)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

// ---------------------------------------------------------------------------
// analytic1d and bounds

#[derive(Debug, Serialize)]
struct AnalyticSummary {
    target: TargetKind,
    lambdas: Vec<f64>,
    tv: Vec<f64>,
    /// Least-squares slope of log TV against log lambda.
    loglog_slope: f64,
}

fn target_name(t: TargetKind) -> &'static str {
    match t {
        TargetKind::Laplace => "laplace",
        TargetKind::Uniform => "uniform",
    }
}

fn analytic_outputs(
    cfg: &LoadedConfig,
    w: &mut RunWriter,
    lines: &mut Vec<String>,
) -> CliResult<()> {
    let b = cfg.config.analytic1d.clone().unwrap_or_default();
    let lambdas = log_grid(b.tv_lambda_min, b.tv_lambda_max, b.tv_points);
    let mut summaries = vec![];
    for &t in &b.targets {
        let name = target_name(t);
        for &l in &b.lambdas {
            w.write_csv(
                &format!("figure1_{name}_lambda_{l}.csv"),
                &["x", "pi", "pi_lambda"],
                density_curve(t, l, b.x_min, b.x_max, b.points)
                    .into_iter()
                    .map(|r| r.to_vec()),
            )?;
        }
        let curve = tv_curve(t, &lambdas)?;
        w.write_csv(
            &format!("figure2_{name}.csv"),
            &["lambda", "tv", "tv_sup"],
            curve.iter().map(|p| vec![p[0], p[1], 2.0 * p[1]]),
        )?;
        let tv: Vec<f64> = curve.iter().map(|p| p[1]).collect();
        let slope = loglog_slope(&lambdas, &tv);
        lines.push(format!(
            "{name}: TV log-log slope {slope:.3} over lambda in [{}, {}]",
            b.tv_lambda_min, b.tv_lambda_max
        ));
        summaries.push(AnalyticSummary {
            target: t,
            lambdas: lambdas.clone(),
            tv,
            loglog_slope: slope,
        });
    }
    w.write_json("analytic1d.json", &summaries)
}

#[derive(Debug, Serialize)]
pub struct BoundsReport {
    pub inputs: BoundInputs,
    pub t_horizon: f64,
    pub gamma_max: f64,
    /// Decimal string; exceeds the range of JSON numbers in general.
    pub n_min: String,
    pub n_min_saturated: bool,
    pub log_n_min: f64,
    pub log10_n_min: f64,
    pub intermediates: BTreeMap<String, f64>,
}

pub fn bounds_report(inputs: &BoundInputs) -> CliResult<BoundsReport> {
    let b: BoundBudget = match inputs {
        BoundInputs::Convex(i) => convex_budget(i)?,
        BoundInputs::Strong(i) => strong_budget(i)?,
    };
    Ok(BoundsReport {
        inputs: *inputs,
        t_horizon: b.t_horizon,
        gamma_max: b.gamma_max,
        n_min: b.n_min.to_string(),
        n_min_saturated: b.n_min_saturated,
        log_n_min: b.log_n_min,
        log10_n_min: b.log_n_min / std::f64::consts::LN_10,
        intermediates: b.intermediates,
    })
}

fn bounds_outputs(
    w: &mut RunWriter,
    inputs: &BoundInputs,
    lines: &mut Vec<String>,
) -> CliResult<()> {
    let r = bounds_report(inputs)?;
    lines.push(format!(
        "T = {:.6e}, gamma_max = {:.6e}, n_min = {}{} (log10 {:.3})",
        r.t_horizon,
        r.gamma_max,
        r.n_min,
        if r.n_min_saturated {
            " (saturated)"
        } else {
            ""
        },
        r.log10_n_min
    ));
    w.write_json("bounds.json", &r)
}

/// Largest relative difference of two images, for tests and reports.
pub fn max_rel_diff(a: &ImageField, b: &ImageField) -> f64 {
    a.data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| rel(*x, *y))
        .fold(0.0, f64::max)
}
