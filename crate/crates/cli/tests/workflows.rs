use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use myula_cli::writer::verify_directory;
use myula_cli::{run, LoadedConfig, Subcommand};
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn load(text: &str, dir: &Path) -> LoadedConfig {
    LoadedConfig::from_text(text, dir.join("exp.toml")).unwrap()
}

fn shipped(name: &str) -> String {
    fs::read_to_string(configs().join(name)).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn myula() -> Command {
    Command::new(env!("CARGO_BIN_EXE_myula"))
}

const SMALL_TV: &str = r#"
experiment = "deconv_tv"
output_dir = "small"
workers = 2

[image]
width = 16
height = 16
noise_seed = 3

[model]
sigma = 0.47
beta = 0.03
blur_sizes = [3, 5]
generating = 1
tv_max_iter = 50

[sampler]
n_iter = 1500
thin = 5
seeds = [1, 2]

[analysis]
hpd_alphas = [0.1, 0.5]
max_lag = 20
"#;

#[test]
fn shipped_configs_parse() {
    for entry in fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        LoadedConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
}

#[test]
fn analytic1d_writes_density_and_tv_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(&shipped("analytic1d.toml"), tmp.path());
    let s = run(&cfg, Subcommand::Analytic1d, tmp.path()).unwrap();
    for name in [
        "figure1_laplace_lambda_0.01.csv",
        "figure1_uniform_lambda_1.csv",
        "figure2_laplace.csv",
    ] {
        let text = fs::read_to_string(s.dir.join(name)).unwrap();
        assert!(text.lines().count() > 30, "{name}");
    }
    let fig1 = fs::read_to_string(s.dir.join("figure1_laplace_lambda_0.1.csv")).unwrap();
    assert_eq!(fig1.lines().next().unwrap(), "x,pi,pi_lambda");
    assert_eq!(fig1.lines().count(), 802);
    let summary = json(&s.dir.join("analytic1d.json"));
    let laplace = summary[0]["loglog_slope"].as_f64().unwrap();
    let uniform = summary[1]["loglog_slope"].as_f64().unwrap();
    assert!((laplace - 2.0).abs() < 0.15, "{laplace}");
    assert!((uniform - 0.5).abs() < 0.15, "{uniform}");
}

#[test]
fn sample_writes_every_artifact_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(SMALL_TV, tmp.path());
    let first = run(&cfg, Subcommand::Sample, tmp.path()).unwrap();
    assert_eq!(first.verification.checked, 0);
    let chain = first.dir.join("blur5x5/myula/seed-2");
    for f in [
        "checkpoint.bin",
        "u_trace.csv",
        "acf.csv",
        "hpd.csv",
        "mean.pgm",
        "mean.png",
        "summary.json",
    ] {
        assert!(chain.join(f).is_file(), "{f}");
    }
    assert!(first.dir.join("evidence.json").is_file());
    let summary = json(&chain.join("summary.json"));
    assert_eq!(summary["kept"].as_u64().unwrap(), 285);
    let second = run(&cfg, Subcommand::Sample, tmp.path()).unwrap();
    assert!(
        second.verification.checked >= 15,
        "{:?}",
        second.verification
    );
    assert!(second.verification.mismatched.is_empty());
    let v = verify_directory(&second.dir).unwrap();
    assert!(v.mismatched.is_empty() && v.checked == second.verification.checked);
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let one = SMALL_TV
        .replace("workers = 2", "workers = 1")
        .replace("\"small\"", "\"one\"");
    let a = run(&load(&one, tmp.path()), Subcommand::Select, tmp.path()).unwrap();
    let b = run(&load(SMALL_TV, tmp.path()), Subcommand::Select, tmp.path()).unwrap();
    for f in [
        "evidence.json",
        "evidence_sensitivity.csv",
        "blur3x3/myula/seed-1/u_trace.csv",
    ] {
        assert_eq!(
            fs::read(a.dir.join(f)).unwrap(),
            fs::read(b.dir.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn hpd_reports_membership_of_truth_and_mean() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_TV
        .replace("blur_sizes = [3, 5]", "blur_sizes = [5]")
        .replace("generating = 1", "generating = 0")
        .replace("seeds = [1, 2]", "seeds = [1, 2]\nstart = \"map\"");
    let s = run(&load(&text, tmp.path()), Subcommand::Hpd, tmp.path()).unwrap();
    let dir = s.dir.join("blur5x5/myula/seed-1");
    let curve = fs::read_to_string(dir.join("hpd_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 100);
    let m = json(&dir.join("hpd_membership.json"));
    assert_eq!(m[0]["image"], "posterior_mean");
    assert_eq!(m[1]["image"], "truth");
    // the posterior mean has lower potential than typical samples
    assert!(
        m[0]["levels"]
            .as_array()
            .unwrap()
            .iter()
            .all(|l| l["inside"] == true),
        "{m:#}"
    );
}

#[test]
fn identical_samplers_compare_to_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL_TV
        .replace("blur_sizes = [3, 5]", "blur_sizes = [5]")
        .replace("generating = 1", "generating = 0")
        .replace(
            "n_iter = 1500",
            "n_iter = 1500\nsamplers = [\"myula\", \"myula\"]",
        );
    let s = run(&load(&text, tmp.path()), Subcommand::Compare, tmp.path()).unwrap();
    let r = json(&s.dir.join("compare/report.json"));
    assert_eq!(r["max_hpd_rel_diff"].as_f64().unwrap(), 0.0);
    assert_eq!(r["max_mean_rel_diff"].as_f64().unwrap(), 0.0);
    assert_eq!(r["mean_within_threshold"], true);
    assert!(s.dir.join("compare/acf_seed-1.csv").is_file());
    assert!(s.dir.join("compare/hpd_seed-2.csv").is_file());
}

#[test]
fn laplace_myula_matches_pxmala_hpd_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(&shipped("compare_laplace.toml"), tmp.path());
    let s = run(&cfg, Subcommand::Compare, tmp.path()).unwrap();
    let r = json(&s.dir.join("compare/report.json"));
    let worst = r["max_hpd_rel_diff"].as_f64().unwrap();
    assert!(worst <= 0.05, "{worst}");
    assert_eq!(r["hpd_within_threshold"], true);
}

#[test]
fn select_prefers_the_generating_blur() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = load(&shipped("deconv_tv_select.toml"), tmp.path());
    let s = run(&cfg, Subcommand::Select, tmp.path()).unwrap();
    let e = json(&s.dir.join("evidence.json"));
    let probs: Vec<f64> = e["replications"][0]["report"]["posterior_probs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p.as_f64().unwrap())
        .collect();
    assert!(probs[0] > probs[1] && probs[0] > probs[2], "{probs:?}");
    assert_eq!(e["wins"]["blur5x5"], 1);
}

#[test]
fn bounds_from_flags_and_from_config_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let out = myula()
        .args([
            "--output-root",
            tmp.path().to_str().unwrap(),
            "bounds",
            "--kind",
            "convex",
            "--d",
            "4096",
        ])
        .args([
            "--l-lip",
            "1",
            "--gamma-bar",
            "1",
            "--epsilon",
            "0.1",
            "--x-dist",
            "1",
            "--eta-c",
            "1",
            "--r-c",
            "1",
        ])
        .args(["--output-dir", "flags"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let flags = json(&tmp.path().join("flags/bounds/bounds.json"));

    let out = myula()
        .env("MYULA_OUTPUT_ROOT", tmp.path())
        .arg("bounds")
        .arg(configs().join("bounds_convex.toml"))
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("n_min = "));
    let from_cfg = json(&tmp.path().join("bounds/bounds/bounds.json"));
    assert_eq!(flags, from_cfg);
    assert!(flags["n_min"].as_str().unwrap().parse::<u128>().is_ok());
    assert!(flags["intermediates"].as_object().unwrap().len() > 3);
}

#[test]
fn config_errors_exit_with_code_two_and_a_line() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, SMALL_TV.replace("thin = 5", "thin = 0")).unwrap();
    let out = myula()
        .arg("--output-root")
        .arg(tmp.path())
        .arg("sample")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.toml:20:"), "{err}");

    let out = myula()
        .args(["bounds", "--kind", "strong", "--d", "3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    fs::write(
        &path,
        SMALL_TV.replace("[sampler]", "[sampler]\ngamma = 10.0"),
    )
    .unwrap();
    let out = myula()
        .arg("--output-root")
        .arg(tmp.path())
        .arg("sample")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("bad.toml:19:") && err.contains("stability cap"),
        "{err}"
    );
}
