use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand as ClapSubcommand};

use myula::bounds::{ConvexBoundInputs, StrongBoundInputs};
use myula_cli::config::{BoundInputs, BoundKind};
use myula_cli::run::{bounds_report, run_directory};
use myula_cli::writer::RunWriter;
use myula_cli::{run, CliError, CliResult, LoadedConfig, Subcommand};

#[derive(Parser)]
#[command(
    name = "myula",
    version,
    about = "Moreau-Yosida Langevin sampling experiments"
)]
struct Cli {
    /// Root directory for relative `output_dir` values.
    #[arg(long, global = true, env = "MYULA_OUTPUT_ROOT", default_value = ".")]
    output_root: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Run the chains of an experiment and write traces, checkpoints and summaries.
    Sample { config: PathBuf },
    /// Run two samplers on the same model and seeds and compare them.
    Compare { config: PathBuf },
    /// Estimate posterior model probabilities for the candidate models.
    Select { config: PathBuf },
    /// HPD thresholds on a fine grid and membership of test images.
    Hpd { config: PathBuf },
    /// Iteration budgets of the convergence bounds.
    Bounds(BoundsArgs),
    /// Density and total-variation curves of the 1D targets.
    Analytic1d { config: PathBuf },
}

#[derive(Args)]
struct BoundsArgs {
    /// Config file with a [bounds] section; flags are used when absent.
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    kind: Option<BoundKind>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    l_lip: Option<f64>,
    #[arg(long)]
    gamma_bar: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    x_dist: f64,
    #[arg(long)]
    eta_c: Option<f64>,
    #[arg(long)]
    r_c: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    #[arg(long)]
    r_s: Option<f64>,
    /// Output directory under the output root.
    #[arg(long, default_value = "run")]
    output_dir: String,
}

fn flag_error(message: &str) -> CliError {
    CliError::Config {
        path: "<command line>".into(),
        line: None,
        message: message.into(),
    }
}

impl BoundsArgs {
    fn inputs(&self) -> CliResult<BoundInputs> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| flag_error(&format!("--{name} is required")))
        };
        let d = self.d.ok_or_else(|| flag_error("--d is required"))?;
        let l_lip = need(self.l_lip, "l-lip")?;
        let gamma_bar = need(self.gamma_bar, "gamma-bar")?;
        let epsilon = need(self.epsilon, "epsilon")?;
        Ok(
            match self.kind.ok_or_else(|| flag_error("--kind is required"))? {
                BoundKind::Convex => BoundInputs::Convex(ConvexBoundInputs {
                    eta_c: need(self.eta_c, "eta-c")?,
                    r_c: need(self.r_c, "r-c")?,
                    d,
                    l_lip,
                    gamma_bar,
                    epsilon,
                    x_dist: self.x_dist,
                }),
                BoundKind::Strong => BoundInputs::Strong(StrongBoundInputs {
                    m: need(self.m, "m")?,
                    r_s: need(self.r_s, "r-s")?,
                    d,
                    l_lip,
                    gamma_bar,
                    epsilon,
                    x_dist: self.x_dist,
                }),
            },
        )
    }
}

fn bounds_from_flags(args: &BoundsArgs, root: &std::path::Path) -> CliResult<()> {
    let inputs = args.inputs()?;
    let report = bounds_report(&inputs)?;
    let dir = run_directory(root, &args.output_dir, Subcommand::Bounds);
    let mut w = RunWriter::create(&dir)?;
    w.write_json("bounds.json", &report)?;
    let text = serde_json::to_string(&inputs).expect("inputs serialise");
    w.finish("bounds", "bounds", &text, &[])?;
    println!(
        "T = {:.6e}, gamma_max = {:.6e}, n_min = {} (log10 {:.3})",
        report.t_horizon, report.gamma_max, report.n_min, report.log10_n_min
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    let (sub, path) = match cli.command {
        Command::Sample { config } => (Subcommand::Sample, config),
        Command::Compare { config } => (Subcommand::Compare, config),
        Command::Select { config } => (Subcommand::Select, config),
        Command::Hpd { config } => (Subcommand::Hpd, config),
        Command::Analytic1d { config } => (Subcommand::Analytic1d, config),
        Command::Bounds(args) => match args.config.clone() {
            Some(config) => (Subcommand::Bounds, config),
            None => return bounds_from_flags(&args, &cli.output_root),
        },
    };
    let cfg = LoadedConfig::load(&path)?;
    let summary = run(&cfg, sub, &cli.output_root)?;
    for line in &summary.lines {
        println!("{line}");
    }
    if summary.verification.checked > 0 {
        println!(
            "verified {} files against the previous run",
            summary.verification.checked
        );
    }
    println!("wrote {}", summary.dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
