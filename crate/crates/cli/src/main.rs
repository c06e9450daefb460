use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use pdpalm_cli::output::{render_table, write_all};
use pdpalm_cli::plan::{parse_dims, parse_seeds, read_seed_manifest, BP_FULL_DIMS};
use pdpalm_cli::{run, Experiment, ExperimentPlan, PlanRequest, EXIT_INVALID_PLAN};
use pdpalm_core::{Algorithm, DualStepMode};

/// Runs the basis-pursuit and LASSO comparisons, or certifies a solver run.
///
/// Exit status: 0 success, 1 a run diverged, 2 a certificate failed, 3 invalid plan.
#[derive(Debug, Parser)]
#[command(name = "pdpalm", version)]
struct Cli {
    /// basis-pursuit, lasso, or custom:PATH to a problem document.
    #[arg(long, default_value = "basis-pursuit")]
    experiment: Experiment,

    /// Comma-separated MxN pairs, or `full` for the full basis-pursuit size list.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<String>>,

    /// Comma-separated seeds; `a-b` is an inclusive range.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<String>>,

    /// JSON file with a seed array (or {"seeds": [...]}); overrides --seeds.
    #[arg(long)]
    seed_manifest: Option<PathBuf>,

    /// Comma-separated algorithm names, e.g. pdp-alm,dp-balm,b-alm.
    #[arg(long, value_delimiter = ',')]
    algs: Option<Vec<Algorithm>>,

    #[arg(long)]
    tol: Option<f64>,

    #[arg(long)]
    max_iter: Option<usize>,

    /// Penalty β of the basis-pursuit PDP runs.
    #[arg(long)]
    beta: Option<f64>,

    /// Proximal weight τ (and ρ of the balanced baselines).
    #[arg(long)]
    tau: Option<f64>,

    /// δ of the balanced dual system.
    #[arg(long)]
    delta: Option<f64>,

    /// Comma-separated τ₂ values of the LASSO sweep.
    #[arg(long, value_delimiter = ',')]
    tau2_sweep: Option<Vec<f64>>,

    /// proof (certified) or literal.
    #[arg(long)]
    dual_step_mode: Option<DualStepMode>,

    /// Project the multiplier onto λ ≥ 0 for inequality constraints.
    #[arg(long)]
    project_dual: Option<bool>,

    /// Full-size dimensions (the 14 basis-pursuit sizes, LASSO 1050x3500) instead of the small defaults.
    #[arg(long)]
    full_scale: bool,

    /// Check contraction and ergodic certificates against a reference solution.
    #[arg(long)]
    certify: bool,

    /// Keep every k-th record in trace files (the last record is always kept).
    #[arg(long)]
    trace_every: Option<usize>,

    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn request(cli: Cli) -> anyhow::Result<PlanRequest> {
    let dims = match cli.dims {
        Some(list) if list.iter().any(|d| d.eq_ignore_ascii_case("full")) => Some(BP_FULL_DIMS.to_vec()),
        Some(list) => Some(list.iter().map(|d| parse_dims(d)).collect::<Result<_, _>>().map_err(anyhow::Error::msg)?),
        None => None,
    };
    let seeds = match (&cli.seed_manifest, cli.seeds) {
        (Some(path), _) => Some(read_seed_manifest(path)?),
        (None, Some(list)) => {
            let mut seeds = Vec::new();
            for s in &list {
                seeds.extend(parse_seeds(s).map_err(anyhow::Error::msg)?);
            }
            Some(seeds)
        }
        (None, None) => None,
    };
    Ok(PlanRequest {
        experiment: Some(cli.experiment),
        dims,
        seeds,
        algorithms: cli.algs,
        beta: cli.beta,
        tau: cli.tau,
        delta: cli.delta,
        tau2_sweep: cli.tau2_sweep,
        tol: cli.tol,
        max_iter: cli.max_iter,
        dual_step_mode: cli.dual_step_mode,
        project_dual: cli.project_dual,
        full_scale: cli.full_scale,
        certify: cli.certify,
        trace_every: cli.trace_every,
        output_dir: Some(cli.out),
    })
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let plan = match request(cli).and_then(|req| Ok(ExperimentPlan::resolve(req)?)) {
        Ok(plan) => plan,
        Err(e) => {
            eprintln!("invalid plan: {e:#}");
            return ExitCode::from(EXIT_INVALID_PLAN as u8);
        }
    };
    let report = match run(&plan) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    for v in &report.validation {
        eprintln!("warning: {v}");
    }
    if let Err(e) = write_all(&report, &argv) {
        eprintln!("error writing results: {e:#}");
        return ExitCode::from(1);
    }
    print!("{}", render_table(&report));
    println!("results written to {}", plan.output_dir.display());
    ExitCode::from(report.exit_code() as u8)
}
