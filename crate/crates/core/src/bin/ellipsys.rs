use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ellipsys::harness::{
    run_certify, run_convergence_study, run_linear, run_manufactured, run_reference_suite, run_stability,
    ExperimentConfig, RhsSource, RunReport, TensorSource,
};
use ellipsys::linear::Regularization;
use ellipsys::nonlinear::{ResidualMode, SolveStatus};

#[derive(Parser)]
#[command(name = "ellipsys", version, about = "Solvers and structure checks for fully nonlinear elliptic systems")]
struct Cli {
    /// TOML experiment configuration; defaults are used for missing fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every sampler and random field.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for reports, traces and fields.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltinTensor {
    Identity,
    Example2,
    Random,
}

#[derive(Args)]
struct Overrides {
    /// Spatial dimension n.
    #[arg(long, global = true)]
    dim: Option<usize>,
    /// Number of components N.
    #[arg(long, global = true)]
    components: Option<usize>,
    /// Grid points per axis M.
    #[arg(long, global = true)]
    points: Option<usize>,
    /// Built-in anchor tensor.
    #[arg(long, global = true, value_enum)]
    tensor: Option<BuiltinTensor>,
    /// Parameter of the example-2 tensor.
    #[arg(long, global = true)]
    m: Option<f64>,
    /// Anchor tensor from a text file.
    #[arg(long, global = true)]
    tensor_file: Option<PathBuf>,
    /// Sine perturbation with Lipschitz constant rho nu(A).
    #[arg(long, global = true)]
    rho: Option<f64>,
    /// Band of the random manufactured solution.
    #[arg(long, global = true)]
    band: Option<usize>,
    /// Right-hand side from a binary field file.
    #[arg(long, global = true)]
    rhs_file: Option<PathBuf>,
    /// Residual tolerance, relative to the right-hand side.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Outer iteration cap.
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Stop on the gauge-projected residual instead of the full one.
    #[arg(long, global = true)]
    projected: bool,
    /// Regularised multiplier 1/(|z|^2 + eps).
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    echo_config: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit (or verify a supplied) structure-condition certificate.
    Certify,
    /// Solve A:D2u = f.
    SolveLinear,
    /// Solve F(., D2u) = f by the near-operator iteration.
    Solve,
    /// Solve G(., D2u) = g around the solver for F; G comes from [perturbed].
    SolveStability,
    /// Grid-refinement study.
    Study {
        /// Comma-separated grid sizes, increasing.
        #[arg(long, value_delimiter = ',')]
        points_list: Option<Vec<usize>>,
    },
    /// Reproduce the worked examples and sampled estimates.
    ReferenceSuite,
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p).with_context(|| format!("stage 'config': reading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    let o = &cli.overrides;
    if let Some(v) = o.dim {
        cfg.grid.dim = v;
    }
    if let Some(v) = o.components {
        cfg.grid.components = v;
    }
    if let Some(v) = o.points {
        cfg.grid.points = v;
    }
    let (dim, components) = (cfg.grid.dim, cfg.grid.components);
    if let Some(t) = o.tensor {
        cfg.tensor = match t {
            BuiltinTensor::Identity => TensorSource::Identity { dim, components },
            BuiltinTensor::Example2 => TensorSource::Example2 {
                m: o.m.unwrap_or(8.0),
                dim,
            },
            BuiltinTensor::Random => TensorSource::RandomElliptic {
                dim,
                components,
                seed: cli.seed.unwrap_or(cfg.seed),
            },
        };
    } else if o.dim.is_some() || o.components.is_some() {
        match &mut cfg.tensor {
            TensorSource::Identity { dim: d, components: c } | TensorSource::RandomElliptic { dim: d, components: c, .. } => {
                *d = dim;
                *c = components;
            }
            TensorSource::Example2 { dim: d, .. } => *d = dim,
            _ => {}
        }
    }
    if let Some(p) = &o.tensor_file {
        cfg.tensor = TensorSource::File { path: p.clone() };
    }
    if let Some(rho) = o.rho {
        cfg.operator.rho = Some(rho);
    }
    if let Some(band) = o.band {
        cfg.rhs = match cfg.rhs {
            RhsSource::RandomBand { seed, amplitude, .. } => RhsSource::RandomBand { band, seed, amplitude },
            _ => RhsSource::RandomBand {
                band,
                seed: cfg.seed,
                amplitude: 1.0,
            },
        };
    }
    if let Some(p) = &o.rhs_file {
        cfg.rhs = RhsSource::File { path: p.clone() };
    }
    if let Some(t) = o.tol {
        cfg.solver.tol_residual = t;
        cfg.stability.tol_residual = t;
    }
    if let Some(k) = o.max_iters {
        cfg.solver.max_iters = k;
    }
    if o.projected {
        cfg.solver.residual_mode = ResidualMode::Projected;
    }
    if let Some(eps) = o.eps {
        cfg.regularization = Regularization::Epsilon { eps };
    }
    if let Some(s) = cli.seed {
        cfg.apply_seed(s);
    }
    if let Some(d) = &cli.out_dir {
        cfg.outputs.dir = Some(d.clone());
    }
    Ok(cfg)
}

fn print_report(r: &RunReport) {
    println!("{}", r.to_json());
}

/// Pass criterion per command; `Err` names the stage.
fn verdict(r: &RunReport) -> std::result::Result<(), String> {
    if !r.all_finite() {
        return Err("stage 'report': non-finite entries".into());
    }
    match r.command.as_str() {
        "certify" => match &r.k_check {
            Some(k) if k.holds_on_samples => Ok(()),
            _ => Err("stage 'certify': structure condition violated on samples".into()),
        },
        "solve" | "solve-stability" => match r.status {
            Some(SolveStatus::Converged) => Ok(()),
            s => Err(format!("stage 'solve': finished with status {s:?}")),
        },
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = effective_config(&cli)?;
    if cli.overrides.echo_config {
        print!("{}", cfg.to_toml()?);
        return Ok(true);
    }
    let report = match &cli.command {
        Command::Certify => run_certify(&cfg)?,
        Command::SolveLinear => run_linear(&cfg)?,
        Command::Solve => run_manufactured(&cfg)?,
        Command::SolveStability => run_stability(&cfg)?,
        Command::Study { points_list } => {
            let pts = points_list.clone().unwrap_or_else(|| cfg.study.points.clone());
            let table = run_convergence_study(&cfg, &pts)?;
            let csv = table.to_csv();
            print!("{csv}");
            if let Some(dir) = &cfg.outputs.dir {
                fs::create_dir_all(dir).context("stage 'output'")?;
                fs::write(dir.join("study.csv"), &csv).context("stage 'output'")?;
            }
            return Ok(true);
        }
        Command::ReferenceSuite => {
            let bundle = run_reference_suite(cfg.seed);
            print!("{}", bundle.summary());
            if let Some(dir) = &cfg.outputs.dir {
                fs::create_dir_all(dir).context("stage 'output'")?;
                fs::write(dir.join("reference_suite.json"), serde_json::to_string_pretty(&bundle)?)
                    .context("stage 'output'")?;
            }
            if !bundle.all_passed {
                let failed: Vec<&str> = bundle
                    .entries
                    .iter()
                    .filter(|e| !e.passed)
                    .map(|e| e.name.as_str())
                    .collect();
                eprintln!("error: stage 'suite' failed: {}", failed.join(", "));
            }
            return Ok(bundle.all_passed);
        }
    };
    print_report(&report);
    match verdict(&report) {
        Ok(()) => Ok(true),
        Err(msg) => {
            eprintln!("error: {msg}");
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
