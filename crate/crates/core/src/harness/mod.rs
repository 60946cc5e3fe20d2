//! Configuration-driven experiments: manufactured solves, certification,
//! refinement studies and the reproduction suite.

mod config;
mod study;
mod suite;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ellipticity::{
    fit_k_condition, verify_k_condition, BoundNonlinearity, EllipticityCertificate, KViolation,
};
use crate::error::Error;
use crate::fields::{io, spectral_hessian, GridSpec, NormReport, VectorField};
use crate::linear::{LinearDiagnostics, LinearSolver};
use crate::nonlinear::{campanato_solve, IterationTrace, SolveStatus};
use crate::stability::{solve_via_nearness, StabilityReport};
use crate::tensor::{SearchConfig, SymTensor4};

pub use config::{
    CertificateSource, ExperimentConfig, GridConfig, ModeSpec, OperatorConfig, OutputConfig, RhsSource,
    StudyConfig, StudyProfile, TensorSource,
};
pub use study::{run_convergence_study, ConvergenceRow, ConvergenceTable};
pub use suite::{run_reference_suite, SuiteBundle, SuiteEntry};

/// A module error tagged with the pipeline stage that raised it.
#[derive(Debug, thiserror::Error)]
#[error("stage '{stage}' failed: {source}")]
pub struct StageError {
    pub stage: &'static str,
    #[source]
    pub source: Error,
}

pub type StageResult<T> = std::result::Result<T, StageError>;

pub(crate) trait AtStage<T> {
    fn at(self, stage: &'static str) -> StageResult<T>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub config: ExperimentConfig,
    pub nu: f64,
    pub certificate: Option<EllipticityCertificate>,
    pub k_check: Option<KViolation>,
    pub status: Option<SolveStatus>,
    pub iterations: Option<usize>,
    /// `ceil(ln tol / ln K) + 5`
    pub iteration_bound: Option<usize>,
    pub final_residual: Option<f64>,
    pub max_ratio: Option<f64>,
    pub ratios_within_bound: Option<bool>,
    pub error_l2: Option<f64>,
    pub error_l2_relative: Option<f64>,
    pub error_hessian: Option<f64>,
    pub error_hessian_relative: Option<f64>,
    pub linear: Option<LinearDiagnostics>,
    pub stability: Option<StabilityReport>,
    pub solution_norms: Option<NormReport>,
    /// `n >= 5`, the range where the second-order Sobolev embedding is available.
    pub dimension_valid: bool,
    pub dimension_note: String,
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

fn finite_value(v: &toml::Value) -> bool {
    match v {
        toml::Value::Float(x) => x.is_finite(),
        toml::Value::Array(a) => a.iter().all(finite_value),
        toml::Value::Table(t) => t.values().all(finite_value),
        _ => true,
    }
}

impl RunReport {
    fn new(command: &str, cfg: &ExperimentConfig, nu: f64) -> Self {
        let n = cfg.grid.dim;
        RunReport {
            command: command.into(),
            config: cfg.clone(),
            nu,
            certificate: None,
            k_check: None,
            status: None,
            iterations: None,
            iteration_bound: None,
            final_residual: None,
            max_ratio: None,
            ratios_within_bound: None,
            error_l2: None,
            error_l2_relative: None,
            error_hessian: None,
            error_hessian_relative: None,
            linear: None,
            stability: None,
            solution_norms: None,
            dimension_valid: n >= 5,
            dimension_note: if n >= 5 {
                format!("n = {n} >= 5: the 2* and 2** diagnostics are populated")
            } else {
                format!("n = {n} < 5: whole-space embedding diagnostics are not defined")
            },
            files: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    /// Every floating-point entry, nested ones included, is finite.
    pub fn all_finite(&self) -> bool {
        toml::Value::try_from(self).map(|v| finite_value(&v)).unwrap_or(false)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    fn record_errors(&mut self, u: &VectorField, exact: Option<&VectorField>) -> StageResult<()> {
        self.solution_norms = Some(u.norms());
        let Some(ex) = exact else { return Ok(()) };
        let ex = ex.project_gauge();
        let e = u.sub(&ex).at("errors")?;
        let l2 = e.l2_norm();
        let h = spectral_hessian(&e).l2_norm();
        let (ln, hn) = (ex.l2_norm(), spectral_hessian(&ex).l2_norm());
        self.error_l2 = Some(l2);
        self.error_hessian = Some(h);
        self.error_l2_relative = Some(if ln > 0.0 { l2 / ln } else { l2 });
        self.error_hessian_relative = Some(if hn > 0.0 { h / hn } else { h });
        Ok(())
    }

    fn record_trace(&mut self, trace: &IterationTrace, tol: f64) {
        self.status = Some(trace.status);
        self.iterations = Some(trace.iterations());
        self.final_residual = Some(trace.final_residual());
        self.max_ratio = trace.max_ratio();
        self.ratios_within_bound = Some(trace.ratios_within_bound);
        self.iteration_bound = Some(iteration_bound(tol, trace.contraction_bound));
    }
}

/// `ceil(ln tol / ln K) + 5`, or 6 when `K = 0`.
pub fn iteration_bound(tol: f64, k: f64) -> usize {
    if k <= 0.0 {
        return 6;
    }
    (tol.ln() / k.ln() - 1e-9).ceil().max(1.0) as usize + 5
}

/// Everything derived from a config before solving.
pub struct Problem {
    pub grid: GridSpec,
    pub tensor: SymTensor4,
    pub nu: f64,
    pub operator: BoundNonlinearity,
    pub exact: Option<VectorField>,
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> StageResult<Self> {
        let tensor = cfg.tensor.load().at("tensor")?;
        let grid = cfg.grid.build().at("grid")?;
        let nu = tensor.ellipticity_constant(&SearchConfig::default()).nu;
        let operator = cfg
            .operator
            .spec(&tensor)
            .and_then(|s| s.bind(&grid))
            .at("operator")?;
        let exact = cfg.rhs.exact_solution(&grid).at("rhs")?;
        Ok(Problem {
            grid,
            tensor,
            nu,
            operator,
            exact,
        })
    }

    /// `F(., D^2u*)` for manufactured sources, the file contents otherwise.
    pub fn rhs_for(&self, cfg: &ExperimentConfig, op: &BoundNonlinearity) -> StageResult<VectorField> {
        match &self.exact {
            Some(u) => op.apply(&spectral_hessian(u)).at("rhs"),
            None => cfg.rhs.load_field(&self.grid).at("rhs"),
        }
    }

    pub fn certificate(&self, cfg: &ExperimentConfig) -> StageResult<(EllipticityCertificate, KViolation)> {
        match &cfg.certificate {
            CertificateSource::Fitted => {
                let fit = fit_k_condition(&self.operator, &self.tensor, &cfg.fit).at("certify")?;
                let cert = fit.certificate.ok_or(StageError {
                    stage: "certify",
                    source: Error::InfeasibleCertificate(fit.best_sum),
                })?;
                let check = verify_k_condition(
                    &self.operator,
                    &self.tensor,
                    &cert.alpha,
                    cert.beta,
                    cert.gamma,
                    &cfg.fit.sampler,
                )
                .at("certify")?;
                Ok((cert, check))
            }
            CertificateSource::Supplied { alpha, beta, gamma } => {
                let check = verify_k_condition(
                    &self.operator,
                    &self.tensor,
                    alpha,
                    *beta,
                    *gamma,
                    &cfg.fit.sampler,
                )
                .at("certify")?;
                let cert = EllipticityCertificate::supplied(
                    self.nu,
                    alpha.clone(),
                    alpha.bounds(&self.operator).at("certify")?,
                    *beta,
                    *gamma,
                    self.operator.spec().declared_lipschitz(),
                )
                .at("certify")?;
                Ok((cert, check))
            }
        }
    }
}

/// Fits or verifies the structure condition for the configured operator.
pub fn run_certify(cfg: &ExperimentConfig) -> StageResult<RunReport> {
    let start = Instant::now();
    cfg.validate().at("config")?;
    let pb = Problem::build(cfg)?;
    let mut report = RunReport::new("certify", cfg, pb.nu);
    let (cert, check) = pb.certificate(cfg)?;
    report.certificate = Some(cert);
    report.k_check = Some(check);
    report.wall_time_s = start.elapsed().as_secs_f64();
    finish(report, cfg, None, None)
}

/// Solves `A:D^2u = f` for the configured anchor tensor.
pub fn run_linear(cfg: &ExperimentConfig) -> StageResult<RunReport> {
    let start = Instant::now();
    cfg.validate().at("config")?;
    let tensor = cfg.tensor.load().at("tensor")?;
    let grid = cfg.grid.build().at("grid")?;
    let nu = tensor.ellipticity_constant(&SearchConfig::default()).nu;
    let exact = cfg.rhs.exact_solution(&grid).at("rhs")?;
    let f = match &exact {
        Some(u) => spectral_hessian(u).contract(&tensor).at("rhs")?,
        None => cfg.rhs.load_field(&grid).at("rhs")?,
    };
    let solver = LinearSolver::new(&tensor, &grid, cfg.regularization).at("solve")?;
    let res = solver.solve(&f).at("solve")?;
    let mut report = RunReport::new("solve-linear", cfg, nu);
    report.record_errors(&res.u, exact.as_ref())?;
    report.final_residual = Some(res.diagnostics.residual_l2);
    report.linear = Some(res.diagnostics);
    report.wall_time_s = start.elapsed().as_secs_f64();
    finish(report, cfg, Some(&res.u), None)
}

/// Manufactured (or file) solve of `F(., D^2u) = f` by the near-operator iteration.
pub fn run_manufactured(cfg: &ExperimentConfig) -> StageResult<RunReport> {
    let start = Instant::now();
    cfg.validate().at("config")?;
    let pb = Problem::build(cfg)?;
    let mut report = RunReport::new("solve", cfg, pb.nu);
    let (cert, check) = pb.certificate(cfg)?;
    let f = pb.rhs_for(cfg, &pb.operator)?;
    let (u, trace) = campanato_solve(&pb.tensor, &pb.operator, &cert, &f, &cfg.solver).at("solve")?;
    report.certificate = Some(cert);
    report.k_check = Some(check);
    report.record_trace(&trace, cfg.solver.tol_residual);
    report.record_errors(&u, pb.exact.as_ref())?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    finish(report, cfg, Some(&u), Some(trace.to_csv()))
}

/// Solves `G(., D^2u) = g` around the certified solver for `F`.
pub fn run_stability(cfg: &ExperimentConfig) -> StageResult<RunReport> {
    let start = Instant::now();
    cfg.validate().at("config")?;
    let pb = Problem::build(cfg)?;
    let g_cfg = cfg.perturbed.as_ref().ok_or(StageError {
        stage: "config",
        source: Error::InvalidInput("stability runs need a [perturbed] operator".into()),
    })?;
    let g_op = g_cfg
        .spec(&pb.tensor)
        .and_then(|s| s.bind(&pb.grid))
        .at("operator")?;
    let mut report = RunReport::new("solve-stability", cfg, pb.nu);
    let (cert, check) = pb.certificate(cfg)?;
    let rhs = pb.rhs_for(cfg, &g_op)?;
    let outcome = solve_via_nearness(&pb.tensor, &pb.operator, &g_op, &cert, &rhs, &cfg.stability);
    report.certificate = Some(cert);
    report.k_check = Some(check);
    let (u, st) = match outcome {
        Ok(v) => v,
        Err(Error::NearnessViolated(r)) => {
            report.stability = Some(*r.clone());
            report.wall_time_s = start.elapsed().as_secs_f64();
            if let Some(dir) = &cfg.outputs.dir {
                let _ = write_outputs(&mut report, cfg, dir, None, None);
            }
            return Err(StageError {
                stage: "stability",
                source: Error::NearnessViolated(r),
            });
        }
        Err(e) => return Err(StageError { stage: "stability", source: e }),
    };
    report.status = st.outer_status;
    report.iterations = Some(st.outer_trace.len());
    report.final_residual = Some(st.final_residual());
    report.max_ratio = st.max_ratio();
    report.ratios_within_bound = Some(st.ratios_within_bound);
    let csv = stability_csv(&st);
    report.stability = Some(st);
    report.record_errors(&u, pb.exact.as_ref())?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    finish(report, cfg, Some(&u), Some(csv))
}

fn stability_csv(st: &StabilityReport) -> String {
    let mut s = String::from("iter,nearness,residual,ratio,inner_iterations\n");
    for r in &st.outer_trace {
        s.push_str(&format!(
            "{},{:e},{:e},{},{}\n",
            r.iter,
            r.nearness,
            r.residual,
            r.ratio.map_or(String::new(), |v| format!("{v:e}")),
            r.inner_iterations
        ));
    }
    s
}

fn finish(
    mut report: RunReport,
    cfg: &ExperimentConfig,
    u: Option<&VectorField>,
    trace_csv: Option<String>,
) -> StageResult<RunReport> {
    if let Some(dir) = &cfg.outputs.dir {
        write_outputs(&mut report, cfg, dir, u, trace_csv).at("output")?;
    }
    Ok(report)
}

fn write_outputs(
    report: &mut RunReport,
    cfg: &ExperimentConfig,
    dir: &Path,
    u: Option<&VectorField>,
    trace_csv: Option<String>,
) -> crate::Result<()> {
    fs::create_dir_all(dir)?;
    let stem = report.command.replace('-', "_");
    let mut files: Vec<PathBuf> = Vec::new();
    if let (Some(csv), true) = (trace_csv, cfg.outputs.csv) {
        let p = dir.join(format!("{stem}_trace.csv"));
        fs::write(&p, csv)?;
        files.push(p);
    }
    if let Some(u) = u {
        if cfg.outputs.binary {
            let p = dir.join(format!("{stem}_solution.bin"));
            io::write_binary(u, BufWriter::new(fs::File::create(&p)?))?;
            files.push(p);
        }
        if cfg.outputs.csv {
            let p = dir.join(format!("{stem}_slice.csv"));
            let n = u.grid().dim();
            io::write_csv_slice(u, 0, if n > 1 { 1 } else { 0 }, BufWriter::new(fs::File::create(&p)?))?;
            files.push(p);
        }
    }
    fs::write(dir.join("config_echo.toml"), cfg.to_toml()?)?;
    files.push(dir.join("config_echo.toml"));
    let report_path = dir.join(format!("{stem}_report.json"));
    files.push(report_path.clone());
    report.files = files.iter().map(|p| p.display().to_string()).collect();
    if cfg.outputs.json {
        fs::write(&report_path, report.to_json())?;
    }
    Ok(())
}
