//! Near-operator iteration for `F(., D^2u) = f`.
//!
//! With `A[u] = A : D^2u`, `F[u] = alpha F(., D^2u)` and `g = alpha f`, the map
//! `T[u] = A^-1 (A[u] - (F[u] - g))` is a contraction in the metric
//! `d(u, v) = ||A[u] - A[v]||` with constant `K = sqrt(beta + gamma)` whenever
//! the structure condition holds with `(alpha, beta, gamma)`.

use serde::{Deserialize, Serialize};

use crate::ellipticity::{BoundNonlinearity, EllipticityCertificate};
use crate::error::{Error, Result};
use crate::fields::{spectral_hessian, VectorField};
use crate::linear::{LinearSolver, Regularization};
use crate::tensor::SymTensor4;

/// Ratios above 1 for this many consecutive iterations abort the solve.
pub const DIVERGENCE_STREAK: usize = 5;

/// Relative step size below which the iteration is considered stagnant.
pub const STAGNATION_TOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    /// `||F(., D^2u) - f|| <= tol ||f||`
    #[default]
    Full,
    /// `||P(alpha (F(., D^2u) - f))|| <= tol ||f||` with `P` removing the gauge
    /// modes, i.e. the part of the equation the torus iteration can act on.
    Projected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub tol_residual: f64,
    pub max_iters: usize,
    pub ratio_slack: f64,
    pub residual_mode: ResidualMode,
    /// Start from zero when absent.
    #[serde(skip)]
    pub initial_guess: Option<VectorField>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol_residual: 1e-8,
            max_iters: 200,
            ratio_slack: 0.05,
            residual_mode: ResidualMode::Full,
            initial_guess: None,
        }
    }
}

impl SolveConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol_residual > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidInput(
                "need tol_residual > 0 and max_iters >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    /// Steps fell below round-off before the residual target was met.
    Stagnated,
    MaxIters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `||A:D^2(u_k - u_{k-1})||`
    pub nearness: f64,
    /// `||F(., D^2u_k) - f||`
    pub residual: f64,
    /// `||P(alpha (F(., D^2u_k) - f))||`
    pub projected_residual: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub status: SolveStatus,
    pub contraction_bound: f64,
    /// Every ratio from the second on is at most `K + ratio_slack`.
    pub ratios_within_bound: bool,
    /// `d(T[u], u)` at the returned iterate.
    pub fixed_point_defect: f64,
    pub rhs_norm: f64,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.residual)
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.records
            .iter()
            .skip(1)
            .filter_map(|r| r.ratio)
            .fold(None, |m, r| Some(m.map_or(r, |m: f64| m.max(r))))
    }

    /// `iter,nearness,residual,projected_residual,ratio` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,nearness,residual,projected_residual,ratio\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{}\n",
                r.iter,
                r.nearness,
                r.residual,
                r.projected_residual,
                r.ratio.map_or(String::new(), |v| format!("{v:e}"))
            ));
        }
        s
    }
}

/// `K = sqrt(beta + gamma)`.
pub fn contraction_bound(cert: &EllipticityCertificate) -> Result<f64> {
    let s = cert.beta + cert.gamma;
    if !(cert.beta > 0.0 && cert.gamma > 0.0 && s < 1.0) {
        return Err(Error::InfeasibleCertificate(s));
    }
    Ok(s.sqrt())
}

/// `C = ||alpha||_inf / (nu (1 - K))`, the constant in
/// `||D^2(w - v)|| <= C ||F(., D^2w) - F(., D^2v)||`.
pub fn uniqueness_constant(cert: &EllipticityCertificate, nu: f64) -> Result<f64> {
    let k = contraction_bound(cert)?;
    Ok(cert.alpha_bounds.0 / (nu * (1.0 - k)))
}

/// Iterate state: the field and everything derived from its hessian.
struct State {
    u: VectorField,
    au: VectorField,
    fu: VectorField,
}

impl State {
    fn new(u: VectorField, a: &SymTensor4, op: &BoundNonlinearity) -> Result<Self> {
        let hess = spectral_hessian(&u);
        let au = hess.contract(a)?;
        let fu = op.apply(&hess)?;
        Ok(State {
            u: u.to_physical(),
            au,
            fu,
        })
    }
}

/// Reusable solver for one anchor tensor, operator and certificate.
pub struct CampanatoSolver<'a> {
    anchor: &'a SymTensor4,
    op: &'a BoundNonlinearity,
    cert: &'a EllipticityCertificate,
    linear: LinearSolver,
    alpha: Vec<f64>,
}

impl<'a> CampanatoSolver<'a> {
    pub fn new(
        anchor: &'a SymTensor4,
        op: &'a BoundNonlinearity,
        cert: &'a EllipticityCertificate,
    ) -> Result<Self> {
        contraction_bound(cert)?;
        let linear = LinearSolver::new(anchor, op.grid(), Regularization::Exact)?;
        let alpha = cert.alpha.resolve(op)?;
        Ok(CampanatoSolver {
            anchor,
            op,
            cert,
            linear,
            alpha,
        })
    }

    pub fn operator(&self) -> &BoundNonlinearity {
        self.op
    }

    /// `alpha (F(., D^2u) - f)` pointwise.
    fn weighted_defect(&self, fu: &VectorField, f: &VectorField) -> Result<VectorField> {
        fu.sub(f)?.mul_pointwise(&self.alpha)
    }

    /// One application of `T`.
    pub fn map(&self, u: &VectorField, f: &VectorField) -> Result<VectorField> {
        let s = State::new(u.clone(), self.anchor, self.op)?;
        self.step(&s, f)
    }

    fn step(&self, s: &State, f: &VectorField) -> Result<VectorField> {
        let rhs = s.au.sub(&self.weighted_defect(&s.fu, f)?)?;
        Ok(self.linear.solve_spectral(&rhs)?.to_physical())
    }

    pub fn solve(&self, f: &VectorField, cfg: &SolveConfig) -> Result<(VectorField, IterationTrace)> {
        cfg.validate()?;
        let grid = self.op.grid();
        if f.grid() != grid {
            return Err(Error::DimensionMismatch("right-hand side lives on another grid".into()));
        }
        let k_bound = contraction_bound(self.cert)?;
        let f = f.to_physical();
        let f_norm = f.l2_norm();
        let target = cfg.tol_residual * f_norm;
        let start = match &cfg.initial_guess {
            Some(u0) => {
                if u0.grid() != grid {
                    return Err(Error::DimensionMismatch("initial guess lives on another grid".into()));
                }
                u0.project_gauge().to_physical()
            }
            None => VectorField::zeros(grid),
        };
        let mut state = State::new(start, self.anchor, self.op)?;
        let mut records = Vec::new();
        let mut prev_d: Option<f64> = None;
        let mut streak = 0;
        let mut status = SolveStatus::MaxIters;
        for iter in 1..=cfg.max_iters {
            let u_next = self.step(&state, &f)?;
            let next = State::new(u_next, self.anchor, self.op)?;
            let d = next.au.sub(&state.au)?.l2_norm();
            let residual = next.fu.sub(&f)?.l2_norm();
            let projected = self.weighted_defect(&next.fu, &f)?.project_gauge().l2_norm();
            let ratio = prev_d.map(|p| if p > 0.0 { d / p } else { f64::INFINITY });
            records.push(IterationRecord {
                iter,
                nearness: d,
                residual,
                projected_residual: projected,
                ratio,
            });
            let scale = next.au.l2_norm();
            state = next;

            let measured = match cfg.residual_mode {
                ResidualMode::Full => residual,
                ResidualMode::Projected => projected,
            };
            if measured <= target {
                status = SolveStatus::Converged;
                break;
            }
            if d <= STAGNATION_TOL * scale {
                status = SolveStatus::Stagnated;
                break;
            }
            match ratio {
                Some(r) if r > 1.0 && d > STAGNATION_TOL * scale * 1e3 => streak += 1,
                _ => streak = 0,
            }
            if streak >= DIVERGENCE_STREAK {
                return Err(Error::Diverged {
                    consecutive: streak,
                    last_ratio: ratio.unwrap_or(f64::NAN),
                    beta: self.cert.beta,
                    gamma: self.cert.gamma,
                });
            }
            prev_d = Some(d);
        }
        let t_u = State::new(self.step(&state, &f)?, self.anchor, self.op)?;
        let fixed_point_defect = t_u.au.sub(&state.au)?.l2_norm();
        let bound = k_bound + cfg.ratio_slack;
        let ratios_within_bound = records
            .iter()
            .skip(1)
            .filter(|r| r.nearness > 1e3 * STAGNATION_TOL * f_norm.max(1e-300))
            .filter_map(|r| r.ratio)
            .all(|r| r <= bound);
        Ok((
            state.u,
            IterationTrace {
                records,
                status,
                contraction_bound: k_bound,
                ratios_within_bound,
                fixed_point_defect,
                rhs_norm: f_norm,
            },
        ))
    }
}

pub fn campanato_solve(
    anchor: &SymTensor4,
    op: &BoundNonlinearity,
    cert: &EllipticityCertificate,
    f: &VectorField,
    cfg: &SolveConfig,
) -> Result<(VectorField, IterationTrace)> {
    CampanatoSolver::new(anchor, op, cert)?.solve(f, cfg)
}

/// `T[u]` for a single field.
pub fn campanato_map(
    anchor: &SymTensor4,
    op: &BoundNonlinearity,
    cert: &EllipticityCertificate,
    u: &VectorField,
    f: &VectorField,
) -> Result<VectorField> {
    CampanatoSolver::new(anchor, op, cert)?.map(u, f)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// `||D^2(w - v)|| - C ||F(., D^2w) - F(., D^2v)||`
    pub margin: f64,
    pub tolerance: f64,
    pub constant: f64,
    pub passes: bool,
}

/// Checks `||D^2(w - v)|| <= C ||F(., D^2w) - F(., D^2v)||` on a pair of fields.
pub fn verify_comparison(
    op: &BoundNonlinearity,
    cert: &EllipticityCertificate,
    w: &VectorField,
    v: &VectorField,
) -> Result<ComparisonReport> {
    let c = uniqueness_constant(cert, cert.nu)?;
    let hw = spectral_hessian(w);
    let hv = spectral_hessian(v);
    let lhs = hw.sub(&hv)?.l2_norm();
    let rhs = op.apply(&hw)?.sub(&op.apply(&hv)?)?.l2_norm();
    let margin = lhs - c * rhs;
    let tolerance = 1e-9 * (hw.l2_norm() + hv.l2_norm());
    Ok(ComparisonReport {
        margin,
        tolerance,
        constant: c,
        passes: margin <= tolerance,
    })
}
