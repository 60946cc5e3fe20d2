use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{AtStage, ExperimentConfig, Problem, RhsSource, StageError, StageResult, StudyProfile};
use crate::error::Error;
use crate::fields::{random_band_limited, spectral_hessian, GridSpec, HessianField, VectorField};
use crate::linear::LinearSolver;
use crate::nonlinear::campanato_solve;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub points: usize,
    pub error_l2: f64,
    pub error_l2_relative: f64,
    /// `e(M_prev) / e(M)`, absent on the first row.
    pub reduction: Option<f64>,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub profile: StudyProfile,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("points,error_l2,error_l2_relative,reduction,iterations\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{},{}\n",
                r.points,
                r.error_l2,
                r.error_l2_relative,
                r.reduction.map_or(String::new(), |v| format!("{v:e}")),
                r.iterations
            ));
        }
        s
    }
}

fn phase(a: usize, i: usize) -> f64 {
    0.3 * (a + 1) as f64 + 0.7 * i as f64
}

/// Pointwise exact hessian of `u_a = prod_i exp(kappa sin(c x_i + phi_ai))`, `c = 2 pi / L`.
fn analytic_profile(grid: &GridSpec, kappa: f64) -> (VectorField, HessianField) {
    let (n, nc, pts) = (grid.dim(), grid.components(), grid.total_points());
    let c = 2.0 * PI / grid.period();
    let mut hess = vec![0.0; nc * n * n * pts];
    let mut vals = vec![0.0; nc * pts];
    for p in 0..pts {
        let x = grid.coordinate(p);
        for a in 0..nc {
            let th: Vec<f64> = (0..n).map(|i| c * x[i] + phase(a, i)).collect();
            let u: f64 = th.iter().map(|t| (kappa * t.sin()).exp()).product();
            vals[a * pts + p] = u;
            for i in 0..n {
                for j in 0..n {
                    let v = if i == j {
                        u * (kappa * kappa * c * c * th[i].cos().powi(2) - kappa * c * c * th[i].sin())
                    } else {
                        u * kappa * kappa * c * c * th[i].cos() * th[j].cos()
                    };
                    hess[((a * n + i) * n + j) * pts + p] = v;
                }
            }
        }
    }
    let u = VectorField::from_physical(grid, vals).expect("grid-sized field");
    let h = HessianField::from_data(grid, hess).expect("grid-sized hessian");
    (u, h)
}

/// Error of the configured solver against a fixed profile on each grid in `points`.
pub fn run_convergence_study(cfg: &ExperimentConfig, points: &[usize]) -> StageResult<ConvergenceTable> {
    if points.is_empty() || points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(StageError {
            stage: "study",
            source: Error::InvalidInput("grid sizes must be strictly increasing".into()),
        });
    }
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for &m in points {
        let mut c = cfg.clone();
        c.grid.points = m;
        // the profile replaces the configured source
        c.rhs = RhsSource::Zero;
        let pb = Problem::build(&c)?;
        let grid = &pb.grid;
        let (exact, hess) = match &cfg.study.profile {
            StudyProfile::Analytic { kappa } => analytic_profile(grid, *kappa),
            StudyProfile::BandLimited { band, seed } => {
                if 4 * band > m {
                    return Err(StageError {
                        stage: "study",
                        source: Error::InvalidInput(format!("band {band} exceeds M/4 at M = {m}")),
                    });
                }
                let u = random_band_limited(grid, *band, *seed).at("study")?;
                let h = spectral_hessian(&u);
                (u.to_physical(), h)
            }
            StudyProfile::Constant { value } => {
                let u = VectorField::from_fn(grid, |_, _| *value);
                let h = spectral_hessian(&u);
                (u, h)
            }
        };
        let f = pb.operator.apply(&hess).at("rhs")?;
        let (u, iterations) = if pb.operator.spec().is_linear() && pb.operator.weights().iter().all(|w| *w == 1.0) {
            let res = LinearSolver::new(&pb.tensor, grid, cfg.regularization)
                .and_then(|s| s.solve(&f))
                .at("solve")?;
            (res.u, 1)
        } else {
            let (cert, _) = pb.certificate(&c)?;
            let (u, t) = campanato_solve(&pb.tensor, &pb.operator, &cert, &f, &c.solver).at("solve")?;
            (u, t.iterations())
        };
        let target = exact.project_gauge();
        let e = u.sub(&target).at("study")?.l2_norm();
        let norm = target.l2_norm();
        let rel = if norm > 0.0 { e / norm } else { e };
        let reduction = rows.last().map(|r| if rel > 0.0 { r.error_l2_relative / rel } else { f64::INFINITY });
        rows.push(ConvergenceRow {
            points: m,
            error_l2: e,
            error_l2_relative: rel,
            reduction,
            iterations,
        });
    }
    Ok(ConvergenceTable {
        profile: cfg.study.profile.clone(),
        rows,
    })
}
