//! Constant-coefficient solver for `A : D^2u = f` on the torus.
//!
//! Frequency by frequency, `A : D^2u` has coefficients `-4 pi^2 |z|^2 S(z^) u^(k)`
//! with `S(a) = A : a (x) a` and `z = k / L`, so the solve is a small dense
//! inversion per frequency. The gauge modes (`k = 0` and the Nyquist plane)
//! are annihilated by `D^2`; the solution has no component there and the
//! corresponding part of `f` is reported as dropped.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{spectral_hessian, GridSpec, VectorField};
use crate::tensor::SymTensor4;

/// Multiplier `h(z)` replacing `1 / |z|^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Regularization {
    /// `h(z) = 1 / |z|^2`
    #[default]
    Exact,
    /// `h(z) = 1 / (|z|^2 + eps)`
    Epsilon { eps: f64 },
}

impl Regularization {
    pub fn h(&self, z2: f64) -> f64 {
        match self {
            Regularization::Exact => 1.0 / z2,
            Regularization::Epsilon { eps } => 1.0 / (z2 + eps),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Regularization::Exact => "exact".into(),
            Regularization::Epsilon { eps } => format!("epsilon = {eps:e}"),
        }
    }
}

/// `A : D^2u`, pointwise contraction of the spectral hessian.
pub fn apply_operator(a: &SymTensor4, u: &VectorField) -> Result<VectorField> {
    spectral_hessian(u).contract(a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearDiagnostics {
    pub residual_l2: f64,
    /// `||D^2u|| / ||A:D^2u||`, 0 for `u = 0`.
    pub hessian_ratio: f64,
    pub regularization: String,
    /// Per-component mean of `f`, which the gauge removes.
    pub dropped_mean: Vec<f64>,
    /// `L2` norm of the Nyquist-plane part of `f`, also removed.
    pub dropped_nyquist_l2: f64,
    /// True when the dropped mean exceeds `mean_tolerance * ||f||`.
    pub mean_warning: bool,
    /// Largest `|(A:D^2u)^(k) - h(z)|z|^2 f^(k)|` relative to `max |f^|`.
    pub multiplier_identity_error: f64,
    /// `max_k h(z)|z|^2`, at most 1.
    pub max_multiplier: f64,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSolveResult {
    pub u: VectorField,
    pub diagnostics: LinearDiagnostics,
}

/// Per-frequency inverse symbols for one tensor, grid and regularisation.
#[derive(Clone, Debug)]
pub struct LinearSolver {
    tensor: SymTensor4,
    grid: GridSpec,
    reg: Regularization,
    /// `-h(z) / (4 pi^2) S(z^)^-1`, row-major `N x N`, or `None` on gauge modes.
    blocks: Vec<Option<Vec<f64>>>,
    mean_tolerance: f64,
}

impl LinearSolver {
    pub fn new(tensor: &SymTensor4, grid: &GridSpec, reg: Regularization) -> Result<Self> {
        if tensor.dim() != grid.dim() || tensor.components() != grid.components() {
            return Err(Error::DimensionMismatch(format!(
                "tensor (n = {}, N = {}) does not match grid (n = {}, N = {})",
                tensor.dim(),
                tensor.components(),
                grid.dim(),
                grid.components()
            )));
        }
        if let Regularization::Epsilon { eps } = reg {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidInput(format!("epsilon must be positive, got {eps}")));
            }
        }
        let l = grid.period();
        let blocks = (0..grid.total_points())
            .into_par_iter()
            .map(|p| {
                let k = grid.wavenumber(p);
                if grid.is_gauge_mode(&k) {
                    return Ok(None);
                }
                let z: Vec<f64> = k.iter().map(|&c| c as f64 / l).collect();
                let z2: f64 = z.iter().map(|v| v * v).sum();
                let inv: DMatrix<f64> = tensor.symbol_inverse(&z)?;
                let s = -reg.h(z2) / (4.0 * PI * PI);
                // nalgebra is column-major; store row-major
                Ok(Some(inv.transpose().iter().map(|v| v * s).collect()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LinearSolver {
            tensor: tensor.clone(),
            grid: grid.clone(),
            reg,
            blocks,
            mean_tolerance: 1e-8,
        })
    }

    pub fn with_mean_tolerance(mut self, tol: f64) -> Self {
        self.mean_tolerance = tol;
        self
    }

    pub fn tensor(&self) -> &SymTensor4 {
        &self.tensor
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn regularization(&self) -> Regularization {
        self.reg
    }

    /// Solution in spectral representation, without diagnostics.
    pub fn solve_spectral(&self, f: &VectorField) -> Result<VectorField> {
        if f.grid() != &self.grid {
            return Err(Error::DimensionMismatch("right-hand side lives on another grid".into()));
        }
        let fs = f.to_spectral();
        let fc = fs.spectral()?;
        let nc = self.grid.components();
        let pts = self.grid.total_points();
        let mut out = vec![Complex64::new(0.0, 0.0); nc * pts];
        for (p, block) in self.blocks.iter().enumerate() {
            if let Some(b) = block {
                for a in 0..nc {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for c in 0..nc {
                        acc += fc[c * pts + p] * b[a * nc + c];
                    }
                    out[a * pts + p] = acc;
                }
            }
        }
        VectorField::from_spectral(&self.grid, out)
    }

    pub fn solve(&self, f: &VectorField) -> Result<LinearSolveResult> {
        let us = self.solve_spectral(f)?;
        let u = us.to_physical();
        let fs = f.to_spectral();
        let fc = fs.spectral()?;
        let grid = &self.grid;
        let (nc, pts) = (grid.components(), grid.total_points());

        let dropped_mean = fs.mean();
        let mut nyq = 0.0;
        for p in 0..pts {
            if grid.is_nyquist(&grid.wavenumber(p)) {
                for a in 0..nc {
                    nyq += fc[a * pts + p].norm_sqr();
                }
            }
        }
        let dropped_nyquist_l2 = (grid.period().powi(grid.dim() as i32) * nyq).sqrt();

        let hess = spectral_hessian(&us);
        let au = hess.contract(&self.tensor)?;
        let f_centered = {
            let means = f.mean();
            let phys = f.to_physical();
            let v = phys.physical()?;
            let values = v
                .chunks(pts)
                .zip(&means)
                .flat_map(|(c, m)| c.iter().map(move |x| x - m))
                .collect();
            VectorField::from_physical(grid, values)?
        };
        let residual_l2 = au.sub(&f_centered)?.l2_norm();
        let au_norm = au.l2_norm();
        let hessian_ratio = if au_norm == 0.0 {
            0.0
        } else {
            hess.l2_norm() / au_norm
        };

        let aus = au.forward_transform()?;
        let ac = aus.spectral()?;
        let fmax = fc.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        let mut worst = 0.0f64;
        let mut max_mult = 0.0f64;
        for p in 0..pts {
            let k = grid.wavenumber(p);
            let mult = if grid.is_gauge_mode(&k) {
                0.0
            } else {
                let z2: f64 = k.iter().map(|&c| (c as f64 / grid.period()).powi(2)).sum();
                self.reg.h(z2) * z2
            };
            max_mult = max_mult.max(mult);
            for a in 0..nc {
                worst = worst.max((ac[a * pts + p] - fc[a * pts + p] * mult).norm());
            }
        }
        let f_norm = f.l2_norm();
        let mean_norm = (grid.period().powi(grid.dim() as i32)
            * dropped_mean.iter().map(|m| m * m).sum::<f64>())
        .sqrt();
        Ok(LinearSolveResult {
            u,
            diagnostics: LinearDiagnostics {
                residual_l2,
                hessian_ratio,
                regularization: self.reg.describe(),
                mean_warning: mean_norm > self.mean_tolerance * f_norm,
                dropped_mean,
                dropped_nyquist_l2,
                multiplier_identity_error: if fmax > 0.0 { worst / fmax } else { worst },
                max_multiplier: max_mult,
                note: (grid.dim() < 5).then(|| {
                    format!(
                        "n = {}: discrete solve only; the whole-space function space needs n >= 5",
                        grid.dim()
                    )
                }),
            },
        })
    }
}

pub fn solve_linear(a: &SymTensor4, f: &VectorField, reg: Regularization) -> Result<LinearSolveResult> {
    LinearSolver::new(a, f.grid(), reg)?.solve(f)
}

/// `||D^2u|| nu / ||A:D^2u||`; at most 1 for every `u` when `nu = nu(A)`.
pub fn hessian_estimate_check(a: &SymTensor4, nu: f64, u: &VectorField) -> Result<f64> {
    let h = spectral_hessian(u);
    let hn = h.l2_norm();
    if hn == 0.0 {
        return Ok(0.0);
    }
    let an = h.contract(a)?.l2_norm();
    if an <= 1e-14 * a.norm() * hn {
        return Err(Error::EstimateBreach);
    }
    Ok(hn * nu / an)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_band_limited;

    fn sine(grid: &GridSpec, scale: f64) -> VectorField {
        let l = grid.period();
        VectorField::from_fn(grid, |a, x| {
            if a == 0 {
                scale * (2.0 * PI * x[0] / l).sin()
            } else {
                0.0
            }
        })
    }

    #[test]
    fn identity_is_laplacian() {
        let g = GridSpec::new(2, 2, 16, 1.5).unwrap();
        let u = sine(&g, 1.0);
        let lap = apply_operator(&SymTensor4::identity(2, 2), &u).unwrap();
        let expect = sine(&g, -(2.0 * PI / 1.5f64).powi(2));
        assert!(lap.sub(&expect).unwrap().l2_norm() < 1e-10);
    }

    #[test]
    fn single_mode_inversion() {
        let g = GridSpec::new(2, 2, 16, 1.5).unwrap();
        let f = sine(&g, -(2.0 * PI / 1.5f64).powi(2));
        let r = solve_linear(&SymTensor4::identity(2, 2), &f, Regularization::Exact).unwrap();
        assert!(r.u.sub(&sine(&g, 1.0)).unwrap().l2_norm() < 1e-13);
        assert!(r.diagnostics.residual_l2 < 1e-10);
        assert!((r.diagnostics.hessian_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_and_mean_reporting() {
        let g = GridSpec::new(2, 2, 8, 1.0).unwrap();
        let a = SymTensor4::example2(8.0);
        let r = solve_linear(&a, &VectorField::zeros(&g), Regularization::Exact).unwrap();
        assert!(r.u.physical().unwrap().iter().all(|v| *v == 0.0));
        let f = random_band_limited(&g, 2, 3)
            .unwrap()
            .add(&VectorField::from_fn(&g, |a, _| 0.5 * a as f64))
            .unwrap();
        let r = solve_linear(&a, &f, Regularization::Exact).unwrap();
        assert!((r.diagnostics.dropped_mean[1] - 0.5).abs() < 1e-14);
        assert!(r.diagnostics.mean_warning);
        assert!(r.u.mean().iter().all(|m| m.abs() < 1e-14));
    }

    #[test]
    fn singular_tensor_is_reported() {
        let g = GridSpec::new(2, 1, 8, 1.0).unwrap();
        // A : z (x) z = z_1^2 vanishes along the second axis
        let a = SymTensor4::from_fn(2, 1, |_, _, i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 })
            .unwrap();
        match LinearSolver::new(&a, &g, Regularization::Exact) {
            Err(Error::DegenerateSymbol { z, .. }) => assert_eq!(z[0], 0.0),
            other => panic!("expected degenerate symbol, got {other:?}"),
        }
    }

    #[test]
    fn estimate_check_conventions() {
        let g = GridSpec::new(2, 2, 8, 1.0).unwrap();
        let id = SymTensor4::identity(2, 2);
        assert_eq!(hessian_estimate_check(&id, 1.0, &VectorField::zeros(&g)).unwrap(), 0.0);
        let one_mode = sine(&g, 2.0);
        assert!((hessian_estimate_check(&id, 1.0, &one_mode).unwrap() - 1.0).abs() < 1e-12);
    }
}
