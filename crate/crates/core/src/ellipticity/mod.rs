//! Fully nonlinear operators `F(x, X) = g^2(x) (A : X + G(X))` and their
//! structure conditions.
//!
//! `G` is a sum of catalog perturbations, each Lipschitz in `X` with a known
//! constant and vanishing at `X = 0`. The weight `g^2` is a positive scalar
//! field on the grid.

mod convert;
mod examples;
mod kcond;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{GridSpec, HessianField, VectorField};
use crate::tensor::{SearchConfig, SymTensor4};

pub use convert::{
    def1_from_def2, def2_from_def1, lemma1_check, DefinitionTwoConstants, LemmaReport,
    SIGMA_CAP,
};
pub use examples::{
    example2_analysis, example2_probes, example3_analysis, Example2Report, Example3Params, Example3Report,
    InsideWindowCheck, OutsideWindowCheck, ProbeTriple, ProbeConstraint,
};
pub(crate) use kcond::draw_probes;
pub use kcond::{
    fit_k_condition, random_symmetric_hessian, verify_k_condition, verify_k_condition_with_probes,
    EllipticityCertificate, FitCandidate, FitConfig, FitReport, KProbe, KViolation, SamplerConfig,
};

/// Scalar weight `g^2(x)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Weight {
    #[default]
    Unit,
    /// `g^2(x) = mean + amplitude * cos(2 pi x_1 / L)`.
    Cosine { mean: f64, amplitude: f64 },
    /// Values at grid points, row-major.
    Values { values: Vec<f64> },
}

impl Weight {
    pub fn values_on(&self, grid: &GridSpec) -> Result<Vec<f64>> {
        let pts = grid.total_points();
        let v = match self {
            Weight::Unit => vec![1.0; pts],
            Weight::Cosine { mean, amplitude } => (0..pts)
                .map(|p| {
                    let x = grid.coordinate(p);
                    mean + amplitude * (2.0 * PI * x[0] / grid.period()).cos()
                })
                .collect(),
            Weight::Values { values } => {
                if values.len() != pts {
                    return Err(Error::DimensionMismatch(format!(
                        "weight has {} values, grid has {pts} points",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        if let Some(bad) = v.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "weight must be positive and bounded; value {} at point {bad}",
                v[bad]
            )));
        }
        Ok(v)
    }
}

/// Signature of a user perturbation: writes `G(X)` (length `N`) for a hessian
/// block `X` of length `N n n`.
pub type HookFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// User-supplied perturbation with a declared Lipschitz constant.
#[derive(Clone)]
pub struct Hook {
    pub name: String,
    pub lipschitz: f64,
    pub func: Arc<HookFn>,
}

impl Hook {
    pub fn new<F>(name: &str, lipschitz: f64, func: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Hook {
            name: name.to_string(),
            lipschitz,
            func: Arc::new(func),
        }
    }
}

impl fmt::Debug for Hook {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hook")
            .field("name", &self.name)
            .field("lipschitz", &self.lipschitz)
            .finish_non_exhaustive()
    }
}

impl PartialEq for Hook {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.lipschitz == other.lipschitz
            && Arc::ptr_eq(&self.func, &other.func)
    }
}

/// Catalog of perturbations `G`, all with `G(0) = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Perturbation {
    /// `G_a(X) = (eps / n) sum_ij sin(X_aij)`; Lipschitz constant `eps`.
    ScaledSine { eps: f64 },
    /// `G_a(X) = -b |X_a| - c |tr X_a|`; Lipschitz constant `b + c sqrt(n)`.
    NormCombo { b: f64, c: f64 },
    /// `G_a(X) = (1 / n) sum_ij (phi(X_aij) - phi(0))` with `phi` piecewise
    /// linear through `(knots, values)` and constant beyond the end knots.
    Tabulated {
        knots: Vec<f64>,
        values: Vec<f64>,
        lipschitz: f64,
    },
    /// Closure perturbation; not serialisable.
    #[serde(skip)]
    Hook(Hook),
}

fn interpolate(knots: &[f64], values: &[f64], t: f64) -> f64 {
    let last = knots.len() - 1;
    if t <= knots[0] {
        return values[0];
    }
    if t >= knots[last] {
        return values[last];
    }
    let i = knots.partition_point(|k| *k <= t) - 1;
    let s = (t - knots[i]) / (knots[i + 1] - knots[i]);
    values[i] + s * (values[i + 1] - values[i])
}

impl Perturbation {
    /// Lipschitz constant of `X -> G(X)` in Frobenius norms, for spatial dimension `dim`.
    pub fn lipschitz(&self, dim: usize) -> f64 {
        match self {
            Perturbation::ScaledSine { eps } => eps.abs(),
            Perturbation::NormCombo { b, c } => b.abs() + c.abs() * (dim as f64).sqrt(),
            Perturbation::Tabulated { lipschitz, .. } => *lipschitz,
            Perturbation::Hook(h) => h.lipschitz,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Perturbation::ScaledSine { eps } if !eps.is_finite() => {
                Err(Error::InvalidInput("sine amplitude must be finite".into()))
            }
            Perturbation::NormCombo { b, c } if !(b.is_finite() && c.is_finite()) => {
                Err(Error::InvalidInput("norm coefficients must be finite".into()))
            }
            Perturbation::Tabulated {
                knots,
                values,
                lipschitz,
            } => {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(Error::InvalidInput(
                        "table needs at least two knots and one value per knot".into(),
                    ));
                }
                if knots.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidInput("table entries must be finite".into()));
                }
                let mut slope = 0.0f64;
                for w in 0..knots.len() - 1 {
                    let dx = knots[w + 1] - knots[w];
                    if dx <= 0.0 {
                        return Err(Error::InvalidInput("knots must increase strictly".into()));
                    }
                    slope = slope.max(((values[w + 1] - values[w]) / dx).abs());
                }
                if slope > lipschitz * (1.0 + 1e-12) {
                    return Err(Error::InvalidInput(format!(
                        "table slope {slope} exceeds declared Lipschitz constant {lipschitz}"
                    )));
                }
                Ok(())
            }
            Perturbation::Hook(h) if !(h.lipschitz.is_finite() && h.lipschitz >= 0.0) => Err(
                Error::InvalidInput(format!("hook '{}' needs a finite Lipschitz bound", h.name)),
            ),
            _ => Ok(()),
        }
    }

    /// Adds `G(X)` to `out`. `scratch` must hold `N` entries.
    fn accumulate(&self, x: &[f64], dim: usize, out: &mut [f64], scratch: &mut [f64]) {
        let block = dim * dim;
        let inv_n = 1.0 / dim as f64;
        match self {
            Perturbation::ScaledSine { eps } => {
                for (a, o) in out.iter_mut().enumerate() {
                    let s: f64 = x[a * block..(a + 1) * block].iter().map(|v| v.sin()).sum();
                    *o += eps * inv_n * s;
                }
            }
            Perturbation::NormCombo { b, c } => {
                for (a, o) in out.iter_mut().enumerate() {
                    let xa = &x[a * block..(a + 1) * block];
                    let norm = xa.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let tr: f64 = (0..dim).map(|i| xa[i * dim + i]).sum();
                    *o -= b * norm + c * tr.abs();
                }
            }
            Perturbation::Tabulated { knots, values, .. } => {
                let phi0 = interpolate(knots, values, 0.0);
                for (a, o) in out.iter_mut().enumerate() {
                    let s: f64 = x[a * block..(a + 1) * block]
                        .iter()
                        .map(|v| interpolate(knots, values, *v) - phi0)
                        .sum();
                    *o += inv_n * s;
                }
            }
            Perturbation::Hook(h) => {
                scratch.iter_mut().for_each(|s| *s = 0.0);
                (h.func)(x, scratch);
                for (o, s) in out.iter_mut().zip(scratch.iter()) {
                    *o += s;
                }
            }
        }
    }
}

/// `F(x, X) = g^2(x) (A : X + sum G_k(X))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec {
    pub tensor: SymTensor4,
    #[serde(default)]
    pub weight: Weight,
    #[serde(default)]
    pub perturbations: Vec<Perturbation>,
}

impl NonlinearitySpec {
    pub fn linear(tensor: SymTensor4) -> Self {
        NonlinearitySpec {
            tensor,
            weight: Weight::Unit,
            perturbations: Vec::new(),
        }
    }

    /// `g^2 (A:X + G(X))` with a sine perturbation of Lipschitz constant
    /// `rho nu(A)`; `alpha = 1 / g^2` then satisfies the structure condition
    /// with `beta = rho^2`.
    pub fn sine_perturbed(tensor: SymTensor4, rho: f64, weight: Weight) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidInput(format!("need 0 <= rho < 1, got {rho}")));
        }
        let nu = tensor.ellipticity_constant(&SearchConfig::default()).nu;
        if !(nu > 0.0) {
            return Err(Error::InvalidInput(format!("tensor is not rank-one positive (nu = {nu})")));
        }
        Ok(NonlinearitySpec::linear(tensor)
            .with_weight(weight)
            .with_perturbation(Perturbation::ScaledSine { eps: rho * nu }))
    }

    pub fn with_weight(mut self, weight: Weight) -> Self {
        self.weight = weight;
        self
    }

    pub fn with_perturbation(mut self, p: Perturbation) -> Self {
        self.perturbations.push(p);
        self
    }

    pub fn dim(&self) -> usize {
        self.tensor.dim()
    }

    pub fn components(&self) -> usize {
        self.tensor.components()
    }

    /// Declared Lipschitz constant `M` of `G` (relative to `g^2`).
    pub fn declared_lipschitz(&self) -> f64 {
        self.perturbations
            .iter()
            .map(|p| p.lipschitz(self.dim()))
            .sum()
    }

    pub fn is_linear(&self) -> bool {
        self.perturbations.is_empty()
    }

    pub fn bind(&self, grid: &GridSpec) -> Result<BoundNonlinearity> {
        if grid.dim() != self.dim() || grid.components() != self.components() {
            return Err(Error::DimensionMismatch(format!(
                "operator (n = {}, N = {}) does not match grid (n = {}, N = {})",
                self.dim(),
                self.components(),
                grid.dim(),
                grid.components()
            )));
        }
        for p in &self.perturbations {
            p.validate()?;
        }
        let weights = self.weight.values_on(grid)?;
        let bound = BoundNonlinearity {
            spec: self.clone(),
            grid: grid.clone(),
            weight_min: weights.iter().copied().fold(f64::INFINITY, f64::min),
            weight_max: weights.iter().copied().fold(0.0, f64::max),
            weights,
        };
        let zero = vec![0.0; self.tensor.hessian_len()];
        let at_zero = bound.evaluate_unchecked(0, &zero)?;
        if at_zero.iter().any(|v| v.abs() > 1e-12) {
            return Err(Error::InvalidInput(format!(
                "operator must vanish at X = 0, got {at_zero:?}"
            )));
        }
        Ok(bound)
    }
}

/// A [`NonlinearitySpec`] with its weight sampled on a grid.
#[derive(Clone, Debug)]
pub struct BoundNonlinearity {
    spec: NonlinearitySpec,
    grid: GridSpec,
    weights: Vec<f64>,
    weight_min: f64,
    weight_max: f64,
}

impl BoundNonlinearity {
    pub fn spec(&self) -> &NonlinearitySpec {
        &self.spec
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(ess inf g^2, ess sup g^2)`.
    pub fn weight_bounds(&self) -> (f64, f64) {
        (self.weight_min, self.weight_max)
    }

    /// Upper bound on the Lipschitz constant of `X -> F(x, X)`, uniformly in `x`:
    /// `sup g^2 (|A| + M)` with the Frobenius norm of `A`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.weight_max * (self.spec.tensor.norm() + self.spec.declared_lipschitz())
    }

    /// `F(x_p, X)`; `X` is validated for shape and symmetry.
    pub fn evaluate(&self, p: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.spec.tensor.contract_hessian(x)?;
        if p >= self.weights.len() {
            return Err(Error::InvalidInput(format!("grid point {p} out of range")));
        }
        self.evaluate_unchecked(p, x)
    }

    pub(crate) fn evaluate_unchecked(&self, p: usize, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.spec.components()];
        let mut scratch = vec![0.0; self.spec.components()];
        self.evaluate_into(p, x, &mut out, &mut scratch)?;
        Ok(out)
    }

    fn evaluate_into(
        &self,
        p: usize,
        x: &[f64],
        out: &mut [f64],
        scratch: &mut [f64],
    ) -> Result<()> {
        self.spec.tensor.contract_unchecked(x, out);
        for pert in &self.spec.perturbations {
            pert.accumulate(x, self.spec.dim(), out, scratch);
        }
        let w = self.weights[p];
        for o in out.iter_mut() {
            *o *= w;
            if !o.is_finite() {
                return Err(Error::NonFinite { point: p });
            }
        }
        Ok(())
    }

    /// `F(., D^2u)` evaluated pointwise.
    pub fn apply(&self, h: &HessianField) -> Result<VectorField> {
        if !h.grid().same_layout(&self.grid) || h.grid().components() != self.grid.components()
        {
            return Err(Error::DimensionMismatch("hessian grid differs from operator grid".into()));
        }
        let nc = self.spec.components();
        let pts = self.grid.total_points();
        let block = h.block_len();
        let mut point_major = vec![0.0; nc * pts];
        point_major
            .par_chunks_mut(nc)
            .enumerate()
            .try_for_each_init(
                || (vec![0.0; block], vec![0.0; nc]),
                |(z, scratch), (p, out)| {
                    h.at(p, z);
                    self.evaluate_into(p, z, out, scratch)
                },
            )?;
        let mut values = vec![0.0; nc * pts];
        for p in 0..pts {
            for a in 0..nc {
                values[a * pts + p] = point_major[p * nc + a];
            }
        }
        VectorField::from_physical(&self.grid, values)
    }
}

/// Multiplier `alpha(x)` in the structure condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Alpha {
    Constant { value: f64 },
    /// `alpha = scale / g^2`.
    InverseWeight { scale: f64 },
    Values { values: Vec<f64> },
}

impl Alpha {
    pub fn constant(value: f64) -> Self {
        Alpha::Constant { value }
    }

    /// Values at every grid point of `op`.
    pub fn resolve(&self, op: &BoundNonlinearity) -> Result<Vec<f64>> {
        let pts = op.grid.total_points();
        let v = match self {
            Alpha::Constant { value } => vec![*value; pts],
            Alpha::InverseWeight { scale } => op.weights.iter().map(|w| scale / w).collect(),
            Alpha::Values { values } => {
                if values.len() != pts {
                    return Err(Error::DimensionMismatch(format!(
                        "alpha has {} values, grid has {pts} points",
                        values.len()
                    )));
                }
                values.clone()
            }
        };
        if v.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidInput("alpha must be positive and finite".into()));
        }
        Ok(v)
    }

    /// `(||alpha||_inf, ||1/alpha||_inf)`.
    pub fn bounds(&self, op: &BoundNonlinearity) -> Result<(f64, f64)> {
        let v = self.resolve(op)?;
        let sup = v.iter().copied().fold(0.0, f64::max);
        let inf = v.iter().copied().fold(f64::INFINITY, f64::min);
        Ok((sup, 1.0 / inf))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(dim: usize, comps: usize) -> GridSpec {
        GridSpec::new(dim, comps, 4, 1.0).unwrap()
    }

    #[test]
    fn linear_trace_example() {
        let op = NonlinearitySpec::linear(SymTensor4::identity(2, 2))
            .bind(&unit_grid(2, 2))
            .unwrap();
        // X_1 = I, X_2 = 0
        let x = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(op.evaluate(3, &x).unwrap(), vec![2.0, 0.0]);
        assert_eq!(op.evaluate(0, &[0.0; 8]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn norm_combo_is_scalar_template() {
        let (b, c) = (1.0 / 13.0, 1.0 / 3.0);
        let op = NonlinearitySpec::linear(SymTensor4::identity(3, 1))
            .with_perturbation(Perturbation::NormCombo { b, c })
            .bind(&unit_grid(3, 1))
            .unwrap();
        let x = [1.0, 2.0, 0.5, 2.0, -3.0, 0.0, 0.5, 0.0, 0.25];
        let tr = 1.0 - 3.0 + 0.25;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let f = op.evaluate(0, &x).unwrap()[0];
        assert!((f - (tr - b * norm - c * f64::abs(tr))).abs() < 1e-14);
    }

    #[test]
    fn every_catalog_entry_vanishes_at_zero() {
        let grid = unit_grid(2, 2);
        let catalog = vec![
            Perturbation::ScaledSine { eps: 0.3 },
            Perturbation::NormCombo { b: 0.1, c: 0.2 },
            Perturbation::Tabulated {
                knots: vec![-1.0, 0.0, 2.0],
                values: vec![3.0, 2.5, 3.5],
                lipschitz: 0.5,
            },
            Perturbation::Hook(Hook::new("tanh", 0.2, |x, out| {
                out[0] = 0.2 * x[0].tanh();
            })),
        ];
        for p in catalog {
            let op = NonlinearitySpec::linear(SymTensor4::identity(2, 2))
                .with_weight(Weight::Cosine {
                    mean: 2.0,
                    amplitude: 0.5,
                })
                .with_perturbation(p)
                .bind(&grid)
                .unwrap();
            for pt in 0..grid.total_points() {
                assert_eq!(op.evaluate(pt, &[0.0; 8]).unwrap(), vec![0.0, 0.0]);
            }
        }
    }

    #[test]
    fn hook_errors() {
        let grid = unit_grid(2, 1);
        let nan = NonlinearitySpec::linear(SymTensor4::identity(2, 1))
            .with_perturbation(Perturbation::Hook(Hook::new("nan", 1.0, |x, out| {
                out[0] = if x[0] > 0.5 { f64::NAN } else { 0.0 };
            })))
            .bind(&grid)
            .unwrap();
        assert!(matches!(
            nan.evaluate(2, &[1.0, 0.0, 0.0, 0.0]),
            Err(Error::NonFinite { point: 2 })
        ));
        let offset = NonlinearitySpec::linear(SymTensor4::identity(2, 1))
            .with_perturbation(Perturbation::Hook(Hook::new("offset", 1.0, |_, out| {
                out[0] = 1.0;
            })));
        assert!(offset.bind(&grid).is_err());
    }

    #[test]
    fn rejects_bad_inputs() {
        let grid = unit_grid(2, 1);
        let spec = NonlinearitySpec::linear(SymTensor4::identity(2, 1));
        assert!(spec
            .clone()
            .with_weight(Weight::Cosine {
                mean: 1.0,
                amplitude: 1.5
            })
            .bind(&grid)
            .is_err());
        assert!(spec
            .clone()
            .with_perturbation(Perturbation::Tabulated {
                knots: vec![0.0, 1.0],
                values: vec![0.0, 2.0],
                lipschitz: 1.0
            })
            .bind(&grid)
            .is_err());
        let op = spec.bind(&grid).unwrap();
        assert!(matches!(
            op.evaluate(0, &[1.0, 2.0, 0.0, 1.0]),
            Err(Error::AsymmetricHessian(_))
        ));
        assert!(spec.bind(&unit_grid(3, 1)).is_err());
    }

    #[test]
    fn spec_serialises_without_hooks() {
        let spec = NonlinearitySpec::linear(SymTensor4::example2(8.0))
            .with_weight(Weight::Cosine {
                mean: 1.5,
                amplitude: 0.25,
            })
            .with_perturbation(Perturbation::ScaledSine { eps: 0.4 })
            .with_perturbation(Perturbation::NormCombo { b: 0.1, c: 0.05 });
        let text = serde_json::to_string(&spec).unwrap();
        let back: NonlinearitySpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let toml_text = toml::to_string(&spec).unwrap();
        assert_eq!(toml::from_str::<NonlinearitySpec>(&toml_text).unwrap(), spec);

        let hooked = NonlinearitySpec::linear(SymTensor4::identity(2, 1))
            .with_perturbation(Perturbation::Hook(Hook::new("h", 0.0, |_, _| {})));
        assert!(serde_json::to_string(&hooked).is_err());
    }

    #[test]
    fn alpha_resolution() {
        let grid = unit_grid(2, 1);
        let op = NonlinearitySpec::linear(SymTensor4::identity(2, 1))
            .with_weight(Weight::Cosine {
                mean: 2.0,
                amplitude: 1.0,
            })
            .bind(&grid)
            .unwrap();
        assert_eq!(op.weight_bounds(), (1.0, 3.0));
        let (sup, inv) = Alpha::InverseWeight { scale: 1.0 }.bounds(&op).unwrap();
        assert!((sup - 1.0).abs() < 1e-15 && (inv - 3.0).abs() < 1e-15);
        assert!(Alpha::constant(-1.0).resolve(&op).is_err());
    }
}
