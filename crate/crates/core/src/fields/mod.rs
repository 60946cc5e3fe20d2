//! Vector and hessian fields on the periodic grid `[0, L)^n`.
//!
//! Spectral coefficients follow the `exp(-2 pi i x . z)` convention with
//! `z = k / L` for integer `k in {-M/2, ..., M/2 - 1}^n`, normalised so that
//! `u(x) = sum_k c_k exp(2 pi i k . x / L)`. With that normalisation
//! `||u||^2_{L2(torus)} = L^n sum_k |c_k|^2`.
//!
//! Frequencies with any component equal to `-M/2` (the Nyquist plane) carry
//! no well-defined odd derivative; every derivative operator in this crate
//! annihilates them, so together with `k = 0` they form the gauge modes of
//! the discrete problem.

mod fft;
pub mod io;
mod norms;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::SymTensor4;

pub use norms::{lp_norm_pointwise, second_sobolev_exponent, sobolev_exponent, NormReport};

/// Default memory budget for one spectral field, in bytes.
pub const DEFAULT_MEMORY_BUDGET: u128 = 2 << 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    components: usize,
    points: usize,
    period: f64,
}

impl GridSpec {
    pub fn new(dim: usize, components: usize, points: usize, period: f64) -> Result<Self> {
        Self::with_budget(dim, components, points, period, DEFAULT_MEMORY_BUDGET)
    }

    pub fn with_budget(
        dim: usize,
        components: usize,
        points: usize,
        period: f64,
        budget: u128,
    ) -> Result<Self> {
        if dim == 0 || components == 0 {
            return Err(Error::InvalidInput("grid needs n >= 1 and N >= 1".into()));
        }
        if points < 4 || points % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "points per axis must be even and >= 4, got {points}"
            )));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidInput(format!("period must be positive, got {period}")));
        }
        let total = (points as u128).checked_pow(dim as u32);
        let needed = total.and_then(|t| t.checked_mul(components as u128 * 16));
        match needed {
            Some(n) if n <= budget => {}
            _ => {
                return Err(Error::MemoryBudget {
                    needed: needed.unwrap_or(u128::MAX),
                    budget,
                })
            }
        }
        Ok(GridSpec {
            dim,
            components,
            points,
            period,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn total_points(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.points as f64
    }

    /// Quadrature weight `h^n` of one grid cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn multi_index(&self, mut p: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for slot in idx.iter_mut().rev() {
            *slot = p % self.points;
            p /= self.points;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, i| acc * self.points + i)
    }

    pub fn coordinate(&self, p: usize) -> Vec<f64> {
        let h = self.spacing();
        self.multi_index(p).into_iter().map(|i| i as f64 * h).collect()
    }

    /// Signed integer frequency of storage index `idx` along one axis.
    pub fn frequency(&self, idx: usize) -> i64 {
        let m = self.points as i64;
        let i = idx as i64;
        if i < m / 2 {
            i
        } else {
            i - m
        }
    }

    pub fn wavenumber(&self, p: usize) -> Vec<i64> {
        self.multi_index(p)
            .into_iter()
            .map(|i| self.frequency(i))
            .collect()
    }

    fn storage_index(&self, k: i64) -> Option<usize> {
        let m = self.points as i64;
        if k < -m / 2 || k >= m / 2 {
            return None;
        }
        Some(k.rem_euclid(m) as usize)
    }

    pub fn is_nyquist(&self, k: &[i64]) -> bool {
        let ny = -(self.points as i64) / 2;
        k.iter().any(|&c| c == ny)
    }

    /// True for `k = 0` and the Nyquist plane, the modes that derivatives annihilate.
    pub fn is_gauge_mode(&self, k: &[i64]) -> bool {
        k.iter().all(|&c| c == 0) || self.is_nyquist(k)
    }

    pub fn same_layout(&self, other: &GridSpec) -> bool {
        self.dim == other.dim && self.points == other.points && self.period == other.period
    }

    pub fn with_components(&self, components: usize) -> GridSpec {
        GridSpec {
            components,
            ..self.clone()
        }
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::DimensionMismatch(format!(
                "grids differ: {self:?} vs {other:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Physical,
    Spectral,
}

impl Representation {
    fn name(self) -> &'static str {
        match self {
            Representation::Physical => "physical",
            Representation::Spectral => "spectral",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Data {
    Physical(Vec<f64>),
    Spectral(Vec<Complex64>),
}

/// An `N`-component field, stored component-major then row-major over the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: GridSpec,
    data: Data,
}

impl VectorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        VectorField {
            grid: grid.clone(),
            data: Data::Physical(vec![0.0; grid.components * grid.total_points()]),
        }
    }

    pub fn from_physical(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        let expected = grid.components * grid.total_points();
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "field needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(VectorField {
            grid: grid.clone(),
            data: Data::Physical(values),
        })
    }

    pub fn from_spectral(grid: &GridSpec, coefs: Vec<Complex64>) -> Result<Self> {
        let expected = grid.components * grid.total_points();
        if coefs.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "field needs {expected} coefficients, got {}",
                coefs.len()
            )));
        }
        Ok(VectorField {
            grid: grid.clone(),
            data: Data::Spectral(coefs),
        })
    }

    /// Samples `f(component, x)` at every grid point.
    pub fn from_fn<F>(grid: &GridSpec, f: F) -> Self
    where
        F: Fn(usize, &[f64]) -> f64,
    {
        let pts = grid.total_points();
        let mut values = Vec::with_capacity(grid.components * pts);
        for a in 0..grid.components {
            for p in 0..pts {
                values.push(f(a, &grid.coordinate(p)));
            }
        }
        VectorField {
            grid: grid.clone(),
            data: Data::Physical(values),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn representation(&self) -> Representation {
        match self.data {
            Data::Physical(_) => Representation::Physical,
            Data::Spectral(_) => Representation::Spectral,
        }
    }

    fn wrong(&self, expected: Representation) -> Error {
        Error::Representation {
            expected: expected.name(),
            found: self.representation().name(),
        }
    }

    pub fn physical(&self) -> Result<&[f64]> {
        match &self.data {
            Data::Physical(v) => Ok(v),
            _ => Err(self.wrong(Representation::Physical)),
        }
    }

    pub fn physical_mut(&mut self) -> Result<&mut [f64]> {
        match &mut self.data {
            Data::Physical(v) => Ok(v),
            Data::Spectral(_) => Err(Error::Representation {
                expected: "physical",
                found: "spectral",
            }),
        }
    }

    pub fn spectral(&self) -> Result<&[Complex64]> {
        match &self.data {
            Data::Spectral(v) => Ok(v),
            _ => Err(self.wrong(Representation::Spectral)),
        }
    }

    pub fn component(&self, a: usize) -> Result<&[f64]> {
        let pts = self.grid.total_points();
        Ok(&self.physical()?[a * pts..(a + 1) * pts])
    }

    /// Forward transform; the field must be in physical representation.
    pub fn forward_transform(&self) -> Result<VectorField> {
        let values = self.physical()?;
        let (dim, m) = (self.grid.dim, self.grid.points);
        let pts = self.grid.total_points();
        let scale = 1.0 / pts as f64;
        let mut coefs: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        for chunk in coefs.chunks_mut(pts) {
            fft::fft_nd(chunk, dim, m, FftDirection::Forward);
            for c in chunk.iter_mut() {
                *c *= scale;
            }
        }
        Ok(VectorField {
            grid: self.grid.clone(),
            data: Data::Spectral(coefs),
        })
    }

    /// Inverse transform; returns the real part of the synthesised field.
    pub fn inverse_transform(&self) -> Result<VectorField> {
        let coefs = self.spectral()?;
        Ok(VectorField {
            grid: self.grid.clone(),
            data: Data::Physical(synthesise(&self.grid, coefs.to_vec())),
        })
    }

    pub fn to_spectral(&self) -> VectorField {
        match self.data {
            Data::Spectral(_) => self.clone(),
            Data::Physical(_) => self.forward_transform().expect("physical field"),
        }
    }

    pub fn to_physical(&self) -> VectorField {
        match self.data {
            Data::Physical(_) => self.clone(),
            Data::Spectral(_) => self.inverse_transform().expect("spectral field"),
        }
    }

    /// Coefficient of component `a` at integer frequency `k`.
    pub fn coef(&self, a: usize, k: &[i64]) -> Result<Complex64> {
        let coefs = self.spectral()?;
        if k.len() != self.grid.dim || a >= self.grid.components {
            return Err(Error::DimensionMismatch("frequency or component out of range".into()));
        }
        let idx = k
            .iter()
            .map(|&c| self.grid.storage_index(c))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidInput(format!("frequency {k:?} outside the grid band")))?;
        Ok(coefs[a * self.grid.total_points() + self.grid.flat_index(&idx)])
    }

    /// Largest `|c(-k) - conj(c(k))|` relative to the largest coefficient.
    pub fn conjugate_symmetry_defect(&self) -> Result<f64> {
        let coefs = self.spectral()?;
        let pts = self.grid.total_points();
        let scale = coefs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return Ok(0.0);
        }
        let mut worst = 0.0f64;
        for a in 0..self.grid.components {
            for p in 0..pts {
                let mirror: Vec<usize> = self
                    .grid
                    .multi_index(p)
                    .iter()
                    .map(|&i| (self.grid.points - i) % self.grid.points)
                    .collect();
                let q = self.grid.flat_index(&mirror);
                let d = (coefs[a * pts + q] - coefs[a * pts + p].conj()).norm();
                worst = worst.max(d);
            }
        }
        Ok(worst / scale)
    }

    /// Per-component spatial mean.
    pub fn mean(&self) -> Vec<f64> {
        let pts = self.grid.total_points();
        match &self.data {
            Data::Physical(v) => v
                .chunks(pts)
                .map(|c| c.iter().sum::<f64>() / pts as f64)
                .collect(),
            Data::Spectral(c) => c.chunks(pts).map(|c| c[0].re).collect(),
        }
    }

    /// Quadrature `L2` norm over the torus.
    pub fn l2_norm(&self) -> f64 {
        match &self.data {
            Data::Physical(v) => {
                (self.grid.cell_volume() * v.iter().map(|x| x * x).sum::<f64>()).sqrt()
            }
            Data::Spectral(c) => (self.grid.period.powi(self.grid.dim as i32)
                * c.iter().map(|x| x.norm_sqr()).sum::<f64>())
            .sqrt(),
        }
    }

    fn zip_physical(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let a = self.to_physical();
        let b = other.to_physical();
        let values = a
            .physical()?
            .iter()
            .zip(b.physical()?)
            .map(|(x, y)| f(*x, *y))
            .collect();
        VectorField::from_physical(&self.grid, values)
    }

    pub fn add(&self, other: &VectorField) -> Result<Self> {
        self.zip_physical(other, |x, y| x + y)
    }

    pub fn sub(&self, other: &VectorField) -> Result<Self> {
        self.zip_physical(other, |x, y| x - y)
    }

    pub fn scale(&self, s: f64) -> Self {
        let data = match &self.data {
            Data::Physical(v) => Data::Physical(v.iter().map(|x| x * s).collect()),
            Data::Spectral(c) => Data::Spectral(c.iter().map(|x| x * s).collect()),
        };
        VectorField {
            grid: self.grid.clone(),
            data,
        }
    }

    /// Pointwise product with a scalar field given by its values at grid points.
    pub fn mul_pointwise(&self, weights: &[f64]) -> Result<Self> {
        let pts = self.grid.total_points();
        if weights.len() != pts {
            return Err(Error::DimensionMismatch(format!(
                "weight has {} values, grid has {pts} points",
                weights.len()
            )));
        }
        let phys = self.to_physical();
        let values = phys
            .physical()?
            .chunks(pts)
            .flat_map(|c| c.iter().zip(weights).map(|(x, w)| x * w))
            .collect();
        VectorField::from_physical(&self.grid, values)
    }

    /// Removes the gauge modes (`k = 0` and the Nyquist plane).
    pub fn project_gauge(&self) -> Self {
        let spec = self.to_spectral();
        let mut coefs = spec.spectral().expect("spectral").to_vec();
        let pts = self.grid.total_points();
        for p in 0..pts {
            if self.grid.is_gauge_mode(&self.grid.wavenumber(p)) {
                for a in 0..self.grid.components {
                    coefs[a * pts + p] = Complex64::new(0.0, 0.0);
                }
            }
        }
        let out = VectorField::from_spectral(&self.grid, coefs).expect("same layout");
        match self.representation() {
            Representation::Spectral => out,
            Representation::Physical => out.to_physical(),
        }
    }

    /// Pointwise Euclidean norm over components at every grid point.
    pub fn pointwise_norms(&self) -> Vec<f64> {
        let phys = self.to_physical();
        let v = phys.physical().expect("physical");
        let pts = self.grid.total_points();
        (0..pts)
            .map(|p| {
                (0..self.grid.components)
                    .map(|a| v[a * pts + p].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    pub fn norms(&self) -> NormReport {
        norms::norm_report(self)
    }
}

fn synthesise(grid: &GridSpec, mut coefs: Vec<Complex64>) -> Vec<f64> {
    let pts = grid.total_points();
    for chunk in coefs.chunks_mut(pts) {
        fft::fft_nd(chunk, grid.dim, grid.points, FftDirection::Inverse);
    }
    coefs.into_iter().map(|c| c.re).collect()
}

/// Hessian field `D^2 u` stored as `(alpha, i, j, point)`, symmetric in `(i, j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HessianField {
    grid: GridSpec,
    data: Vec<f64>,
}

impl HessianField {
    /// Wraps pointwise values in `(alpha, i, j, point)` layout; they must be
    /// symmetric in `(i, j)` to within `1e-12` relative.
    pub fn from_data(grid: &GridSpec, data: Vec<f64>) -> Result<Self> {
        let (n, pts) = (grid.dim, grid.total_points());
        if data.len() != grid.components * n * n * pts {
            return Err(Error::DimensionMismatch(format!(
                "hessian data has {} values, grid needs {}",
                data.len(),
                grid.components * n * n * pts
            )));
        }
        let h = HessianField {
            grid: grid.clone(),
            data,
        };
        let scale = h.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let defect = h.symmetry_defect();
        if defect > 1e-12 * scale.max(1.0) {
            return Err(Error::AsymmetricHessian(defect));
        }
        Ok(h)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Entry count of one pointwise hessian `N * n * n`.
    pub fn block_len(&self) -> usize {
        self.grid.components * self.grid.dim * self.grid.dim
    }

    /// Component `(alpha, i, j)` as a slice over grid points.
    pub fn entry(&self, a: usize, i: usize, j: usize) -> &[f64] {
        let pts = self.grid.total_points();
        let n = self.grid.dim;
        let s = ((a * n + i) * n + j) * pts;
        &self.data[s..s + pts]
    }

    /// Gathers the `(alpha, i, j)` block at grid point `p`.
    pub fn at(&self, p: usize, out: &mut [f64]) {
        let pts = self.grid.total_points();
        for (slot, o) in out.iter_mut().enumerate() {
            *o = self.data[slot * pts + p];
        }
    }

    /// Pointwise contraction `A : D^2u`.
    pub fn contract(&self, tensor: &SymTensor4) -> Result<VectorField> {
        if tensor.dim() != self.grid.dim || tensor.components() != self.grid.components {
            return Err(Error::DimensionMismatch(format!(
                "tensor (n = {}, N = {}) does not match grid (n = {}, N = {})",
                tensor.dim(),
                tensor.components(),
                self.grid.dim,
                self.grid.components
            )));
        }
        let pts = self.grid.total_points();
        let nc = self.grid.components;
        let mut out = vec![0.0; nc * pts];
        let mut z = vec![0.0; self.block_len()];
        let mut v = vec![0.0; nc];
        for p in 0..pts {
            self.at(p, &mut z);
            tensor.contract_unchecked(&z, &mut v);
            for a in 0..nc {
                out[a * pts + p] = v[a];
            }
        }
        VectorField::from_physical(&self.grid, out)
    }

    pub fn sub(&self, other: &HessianField) -> Result<HessianField> {
        self.grid.check_same(&other.grid)?;
        Ok(HessianField {
            grid: self.grid.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * self.data.iter().map(|x| x * x).sum::<f64>()).sqrt()
    }

    pub fn symmetry_defect(&self) -> f64 {
        let n = self.grid.dim;
        let mut worst = 0.0f64;
        for a in 0..self.grid.components {
            for i in 0..n {
                for j in 0..n {
                    for (x, y) in self.entry(a, i, j).iter().zip(self.entry(a, j, i)) {
                        worst = worst.max((x - y).abs());
                    }
                }
            }
        }
        worst
    }

    /// Spatial mean of every `(alpha, i, j)` entry.
    pub fn entry_means(&self) -> Vec<f64> {
        let pts = self.grid.total_points();
        self.data
            .chunks(pts)
            .map(|c| c.iter().sum::<f64>() / pts as f64)
            .collect()
    }
}

/// Second-derivative multiplier `(2 pi i k_i / L)(2 pi i k_j / L)` with the gauge
/// modes mapped to zero.
pub(crate) fn hessian_multiplier(grid: &GridSpec, k: &[i64], i: usize, j: usize) -> f64 {
    if grid.is_nyquist(k) {
        return 0.0;
    }
    let c = 2.0 * PI / grid.period;
    -(c * c) * (k[i] * k[j]) as f64
}

/// `D^2 u` by spectral differentiation.
pub fn spectral_hessian(u: &VectorField) -> HessianField {
    let grid = u.grid().clone();
    let spec = u.to_spectral();
    let coefs = spec.spectral().expect("spectral");
    let (nc, n, pts) = (grid.components, grid.dim, grid.total_points());
    let wavenumbers: Vec<Vec<i64>> = (0..pts).map(|p| grid.wavenumber(p)).collect();
    let mut data = vec![0.0; nc * n * n * pts];
    let scalar_grid = grid.with_components(1);
    for a in 0..nc {
        let ca = &coefs[a * pts..(a + 1) * pts];
        for i in 0..n {
            for j in i..n {
                let buf: Vec<Complex64> = ca
                    .iter()
                    .zip(&wavenumbers)
                    .map(|(c, k)| c * hessian_multiplier(&grid, k, i, j))
                    .collect();
                let vals = synthesise(&scalar_grid, buf);
                let s_ij = ((a * n + i) * n + j) * pts;
                data[s_ij..s_ij + pts].copy_from_slice(&vals);
                if i != j {
                    let s_ji = ((a * n + j) * n + i) * pts;
                    data[s_ji..s_ji + pts].copy_from_slice(&vals);
                }
            }
        }
    }
    HessianField { grid, data }
}

/// `D u` by spectral differentiation, stored as `(alpha, i, point)`.
pub fn spectral_gradient(u: &VectorField) -> Vec<f64> {
    let grid = u.grid();
    let spec = u.to_spectral();
    let coefs = spec.spectral().expect("spectral");
    let (nc, n, pts) = (grid.components, grid.dim, grid.total_points());
    let c = 2.0 * PI / grid.period;
    let scalar_grid = grid.with_components(1);
    let mut out = Vec::with_capacity(nc * n * pts);
    for a in 0..nc {
        let ca = &coefs[a * pts..(a + 1) * pts];
        for i in 0..n {
            let buf: Vec<Complex64> = ca
                .iter()
                .enumerate()
                .map(|(p, v)| {
                    let k = grid.wavenumber(p);
                    if grid.is_nyquist(&k) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        v * Complex64::new(0.0, c * k[i] as f64)
                    }
                })
                .collect();
            out.extend(synthesise(&scalar_grid, buf));
        }
    }
    out
}

/// Zero-mean real field with spectral support in `|k|_inf <= band`, coefficients
/// drawn from a seeded Gaussian with conjugate symmetry imposed.
pub fn random_band_limited(grid: &GridSpec, band: usize, seed: u64) -> Result<VectorField> {
    if band >= grid.points / 2 {
        return Err(Error::InvalidInput(format!(
            "band {band} must be below M/2 = {}",
            grid.points / 2
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = grid.total_points();
    let mut coefs = vec![Complex64::new(0.0, 0.0); grid.components * pts];
    let b = band as i64;
    for a in 0..grid.components {
        for p in 0..pts {
            let k = grid.wavenumber(p);
            if k.iter().any(|c| c.abs() > b) {
                continue;
            }
            // canonical half: first non-zero component positive
            match k.iter().find(|&&c| c != 0) {
                Some(&c) if c > 0 => {}
                _ => continue,
            }
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            let c = Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
            let mirror: Vec<usize> = k
                .iter()
                .map(|&x| grid.storage_index(-x).expect("band below Nyquist"))
                .collect();
            coefs[a * pts + p] = c;
            coefs[a * pts + grid.flat_index(&mirror)] = c.conj();
        }
    }
    VectorField::from_spectral(grid, coefs).map(|f| f.to_physical())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid2(m: usize, l: f64) -> GridSpec {
        GridSpec::new(2, 2, m, l).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(2, 2, 5, 1.0).is_err());
        assert!(GridSpec::new(2, 2, 2, 1.0).is_err());
        assert!(GridSpec::new(2, 2, 8, 0.0).is_err());
        assert!(matches!(
            GridSpec::with_budget(3, 2, 64, 1.0, 1 << 20),
            Err(Error::MemoryBudget { .. })
        ));
        let g = grid2(8, 1.0);
        assert_eq!(g.frequency(3), 3);
        assert_eq!(g.frequency(4), -4);
        assert_eq!(g.frequency(7), -1);
        assert_eq!(g.flat_index(&g.multi_index(37)), 37);
    }

    #[test]
    fn single_sine_mode() {
        let l = 2.0;
        let g = grid2(16, l);
        let u = VectorField::from_fn(&g, |a, x| {
            if a == 0 {
                (2.0 * PI * x[0] / l).sin()
            } else {
                0.0
            }
        });
        let s = u.forward_transform().unwrap();
        let pts = g.total_points();
        let coefs = s.spectral().unwrap();
        let nonzero: Vec<usize> = (0..2 * pts).filter(|&i| coefs[i].norm() > 1e-12).collect();
        assert_eq!(nonzero.len(), 2);
        let plus = s.coef(0, &[1, 0]).unwrap();
        let minus = s.coef(0, &[-1, 0]).unwrap();
        assert_abs_diff_eq!(plus.re, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(plus.im, -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(minus.im, 0.5, epsilon = 1e-14);
        assert!(matches!(
            s.forward_transform(),
            Err(Error::Representation { .. })
        ));
        assert!(matches!(
            u.inverse_transform(),
            Err(Error::Representation { .. })
        ));
    }

    #[test]
    fn constant_field_has_only_mean() {
        let g = grid2(8, 1.0);
        let u = VectorField::from_fn(&g, |a, _| 1.5 + a as f64);
        let s = u.forward_transform().unwrap();
        assert_abs_diff_eq!(s.coef(0, &[0, 0]).unwrap().re, 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(s.coef(1, &[0, 0]).unwrap().re, 2.5, epsilon = 1e-14);
        let rest: f64 = s.spectral().unwrap().iter().map(|c| c.norm()).sum::<f64>() - 4.0;
        assert!(rest.abs() < 1e-12);
        assert_eq!(u.mean(), vec![1.5, 2.5]);
    }

    #[test]
    fn round_trip_random_field() {
        let g = GridSpec::new(3, 2, 8, 1.3).unwrap();
        let u = VectorField::from_fn(&g, |a, x| ((a + 1) as f64 * x[0] * 17.0 + x[1] * x[2]).sin());
        let back = u.forward_transform().unwrap().inverse_transform().unwrap();
        let err = back.sub(&u).unwrap().l2_norm() / u.l2_norm();
        assert!(err < 1e-12);
    }

    #[test]
    fn sine_hessian_is_analytic() {
        let l = 1.5;
        let g = grid2(16, l);
        let u = VectorField::from_fn(&g, |a, x| {
            if a == 0 {
                (2.0 * PI * x[0] / l).sin()
            } else {
                0.0
            }
        });
        let h = spectral_hessian(&u);
        let c = (2.0 * PI / l).powi(2);
        for (p, v) in h.entry(0, 0, 0).iter().enumerate() {
            let x = g.coordinate(p);
            assert_abs_diff_eq!(*v, -c * (2.0 * PI * x[0] / l).sin(), epsilon = 1e-11);
        }
        for (a, i, j) in [(0, 0, 1), (0, 1, 1), (1, 0, 0), (1, 0, 1), (1, 1, 1)] {
            assert!(h.entry(a, i, j).iter().all(|v| v.abs() < 1e-11));
        }
        let zero = spectral_hessian(&VectorField::from_fn(&g, |_, _| 3.0));
        assert!(zero.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn hessian_matches_finite_differences() {
        // Centred second differences on the same grid: error O(h^2).
        let g = GridSpec::new(2, 1, 64, 1.0).unwrap();
        let u = random_band_limited(&g, 3, 9).unwrap();
        let h = spectral_hessian(&u);
        let vals = u.physical().unwrap();
        let m = 64usize;
        let hsp = g.spacing();
        let at = |i: isize, j: isize| {
            let i = i.rem_euclid(m as isize) as usize;
            let j = j.rem_euclid(m as isize) as usize;
            vals[i * m + j]
        };
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..m as isize {
            for j in 0..m as isize {
                let p = (i as usize) * m + j as usize;
                let dxx = (at(i + 1, j) - 2.0 * at(i, j) + at(i - 1, j)) / (hsp * hsp);
                let dxy = (at(i + 1, j + 1) - at(i + 1, j - 1) - at(i - 1, j + 1)
                    + at(i - 1, j - 1))
                    / (4.0 * hsp * hsp);
                worst = worst.max((dxx - h.entry(0, 0, 0)[p]).abs());
                worst = worst.max((dxy - h.entry(0, 0, 1)[p]).abs());
                scale = scale.max(h.entry(0, 0, 0)[p].abs());
            }
        }
        // |k| <= 3 sqrt(2): truncation ~ (2 pi k h)^2 / 12 relative
        let bound = (2.0 * PI * 3.0 * 2f64.sqrt() * hsp).powi(2) / 3.0;
        assert!(worst <= bound * scale, "{worst} vs {}", bound * scale);
    }

    #[test]
    fn hessian_symmetry_and_zero_mean() {
        let g = GridSpec::new(3, 2, 8, 1.0).unwrap();
        let u = random_band_limited(&g, 3, 1).unwrap().add(&VectorField::from_fn(&g, |_, x| {
            (2.0 * PI * 4.0 * x[0]).cos()
        }))
        .unwrap();
        let h = spectral_hessian(&u);
        assert_eq!(h.symmetry_defect(), 0.0);
        let scale = h.l2_norm();
        assert!(h.entry_means().iter().all(|m| m.abs() <= 1e-10 * scale));
    }

    #[test]
    fn random_band_limited_properties() {
        let g = GridSpec::new(2, 2, 16, 1.0).unwrap();
        let zero = random_band_limited(&g, 0, 4).unwrap();
        assert!(zero.physical().unwrap().iter().all(|v| *v == 0.0));
        let a = random_band_limited(&g, 2, 4).unwrap();
        let b = random_band_limited(&g, 2, 4).unwrap();
        assert_eq!(a, b);
        let s = a.forward_transform().unwrap();
        let pts = g.total_points();
        for (i, c) in s.spectral().unwrap().iter().enumerate() {
            let k = g.wavenumber(i % pts);
            if k.iter().any(|x| x.abs() > 2) || k.iter().all(|x| *x == 0) {
                assert!(c.norm() < 1e-13, "support leak at {k:?}");
            }
        }
        assert!(s.conjugate_symmetry_defect().unwrap() < 1e-12);
        assert!(a.mean().iter().all(|m| m.abs() < 1e-13));
        assert!(random_band_limited(&g, 8, 0).is_err());
    }

    #[test]
    fn norms_of_simple_fields() {
        let g = grid2(16, 1.0);
        let u = VectorField::from_fn(&g, |a, x| if a == 0 { (2.0 * PI * x[0]).sin() } else { 0.0 });
        assert_abs_diff_eq!(u.l2_norm(), 0.5f64.sqrt(), epsilon = 1e-14);
        let z = VectorField::zeros(&g);
        let r = z.norms();
        assert_eq!((r.l2, r.w22star), (0.0, 0.0));
        assert!(r.grad_l2star_surrogate.is_none() && r.full_norm.is_none());
    }
}
