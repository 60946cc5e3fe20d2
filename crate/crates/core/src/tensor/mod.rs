//! Symmetric fourth-order coefficient tensors `A[a,b,i,j] = A[b,a,j,i]`.
//!
//! Index conventions used throughout the crate:
//! - a tensor entry is addressed as `(alpha, beta, i, j)` with `alpha, beta`
//!   in `0..components` and `i, j` in `0..dim`;
//! - a hessian-like argument `Z` is a flat slice laid out as `(alpha, i, j)`;
//! - a gradient-like argument `P` is a flat slice laid out as `(alpha, i)`.

mod search;
mod text;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

pub use search::{EllipticityConstant, RankOneReport, SearchConfig, DeterminantDisagreement};

/// Asymmetry tolerated (and removed) by the constructor, relative to the largest entry.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default relative floor for `|det|` in [`SymTensor4::symbol_inverse`].
pub const DEFAULT_DET_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TensorRepr", into = "TensorRepr")]
pub struct SymTensor4 {
    dim: usize,
    components: usize,
    entries: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct TensorRepr {
    n: usize,
    #[serde(rename = "N")]
    components: usize,
    entries: Vec<f64>,
}

impl TryFrom<TensorRepr> for SymTensor4 {
    type Error = Error;
    fn try_from(r: TensorRepr) -> Result<Self> {
        SymTensor4::new(r.n, r.components, r.entries)
    }
}

impl From<SymTensor4> for TensorRepr {
    fn from(t: SymTensor4) -> Self {
        TensorRepr {
            n: t.dim,
            components: t.components,
            entries: t.entries,
        }
    }
}

impl SymTensor4 {
    /// Builds a tensor from entries in lexicographic `(alpha, beta, i, j)` order.
    ///
    /// Asymmetry up to [`SYMMETRY_TOL`] (relative) is symmetrised away; anything
    /// larger is rejected.
    pub fn new(dim: usize, components: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 || components == 0 {
            return Err(Error::InvalidInput(format!(
                "tensor dimensions must be positive (n = {dim}, N = {components})"
            )));
        }
        let expected = components * components * dim * dim;
        if entries.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "expected {expected} entries for n = {dim}, N = {components}, got {}",
                entries.len()
            )));
        }
        if let Some(bad) = entries.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite tensor entry {bad}")));
        }
        let mut t = SymTensor4 {
            dim,
            components,
            entries,
        };
        let scale = t.entries.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut asym = 0.0f64;
        for (a, b, i, j) in t.indices() {
            let d = t.get(a, b, i, j) - t.get(b, a, j, i);
            asym = asym.max(d.abs());
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::AsymmetricTensor(asym));
        }
        if asym > 0.0 {
            let src = t.clone();
            for (a, b, i, j) in src.indices() {
                let k = t.offset(a, b, i, j);
                t.entries[k] = 0.5 * (src.get(a, b, i, j) + src.get(b, a, j, i));
            }
        }
        Ok(t)
    }

    pub fn from_fn<F>(dim: usize, components: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, usize, usize, usize) -> f64,
    {
        let mut entries = Vec::with_capacity(components * components * dim * dim);
        for a in 0..components {
            for b in 0..components {
                for i in 0..dim {
                    for j in 0..dim {
                        entries.push(f(a, b, i, j));
                    }
                }
            }
        }
        Self::new(dim, components, entries)
    }

    /// `A[a,b,i,j] = delta_ab delta_ij`, the componentwise Laplacian.
    pub fn identity(dim: usize, components: usize) -> Self {
        Self::from_fn(dim, components, |a, b, i, j| {
            if a == b && i == j {
                1.0
            } else {
                0.0
            }
        })
        .expect("identity tensor is symmetric")
    }

    /// Block tensor with `A_11 = I` and `A_22 = m [[2, 1], [1, 2]]` (two
    /// components, two spatial dimensions). Strictly convex, yet fails the
    /// classical Campanato condition for `m >= 8`.
    pub fn example2(m: f64) -> Self {
        Self::example2_in_dim(m, 2)
    }

    /// Extension of [`SymTensor4::example2`] to `dim` spatial dimensions:
    /// `A_11 = I`, `A_22 = m (I + 1 1^T)`. Coincides with the planar tensor at `dim = 2`.
    pub fn example2_in_dim(m: f64, dim: usize) -> Self {
        Self::from_fn(dim, 2, |a, b, i, j| match (a, b) {
            (0, 0) if i == j => 1.0,
            (1, 1) => m * (if i == j { 2.0 } else { 1.0 }),
            _ => 0.0,
        })
        .expect("example tensor is symmetric")
    }

    /// Symmetrised Gaussian tensor, deterministic in `seed`. Not necessarily
    /// rank-one positive.
    pub fn random_symmetric(dim: usize, components: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..components * components * dim * dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let tmp = SymTensor4 {
            dim,
            components,
            entries: raw,
        };
        Self::from_fn(dim, components, |a, b, i, j| {
            0.5 * (tmp.get(a, b, i, j) + tmp.get(b, a, j, i))
        })
        .expect("symmetrised tensor")
    }

    /// `R + s I` with `R` from [`random_symmetric`](Self::random_symmetric) and
    /// the shift `s` doubled from 1 until `nu >= 0.1`.
    pub fn random_elliptic(dim: usize, components: usize, seed: u64) -> Self {
        let r = Self::random_symmetric(dim, components, seed);
        let id = Self::identity(dim, components);
        let mut shift = 1.0;
        loop {
            let t = r.add(&id.scaled(shift)).expect("same shape");
            if t.ellipticity_constant(&SearchConfig::default()).nu >= 0.1 {
                return t;
            }
            shift *= 2.0;
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    fn offset(&self, a: usize, b: usize, i: usize, j: usize) -> usize {
        ((a * self.components + b) * self.dim + i) * self.dim + j
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, i: usize, j: usize) -> f64 {
        self.entries[self.offset(a, b, i, j)]
    }

    fn indices(&self) -> impl Iterator<Item = (usize, usize, usize, usize)> {
        let (nc, n) = (self.components, self.dim);
        (0..nc).flat_map(move |a| {
            (0..nc).flat_map(move |b| (0..n).flat_map(move |i| (0..n).map(move |j| (a, b, i, j))))
        })
    }

    /// Frobenius norm `|A|`.
    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        SymTensor4 {
            dim: self.dim,
            components: self.components,
            entries: self.entries.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &SymTensor4) -> Result<Self> {
        self.same_shape(other)?;
        Ok(SymTensor4 {
            dim: self.dim,
            components: self.components,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &SymTensor4) -> Result<Self> {
        self.add(&other.scaled(-1.0))
    }

    fn same_shape(&self, other: &SymTensor4) -> Result<()> {
        if self.dim != other.dim || self.components != other.components {
            return Err(Error::DimensionMismatch(format!(
                "tensor shapes (n = {}, N = {}) and (n = {}, N = {}) differ",
                self.dim, self.components, other.dim, other.components
            )));
        }
        Ok(())
    }

    pub fn hessian_len(&self) -> usize {
        self.components * self.dim * self.dim
    }

    fn check_hessian(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.hessian_len() {
            return Err(Error::DimensionMismatch(format!(
                "hessian argument has {} entries, tensor needs N*n*n = {}",
                z.len(),
                self.hessian_len()
            )));
        }
        let n = self.dim;
        let scale = z.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut asym = 0.0f64;
        for a in 0..self.components {
            for i in 0..n {
                for j in (i + 1)..n {
                    let d = z[(a * n + i) * n + j] - z[(a * n + j) * n + i];
                    asym = asym.max(d.abs());
                }
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::AsymmetricHessian(asym));
        }
        Ok(())
    }

    /// `(A : Z)_a = A[a,b,i,j] Z[b,i,j]`.
    pub fn contract_hessian(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_hessian(z)?;
        let mut out = vec![0.0; self.components];
        self.contract_unchecked(z, &mut out);
        Ok(out)
    }

    /// Contraction without shape or symmetry validation; used on hot paths
    /// where `z` comes from a [`crate::fields::HessianField`].
    #[inline]
    pub(crate) fn contract_unchecked(&self, z: &[f64], out: &mut [f64]) {
        let block = self.dim * self.dim;
        for (a, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for b in 0..self.components {
                let row = &self.entries[(a * self.components + b) * block..][..block];
                let zb = &z[b * block..][..block];
                acc += row.iter().zip(zb).map(|(x, y)| x * y).sum::<f64>();
            }
            *o = acc;
        }
    }

    /// `A : P (x) Q = A[a,b,i,j] P[a,i] Q[b,j]`.
    pub fn bilinear_form(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        let len = self.components * self.dim;
        if p.len() != len || q.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "bilinear form arguments must have N*n = {len} entries (got {}, {})",
                p.len(),
                q.len()
            )));
        }
        let n = self.dim;
        Ok(self
            .indices()
            .map(|(a, b, i, j)| self.get(a, b, i, j) * p[a * n + i] * q[b * n + j])
            .sum())
    }

    /// Unnormalised symbol `A[a,b,i,j] a_i a_j`.
    pub(crate) fn symbol_raw(&self, dir: &[f64]) -> DMatrix<f64> {
        let (nc, n) = (self.components, self.dim);
        DMatrix::from_fn(nc, nc, |a, b| {
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    acc += self.get(a, b, i, j) * dir[i] * dir[j];
                }
            }
            acc
        })
    }

    fn check_direction(&self, a: &[f64]) -> Result<f64> {
        if a.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "direction has {} entries, tensor has n = {}",
                a.len(),
                self.dim
            )));
        }
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidInput("direction must be a non-zero finite vector".into()));
        }
        Ok(norm)
    }

    /// The symmetric N x N matrix `A : a (x) a` at the unit direction `a / |a|`.
    pub fn symbol_matrix(&self, a: &[f64]) -> Result<SymbolMatrix> {
        let norm = self.check_direction(a)?;
        let unit: Vec<f64> = a.iter().map(|x| x / norm).collect();
        let values = self.symbol_raw(&unit);
        let scale = linalg::frobenius(&values).max(f64::MIN_POSITIVE);
        debug_assert!(
            (&values - values.transpose()).iter().all(|d| d.abs() <= 1e-12 * scale),
            "symbol matrix lost symmetry"
        );
        Ok(SymbolMatrix {
            values,
            direction: unit,
        })
    }

    /// `(A : s (x) s)^-1 = cof(S)^T / det(S)` with `s = z / |z|`.
    pub fn symbol_inverse(&self, z: &[f64]) -> Result<DMatrix<f64>> {
        self.symbol_inverse_with_floor(z, DEFAULT_DET_FLOOR)
    }

    /// As [`SymTensor4::symbol_inverse`], rejecting `|det S| < floor * |S|^N`.
    pub fn symbol_inverse_with_floor(&self, z: &[f64], floor: f64) -> Result<DMatrix<f64>> {
        let s = self.symbol_matrix(z)?.values;
        let det = linalg::determinant(&s);
        let scaled_floor = floor * linalg::frobenius(&s).powi(self.components as i32);
        if !(det.abs() >= scaled_floor) || det == 0.0 {
            return Err(Error::DegenerateSymbol {
                z: z.to_vec(),
                det,
                floor: scaled_floor,
            });
        }
        Ok(linalg::cofactor(&s).transpose() / det)
    }

    /// Hermitian extension `A : xi (x) a (x) conj(xi) (x) a`, complex-valued.
    pub fn hermitian_form_complex(&self, xi: &[Complex64], a: &[f64]) -> Result<Complex64> {
        if xi.len() != self.components || a.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "hermitian form needs xi in C^{} and a in R^{}",
                self.components, self.dim
            )));
        }
        Ok(self
            .indices()
            .map(|(al, be, i, j)| xi[al] * xi[be].conj() * (self.get(al, be, i, j) * a[i] * a[j]))
            .sum())
    }

    /// Real value of the hermitian form; the imaginary part vanishes by tensor
    /// symmetry and is dropped.
    pub fn hermitian_form(&self, xi: &[Complex64], a: &[f64]) -> Result<f64> {
        let v = self.hermitian_form_complex(xi, a)?;
        let xi2: f64 = xi.iter().map(|c| c.norm_sqr()).sum();
        let a2: f64 = a.iter().map(|x| x * x).sum();
        debug_assert!(
            v.im.abs() <= 1e-12 * self.norm().max(1.0) * xi2 * a2 + f64::MIN_POSITIVE,
            "hermitian form has imaginary part {}",
            v.im
        );
        Ok(v.re)
    }

    /// `nu(A) = min_{|eta| = |a| = 1} A : eta (x) a (x) eta (x) a`.
    pub fn ellipticity_constant(&self, cfg: &SearchConfig) -> EllipticityConstant {
        search::ellipticity_search(self, cfg).0
    }

    /// Rank-one positivity with the determinant cross-check at every sampled direction.
    pub fn check_rank_one_positive(&self, tol: f64, cfg: &SearchConfig) -> RankOneReport {
        search::rank_one_report(self, tol, cfg)
    }

    pub fn to_text(&self) -> String {
        text::write(self)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        text::parse(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolMatrix {
    pub values: DMatrix<f64>,
    pub direction: Vec<f64>,
}

impl SymbolMatrix {
    pub fn min_eigenpair(&self) -> (f64, Vec<f64>) {
        linalg::min_eigenpair(&self.values)
    }

    pub fn determinant(&self) -> f64 {
        linalg::determinant(&self.values)
    }
}
