//! Sampled verification and fitting of the structure condition
//!
//! ```text
//! |A:Z - alpha(x) (F(x, X+Z) - F(x, X))|^2 <= beta nu(A)^2 |Z|^2 + gamma |A:Z|^2
//! ```
//!
//! Violations are reported normalised by `nu^2 |Z|^2`, which makes them
//! invariant under `Z -> sZ` whenever `F` is linear.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{def1_from_def2, Alpha, BoundNonlinearity};
use crate::error::{Error, Result};
use crate::tensor::{SearchConfig, SymTensor4};

const CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub count: usize,
    pub seed: u64,
    /// Magnitudes swept independently for `X` and `Z`.
    pub scales: Vec<f64>,
    /// Fraction of increments `Z` drawn rank-one, `eta (x) a (x) a`.
    pub rank_one_fraction: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            count: 4000,
            seed: 0,
            scales: vec![1e-2, 1.0, 1e2],
            rank_one_fraction: 0.25,
        }
    }
}

/// One `(x, X, Z)` triple.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KProbe {
    pub point: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
}

/// Entrywise Gaussian hessian block of the given scale, symmetric in `(i, j)`.
pub fn random_symmetric_hessian<R: Rng>(rng: &mut R, comps: usize, dim: usize, scale: f64) -> Vec<f64> {
    let mut z = vec![0.0; comps * dim * dim];
    for a in 0..comps {
        for i in 0..dim {
            for j in i..dim {
                let v: f64 = StandardNormal.sample(rng);
                z[(a * dim + i) * dim + j] = scale * v;
                z[(a * dim + j) * dim + i] = scale * v;
            }
        }
    }
    z
}

fn rank_one<R: Rng>(rng: &mut R, comps: usize, dim: usize, scale: f64) -> Vec<f64> {
    let eta: Vec<f64> = (0..comps).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let a: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
    let mut z = Vec::with_capacity(comps * dim * dim);
    for e in &eta {
        for ai in &a {
            for aj in &a {
                z.push(scale * e * ai * aj);
            }
        }
    }
    z
}

pub(crate) fn draw_probes(op: &BoundNonlinearity, cfg: &SamplerConfig) -> Vec<KProbe> {
    let (comps, dim) = (op.spec().components(), op.spec().dim());
    let pts = op.grid().total_points();
    let scales = if cfg.scales.is_empty() {
        vec![1.0]
    } else {
        cfg.scales.clone()
    };
    let k = scales.len();
    let chunks = cfg.count.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(c as u64);
            let end = ((c + 1) * CHUNK).min(cfg.count);
            let scales = &scales;
            (c * CHUNK..end)
                .map(move |s| {
                    let sx = scales[s % k];
                    let sz = scales[(s / k) % k];
                    let point = rng.random_range(0..pts);
                    let x = random_symmetric_hessian(&mut rng, comps, dim, sx);
                    let z = if rng.random::<f64>() < cfg.rank_one_fraction {
                        rank_one(&mut rng, comps, dim, sz)
                    } else {
                        random_symmetric_hessian(&mut rng, comps, dim, sz)
                    };
                    KProbe { point, x, z }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Per-probe quantities independent of `alpha`.
struct Evaluated {
    az: Vec<f64>,
    diff: Vec<f64>,
    z2: f64,
}

fn evaluate(op: &BoundNonlinearity, anchor: &SymTensor4, probes: &[KProbe]) -> Result<Vec<Evaluated>> {
    probes
        .par_iter()
        .map(|pr| {
            let az = anchor.contract_hessian(&pr.z)?;
            let xz: Vec<f64> = pr.x.iter().zip(&pr.z).map(|(a, b)| a + b).collect();
            let f1 = op.evaluate(pr.point, &xz)?;
            let f0 = op.evaluate(pr.point, &pr.x)?;
            Ok(Evaluated {
                az,
                diff: f1.iter().zip(&f0).map(|(a, b)| a - b).collect(),
                z2: pr.z.iter().map(|v| v * v).sum(),
            })
        })
        .collect()
}

fn lhs(e: &Evaluated, alpha: f64) -> f64 {
    e.az.iter()
        .zip(&e.diff)
        .map(|(a, d)| (a - alpha * d).powi(2))
        .sum()
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KViolation {
    /// `max (LHS - RHS) / (nu^2 |Z|^2)` over the samples.
    pub worst_violation: f64,
    /// `LHS - RHS` at the maximiser.
    pub worst_raw: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub argmax: Option<KProbe>,
    pub samples: usize,
    pub nu: f64,
    /// True when no sample violates the inequality.
    pub holds_on_samples: bool,
}

fn anchor_nu(anchor: &SymTensor4) -> Result<f64> {
    let nu = anchor.ellipticity_constant(&SearchConfig::default()).nu;
    if nu <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "anchor tensor is not rank-one positive (nu = {nu:e})"
        )));
    }
    Ok(nu)
}

pub fn verify_k_condition(
    op: &BoundNonlinearity,
    anchor: &SymTensor4,
    alpha: &Alpha,
    beta: f64,
    gamma: f64,
    cfg: &SamplerConfig,
) -> Result<KViolation> {
    verify_k_condition_with_probes(op, anchor, alpha, beta, gamma, cfg, &[])
}

/// As [`verify_k_condition`], with hand-picked probes appended to the random ones.
pub fn verify_k_condition_with_probes(
    op: &BoundNonlinearity,
    anchor: &SymTensor4,
    alpha: &Alpha,
    beta: f64,
    gamma: f64,
    cfg: &SamplerConfig,
    extra: &[KProbe],
) -> Result<KViolation> {
    if !(beta > 0.0 && gamma > 0.0) {
        return Err(Error::InvalidInput("beta and gamma must be positive".into()));
    }
    let nu = anchor_nu(anchor)?;
    let alphas = alpha.resolve(op)?;
    let mut probes = draw_probes(op, cfg);
    probes.extend_from_slice(extra);
    let evals = evaluate(op, anchor, &probes)?;
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for (i, (e, pr)) in evals.iter().zip(&probes).enumerate() {
        if e.z2 == 0.0 {
            continue;
        }
        let l = lhs(e, alphas[pr.point]);
        let r = beta * nu * nu * e.z2 + gamma * sq(&e.az);
        let v = (l - r) / (nu * nu * e.z2);
        if best.is_none_or(|b| v > b.1) {
            best = Some((i, v, l, r));
        }
    }
    let (i, v, l, r) = best.ok_or_else(|| Error::InvalidInput("no usable samples".into()))?;
    Ok(KViolation {
        worst_violation: v,
        worst_raw: l - r,
        lhs: l,
        rhs: r,
        argmax: Some(probes[i].clone()),
        samples: probes.len(),
        nu,
        holds_on_samples: v <= 0.0,
    })
}

/// Constants of the structure condition, certified on samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityCertificate {
    pub nu: f64,
    pub alpha: Alpha,
    /// `(||alpha||_inf, ||1/alpha||_inf)`.
    pub alpha_bounds: (f64, f64),
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub kappa: f64,
    pub lipschitz_m: f64,
    pub sample_count: usize,
    pub worst_violation: f64,
}

impl EllipticityCertificate {
    /// Certificate from constants supplied by the caller rather than fitted.
    pub fn supplied(
        nu: f64,
        alpha: Alpha,
        alpha_bounds: (f64, f64),
        beta: f64,
        gamma: f64,
        lipschitz_m: f64,
    ) -> Result<Self> {
        let (lambda, kappa) = def1_from_def2(beta, gamma)?;
        if !(nu > 0.0) {
            return Err(Error::InvalidInput(format!("nu must be positive, got {nu}")));
        }
        Ok(EllipticityCertificate {
            nu,
            alpha,
            alpha_bounds,
            beta,
            gamma,
            lambda,
            kappa,
            lipschitz_m,
            sample_count: 0,
            worst_violation: f64::NAN,
        })
    }

    pub fn sum(&self) -> f64 {
        self.beta + self.gamma
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub sampler: SamplerConfig,
    /// Number of constant `alpha` candidates (the centre is always added).
    pub alpha_points: usize,
    /// Half-width of the log10 range around the centre.
    pub alpha_decades: f64,
    pub gamma_sweep: usize,
    /// Also try `alpha = s / g^2` when the weight is not constant.
    pub try_inverse_weight: bool,
    /// Lower bound on fitted `beta` and `gamma`.
    pub floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            sampler: SamplerConfig::default(),
            alpha_points: 21,
            alpha_decades: 1.0,
            gamma_sweep: 201,
            try_inverse_weight: true,
            floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitCandidate {
    pub alpha: Alpha,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Present iff the best pair satisfies `beta + gamma < 1`.
    pub certificate: Option<EllipticityCertificate>,
    pub best: FitCandidate,
    pub best_sum: f64,
    pub candidates: Vec<FitCandidate>,
    pub samples: usize,
}

/// Relative slack added to each sample constraint so that a tight sample still
/// verifies after the re-evaluation round-off.
const FIT_ROUNDOFF: f64 = 1e-12;

/// Minimises `beta + gamma` subject to `l_s <= beta + gamma q_s` for all samples.
fn min_beta_gamma(l: &[f64], q: &[f64], floor: f64, sweep: usize) -> (f64, f64) {
    let beta_of = |g: f64| {
        l.iter()
            .zip(q)
            .map(|(l, q)| l - g * q + FIT_ROUNDOFF * (l.abs() + g * q.abs()))
            .fold(floor, f64::max)
    };
    let phi = |g: f64| g + beta_of(g);
    let sweep = sweep.max(3);
    let hi = 1.0;
    let grid: Vec<f64> = (0..sweep)
        .map(|k| floor + (hi - floor) * k as f64 / (sweep - 1) as f64)
        .collect();
    let (k_best, _) = grid
        .iter()
        .enumerate()
        .map(|(k, g)| (k, phi(*g)))
        .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    // phi is convex and piecewise linear: refine inside the bracketing cells
    let mut a = grid[k_best.saturating_sub(1)];
    let mut b = grid[(k_best + 1).min(sweep - 1)];
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    for _ in 0..200 {
        if phi(c) < phi(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    let candidates = [grid[k_best], 0.5 * (a + b)];
    let g = candidates
        .into_iter()
        .min_by(|x, y| phi(*x).total_cmp(&phi(*y)))
        .unwrap();
    (beta_of(g), g)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 0 {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

pub fn fit_k_condition(
    op: &BoundNonlinearity,
    anchor: &SymTensor4,
    cfg: &FitConfig,
) -> Result<FitReport> {
    let nu = anchor_nu(anchor)?;
    let probes = draw_probes(op, &cfg.sampler);
    let evals = evaluate(op, anchor, &probes)?;
    let keep: Vec<usize> = (0..evals.len()).filter(|&i| evals[i].z2 > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::InvalidInput("no usable samples".into()));
    }
    let q: Vec<f64> = keep
        .iter()
        .map(|&i| sq(&evals[i].az) / (nu * nu * evals[i].z2))
        .collect();

    let centre = 1.0 / median(op.weights());
    let k = cfg.alpha_points.max(1);
    let mut multipliers: Vec<f64> = (0..k)
        .map(|j| {
            let t = if k == 1 { 0.0 } else { 2.0 * j as f64 / (k - 1) as f64 - 1.0 };
            10f64.powf(cfg.alpha_decades * t)
        })
        .collect();
    if !multipliers.contains(&1.0) {
        multipliers.push(1.0);
    }
    let mut alphas: Vec<Alpha> = multipliers
        .iter()
        .map(|m| Alpha::constant(centre * m))
        .collect();
    let (wmin, wmax) = op.weight_bounds();
    if cfg.try_inverse_weight && wmax > wmin {
        alphas.extend(multipliers.iter().map(|m| Alpha::InverseWeight { scale: *m }));
    }

    let mut candidates = Vec::with_capacity(alphas.len());
    for alpha in alphas {
        let values = alpha.resolve(op)?;
        let l: Vec<f64> = keep
            .iter()
            .map(|&i| lhs(&evals[i], values[probes[i].point]) / (nu * nu * evals[i].z2))
            .collect();
        let (beta, gamma) = min_beta_gamma(&l, &q, cfg.floor, cfg.gamma_sweep);
        candidates.push(FitCandidate { alpha, beta, gamma });
    }
    let best = candidates
        .iter()
        .min_by(|a, b| (a.beta + a.gamma).total_cmp(&(b.beta + b.gamma)))
        .cloned()
        .expect("at least one candidate");
    let best_sum = best.beta + best.gamma;
    let certificate = if best_sum < 1.0 {
        let values = best.alpha.resolve(op)?;
        let worst = keep
            .iter()
            .zip(&q)
            .map(|(&i, qi)| {
                lhs(&evals[i], values[probes[i].point]) / (nu * nu * evals[i].z2)
                    - best.beta
                    - best.gamma * qi
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let (lambda, kappa) = def1_from_def2(best.beta, best.gamma)?;
        Some(EllipticityCertificate {
            nu,
            alpha_bounds: best.alpha.bounds(op)?,
            alpha: best.alpha.clone(),
            beta: best.beta,
            gamma: best.gamma,
            lambda,
            kappa,
            lipschitz_m: op.spec().declared_lipschitz(),
            sample_count: keep.len(),
            worst_violation: worst,
        })
    } else {
        None
    };
    Ok(FitReport {
        certificate,
        best,
        best_sum,
        candidates,
        samples: keep.len(),
    })
}
