//! Conversions between the monotonicity form
//!
//! ```text
//! (A:Z)^T (F(x, X+Z) - F(x, X)) >= (lambda/alpha) |A:Z|^2 - (kappa/alpha) nu^2 |Z|^2
//! ```
//!
//! and the near-operator form `(alpha, beta, gamma)`, plus the rank-one
//! monotonicity check that the former implies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{kcond::random_symmetric_hessian, Alpha, BoundNonlinearity, SamplerConfig};
use crate::error::{Error, Result};
use crate::tensor::SymTensor4;

/// Scaling factors beyond this are reported as a numerical anomaly.
pub const SIGMA_CAP: f64 = 1e9;

/// `(lambda, kappa) = ((1 - gamma)/2, beta/2)`.
pub fn def1_from_def2(beta: f64, gamma: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && gamma > 0.0 && beta + gamma < 1.0) {
        return Err(Error::InfeasibleCertificate(beta + gamma));
    }
    Ok(((1.0 - gamma) / 2.0, beta / 2.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefinitionTwoConstants {
    /// Chosen scaling; minimises `beta + gamma` over the feasible set.
    pub sigma: f64,
    pub beta: f64,
    pub gamma: f64,
    /// New multiplier is `alpha_scale * alpha`, i.e. `alpha / (lambda sigma)`.
    pub alpha_scale: f64,
    /// Infimum of feasible `sigma`, located by bisection; every larger
    /// `sigma` is feasible.
    pub sigma_min: f64,
    pub anomaly: Option<String>,
}

fn sum_at(sigma: f64, ratio: f64, q: f64) -> f64 {
    let beta = (2.0 / sigma) * (ratio + q * q / (2.0 * sigma));
    let gamma = 1.0 - 2.0 / sigma;
    beta + gamma
}

/// Converts `(lambda, kappa)` with Lipschitz bound `m` of `F(x, .)` into
/// `(beta, gamma)` and the rescaled multiplier.
pub fn def2_from_def1(
    lambda: f64,
    kappa: f64,
    m: f64,
    alpha_sup: f64,
    nu: f64,
) -> Result<DefinitionTwoConstants> {
    if !(lambda > kappa && kappa > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need lambda > kappa > 0, got lambda = {lambda}, kappa = {kappa}"
        )));
    }
    if !(m >= 0.0 && nu > 0.0 && alpha_sup > 0.0) {
        return Err(Error::InvalidInput("need M >= 0, nu > 0, alpha_sup > 0".into()));
    }
    let ratio = kappa / lambda;
    let q = m * alpha_sup / (lambda * nu);
    let gap = 1.0 - ratio;
    // beta + gamma - 1 = (q^2 / sigma - 2 gap) / sigma: feasible iff sigma > q^2 / (2 gap)
    let infeasible = |s: f64| sum_at(s, ratio, q) >= 1.0;
    let mut anomaly = None;
    let sigma_min = if !infeasible(2.0 * (1.0 + 1e-12)) {
        2.0
    } else if infeasible(SIGMA_CAP) {
        anomaly = Some(format!("no feasible sigma below {SIGMA_CAP:e}"));
        SIGMA_CAP
    } else {
        let (mut lo, mut hi) = (2.0, SIGMA_CAP);
        while (hi - lo) > 1e-9 * hi {
            let mid = 0.5 * (lo + hi);
            if infeasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    let optimum = q * q / gap;
    let sigma = if anomaly.is_some() {
        SIGMA_CAP
    } else {
        optimum.max(sigma_min * (1.0 + 1e-3)).max(2.0 * (1.0 + 1e-3))
    };
    let beta = (2.0 / sigma) * (ratio + q * q / (2.0 * sigma));
    let gamma = 1.0 - 2.0 / sigma;
    if anomaly.is_none() && beta + gamma >= 1.0 {
        anomaly = Some(format!("beta + gamma = {} at sigma = {sigma}", beta + gamma));
    }
    Ok(DefinitionTwoConstants {
        sigma,
        beta,
        gamma,
        alpha_scale: 1.0 / (lambda * sigma),
        sigma_min,
        anomaly,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    /// Minimum of `(F(X + eta a a) - F(X)) . (A : eta a a) - c |eta|^2 |a|^4`.
    pub worst_margin: f64,
    /// Same, divided by `|eta|^2 |a|^4`.
    pub worst_relative_margin: f64,
    /// `c = (lambda - kappa) nu^2 / ||alpha||_inf`.
    pub constant: f64,
    pub samples: usize,
}

/// Samples the rank-one monotonicity inequality implied by `(lambda, kappa, alpha)`.
pub fn lemma1_check(
    op: &BoundNonlinearity,
    anchor: &SymTensor4,
    lambda: f64,
    kappa: f64,
    alpha: &Alpha,
    nu: f64,
    cfg: &SamplerConfig,
) -> Result<LemmaReport> {
    let (alpha_sup, _) = alpha.bounds(op)?;
    let c = (lambda - kappa) * nu * nu / alpha_sup;
    let (comps, dim) = (op.spec().components(), op.spec().dim());
    let pts = op.grid().total_points();
    let scales = if cfg.scales.is_empty() {
        vec![1.0]
    } else {
        cfg.scales.clone()
    };
    let margins: Vec<(f64, f64)> = (0..cfg.count)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(s as u64);
            let sx = scales[s % scales.len()];
            let sa = scales[(s / scales.len()) % scales.len()].sqrt();
            let point = (s * 7919) % pts;
            let x = random_symmetric_hessian(&mut rng, comps, dim, sx);
            let eta: Vec<f64> = (0..comps).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a: Vec<f64> = (0..dim)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    sa * g
                })
                .collect();
            let mut z = Vec::with_capacity(comps * dim * dim);
            for e in &eta {
                for ai in &a {
                    for aj in &a {
                        z.push(e * ai * aj);
                    }
                }
            }
            let xz: Vec<f64> = x.iter().zip(&z).map(|(p, q)| p + q).collect();
            let f1 = op.evaluate(point, &xz)?;
            let f0 = op.evaluate(point, &x)?;
            let az = anchor.contract_hessian(&z)?;
            let lhs: f64 = f1.iter().zip(&f0).zip(&az).map(|((p, q), r)| (p - q) * r).sum();
            let weight = eta.iter().map(|v| v * v).sum::<f64>()
                * a.iter().map(|v| v * v).sum::<f64>().powi(2);
            let margin = lhs - c * weight;
            Ok((margin, if weight > 0.0 { margin / weight } else { 0.0 }))
        })
        .collect::<Result<_>>()?;
    Ok(LemmaReport {
        worst_margin: margins.iter().map(|m| m.0).fold(f64::INFINITY, f64::min),
        worst_relative_margin: margins.iter().map(|m| m.1).fold(f64::INFINITY, f64::min),
        constant: c,
        samples: margins.len(),
    })
}
