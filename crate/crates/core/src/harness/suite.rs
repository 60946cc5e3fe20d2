use rustfft::num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipticity::{
    def1_from_def2, def2_from_def1, example2_analysis, example3_analysis, Example3Params, ProbeTriple,
    SamplerConfig,
};
use crate::fields::{random_band_limited, GridSpec};
use crate::linear::hessian_estimate_check;
use crate::tensor::{SearchConfig, SymTensor4};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    /// Result being reproduced.
    pub anchor: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteBundle {
    pub seed: u64,
    pub entries: Vec<SuiteEntry>,
    pub all_passed: bool,
}

impl SuiteBundle {
    pub fn summary(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                format!(
                    "{} {} ({}): {}\n",
                    if e.passed { "PASS" } else { "FAIL" },
                    e.name,
                    e.anchor,
                    e.detail
                )
            })
            .collect()
    }
}

fn entry(name: &str, anchor: &str, outcome: Result<(bool, String)>) -> SuiteEntry {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    SuiteEntry {
        name: name.into(),
        anchor: anchor.into(),
        passed,
        detail,
    }
}

fn example2_entry(seed: u64) -> Result<(bool, String)> {
    let r = example2_analysis(8.0, 2000, seed)?;
    let expect = [(4.0, 4.0, 2.0), (-32.0, 4.0, 20.0)];
    let probes_ok = r.probes.iter().zip(expect).all(|((t, _), e): (&(ProbeTriple, _), _)| {
        (t.tensor_term - e.0).abs() <= 1e-12
            && (t.trace_term - e.1).abs() <= 1e-12
            && (t.norm_term - e.2).abs() <= 1e-12
    });
    let mut infeasible = r.infeasible;
    for m in [16.0, 100.0] {
        infeasible &= example2_analysis(m, 200, seed)?.infeasible;
    }
    Ok((
        probes_ok && infeasible && r.convexity_min_margin >= -1e-12,
        format!(
            "probes {:?}, c2 range {:?}, infeasible for m in {{8, 16, 100}}: {infeasible}",
            r.probes.iter().map(|(t, _)| (t.tensor_term, t.trace_term, t.norm_term)).collect::<Vec<_>>(),
            r.c2_range
        ),
    ))
}

fn example3_entry(seed: u64) -> Result<(bool, String)> {
    let params = Example3Params::default_for(9);
    let (below, above) = params.window_half_widths();
    let mut alphas: Vec<f64> = (0..20)
        .map(|k| 1.0 - below + (below + above) * (k as f64 + 0.5) / 20.0)
        .collect();
    alphas.extend([1.0 - 1.5 * below, 1.0 + 1.5 * above]);
    let sampler = SamplerConfig {
        count: 2000,
        seed,
        ..SamplerConfig::default()
    };
    let r = example3_analysis(params, &alphas, &sampler)?;
    let b = params.b;
    let c = params.c;
    let sum_ok = (r.sum_at_one - 2.0 * (b * b + c * c)).abs() <= 1e-12 && r.sum_at_one < 1.0;
    let inside_ok = r.inside.len() == 20
        && r.inside.iter().all(|i| {
            i.equality_error.is_some_and(|e| e <= 1e-9) && i.pi_relative.is_some_and(|p| p.abs() <= 1e-9)
        });
    let outside_ok = r.outside.len() == 2
        && r.outside
            .iter()
            .all(|o| o.relative_gap <= 1e-9 && !o.reduced_violation.holds_on_samples);
    Ok((
        sum_ok && inside_ok && outside_ok && r.alpha0 > 0.0,
        format!(
            "sum(1) = {:.6}, alpha0 = {:.6e}, window = ({:.6}, {:.6}), inside {}/20, outside witnesses {}",
            r.sum_at_one, r.alpha0, r.window.0, r.window.1, inside_ok as u8 * 20, outside_ok
        ),
    ))
}

/// Tensors used by the hessian-estimate sampling.
pub(crate) fn estimate_tensors() -> Vec<(String, SymTensor4)> {
    let mut v = vec![
        ("identity".to_string(), SymTensor4::identity(2, 2)),
        ("example2 m=8".to_string(), SymTensor4::example2(8.0)),
    ];
    for s in 1..=3 {
        v.push((format!("random seed {s}"), SymTensor4::random_elliptic(2, 2, s)));
    }
    v
}

fn estimate_entry(seed: u64, fields: usize, points: usize) -> Result<(bool, String)> {
    let grid = GridSpec::new(2, 2, points, 1.0)?;
    let mut worst = 0.0f64;
    for (_, a) in estimate_tensors() {
        let nu = a.ellipticity_constant(&SearchConfig::default()).nu;
        let w = (0..fields as u64)
            .into_par_iter()
            .map(|k| {
                let u = random_band_limited(&grid, points / 4, seed.wrapping_mul(1_000_003) + k)?;
                hessian_estimate_check(&a, nu, &u)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        worst = worst.max(w);
    }
    Ok((
        worst <= 1.0 + 1e-9,
        format!("max nu |D2u| / |A:D2u| = {worst:.12} over {fields} fields x 5 tensors"),
    ))
}

fn conversion_entry(seed: u64, triples: usize) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = 0;
    for _ in 0..triples {
        let lambda = rng.random_range(0.05..2.0);
        let kappa = lambda * rng.random_range(0.01..0.99);
        let m = rng.random_range(0.0..5.0);
        let d2 = def2_from_def1(lambda, kappa, m, 1.0, 1.0)?;
        let ok = d2.anomaly.is_none()
            && d2.beta + d2.gamma < 1.0
            && matches!(def1_from_def2(d2.beta, d2.gamma), Ok((l, k)) if l > k && k > 0.0);
        failures += usize::from(!ok);
    }
    Ok((failures == 0, format!("{failures} failures in {triples} triples")))
}

pub(crate) fn hermitian_margin(seed: u64, samples: usize) -> Result<f64> {
    let tensors = estimate_tensors();
    let nus: Vec<f64> = tensors
        .iter()
        .map(|(_, a)| a.ellipticity_constant(&SearchConfig::default()).nu)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for s in 0..samples {
        let (a, nu) = (&tensors[s % tensors.len()].1, nus[s % tensors.len()]);
        let xi: Vec<Complex64> = (0..a.components())
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let d: Vec<f64> = (0..a.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let w = xi.iter().map(|c| c.norm_sqr()).sum::<f64>() * d.iter().map(|x| x * x).sum::<f64>();
        worst = worst.min((a.hermitian_form(&xi, &d)? - nu * w) / w);
    }
    Ok(worst)
}

/// Reproduces the worked examples and the sampled estimates as one bundle.
pub fn run_reference_suite(seed: u64) -> SuiteBundle {
    let entries = vec![
        entry("example2", "strictly convex tensor without the near-operator property", example2_entry(seed)),
        entry("example3", "optimality window of the structure condition", example3_entry(seed)),
        entry("hessian-estimate", "nu(A) |D2u| <= |A:D2u|", estimate_entry(seed, 200, 32)),
        entry("conversions", "monotone form <-> (alpha, beta, gamma)", conversion_entry(seed, 100)),
        entry(
            "complex-extension",
            "A : xi a conj(xi) a >= nu |xi|^2 |a|^2",
            hermitian_margin(seed, 1000).map(|m| (m >= -1e-9, format!("min relative margin {m:.3e}"))),
        ),
    ];
    let all_passed = entries.iter().all(|e| e.passed);
    SuiteBundle {
        seed,
        entries,
        all_passed,
    }
}
