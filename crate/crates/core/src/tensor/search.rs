//! Sphere search for the ellipticity constant `nu(A) = min_a lambda_min(A : a (x) a)`.
//!
//! `lambda_min` of the symbol is Lipschitz in the direction, so dense sampling
//! followed by a local polish of the best seeds resolves the minimum to the
//! polish tolerance. Directions `a` and `-a` give the same symbol, so only a
//! half-sphere is sampled.

use serde::{Deserialize, Serialize};

use super::SymTensor4;
use crate::linalg;
use crate::optimize::nelder_mead;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Angles on the half circle for `n = 2`.
    pub circle_samples: usize,
    /// Polar x azimuthal grid on the half sphere for `n = 3`.
    pub sphere_grid: (usize, usize),
    /// Quasi-random directions for `n >= 4`.
    pub quasi_random_samples: usize,
    /// Number of best samples refined by Nelder-Mead.
    pub polish_seeds: usize,
    pub polish_max_iters: usize,
    pub polish_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            circle_samples: 2048,
            sphere_grid: (64, 128),
            quasi_random_samples: 20_000,
            polish_seeds: 10,
            polish_max_iters: 4000,
            polish_tol: 1e-15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EllipticityConstant {
    pub nu: f64,
    /// Unit direction in R^n attaining `nu`.
    pub witness_a: Vec<f64>,
    /// Unit eigenvector in R^N of the symbol at `witness_a`.
    pub witness_eta: Vec<f64>,
    pub samples: usize,
    pub polish_evaluations: usize,
    pub method: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterminantDisagreement {
    pub direction: Vec<f64>,
    pub lambda_min: f64,
    pub det: f64,
}

/// Outcome of the rank-one positivity test.
///
/// `nu > 0` implies `det(A : a (x) a) > 0` everywhere; the converse fails when
/// the symbol has an even number of negative eigenvalues. Sample points where
/// the two criteria disagree are listed rather than hidden.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankOneReport {
    pub positive: bool,
    pub constant: EllipticityConstant,
    pub min_sampled_det: f64,
    pub det_criterion_positive: bool,
    pub disagreements: Vec<DeterminantDisagreement>,
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn directions(dim: usize, cfg: &SearchConfig) -> (Vec<Vec<f64>>, &'static str) {
    use std::f64::consts::PI;
    match dim {
        1 => (vec![vec![1.0]], "single direction"),
        2 => {
            let k = cfg.circle_samples.max(8);
            let dirs = (0..k)
                .map(|s| {
                    let t = PI * s as f64 / k as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect();
            (dirs, "angle grid")
        }
        3 => {
            let (np, na) = cfg.sphere_grid;
            let (np, na) = (np.max(4), na.max(8));
            let mut dirs = vec![vec![0.0, 0.0, 1.0]];
            for p in 0..np {
                let theta = 0.5 * PI * (p as f64 + 0.5) / np as f64;
                for q in 0..na {
                    let phi = 2.0 * PI * q as f64 / na as f64;
                    dirs.push(vec![
                        theta.sin() * phi.cos(),
                        theta.sin() * phi.sin(),
                        theta.cos(),
                    ]);
                }
            }
            (dirs, "angle product grid")
        }
        _ => {
            // Halton points pushed through Box-Muller give quasi-random
            // Gaussian vectors; normalising puts them on the sphere.
            let pairs = dim.div_ceil(2);
            let count = cfg.quasi_random_samples.max(dim + 1);
            let mut dirs = Vec::with_capacity(count + dim);
            for k in 0..dim {
                let mut e = vec![0.0; dim];
                e[k] = 1.0;
                dirs.push(e);
            }
            for s in 1..=count as u64 {
                let mut v = Vec::with_capacity(2 * pairs);
                for p in 0..pairs {
                    let u1 = halton(s, PRIMES[(2 * p) % PRIMES.len()]).max(1e-300);
                    let u2 = halton(s, PRIMES[(2 * p + 1) % PRIMES.len()]);
                    let r = (-2.0 * u1.ln()).sqrt();
                    v.push(r * (2.0 * PI * u2).cos());
                    v.push(r * (2.0 * PI * u2).sin());
                }
                v.truncate(dim);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-12 {
                    dirs.push(v.iter().map(|x| x / norm).collect());
                }
            }
            (dirs, "quasi-random directions")
        }
    }
}

fn normalise(a: &[f64]) -> Option<Vec<f64>> {
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    (norm > 1e-300 && norm.is_finite()).then(|| a.iter().map(|x| x / norm).collect())
}

/// Runs the search; also returns `(direction, lambda_min, det)` at each sample.
pub(super) fn ellipticity_search(
    t: &SymTensor4,
    cfg: &SearchConfig,
) -> (EllipticityConstant, Vec<(Vec<f64>, f64, f64)>) {
    let (dirs, method) = directions(t.dim(), cfg);
    let sampled: Vec<(Vec<f64>, f64, f64)> = dirs
        .into_iter()
        .map(|a| {
            let s = t.symbol_raw(&a);
            let l = linalg::min_eigenvalue(&s);
            let d = linalg::determinant(&s);
            (a, l, d)
        })
        .collect();

    let mut order: Vec<usize> = (0..sampled.len()).collect();
    order.sort_by(|&i, &j| sampled[i].1.total_cmp(&sampled[j].1));

    let objective = |a: &[f64]| match normalise(a) {
        Some(u) => linalg::min_eigenvalue(&t.symbol_raw(&u)),
        None => f64::INFINITY,
    };

    let mut best_a = sampled[order[0]].0.clone();
    let mut best = sampled[order[0]].1;
    let mut evaluations = 0;
    if t.dim() > 1 {
        for &idx in order.iter().take(cfg.polish_seeds) {
            let r = nelder_mead(
                objective,
                &sampled[idx].0,
                0.02,
                cfg.polish_tol,
                cfg.polish_max_iters,
            );
            evaluations += r.evaluations;
            if r.value < best {
                if let Some(u) = normalise(&r.x) {
                    best = r.value;
                    best_a = u;
                }
            }
        }
    }
    let (nu, eta) = linalg::min_eigenpair(&t.symbol_raw(&best_a));
    let constant = EllipticityConstant {
        nu: nu.min(best),
        witness_a: best_a,
        witness_eta: eta,
        samples: sampled.len(),
        polish_evaluations: evaluations,
        method: format!(
            "{method} + Nelder-Mead polish of {} seeds",
            cfg.polish_seeds.min(sampled.len())
        ),
    };
    (constant, sampled)
}

pub(super) fn rank_one_report(t: &SymTensor4, tol: f64, cfg: &SearchConfig) -> RankOneReport {
    let (constant, sampled) = ellipticity_search(t, cfg);
    let positive = constant.nu > tol;
    let mut min_det = f64::INFINITY;
    let mut disagreements = Vec::new();
    for (a, l, d) in &sampled {
        min_det = min_det.min(*d);
        if (*l > tol) != (*d > 0.0) {
            disagreements.push(DeterminantDisagreement {
                direction: a.clone(),
                lambda_min: *l,
                det: *d,
            });
        }
    }
    RankOneReport {
        positive,
        constant,
        min_sampled_det: min_det,
        det_criterion_positive: min_det > 0.0,
        disagreements,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle for n = 2: dense angle scan with closed-form 2x2
    /// eigenvalues, no polishing.
    fn brute_force_nu_2d(t: &SymTensor4, k: usize) -> f64 {
        (0..k)
            .map(|s| {
                let th = std::f64::consts::PI * s as f64 / k as f64;
                let a = [th.cos(), th.sin()];
                let m = t.symbol_raw(&a);
                let (p, q, r) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
                0.5 * (p + r) - (0.25 * (p - r) * (p - r) + q * q).sqrt()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn identity_and_negated_identity() {
        let cfg = SearchConfig::default();
        for dim in [2, 3, 5] {
            let id = SymTensor4::identity(dim, 2);
            assert!((id.ellipticity_constant(&cfg).nu - 1.0).abs() < 1e-12);
            assert!((id.scaled(-1.0).ellipticity_constant(&cfg).nu + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn example2_constant_and_witness() {
        let t = SymTensor4::example2(8.0);
        let c = t.ellipticity_constant(&SearchConfig::default());
        let oracle = brute_force_nu_2d(&t, 100_000);
        assert!((oracle - 1.0).abs() < 1e-12);
        assert!((c.nu - oracle).abs() < 1e-10);
        assert!(c.witness_eta[0].abs() > 1.0 - 1e-9);
        assert!(c.witness_eta[1].abs() < 1e-6);
    }

    #[test]
    fn polish_matches_dense_oracle_on_random_tensors() {
        let cfg = SearchConfig::default();
        for seed in 0..10 {
            let t = SymTensor4::random_symmetric(2, 2, 100 + seed);
            let oracle = brute_force_nu_2d(&t, 400_000);
            let c = t.ellipticity_constant(&cfg);
            assert!(c.nu <= oracle + 1e-9, "seed {seed}: {} vs {oracle}", c.nu);
            assert!(c.nu >= oracle - 1e-6, "seed {seed}: {} vs {oracle}", c.nu);
        }
    }

    #[test]
    fn witness_attains_reported_value() {
        let t = SymTensor4::random_symmetric(3, 3, 5);
        let c = t.ellipticity_constant(&SearchConfig::default());
        let p: Vec<f64> = c
            .witness_eta
            .iter()
            .flat_map(|e| c.witness_a.iter().map(move |a| e * a))
            .collect();
        let form = t.bilinear_form(&p, &p).unwrap();
        assert!(c.nu <= form + 1e-12);
        assert!((c.nu - form).abs() < 1e-10);
    }

    #[test]
    fn rank_one_examples() {
        let cfg = SearchConfig::default();
        let r = SymTensor4::identity(2, 2).check_rank_one_positive(0.0, &cfg);
        assert!(r.positive && r.det_criterion_positive && r.disagreements.is_empty());
        assert!((r.constant.nu - 1.0).abs() < 1e-12);

        assert!(SymTensor4::example2(8.0).check_rank_one_positive(0.0, &cfg).positive);

        let zero = SymTensor4::identity(2, 2).scaled(0.0);
        assert!(!zero.check_rank_one_positive(0.0, &cfg).positive);
    }

    #[test]
    fn determinant_converse_counterexample_is_reported() {
        // Two negative eigenvalues: det > 0 everywhere although nu < 0.
        let r = SymTensor4::identity(2, 2)
            .scaled(-1.0)
            .check_rank_one_positive(0.0, &SearchConfig::default());
        assert!(!r.positive);
        assert!(r.det_criterion_positive);
        assert!(!r.disagreements.is_empty());
    }
}
