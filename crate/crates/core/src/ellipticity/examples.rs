//! Executable versions of two worked examples:
//!
//! - a strictly convex planar tensor that fails the classical Campanato
//!   inequality for every admissible pair `c_2 > c_1 > 0`;
//! - the scalar operator `F(X) = X:I - b|X| - c|X:I|`, whose structure
//!   condition holds only for `alpha` in a window around 1 and never with
//!   `gamma = 0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{
    verify_k_condition, verify_k_condition_with_probes, Alpha, BoundNonlinearity, KProbe,
    KViolation, NonlinearitySpec, Perturbation, SamplerConfig,
};
use crate::error::{Error, Result};
use crate::fields::GridSpec;
use crate::tensor::{SearchConfig, SymTensor4};

/// `(A_abij X_bij X_akk, X_bii X_bjj, X_aij X_aij)` for one probe `X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeTriple {
    pub tensor_term: f64,
    pub trace_term: f64,
    pub norm_term: f64,
}

/// What `t1 >= c2 t2 - c1 t3` with `0 < c1 < c2` forces on `c2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "bound", rename_all = "snake_case")]
pub enum ProbeConstraint {
    /// `c2 < bound`
    Below(f64),
    /// `c2 > bound`
    Above(f64),
    Unconstrained,
    Impossible,
}

impl ProbeTriple {
    pub fn compute(a: &SymTensor4, x: &[f64]) -> Result<Self> {
        let ax = a.contract_hessian(x)?;
        let n = a.dim();
        let traces: Vec<f64> = (0..a.components())
            .map(|al| (0..n).map(|i| x[(al * n + i) * n + i]).sum())
            .collect();
        Ok(ProbeTriple {
            tensor_term: ax.iter().zip(&traces).map(|(p, t)| p * t).sum(),
            trace_term: traces.iter().map(|t| t * t).sum(),
            norm_term: x.iter().map(|v| v * v).sum(),
        })
    }

    /// Since `c1 < c2` and `t3 > 0`, the inequality gives `t1 > c2 (t2 - t3)`.
    pub fn constraint(&self) -> ProbeConstraint {
        let d = self.trace_term - self.norm_term;
        if d > 0.0 {
            ProbeConstraint::Below(self.tensor_term / d)
        } else if d < 0.0 {
            ProbeConstraint::Above(self.tensor_term / d)
        } else if self.tensor_term > 0.0 {
            ProbeConstraint::Unconstrained
        } else {
            ProbeConstraint::Impossible
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example2Report {
    pub m: f64,
    pub nu: f64,
    /// `min (A:Q(x)Q - |Q|^2) / |Q|^2` over random `Q`.
    pub convexity_min_margin: f64,
    /// `min (A:Q(x)Q - |Q|^2 - m (Q21 + Q22)^2) / |Q|^2` over random `Q`.
    pub lower_bound_min_margin: f64,
    /// Largest relative error of
    /// `A:Q(x)Q = |Q|^2 + (m - 1)(Q21^2 + Q22^2) + m (Q21 + Q22)^2`.
    pub identity_max_error: f64,
    pub probes: Vec<(ProbeTriple, ProbeConstraint)>,
    /// Admissible `c2` range `(lower, upper)` implied by all probes.
    pub c2_range: (f64, f64),
    pub infeasible: bool,
    pub samples: usize,
}

/// Probes `[I; 0]` and `[0; ((-1, 3), (3, -1))]`.
pub fn example2_probes() -> [Vec<f64>; 2] {
    [
        vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0, -1.0, 3.0, 3.0, -1.0],
    ]
}

pub fn example2_analysis(m: f64, samples: usize, seed: u64) -> Result<Example2Report> {
    if !(m >= 8.0 && m.is_finite()) {
        return Err(Error::InvalidInput(format!("example requires m >= 8, got {m}")));
    }
    let a = SymTensor4::example2(m);
    let nu = a.ellipticity_constant(&SearchConfig::default()).nu;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut conv, mut lower, mut ident) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for _ in 0..samples {
        let q: Vec<f64> = (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
        let form = a.bilinear_form(&q, &q)?;
        let q2: f64 = q.iter().map(|v| v * v).sum();
        let (q21, q22) = (q[2], q[3]);
        let s = (q21 + q22).powi(2);
        conv = conv.min((form - q2) / q2);
        lower = lower.min((form - q2 - m * s) / q2);
        let exact = q2 + (m - 1.0) * (q21 * q21 + q22 * q22) + m * s;
        ident = ident.max((form - exact).abs() / form.abs().max(1e-300));
    }
    let probes: Vec<(ProbeTriple, ProbeConstraint)> = example2_probes()
        .iter()
        .map(|x| {
            let t = ProbeTriple::compute(&a, x)?;
            Ok((t, t.constraint()))
        })
        .collect::<Result<_>>()?;
    let (mut lo, mut hi, mut impossible) = (0.0f64, f64::INFINITY, false);
    for (_, c) in &probes {
        match c {
            ProbeConstraint::Below(b) => hi = hi.min(*b),
            ProbeConstraint::Above(b) => lo = lo.max(*b),
            ProbeConstraint::Impossible => impossible = true,
            ProbeConstraint::Unconstrained => {}
        }
    }
    Ok(Example2Report {
        m,
        nu,
        convexity_min_margin: conv,
        lower_bound_min_margin: lower,
        identity_max_error: ident,
        probes,
        c2_range: (lo, hi),
        infeasible: impossible || lo >= hi,
        samples,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example3Params {
    pub n: usize,
    pub b: f64,
    pub c: f64,
}

impl Example3Params {
    /// `c = 1/sqrt(n)`, `b = 1/(10 + sqrt(n))`.
    pub fn default_for(n: usize) -> Self {
        let r = (n as f64).sqrt();
        Example3Params {
            n,
            b: 1.0 / (10.0 + r),
            c: 1.0 / r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (b, c) = (self.b, self.c);
        let r = (self.n as f64).sqrt();
        let ok = self.n >= 2
            && c > b
            && b > 0.0
            && r * c + b > 1.0
            && b + c < 1.0
            && b * b + c * c < 0.5;
        if !ok {
            return Err(Error::InvalidInput(format!(
                "parameters need c > b > 0, sqrt(n) c + b > 1, b + c < 1, b^2 + c^2 < 1/2; got n = {}, b = {b}, c = {c}",
                self.n
            )));
        }
        Ok(())
    }

    /// `|1 - alpha| + alpha c`
    pub fn gamma_tilde(&self, alpha: f64) -> f64 {
        (1.0 - alpha).abs() + alpha * self.c
    }

    /// `alpha b`
    pub fn beta_tilde(&self, alpha: f64) -> f64 {
        alpha * self.b
    }

    pub fn gamma(&self, alpha: f64) -> f64 {
        2.0 * self.gamma_tilde(alpha).powi(2)
    }

    pub fn beta(&self, alpha: f64) -> f64 {
        2.0 * self.beta_tilde(alpha).powi(2)
    }

    pub fn sum(&self, alpha: f64) -> f64 {
        self.gamma(alpha) + self.beta(alpha)
    }

    /// Distances from 1 to the two ends of `{alpha : gamma + beta < 1}`.
    pub fn window_half_widths(&self) -> (f64, f64) {
        let f = |a: f64| self.sum(a) - 1.0;
        let bisect = |mut lo: f64, mut hi: f64| {
            // f(lo) and f(hi) have opposite signs
            let sign_lo = f(lo) > 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if (f(mid) > 0.0) == sign_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let left = bisect(0.0, 1.0);
        let mut hi = 2.0;
        while f(hi) <= 0.0 {
            hi *= 2.0;
        }
        let right = bisect(1.0, hi);
        (1.0 - left, right - 1.0)
    }

    /// `Z_0`: `sgn(1 - alpha)` at `(1,1)`, `t` at `(1,2)` and `(2,1)`, zero elsewhere.
    pub fn outside_witness(&self, alpha: f64) -> (Vec<f64>, f64) {
        let t = (0.5 * (self.gamma(alpha) / self.beta(alpha) - 1.0)).sqrt();
        let n = self.n;
        let mut z = vec![0.0; n * n];
        z[0] = (1.0 - alpha).signum();
        z[1] = t;
        z[n] = t;
        (z, t)
    }

    /// `Z+` (for `alpha <= 1`) or `Z-`: `+-zeta` on the diagonal, 1 off it.
    pub fn inside_witness(&self, alpha: f64) -> Option<(Vec<f64>, f64)> {
        let n = self.n as f64;
        let (gt, bt) = (self.gamma_tilde(alpha), self.beta_tilde(alpha));
        let denom = n * gt * gt - (1.0 - bt).powi(2);
        if denom <= 0.0 {
            return None;
        }
        let zeta = (1.0 - bt) * (n - 1.0).sqrt() / denom.sqrt();
        let sign = if alpha <= 1.0 { 1.0 } else { -1.0 };
        let n = self.n;
        let z = (0..n * n)
            .map(|k| if k / n == k % n { sign * zeta } else { 1.0 })
            .collect();
        Some((z, zeta))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutsideWindowCheck {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub t: f64,
    /// `|Z0:I - alpha (F(Z0) - F(0))|^2`
    pub lhs: f64,
    /// `gamma |Z0:I|^2 + beta |Z0|^2`
    pub rhs: f64,
    pub relative_gap: f64,
    /// Sampled check with `beta(alpha)` and `gamma` just below `1 - beta(alpha)`,
    /// with `Z0` among the probes.
    pub reduced_pair: (f64, f64),
    pub reduced_violation: KViolation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InsideWindowCheck {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub sampled: KViolation,
    pub zeta: Option<f64>,
    /// `| |Z:I - alpha (F(Z) - F(0))| - |Z| | / |Z|`
    pub equality_error: Option<f64>,
    /// `Pi(alpha) / ((1 - beta~)^2 |Z|^2)`
    pub pi_relative: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example3Report {
    pub params: Example3Params,
    pub sum_at_one: f64,
    pub alpha0_below: f64,
    pub alpha0_above: f64,
    /// `min(alpha0_below, alpha0_above)`: the symmetric window inside the true one.
    pub alpha0: f64,
    pub window: (f64, f64),
    pub inside: Vec<InsideWindowCheck>,
    pub outside: Vec<OutsideWindowCheck>,
}

fn scalar_operator(p: &Example3Params) -> Result<(BoundNonlinearity, SymTensor4)> {
    let a = SymTensor4::identity(p.n, 1);
    let grid = GridSpec::new(p.n, 1, 4, 1.0)?;
    let op = NonlinearitySpec::linear(a.clone())
        .with_perturbation(Perturbation::NormCombo { b: p.b, c: p.c })
        .bind(&grid)?;
    Ok((op, a))
}

fn residual(op: &BoundNonlinearity, z: &[f64], alpha: f64) -> Result<f64> {
    let n = op.spec().dim();
    let tr: f64 = (0..n).map(|i| z[i * n + i]).sum();
    let fz = op.evaluate(0, z)?[0];
    Ok(tr - alpha * fz)
}

pub fn example3_analysis(
    params: Example3Params,
    alphas: &[f64],
    sampler: &SamplerConfig,
) -> Result<Example3Report> {
    params.validate()?;
    let (op, a) = scalar_operator(&params)?;
    let (below, above) = params.window_half_widths();
    let window = (1.0 - below, 1.0 + above);
    let mut inside = Vec::new();
    let mut outside = Vec::new();
    for &alpha in alphas {
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
        }
        let (gamma, beta) = (params.gamma(alpha), params.beta(alpha));
        if alpha > window.0 && alpha < window.1 {
            let sampled =
                verify_k_condition(&op, &a, &Alpha::constant(alpha), beta, gamma, sampler)?;
            let (zeta, eq, pi) = match params.inside_witness(alpha) {
                Some((z, zeta)) => {
                    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let r = residual(&op, &z, alpha)?;
                    let n = params.n as f64;
                    let bt = params.beta_tilde(alpha);
                    let gt = params.gamma_tilde(alpha);
                    let ztr = n * zeta;
                    let pi = (1.0 - bt).powi(2) * norm * norm - gt * gt * ztr * ztr;
                    (
                        Some(zeta),
                        Some((r.abs() - norm).abs() / norm),
                        Some(pi / ((1.0 - bt).powi(2) * norm * norm)),
                    )
                }
                None => (None, None, None),
            };
            inside.push(InsideWindowCheck {
                alpha,
                gamma,
                beta,
                sampled,
                zeta,
                equality_error: eq,
                pi_relative: pi,
            });
        } else {
            let (z0, t) = params.outside_witness(alpha);
            let n = params.n;
            let tr: f64 = (0..n).map(|i| z0[i * n + i]).sum();
            let z2: f64 = z0.iter().map(|v| v * v).sum();
            let lhs = residual(&op, &z0, alpha)?.powi(2);
            let rhs = gamma * tr * tr + beta * z2;
            let reduced = (beta, (1.0 - beta) * (1.0 - 1e-3));
            let probe = KProbe {
                point: 0,
                x: vec![0.0; n * n],
                z: z0,
            };
            let reduced_violation = verify_k_condition_with_probes(
                &op,
                &a,
                &Alpha::constant(alpha),
                reduced.0,
                reduced.1,
                sampler,
                &[probe],
            )?;
            outside.push(OutsideWindowCheck {
                alpha,
                gamma,
                beta,
                t,
                lhs,
                rhs,
                relative_gap: (lhs - rhs).abs() / rhs,
                reduced_pair: reduced,
                reduced_violation,
            });
        }
    }
    Ok(Example3Report {
        params,
        sum_at_one: params.sum(1.0),
        alpha0_below: below,
        alpha0_above: above,
        alpha0: below.min(above),
        window,
        inside,
        outside,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_triples_by_hand() {
        let a = SymTensor4::example2(8.0);
        let [p1, p2] = example2_probes();
        let t1 = ProbeTriple::compute(&a, &p1).unwrap();
        assert_eq!((t1.tensor_term, t1.trace_term, t1.norm_term), (4.0, 4.0, 2.0));
        assert_eq!(t1.constraint(), ProbeConstraint::Below(2.0));
        let t2 = ProbeTriple::compute(&a, &p2).unwrap();
        assert_eq!((t2.tensor_term, t2.trace_term, t2.norm_term), (-32.0, 4.0, 20.0));
        assert_eq!(t2.constraint(), ProbeConstraint::Above(2.0));
    }

    #[test]
    fn example2_rejects_small_m() {
        assert!(example2_analysis(7.5, 10, 0).is_err());
    }

    #[test]
    fn example3_parameter_checks() {
        Example3Params::default_for(9).validate().unwrap();
        assert!(Example3Params { n: 9, b: 0.4, c: 0.3 }.validate().is_err());
        assert!(Example3Params { n: 4, b: 0.1, c: 0.2 }.validate().is_err());
    }

    #[test]
    fn window_edges_solve_the_boundary_equation() {
        let p = Example3Params::default_for(9);
        let (lo, hi) = p.window_half_widths();
        assert!((p.sum(1.0 - lo) - 1.0).abs() < 1e-12);
        assert!((p.sum(1.0 + hi) - 1.0).abs() < 1e-12);
        assert!(lo > 0.0 && lo < 1.0 && hi > 0.0);
    }
}
