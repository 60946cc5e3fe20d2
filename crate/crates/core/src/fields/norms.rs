//! Quadrature norms used by the a priori estimates.
//!
//! The critical Sobolev exponents `2* = 2n/(n-2)` and `2** = 2n/(n-4)` only
//! exist for `n >= 5`; below that the corresponding entries are `None`.

use serde::{Deserialize, Serialize};

use super::{spectral_gradient, spectral_hessian, VectorField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l2: f64,
    /// Discrete `L^{2*}` norm of `Du`.
    pub grad_l2star_surrogate: Option<f64>,
    /// Discrete `L^{2**}` norm of `u`.
    pub u_l2starstar_surrogate: Option<f64>,
    /// Hessian seminorm `||D^2 u||_{L2}`.
    pub w22star: f64,
    /// `||u||_{2**} + ||Du||_{2*} + ||D^2u||_2` when the exponents exist.
    pub full_norm: Option<f64>,
}

pub fn sobolev_exponent(n: usize) -> Option<f64> {
    (n > 2).then(|| 2.0 * n as f64 / (n as f64 - 2.0))
}

pub fn second_sobolev_exponent(n: usize) -> Option<f64> {
    (n > 4).then(|| 2.0 * n as f64 / (n as f64 - 4.0))
}

/// `(h^n sum_p |v_p|^q)^(1/q)` for pointwise magnitudes `v`.
pub fn lp_norm_pointwise(values: &[f64], cell_volume: f64, q: f64) -> f64 {
    let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    // scale first so large exponents do not overflow
    let sum: f64 = values.iter().map(|v| (v.abs() / max).powf(q)).sum();
    max * (cell_volume * sum).powf(1.0 / q)
}

pub(super) fn norm_report(u: &VectorField) -> NormReport {
    let grid = u.grid();
    let n = grid.dim();
    let h = spectral_hessian(u);
    let l2 = u.l2_norm();
    let w22star = h.l2_norm();
    let (grad, uu) = match (sobolev_exponent(n), second_sobolev_exponent(n)) {
        (Some(p1), Some(p2)) => {
            let pts = grid.total_points();
            let g = spectral_gradient(u);
            let mags: Vec<f64> = (0..pts)
                .map(|p| g.iter().skip(p).step_by(pts).map(|x| x * x).sum::<f64>().sqrt())
                .collect();
            let vol = grid.cell_volume();
            (
                Some(lp_norm_pointwise(&mags, vol, p1)),
                Some(lp_norm_pointwise(&u.pointwise_norms(), vol, p2)),
            )
        }
        _ => (None, None),
    };
    NormReport {
        l2,
        grad_l2star_surrogate: grad,
        u_l2starstar_surrogate: uu,
        w22star,
        full_norm: grad.zip(uu).map(|(g, v)| g + v + w22star),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_band_limited, GridSpec};

    #[test]
    fn exponents() {
        assert_eq!(sobolev_exponent(2), None);
        assert_eq!(sobolev_exponent(5), Some(10.0 / 3.0));
        assert_eq!(second_sobolev_exponent(4), None);
        assert_eq!(second_sobolev_exponent(5), Some(10.0));
    }

    #[test]
    fn lp_of_constant() {
        let v = vec![2.0; 16];
        assert!((lp_norm_pointwise(&v, 1.0 / 16.0, 3.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn plancherel_over_random_fields() {
        for seed in 0..100 {
            let g = GridSpec::new(2, 2, 8, 1.0 + 0.01 * seed as f64).unwrap();
            let u = random_band_limited(&g, 3, seed).unwrap();
            let phys = u.l2_norm().powi(2);
            let spec = u.forward_transform().unwrap().l2_norm().powi(2);
            assert!((phys - spec).abs() <= 1e-11 * phys, "seed {seed}");
        }
    }

    #[test]
    fn high_dimensional_report_is_populated() {
        let g = GridSpec::new(5, 1, 4, 1.0).unwrap();
        let u = random_band_limited(&g, 1, 3).unwrap();
        let r = u.norms();
        assert!(r.grad_l2star_surrogate.unwrap() > 0.0);
        assert!(r.u_l2starstar_surrogate.unwrap() > 0.0);
        assert!(r.full_norm.unwrap() > r.w22star);
    }
}
