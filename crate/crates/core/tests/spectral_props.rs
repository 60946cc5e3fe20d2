use std::f64::consts::PI;

use ellipsys::fields::io::{read_binary, write_binary};
use ellipsys::fields::{random_band_limited, spectral_hessian, GridSpec, VectorField};
use ellipsys::linear::{apply_operator, LinearSolver, Regularization};
use ellipsys::tensor::{SearchConfig, SymTensor4};
use proptest::prelude::*;
use rustfft::num_complex::Complex64;

fn tensors() -> Vec<SymTensor4> {
    vec![
        SymTensor4::identity(2, 2),
        SymTensor4::example2(8.0),
        SymTensor4::random_elliptic(2, 2, 1),
        SymTensor4::random_elliptic(2, 2, 2),
    ]
}

fn frequency(grid: &GridSpec, p: usize) -> (Vec<i64>, Vec<f64>) {
    let k = grid.wavenumber(p);
    let z = k.iter().map(|c| *c as f64 / grid.period()).collect();
    (k, z)
}

/// `c_a(k)` for every component at flat index `p`.
fn coefs_at(f: &VectorField, p: usize) -> Vec<Complex64> {
    let pts = f.grid().total_points();
    let c = f.spectral().unwrap();
    (0..f.grid().components()).map(|a| c[a * pts + p]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn plancherel(seed in any::<u64>(), band in 1usize..8, period in 0.5f64..3.0) {
        let grid = GridSpec::new(2, 2, 32, period).unwrap();
        let u = random_band_limited(&grid, band, seed).unwrap();
        let phys = u.l2_norm().powi(2);
        let spec = u.to_spectral();
        let direct = period.powi(2) * spec.spectral().unwrap().iter().map(|c| c.norm_sqr()).sum::<f64>();
        prop_assert!((phys - direct).abs() <= 1e-11 * phys);
        prop_assert!((phys - spec.l2_norm().powi(2)).abs() <= 1e-11 * phys);
    }

    #[test]
    fn band_limited_fields_are_real_and_supported(seed in any::<u64>(), band in 0usize..4) {
        let grid = GridSpec::new(2, 3, 16, 1.0).unwrap();
        let u = random_band_limited(&grid, band, seed).unwrap();
        let s = u.to_spectral();
        prop_assert!(s.conjugate_symmetry_defect().unwrap() <= 1e-12);
        let pts = grid.total_points();
        let c = s.spectral().unwrap();
        let scale = c.iter().fold(0.0f64, |m, v| m.max(v.norm())).max(1e-300);
        for a in 0..3 {
            for p in 0..pts {
                let k = grid.wavenumber(p);
                if k.iter().any(|x| x.unsigned_abs() as usize > band) || k.iter().all(|x| *x == 0) {
                    prop_assert!(c[a * pts + p].norm() <= 1e-12 * scale, "mode {:?}", k);
                }
            }
        }
        if band == 0 {
            prop_assert!(u.physical().unwrap().iter().all(|v| *v == 0.0));
        }
        prop_assert_eq!(u, random_band_limited(&grid, band, seed).unwrap());
    }

    #[test]
    fn hessian_is_symmetric_and_mean_free(seed in any::<u64>()) {
        let grid = GridSpec::new(3, 2, 8, 1.0).unwrap();
        let u = random_band_limited(&grid, 2, seed).unwrap();
        let h = spectral_hessian(&u);
        prop_assert_eq!(h.symmetry_defect(), 0.0);
        let norm = h.l2_norm();
        for m in h.entry_means() {
            prop_assert!(m.abs() <= 1e-13 * norm);
        }
    }

    #[test]
    fn linear_solve_is_left_inverse(seed in any::<u64>(), which in 0usize..4, n in 2usize..=3) {
        let a = match which {
            0 => SymTensor4::identity(n, 2),
            1 => SymTensor4::example2_in_dim(8.0, n),
            s => SymTensor4::random_elliptic(n, 2, s as u64),
        };
        let grid = GridSpec::new(n, 2, 16, 1.0).unwrap();
        let u = random_band_limited(&grid, 4, seed).unwrap();
        let f = apply_operator(&a, &u).unwrap();
        let res = LinearSolver::new(&a, &grid, Regularization::Exact).unwrap().solve(&f).unwrap();
        let err = res.u.sub(&u).unwrap().l2_norm();
        prop_assert!(err <= 1e-10 * u.l2_norm(), "relative error {}", err / u.l2_norm());
    }

    #[test]
    fn binary_round_trip(seed in any::<u64>(), dim in 1usize..=3, comps in 1usize..=3, spectral in any::<bool>()) {
        let grid = GridSpec::new(dim, comps, 8, 1.5).unwrap();
        let mut u = random_band_limited(&grid, 2, seed).unwrap();
        if spectral {
            u = u.to_spectral();
        }
        let mut buf = Vec::new();
        write_binary(&u, &mut buf).unwrap();
        prop_assert_eq!(read_binary(buf.as_slice()).unwrap(), u);
    }
}

#[test]
fn frequency_form_is_real_and_bounded_below() {
    let grid = GridSpec::new(2, 2, 32, 1.0).unwrap();
    for a in tensors() {
        let nu = a.ellipticity_constant(&SearchConfig::default()).nu;
        for seed in 0..10 {
            let u = random_band_limited(&grid, 8, seed).unwrap().to_spectral();
            for p in 0..grid.total_points() {
                let (k, z) = frequency(&grid, p);
                if k.iter().all(|c| *c == 0) || grid.is_nyquist(&k) {
                    continue;
                }
                let xi = coefs_at(&u, p);
                let w = xi.iter().map(|c| c.norm_sqr()).sum::<f64>() * z.iter().map(|v| v * v).sum::<f64>();
                let form = a.hermitian_form_complex(&xi, &z).unwrap() * (4.0 * PI * PI);
                assert!(form.im.abs() <= 1e-10 * form.norm().max(1e-300));
                assert!(form.re >= nu * 4.0 * PI * PI * w - 1e-9);
            }
        }
    }
}

#[test]
fn solved_pair_satisfies_frequency_identity() {
    let grid = GridSpec::new(2, 2, 32, 1.0).unwrap();
    for a in tensors() {
        let nu = a.ellipticity_constant(&SearchConfig::default()).nu;
        for seed in 0..5 {
            let f = random_band_limited(&grid, 8, 100 + seed).unwrap();
            let res = LinearSolver::new(&a, &grid, Regularization::Exact).unwrap().solve(&f).unwrap();
            let (fs, us) = (f.to_spectral(), res.u.to_spectral());
            let peak = |v: &VectorField| v.spectral().unwrap().iter().fold(0.0f64, |m, c| m.max(c.norm()));
            let global = peak(&fs) * peak(&us);
            for p in 0..grid.total_points() {
                let (k, _) = frequency(&grid, p);
                if k.iter().all(|c| *c == 0) {
                    continue;
                }
                let q: Complex64 = coefs_at(&fs, p)
                    .iter()
                    .zip(coefs_at(&us, p))
                    .map(|(fk, uk)| -fk * uk.conj())
                    .sum();
                let scale = q.norm().max(1e-12 * global);
                assert!(q.im.abs() <= 1e-9 * scale && q.re >= -1e-9 * scale, "k = {k:?}: {q}");
            }
            let d2u = spectral_hessian(&res.u).l2_norm();
            assert!(d2u <= f.l2_norm() / nu * (1.0 + 1e-12));
            assert!(res.diagnostics.hessian_ratio <= 1.0 / nu * (1.0 + 1e-12));
        }
    }
}

#[test]
fn regularised_solutions_satisfy_multiplier_identity() {
    let grid = GridSpec::new(2, 2, 32, 1.0).unwrap();
    let f = random_band_limited(&grid, 8, 3).unwrap();
    for a in tensors() {
        for eps in [1e-1, 1e-3, 1e-6] {
            let reg = Regularization::Epsilon { eps };
            let res = LinearSolver::new(&a, &grid, reg).unwrap().solve(&f).unwrap();
            assert!(res.diagnostics.multiplier_identity_error <= 1e-12);
            let lhs = apply_operator(&a, &res.u).unwrap().to_spectral();
            let fs = f.to_spectral();
            let scale = fs.spectral().unwrap().iter().fold(0.0f64, |m, c| m.max(c.norm()));
            for p in 0..grid.total_points() {
                let (k, z) = frequency(&grid, p);
                if k.iter().all(|c| *c == 0) || grid.is_nyquist(&k) {
                    continue;
                }
                let z2: f64 = z.iter().map(|v| v * v).sum();
                let m = reg.h(z2) * z2;
                for (l, r) in coefs_at(&lhs, p).iter().zip(coefs_at(&fs, p)) {
                    assert!((l - r * m).norm() <= 1e-12 * scale);
                }
            }
        }
    }
}
