use ellipsys::tensor::{SearchConfig, SymTensor4};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

fn gaussian(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

fn shapes() -> impl Strategy<Value = (usize, usize, u64)> {
    (1usize..=3, 1usize..=3, any::<u64>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bilinear_form_is_symmetric((n, comps, seed) in shapes()) {
        let a = SymTensor4::random_symmetric(n, comps, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let p = gaussian(&mut rng, comps * n);
        let q = gaussian(&mut rng, comps * n);
        let pq = a.bilinear_form(&p, &q).unwrap();
        let qp = a.bilinear_form(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() <= 1e-12 * pq.abs().max(qp.abs()).max(1e-300));
    }

    #[test]
    fn symbol_inverse_is_an_inverse((n, comps, seed) in shapes()) {
        let a = SymTensor4::random_elliptic(n, comps, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let z = gaussian(&mut rng, n);
        let s = a.symbol_matrix(&z).unwrap();
        let inv = a.symbol_inverse(&z).unwrap();
        let prod = &inv * &s.values;
        let err = (prod - DMatrix::<f64>::identity(comps, comps)).abs().max();
        prop_assert!(err <= 1e-10, "|S^-1 S - I| = {}", err);
    }

    #[test]
    fn contraction_is_linear((n, comps, seed) in shapes(), s in -10.0f64..10.0) {
        let a = SymTensor4::random_symmetric(n, comps, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let mut z = gaussian(&mut rng, comps * n * n);
        for c in 0..comps {
            for i in 0..n {
                for j in 0..i {
                    z[(c * n + i) * n + j] = z[(c * n + j) * n + i];
                }
            }
        }
        let base = a.contract_hessian(&z).unwrap();
        let scaled: Vec<f64> = z.iter().map(|v| s * v).collect();
        let out = a.contract_hessian(&scaled).unwrap();
        for (x, y) in base.iter().zip(&out) {
            prop_assert!((s * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn text_format_round_trips((n, comps, seed) in shapes()) {
        let a = SymTensor4::random_symmetric(n, comps, seed);
        let back = SymTensor4::from_text(&a.to_text()).unwrap();
        prop_assert_eq!(a, back);
    }
}

#[test]
fn hermitian_form_is_real() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for s in 0..1000u64 {
        let (n, comps) = (1 + (s % 3) as usize, 1 + ((s / 3) % 3) as usize);
        let a = SymTensor4::random_symmetric(n, comps, s);
        let xi: Vec<Complex64> = (0..comps)
            .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
            .collect();
        let d = gaussian(&mut rng, n);
        let h = a.hermitian_form_complex(&xi, &d).unwrap();
        let scale = a.norm() * xi.iter().map(|c| c.norm_sqr()).sum::<f64>() * d.iter().map(|v| v * v).sum::<f64>();
        assert!(h.im.abs() <= 1e-12 * scale, "sample {s}: Im = {:e}", h.im);
    }
}

#[test]
fn hermitian_form_bounded_below_by_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let tensors = [
        SymTensor4::identity(2, 2),
        SymTensor4::example2(8.0),
        SymTensor4::random_elliptic(3, 2, 4),
        SymTensor4::random_elliptic(2, 3, 5),
    ];
    for a in &tensors {
        let nu = a.ellipticity_constant(&SearchConfig::default()).nu;
        assert!(nu > 0.0);
        for _ in 0..1000 {
            let xi: Vec<Complex64> = (0..a.components())
                .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
                .collect();
            let d = gaussian(&mut rng, a.dim());
            let w = xi.iter().map(|c| c.norm_sqr()).sum::<f64>() * d.iter().map(|v| v * v).sum::<f64>();
            let h = a.hermitian_form(&xi, &d).unwrap();
            assert!(h >= (nu - 1e-9) * w, "form {h} below {nu} * {w}");
        }
    }
}

#[test]
fn symbol_eigenvalues_bounded_by_constant_with_attained_witness() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    for seed in 0..6u64 {
        let a = SymTensor4::random_elliptic(2 + (seed % 2) as usize, 2, seed);
        let c = a.ellipticity_constant(&SearchConfig::default());
        for _ in 0..500 {
            let d = gaussian(&mut rng, a.dim());
            let (lmin, _) = a.symbol_matrix(&d).unwrap().min_eigenpair();
            assert!(lmin >= c.nu - 1e-9, "lambda_min {lmin} < nu {}", c.nu);
        }
        let (at_witness, _) = a.symbol_matrix(&c.witness_a).unwrap().min_eigenpair();
        assert!((at_witness - c.nu).abs() <= 1e-9 * (1.0 + c.nu.abs()));
    }
}

#[test]
fn zero_tensor_is_not_rank_one_positive() {
    let z = SymTensor4::identity(2, 2).scaled(0.0);
    let report = z.check_rank_one_positive(1e-12, &SearchConfig::default());
    assert!(!report.positive);
    assert!(SymTensor4::identity(3, 2)
        .check_rank_one_positive(1e-12, &SearchConfig::default())
        .positive);
}
