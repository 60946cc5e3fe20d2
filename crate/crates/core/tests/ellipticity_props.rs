use ellipsys::ellipticity::{
    def1_from_def2, def2_from_def1, example3_analysis, random_symmetric_hessian, verify_k_condition, Alpha,
    Example3Params, NonlinearitySpec, Perturbation, SamplerConfig, Weight,
};
use ellipsys::fields::GridSpec;
use ellipsys::tensor::SymTensor4;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn catalog() -> Vec<Perturbation> {
    vec![
        Perturbation::ScaledSine { eps: 0.4 },
        Perturbation::NormCombo { b: 0.1, c: 0.2 },
        Perturbation::Tabulated {
            knots: vec![-1.0, 0.0, 0.5, 2.0],
            values: vec![0.3, 0.0, 0.25, -0.05],
            lipschitz: 0.5,
        },
    ]
}

fn sampler(seed: u64, scale: f64) -> SamplerConfig {
    SamplerConfig {
        count: 600,
        seed,
        scales: vec![scale],
        ..SamplerConfig::default()
    }
}

#[test]
fn violation_is_scale_invariant_for_linear_operators() {
    let grid = GridSpec::new(2, 2, 4, 1.0).unwrap();
    for a in [SymTensor4::example2(8.0), SymTensor4::random_elliptic(2, 2, 9)] {
        let op = NonlinearitySpec::linear(a.scaled(1.3))
            .with_weight(Weight::Cosine {
                mean: 1.0,
                amplitude: 0.3,
            })
            .bind(&grid)
            .unwrap();
        let alpha = Alpha::constant(0.7);
        let base = verify_k_condition(&op, &a, &alpha, 0.2, 0.3, &sampler(5, 1.0)).unwrap();
        for s in [1e-2, 1e2] {
            let v = verify_k_condition(&op, &a, &alpha, 0.2, 0.3, &sampler(5, s)).unwrap();
            let tol = 1e-9 * base.worst_violation.abs().max(1.0);
            assert!(
                (v.worst_violation - base.worst_violation).abs() <= tol,
                "s = {s}: {} vs {}",
                v.worst_violation,
                base.worst_violation
            );
        }
    }
}

#[test]
fn sampled_lipschitz_ratio_within_declared_bound() {
    let grid = GridSpec::new(3, 2, 4, 1.0).unwrap();
    let a = SymTensor4::random_elliptic(3, 2, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for p in catalog() {
        let op = NonlinearitySpec::linear(a.clone())
            .with_weight(Weight::Cosine {
                mean: 1.0,
                amplitude: 0.6,
            })
            .with_perturbation(p.clone())
            .bind(&grid)
            .unwrap();
        let (_, wmax) = op.weight_bounds();
        let bound = p.lipschitz(3) * wmax + a.norm() * wmax + 1e-9;
        let mut worst = 0.0f64;
        for s in 0..2000 {
            let scale = [1e-2, 1.0, 1e2][s % 3];
            let x = random_symmetric_hessian(&mut rng, 2, 3, scale);
            let y = random_symmetric_hessian(&mut rng, 2, 3, scale);
            let pt = rng.random_range(0..grid.total_points());
            let (fx, fy) = (op.evaluate(pt, &x).unwrap(), op.evaluate(pt, &y).unwrap());
            let num: f64 = fx.iter().zip(&fy).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            let den: f64 = x.iter().zip(&y).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
        assert!(worst <= bound, "{p:?}: ratio {worst} above {bound}");
        assert!(op.lipschitz_bound() <= bound);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn conversion_round_trip(beta in 1e-4f64..0.9, frac in 0.01f64..0.99, m in 0.0f64..5.0, nu in 0.1f64..3.0) {
        let gamma = (1.0 - beta) * frac;
        let (lambda, kappa) = def1_from_def2(beta, gamma).unwrap();
        prop_assert!(lambda > kappa && kappa > 0.0);
        let back = def2_from_def1(lambda, kappa, m, 1.0, nu).unwrap();
        prop_assert!(back.anomaly.is_none(), "{:?}", back.anomaly);
        prop_assert!(back.beta > 0.0 && back.gamma > 0.0);
        prop_assert!(back.beta + back.gamma < 1.0);
    }

    #[test]
    fn example3_witness_violates_outside_window(side in any::<bool>(), depth in 0.01f64..0.99, n in 4usize..=12) {
        let p = Example3Params::default_for(n);
        let (below, above) = p.window_half_widths();
        let alpha = if side {
            (1.0 - below) * (1.0 - depth)
        } else {
            1.0 + above * (1.0 + 3.0 * depth)
        };
        prop_assume!(alpha > 0.0);
        let r = example3_analysis(p, &[alpha], &SamplerConfig { count: 50, ..SamplerConfig::default() }).unwrap();
        prop_assert_eq!(r.outside.len(), 1);
        let o = &r.outside[0];
        prop_assert!(o.lhs - o.rhs >= -1e-9 * o.rhs, "alpha {}: lhs {} rhs {}", alpha, o.lhs, o.rhs);
        prop_assert!(!o.reduced_violation.holds_on_samples);
    }
}

#[test]
fn window_sum_at_one() {
    let p = Example3Params::default_for(9);
    assert!((p.sum(1.0) - 2.0 * (1.0 / 9.0 + 1.0 / 169.0)).abs() <= 1e-12);
    assert!(p.sum(1.0) < 1.0);
    assert!(p.gamma_tilde(1.0) - p.c == 0.0);
}
