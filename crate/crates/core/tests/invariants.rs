use erpf_core::factor::{cholesky_factor, ic_factor};
use erpf_core::mm::{parse_matrix, write_matrix_to, Symmetry};
use erpf_core::rpf::{compute_alpha, compute_alpha_bounds, compute_da, compute_dk};
use erpf_core::sparse::{dot, norm2};
use erpf_core::testing::{random_full_rank, random_sparse, random_spd, random_system, random_vec};
use erpf_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm2(&d) / norm2(b).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transpose_is_adjoint(seed in any::<u64>(), r in 1usize..40, c in 1usize..40, density in 0.05f64..0.6) {
        let mut g = rng(seed);
        let a = random_sparse(&mut g, r, c, density);
        let x = random_vec(&mut g, c);
        let y = random_vec(&mut g, r);
        let lhs = dot(&a.spmv(&x).unwrap(), &y);
        let rhs = dot(&x, &a.spmv_t(&y).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        prop_assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn matrix_market_round_trip(seed in any::<u64>(), r in 1usize..30, c in 1usize..30) {
        let mut g = rng(seed);
        let a = random_sparse(&mut g, r, c, 0.2);
        let mut buf = Vec::new();
        write_matrix_to(&mut buf, &a, Symmetry::General).unwrap();
        prop_assert_eq!(parse_matrix(std::str::from_utf8(&buf).unwrap()).unwrap(), a);
    }

    #[test]
    fn full_fill_ic_equals_cholesky(seed in any::<u64>(), n in 2usize..60) {
        let mut g = rng(seed);
        let m = random_spd(&mut g, n, 0.1);
        let b = random_vec(&mut g, n);
        let x_ic = ic_factor(&m, n).unwrap().apply(&b).unwrap();
        let x_ch = cholesky_factor(&m).unwrap().apply(&b).unwrap();
        prop_assert!(rel(&x_ic, &x_ch) <= 1e-9);
        let res: Vec<f64> = m.spmv(&x_ch).unwrap().iter().zip(&b).map(|(p, q)| p - q).collect();
        prop_assert!(norm2(&res) <= 1e-10 * norm2(&b));
    }

    #[test]
    fn alpha_scales_with_sqrt_gamma(seed in any::<u64>(), s in 1e-4f64..1e4) {
        let sys = random_system(seed, 20, 15, 6, false);
        let (_, d_a) = compute_da(sys.a(), sys.b()).unwrap();
        let d_k = compute_dk(sys.k(), sys.q()).unwrap();
        let a1 = compute_alpha(&d_k, &d_a, 1.0).unwrap();
        let a2 = compute_alpha(&d_k, &d_a, s).unwrap();
        prop_assert!((a2 / a1 - s.sqrt()).abs() <= 1e-12 * s.sqrt());
        let (k1, aa1) = compute_alpha_bounds(&d_k, &d_a, 1.0, 10.0, 10.0).unwrap();
        let (k2, aa2) = compute_alpha_bounds(&d_k, &d_a, s, 10.0, 10.0).unwrap();
        prop_assert_eq!(k1, k2);
        prop_assert!((aa2 / aa1 - s).abs() <= 1e-12 * s);
    }

    #[test]
    fn selected_variant_follows_bounds(alpha in 1e-6f64..1e6, ak in 1e-6f64..1e6, aa in 1e-6f64..1e6) {
        let v = select_variant(alpha, ak, aa);
        let expected = if alpha < aa {
            SelectedVariant::Erpf2ASide
        } else if alpha < ak {
            SelectedVariant::Erpf1KSide
        } else {
            SelectedVariant::Rpf
        };
        prop_assert_eq!(v, expected);
    }

    #[test]
    fn preconditioner_is_linear(seed in any::<u64>(), dt in prop::sample::select(vec![1e-4, 1.0, 1e4]),
                                variant in prop::sample::select(vec![Variant::Rpf, Variant::Erpf1, Variant::Erpf2, Variant::Erpf2Alt, Variant::Auto])) {
        let sys = random_system(seed, 30, 24, 8, true).with_time_step(1.0, dt).unwrap();
        let cfg = RpfConfig { variant, ..Default::default() };
        let op = rpf_setup(&sys, &cfg).unwrap();
        let mut g = rng(seed ^ 1);
        let n = sys.size();
        let x = random_vec(&mut g, n);
        let y = random_vec(&mut g, n);
        let comb: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 3.0 * a - 0.5 * b).collect();
        let (mx, my, mc) = (op.apply(&x), op.apply(&y), op.apply(&comb));
        let expect: Vec<f64> = mx.iter().zip(&my).map(|(a, b)| 3.0 * a - 0.5 * b).collect();
        prop_assert!(rel(&mc, &expect) <= 1e-9);
    }

    #[test]
    fn eigenvalues_stay_in_bound(seed in any::<u64>(), n in 10usize..50, np in 1usize..8, ratio in 1.0f64..1e3) {
        let mut g = rng(seed);
        let c = random_spd(&mut g, n, 0.1);
        let f = random_full_rank(&mut g, n, np.min(n), 0.2);
        let rep = augmented_spectrum_bound(&c, &f, ratio, 1.0).unwrap();
        prop_assert!(rep.max_violation <= 1e-8 * rep.bound_lambda1);
    }

    #[test]
    fn method1_error_contracts(seed in any::<u64>(), ratio in 1.5f64..100.0, n_in in 1usize..6) {
        let mut g = rng(seed);
        let c = random_spd(&mut g, 40, 0.1);
        let f = random_full_rank(&mut g, 40, 5, 0.2);
        let ctx = AugmentedBlockContext::new(c, f, ratio, 1.0, n_in).unwrap();
        let solver = cholesky_factor(ctx.c_hat_ell()).unwrap();
        let ctx = ctx.with_chat_ell_solver(solver).unwrap();
        let b = random_vec(&mut g, 40);
        let exact = cholesky_factor(ctx.c_hat()).unwrap().apply(&b).unwrap();
        let w = ctx.method1_apply(&b).unwrap();
        // error after n_in sweeps from zero, measured in the Ĉ_ℓ norm
        let e: Vec<f64> = w.iter().zip(&exact).map(|(a, x)| a - x).collect();
        let energy = |v: &[f64]| dot(v, &ctx.c_hat_ell().spmv(v).unwrap()).sqrt();
        let bound = (1.0 - 1.0 / ratio).powi(n_in as i32) * energy(&exact);
        prop_assert!(energy(&e) <= bound * (1.0 + 1e-8) + 1e-12);
    }
}
