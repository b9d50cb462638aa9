use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use omp_recovery::guarantees::{delta_threshold, thm_l2_min_coeff, thm_linf_min_coeff};
use omp_recovery::omp::{correlations, omp_run, trace_invariants, StoppingRule};
use omp_recovery::sensing::{
    coherence_rip_bound, gen_gaussian_matrix, least_squares, mutual_incoherence, rip_exact,
    SenseMatrix, DEFAULT_RIP_BUDGET,
};

fn gaussian_vector(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

fn small_matrix() -> impl Strategy<Value = (SenseMatrix, u64)> {
    (3usize..=8, 0usize..=4, any::<u64>())
        .prop_map(|(m, extra, seed)| (gen_gaussian_matrix(m, m + extra, seed).unwrap(), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rip_constant_is_monotone_and_coherence_bounded((a, _) in small_matrix()) {
        let mu = mutual_incoherence(&a);
        let top = a.n().min(4);
        let deltas: Vec<f64> = (1..=top).map(|k| rip_exact(&a, k, DEFAULT_RIP_BUDGET).unwrap().delta).collect();
        prop_assert!(deltas[0] <= 1e-12);
        prop_assert!((deltas[1] - mu.mu).abs() <= 1e-10);
        for k in 1..deltas.len() {
            prop_assert!(deltas[k] >= deltas[k - 1]);
        }
        for (k, d) in deltas.iter().enumerate() {
            prop_assert!(*d <= coherence_rip_bound(mu, k + 1));
        }
    }

    #[test]
    fn rip_constant_bounds_every_sparse_vector((a, seed) in small_matrix(), k in 1usize..=3) {
        let cert = rip_exact(&a, k, DEFAULT_RIP_BUDGET).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        for _ in 0..20 {
            let mut support: Vec<usize> = rand::seq::index::sample(&mut rng, a.n(), k).into_vec();
            support.sort_unstable();
            let mut x = DVector::zeros(a.n());
            for &i in &support {
                x[i] = rng.sample(StandardNormal);
            }
            let ratio = a.apply(&x).norm_squared() / x.norm_squared();
            prop_assert!(ratio <= 1.0 + cert.delta + 1e-10);
            prop_assert!(ratio >= 1.0 - cert.delta - 1e-10);
        }
        // The extremal subset attains the constant.
        let g = a.columns(&cert.extremal_subset);
        let eig = (g.transpose() * &g).symmetric_eigenvalues();
        let attained = eig.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
        prop_assert!((attained - cert.delta).abs() <= 1e-10);
    }

    #[test]
    fn least_squares_residual_is_orthogonal((a, seed) in small_matrix(), k in 1usize..=3) {
        let y = gaussian_vector(a.m(), seed);
        let support: Vec<usize> = (0..k.min(a.m())).collect();
        let coeffs = least_squares(&a, &support, &y).unwrap();
        let r = &y - a.columns(&support) * &coeffs;
        let c = a.columns(&support).transpose() * r;
        prop_assert!(c.amax() <= 1e-9 * y.norm().max(1.0));
    }

    #[test]
    fn omp_trace_invariants((a, seed) in small_matrix()) {
        let y = gaussian_vector(a.m(), seed.wrapping_add(1));
        let trace = omp_run(&a, &y, StoppingRule::FixedIterations { k: a.m() }, a.m()).unwrap();
        let inv = trace_invariants(&a, &y, &trace);
        prop_assert!(inv.hold(y.norm()));
        let order = trace.selection_order();
        let mut sorted = order.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), order.len());
        for w in trace.iterations.windows(2) {
            prop_assert!(w[1].residual_l2 <= w[0].residual_l2 + 1e-10);
        }
        // Final residual is orthogonal to every selected column.
        let x = DVector::from_vec(trace.estimate.clone());
        let r = &y - a.apply(&x);
        let c = correlations(&a, &r).unwrap();
        for &i in &order {
            prop_assert!(c.0[i].abs() <= 1e-8 * y.norm().max(1.0));
        }
    }

    #[test]
    fn omp_is_scale_equivariant((a, seed) in small_matrix(), scale in 0.01f64..100.0) {
        let y = gaussian_vector(a.m(), seed.wrapping_add(2));
        let k = a.m().min(3);
        let base = omp_run(&a, &y, StoppingRule::FixedIterations { k }, a.m()).unwrap();
        let scaled = omp_run(&a, &(&y * scale), StoppingRule::FixedIterations { k }, a.m()).unwrap();
        prop_assert_eq!(base.selection_order(), scaled.selection_order());
        for (u, v) in base.estimate.iter().zip(&scaled.estimate) {
            prop_assert!((u * scale - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn stopping_rules_share_a_selection_path((a, seed) in small_matrix()) {
        let y = gaussian_vector(a.m(), seed.wrapping_add(3));
        let full = omp_run(&a, &y, StoppingRule::FixedIterations { k: a.m() }, a.m()).unwrap().selection_order();
        let b2 = y.norm() * 0.3;
        let l2 = omp_run(&a, &y, StoppingRule::ResidualL2 { b2 }, a.m()).unwrap();
        prop_assert!(full.starts_with(&l2.selection_order()));
        prop_assert!(l2.final_residual_l2 <= b2 || l2.iterations.len() == a.m());
        let binf = a.adjoint_apply(&y).amax() * 0.3;
        let linf = omp_run(&a, &y, StoppingRule::CorrelationLInf { binf }, a.m()).unwrap();
        prop_assert!(full.starts_with(&linf.selection_order()));
    }

    #[test]
    fn thresholds_grow_with_delta_and_noise(k in 1usize..50, f1 in 0.0f64..0.99, f2 in 0.0f64..0.99, noise in 1e-6f64..10.0) {
        let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
        let t = delta_threshold(k);
        let (d_lo, d_hi) = (lo * t, hi * t);
        prop_assert!(thm_l2_min_coeff(d_lo, k, noise).unwrap() <= thm_l2_min_coeff(d_hi, k, noise).unwrap() * (1.0 + 1e-12));
        prop_assert!(thm_linf_min_coeff(d_lo, k, noise).unwrap() <= thm_linf_min_coeff(d_hi, k, noise).unwrap() * (1.0 + 1e-12));
        prop_assert!(thm_l2_min_coeff(d_lo, k, noise).unwrap() < thm_l2_min_coeff(d_lo, k, 2.0 * noise).unwrap());
    }
}

#[test]
fn gaussian_50_by_60_cannot_be_certified_at_order_3() {
    // delta_3 >= delta_2 = mu, and Gaussian 50x60 matrices have mu far above
    // the K = 2 threshold, so certification fails for every seed tried.
    let threshold = delta_threshold(2);
    for seed in 1..=10 {
        let a = gen_gaussian_matrix(50, 60, seed).unwrap();
        assert!(mutual_incoherence(&a).mu > threshold, "seed {seed}");
    }
    let a = gen_gaussian_matrix(50, 60, 1).unwrap();
    let cert = rip_exact(&a, 3, DEFAULT_RIP_BUDGET).unwrap();
    assert_eq!(cert.subsets_examined, 34_220);
    assert!(cert.delta >= mutual_incoherence(&a).mu - 1e-12);
    assert!(cert.delta > threshold);
}

#[test]
fn identity_columns_have_zero_constant() {
    let a = SenseMatrix::from_unit_columns(DMatrix::identity(5, 5)).unwrap();
    for k in 1..=5 {
        assert_eq!(rip_exact(&a, k, DEFAULT_RIP_BUDGET).unwrap().delta, 0.0);
    }
}
