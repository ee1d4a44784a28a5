use anonpriv::adversary::{iid_band_width, markov_band_width};
use anonpriv::mechanisms::{
    anonymize, deanonymize, draw_noise_levels_with_cap, obfuscate, obfuscated_pmf, NoiseSchedule, ObservationSchedule,
    Permutation,
};
use anonpriv::privacy_metrics::{assignment_posterior, binary_entropy, dp_epsilon};
use anonpriv::rng::derive_seed;
use anonpriv::source_models::{generate_traces, sample_iid_profiles, DensityConfig, Stage, TraceMatrix};
use proptest::prelude::*;

fn symbol_matrix(n: usize, m: usize, r: usize, seed: u64) -> TraceMatrix {
    let cols = (0..n)
        .map(|u| {
            (0..m)
                .map(|t| (derive_seed(seed, &[u as u64, t as u64]) % r as u64) as u8)
                .collect()
        })
        .collect();
    TraceMatrix::from_symbol_columns(Stage::Z, r, cols).unwrap()
}

fn sorted_columns(y: &TraceMatrix) -> Vec<Vec<u8>> {
    let mut cols: Vec<Vec<u8>> = y.symbol_columns().map(<[u8]>::to_vec).collect();
    cols.sort();
    cols
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn anonymization_preserves_the_column_multiset(n in 1usize..12, m in 1usize..20, r in 2usize..5, seed: u64) {
        let z = symbol_matrix(n, m, r, seed);
        let perm = Permutation::random(n, seed ^ 1);
        let y = anonymize(&z, &perm).unwrap();
        prop_assert_eq!(y.stage(), Stage::Y);
        prop_assert_eq!(sorted_columns(&y), sorted_columns(&z));
        for u in 0..n {
            prop_assert_eq!(y.symbol_column(perm.pseudonym(u)), z.symbol_column(u));
        }
        let back = deanonymize(&y, &perm).unwrap();
        prop_assert_eq!(sorted_columns(&back), sorted_columns(&z));
        for u in 0..n {
            prop_assert_eq!(back.symbol_column(u), z.symbol_column(u));
        }
    }

    #[test]
    fn permutations_are_bijections(n in 1usize..40, seed: u64) {
        let perm = Permutation::random(n, seed);
        let mut seen = perm.forward().to_vec();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        let inv = perm.inverse();
        for u in 0..n {
            prop_assert_eq!(perm.user(perm.pseudonym(u)), u);
            prop_assert_eq!(inv.pseudonym(perm.pseudonym(u)), u);
        }
    }

    #[test]
    fn band_width_shrinks_with_n(n in 2usize..100_000, r in 2usize..6, d in 1usize..6, alpha in 0.01f64..2.0) {
        prop_assert!(iid_band_width(n + 1, r, alpha) < iid_band_width(n, r, alpha));
        prop_assert!(markov_band_width(n + 1, d, alpha) < markov_band_width(n, d, alpha));
        prop_assert!(iid_band_width(n, r, alpha + 0.1) < iid_band_width(n, r, alpha));
        prop_assert!(iid_band_width(n, r, alpha) > 0.0);
    }

    #[test]
    fn dp_epsilon_vanishes_at_the_prior(p1 in 0.001f64..0.999) {
        let e = dp_epsilon([1.0 - p1, p1], p1).unwrap();
        prop_assert!(e.epsilon.abs() < 1e-9);
        prop_assert!(!e.infinite);
    }

    #[test]
    fn dp_epsilon_is_symmetric_in_the_labels(p1 in 0.01f64..0.99, q in 0.01f64..0.99) {
        let a = dp_epsilon([1.0 - q, q], p1).unwrap().epsilon;
        let b = dp_epsilon([q, 1.0 - q], 1.0 - p1).unwrap().epsilon;
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a >= 0.0);
    }

    #[test]
    fn obfuscated_pmf_stays_a_distribution(raw in prop::collection::vec(0.01f64..1.0, 2..6), r_u in 0.0f64..1.0) {
        let total: f64 = raw.iter().sum();
        let pmf: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let out = obfuscated_pmf(&pmf, r_u);
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(out.iter().all(|&x| x >= 0.0));
        // Uniform is the fixed point of the symmetric channel.
        let k = pmf.len();
        let uniform = vec![1.0 / k as f64; k];
        for x in obfuscated_pmf(&uniform, r_u) {
            prop_assert!((x - 1.0 / k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn assignment_posterior_is_a_distribution(
        n in 1usize..6,
        seed: u64,
    ) {
        let log_l: Vec<Vec<f64>> = (0..n)
            .map(|u| (0..n).map(|j| -((derive_seed(seed, &[u as u64, j as u64]) % 1000) as f64) / 10.0).collect())
            .collect();
        let post = assignment_posterior(&log_l);
        prop_assert_eq!(post.len(), n);
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(post.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn schedules_are_monotone(c in 0.1f64..100.0, eta in 0.0f64..2.5, cp in 0.01f64..1.0, gamma in 0.0f64..2.0, n in 1usize..5000) {
        let obs = ObservationSchedule::new(c, eta).unwrap();
        prop_assert!(obs.samples(n + 1) >= obs.samples(n));
        prop_assert!(obs.samples(n) >= 1);
        let noise = NoiseSchedule::new(cp, gamma).unwrap();
        let (a, b) = (noise.cap(n).unwrap().value, noise.cap(n + 1).unwrap().value);
        prop_assert!(b <= a && a <= 1.0 && b > 0.0);
    }

    #[test]
    fn binary_entropy_is_symmetric_and_bounded(p in 0.0f64..=1.0) {
        let h = binary_entropy(p);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&h));
        prop_assert!((h - binary_entropy(1.0 - p)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_obfuscation_is_identity(n in 1usize..5, m in 1usize..50, seed: u64) {
        let pop = sample_iid_profiles(n, 3, &DensityConfig::uniform(), seed).unwrap();
        let x = generate_traces(&pop, m, seed).unwrap();
        let mut noise = draw_noise_levels_with_cap(n, 1.0, seed).unwrap();
        noise.levels.iter_mut().for_each(|l| *l = 0.0);
        let z = obfuscate(&x, &noise, 3, seed).unwrap();
        for u in 0..n {
            prop_assert_eq!(z.symbol_column(u), x.symbol_column(u));
        }
    }
}
