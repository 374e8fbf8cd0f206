//! Property tests for structural invariants.

use proptest::prelude::*;

use stein_hmm::hmm::{perturb, reconstruct, HmmSpec, PerturbationSet, StackSampler};
use stein_hmm::occupancy::occupancy_count;
use stein_hmm::stats;
use stein_hmm::{rng, voronoi};

fn arb_spec() -> impl Strategy<Value = HmmSpec> {
    // 2-state, 2-symbol models with rows bounded away from degeneracy.
    (0.05f64..0.95, 0.05f64..0.95, 0.05f64..0.95, 0.05f64..0.95, 0.05f64..0.95).prop_map(
        |(mu, p0, p1, q0, q1)| {
            HmmSpec::new(
                2,
                2,
                vec![mu, 1.0 - mu],
                vec![p0, 1.0 - p0, 1.0 - p1, p1],
                vec![q0, 1.0 - q0, 1.0 - q1, q1],
            )
            .unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbation_replaces_exactly_the_set(
        spec in arb_spec(),
        n in 2usize..12,
        seed in 0u64..1000,
        raw_indices in prop::collection::vec(0usize..23, 0..8),
    ) {
        let sampler = StackSampler::new(&spec);
        let mut stream = rng::stream(seed, "prop-perturb", 0);
        let stack = sampler.sample_stack(n, &mut stream);
        let fresh = sampler.sample_stack(n, &mut stream);
        let set = PerturbationSet::from_unsorted(
            raw_indices.into_iter().map(|i| i % stack.len()).collect(),
        );
        let out = perturb(&stack, &set, &fresh).unwrap();
        for i in 0..stack.len() {
            let expected = if set.contains(i) { fresh.entries()[i] } else { stack.entries()[i] };
            prop_assert_eq!(out.entries()[i], expected);
        }
    }

    #[test]
    fn reconstruction_is_local_before_the_consulted_step(
        spec in arb_spec(),
        n in 2usize..16,
        seed in 0u64..1000,
        index_choice in 0usize..31,
    ) {
        let sampler = StackSampler::new(&spec);
        let mut stream = rng::stream(seed, "prop-local", 0);
        let stack = sampler.sample_stack(n, &mut stream);
        let fresh = sampler.sample_stack(n, &mut stream);
        let index = index_choice % stack.len();
        let original = reconstruct(&stack);
        let changed = reconstruct(&stack.splice_one(index, &fresh));

        // Step at which the entry would be consulted, if ever.
        let consulted = if index == 0 {
            Some(0)
        } else {
            let step = (index - 1) / 2 + 1;
            (original.hidden[step - 1] == ((index - 1) % 2) as u32).then_some(step)
        };
        match consulted {
            None => {
                prop_assert_eq!(original, changed);
            }
            Some(j) => {
                prop_assert_eq!(&original.hidden[..j], &changed.hidden[..j]);
                prop_assert_eq!(&original.observed[..j], &changed.observed[..j]);
            }
        }
    }

    #[test]
    fn kolmogorov_invariant_under_affine_rescaling(
        samples in prop::collection::vec(-50.0f64..50.0, 2..60),
        scale in 0.01f64..100.0,
        shift in -100.0f64..100.0,
    ) {
        let mean = stats::mean(&samples);
        let sd = stats::unbiased_variance(&samples, mean).sqrt();
        prop_assume!(sd > 1e-9);
        let d1 = stats::empirical_kolmogorov(&samples, mean, sd).unwrap();
        let rescaled: Vec<f64> = samples.iter().map(|x| scale * x + shift).collect();
        let d2 = stats::empirical_kolmogorov(&rescaled, scale * mean + shift, scale * sd).unwrap();
        prop_assert!((d1 - d2).abs() < 1e-9, "{} vs {}", d1, d2);
    }

    #[test]
    fn tail_curve_is_non_increasing(
        samples in prop::collection::vec(0.0f64..20.0, 1..80),
        start in 0.0f64..5.0,
        step in 0.1f64..3.0,
    ) {
        let thresholds: Vec<f64> = (0..6).map(|k| start + step * k as f64).collect();
        let curve = stats::tail_curve(&samples, &thresholds).unwrap();
        for pair in curve.windows(2) {
            prop_assert!(pair[1].exceedance <= pair[0].exceedance);
        }
    }

    #[test]
    fn central_moment_two_is_biased_variance(
        samples in prop::collection::vec(-100.0f64..100.0, 2..50),
    ) {
        let n = samples.len() as f64;
        let m2 = stats::central_moment(&samples, 2.0).unwrap();
        let var = stats::unbiased_variance(&samples, stats::mean(&samples));
        prop_assert!((m2 - var * (n - 1.0) / n).abs() <= 1e-9 * (1.0 + var));
    }

    #[test]
    fn occupancy_count_within_bounds(
        symbols in prop::collection::vec(0u32..12, 1..60),
    ) {
        let letters = 12usize;
        let w = occupancy_count(&symbols, letters).unwrap() as i64;
        let n = symbols.len() as i64;
        prop_assert!(w >= (letters as i64 - n).max(0));
        prop_assert!(w < letters as i64);
    }

    #[test]
    fn voronoi_exact_1d_is_a_volume(
        nuclei in prop::collection::vec(0.0f64..1.0, 1..30),
        lo in 0.0f64..0.6,
        width in 0.0f64..0.4,
    ) {
        let region = voronoi::RegionPredicate::interval(lo, lo + width);
        let phi = voronoi::voronoi_volume_exact_1d(&nuclei, &region).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&phi));
        // The full interval always has volume exactly 1.
        let full = voronoi::RegionPredicate::interval(0.0, 1.0);
        let one = voronoi::voronoi_volume_exact_1d(&nuclei, &full).unwrap();
        prop_assert!((one - 1.0).abs() < 1e-12);
    }
}
