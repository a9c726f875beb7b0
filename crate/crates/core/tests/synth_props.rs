use proptest::prelude::*;

use muqar_core::synth::{generate_world, WorldSpec};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// With β = 0 features carry no signal: the oracle mean ignores them.
    #[test]
    fn zero_beta_makes_features_irrelevant(seed in 0u64..1000, week in 0usize..104, shift in -3.0f64..3.0) {
        let mut spec = WorldSpec::new(seed);
        spec.beta = 0.0;
        let w = generate_world(&spec).unwrap();
        let (garments, _) = w.sample_garments(5, seed);
        for g in garments {
            let moved: Vec<f64> = g.features.iter().map(|v| v + shift).collect();
            let a = w.oracle_mean(&g.labels, &g.features, week, None).unwrap();
            let b = w.oracle_mean(&g.labels, &moved, week, None).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    /// With flat, noiseless trends time carries no signal: the oracle mean
    /// is the same in every week.
    #[test]
    fn flat_trends_make_time_irrelevant(seed in 0u64..1000, w1 in 0usize..104, w2 in 0usize..104) {
        let mut spec = WorldSpec::new(seed);
        for t in &mut spec.trends {
            t.amplitude = 0.0;
            t.drift = 0.0;
            t.sigma = 0.0;
        }
        let w = generate_world(&spec).unwrap();
        let (garments, _) = w.sample_garments(5, seed);
        for g in garments {
            let a = w.oracle_mean(&g.labels, &g.features, w1, Some(3)).unwrap();
            let b = w.oracle_mean(&g.labels, &g.features, w2, Some(3)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn same_spec_same_records(seed in 0u64..1000) {
        let mut spec = WorldSpec::new(seed);
        spec.garments = 20;
        let a = generate_world(&spec).unwrap().sample_garments(20, seed).1;
        let b = generate_world(&spec).unwrap().sample_garments(20, seed).1;
        prop_assert_eq!(a, b);
    }
}
