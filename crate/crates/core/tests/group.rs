use proptest::prelude::*;
use wsfn_core::rng::seeded;
use wsfn_core::weight_space::IndexMap;
use wsfn_core::{NeuronPermutation, WeightSpaceFeature, WeightSpaceSpec};

fn spec_strategy() -> impl Strategy<Value = (Vec<usize>, usize, u64)> {
    (
        prop::collection::vec(1usize..5, 2..5),
        1usize..4,
        any::<u64>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn action_is_a_group_action((widths, c, seed) in spec_strategy()) {
        let spec = WeightSpaceSpec::new(widths, c).unwrap();
        let mut rng = seeded(seed);
        let u = WeightSpaceFeature::random(&spec, 1.0, &mut rng);
        let a = NeuronPermutation::random(&spec, &mut rng);
        let b = NeuronPermutation::random(&spec, &mut rng);

        let ab = a.compose(&b).unwrap();
        let lhs = ab.apply(&u).unwrap();
        let rhs = a.apply(&b.apply(&u).unwrap()).unwrap();
        prop_assert_eq!(lhs.max_abs_diff(&rhs), 0.0);

        let back = a.inverse().apply(&a.apply(&u).unwrap()).unwrap();
        prop_assert_eq!(back.max_abs_diff(&u), 0.0);
        prop_assert_eq!(NeuronPermutation::identity(&spec).apply(&u).unwrap().max_abs_diff(&u), 0.0);
    }

    #[test]
    fn induced_index_maps_are_np_members((widths, c, seed) in spec_strategy()) {
        let spec = WeightSpaceSpec::new(widths, c).unwrap();
        let sigma = NeuronPermutation::random(&spec, &mut seeded(seed));
        let map = sigma.index_map(&spec).unwrap();
        prop_assert!(map.is_np_member());
        prop_assert!(map.inverse().is_np_member());
        prop_assert!(IndexMap::identity(&spec).is_np_member());
    }

    #[test]
    fn hidden_permutations_preserve_the_function(
        (widths, _, seed) in spec_strategy(),
        x in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let spec = WeightSpaceSpec::new(widths.clone(), 1).unwrap();
        let mut rng = seeded(seed);
        let w = WeightSpaceFeature::random(&spec, 1.0, &mut rng);
        let sigma = NeuronPermutation::random_hidden(&spec, &mut rng);
        let input = &x[..widths[0]];
        let y = w.relu_mlp_forward(input).unwrap();
        let z = sigma.apply(&w).unwrap().relu_mlp_forward(input).unwrap();
        for (a, b) in y.iter().zip(&z) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn flatten_round_trips((widths, c, seed) in spec_strategy()) {
        let spec = WeightSpaceSpec::new(widths, c).unwrap();
        let u = WeightSpaceFeature::random(&spec, 1.0, &mut seeded(seed));
        let flat = u.flatten();
        prop_assert_eq!(flat.numel(), spec.dim() * c);
        prop_assert_eq!(WeightSpaceFeature::unflatten(&flat, &spec).unwrap(), u);
    }
}
