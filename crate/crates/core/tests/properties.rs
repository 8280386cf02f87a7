use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vershik_lab::bratteli::{order_equivalent_bounded, EquivalenceVerdict, OrderedBratteliDiagram};
use vershik_lab::builtins::{odometer_system_at, random_cuts, random_diagram};
use vershik_lab::format::{emit_diagram, emit_system, parse_diagram, parse_system};
use vershik_lab::pds::{check_axiom_backward, check_axiom_forward, detect_periodic, BratteliSystem};
use vershik_lab::space::ClopenSet;
use vershik_lab::versik::{
    counting_cocycle, end_vertex, enumerate_paths, path_space, predecessor, rank_in_fiber, successor, CocycleValue,
    PathPoint, Step, Tail,
};

fn diagram(seed: u64, levels: usize) -> OrderedBratteliDiagram {
    random_diagram(&mut ChaCha8Rng::seed_from_u64(seed), levels, 3, 3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_diagrams_are_valid(seed in any::<u64>(), levels in 1usize..6) {
        prop_assert!(diagram(seed, levels).validate().is_empty());
    }

    #[test]
    fn successor_and_predecessor_are_inverse(seed in any::<u64>(), levels in 1usize..6) {
        let b = diagram(seed, levels);
        for p in enumerate_paths(&b, levels) {
            if let Step::Path(q) = successor(&b, &p) {
                prop_assert_eq!(end_vertex(&b, &q), end_vertex(&b, &p));
                prop_assert_eq!(rank_in_fiber(&b, &q), rank_in_fiber(&b, &p) + 1);
                prop_assert_eq!(predecessor(&b, &q), Step::Path(p.clone()));
            }
        }
    }

    #[test]
    fn versik_systems_are_aperiodic(seed in any::<u64>(), levels in 2usize..6) {
        let b = diagram(seed, levels);
        let ps = path_space(&b, levels).unwrap();
        let s = BratteliSystem::new(ps.space, ps.phi).unwrap();
        prop_assert!(s.validate().is_empty());
        prop_assert!(detect_periodic(&s, s.space.cell_count(levels)).is_none());
    }

    #[test]
    fn cocycle_is_antisymmetric(seed in any::<u64>(), levels in 1usize..6, i in any::<usize>(), j in any::<usize>()) {
        let b = diagram(seed, levels);
        let paths = enumerate_paths(&b, levels);
        let x = &paths[i % paths.len()];
        let y = &paths[j % paths.len()];
        let pt = |p: &vershik_lab::versik::FinitePath| PathPoint::new(p.clone(), Tail::Max);
        let xy = counting_cocycle(&b, &pt(x), &pt(y), levels).unwrap();
        let yx = counting_cocycle(&b, &pt(y), &pt(x), levels).unwrap();
        match (xy, yx) {
            (CocycleValue::Value(a), CocycleValue::Value(c)) => prop_assert_eq!(a, -c),
            (a, c) => prop_assert_eq!(a, c),
        }
    }

    #[test]
    fn diagrams_round_trip_through_text(seed in any::<u64>(), levels in 1usize..6) {
        let b = diagram(seed, levels);
        prop_assert_eq!(parse_diagram(&emit_diagram(&b)).unwrap(), b);
    }

    #[test]
    fn telescopes_are_equivalent(seed in any::<u64>(), levels in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_diagram(&mut rng, levels + 1, 2, 2);
        let cuts = random_cuts(&mut rng, levels);
        let t = b.telescope(&cuts).unwrap();
        prop_assert!(matches!(order_equivalent_bounded(&b, &t, 4), EquivalenceVerdict::Equivalent(_)));
    }

    #[test]
    fn odometers_satisfy_both_axioms(depth in 3usize..8, base in any::<u32>(), level in 1usize..4) {
        let s = odometer_system_at(depth, base % (1 << depth));
        let bound = s.space.cell_count(depth);
        let l = level.min(depth);
        prop_assert!(check_axiom_forward(&s, &s.xmin(l), bound).unwrap().is_satisfied());
        prop_assert!(check_axiom_backward(&s, &s.xmax(l), bound).unwrap().is_satisfied());
        let back = parse_system(&emit_system(&s)).unwrap();
        prop_assert_eq!(back.phi, s.phi);
    }

    #[test]
    fn image_then_preimage_is_identity_off_the_extremes(depth in 3usize..7, base in any::<u32>(), cells in proptest::collection::btree_set(0u32..8, 0..8)) {
        let s = odometer_system_at(depth, base % (1 << depth));
        let u = ClopenSet::new(3, cells).difference(&s.xmax(depth), &s.space);
        let img = s.phi.image_clopen(&s.space, &u).unwrap();
        let back = s.phi.preimage_clopen(&s.space, &img).unwrap();
        prop_assert!(back.same_set(&u, &s.space));
    }
}
