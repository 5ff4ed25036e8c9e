mod common;

use common::*;
use num_traits::One;
use probanon::anonymity::{check_fpa, check_fpa_bp, check_pa, Strategy};
use probanon::automaton::find_isomorphism;
use probanon::bisim::{bisimilarity, is_bisimulation, refinement_sequence};
use probanon::dsl::{parse_model, print_model, AutomatonDef, ModelBundle};
use probanon::label::ActionLabel;
use probanon::measure::{path_prob, PathMeasure};
use probanon::rational::Rational;
use probanon::sched::{
    enumerate_admissible, is_admissible, sample_admissible, synthesize_admissible, unfold, Guard, Horizon, ObsMode,
    ObservationMap, SchedContext,
};
use proptest::prelude::*;

fn mode(strict: bool) -> ObsMode {
    if strict {
        ObsMode::Strict
    } else {
        ObsMode::Collapse
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn path_mass_halt_and_truncation_sum_to_one(seed in any::<u64>()) {
        let fpa = random_fpa(&mut rng(seed), 12, 2, false, true, true);
        let pm = PathMeasure::new(&fpa).unwrap();
        let complete: Rational = pm.paths.iter().map(|(_, m)| m).sum();
        prop_assert_eq!(&complete + &pm.halt_mass + &pm.truncated_mass, Rational::one());
        let (c, h, t) = mass_below(&fpa, fpa.initial());
        prop_assert_eq!((complete, pm.halt_mass, pm.truncated_mass), (c, h, t));
    }

    #[test]
    fn cones_match_prefix_probability(seed in any::<u64>(), len in 0usize..6, halts in any::<bool>()) {
        let mut r = rng(seed);
        let fpa = random_fpa(&mut r, 12, 2, false, halts, false);
        let pm = PathMeasure::new(&fpa).unwrap();
        let prefix = random_prefix(&mut r, &fpa, len);
        let below = mass_below(&fpa, prefix.last()).0;
        prop_assert_eq!(pm.cone(&prefix), path_prob(&fpa, &prefix).unwrap() * below);
    }

    #[test]
    fn both_definitions_agree(seed in any::<u64>(), users in 2usize..=3, shared in any::<bool>()) {
        let fpa = random_fpa(&mut rng(seed), 16, users, shared, true, false);
        let spec = fpa_spec(users);
        let ind = check_fpa(&fpa, &spec).unwrap();
        let bp = check_fpa_bp(&fpa, &spec).unwrap();
        prop_assert_eq!(ind.status, bp.status);
        if shared {
            prop_assert!(ind.status.is_anonymous());
        }
        for w in [ind.witness, bp.witness].into_iter().flatten() {
            let (l, r) = w.replay(&fpa, &spec).unwrap();
            prop_assert_eq!((&l, &r), (&w.left, &w.right));
            prop_assert_ne!(l, r);
        }
    }

    #[test]
    fn bisimilarity_is_the_largest_bisimulation(seed in any::<u64>()) {
        let labels = [x("a"), x("b")];
        let a = random_pa(&mut rng(seed), 6, &labels, false);
        let p = bisimilarity(&a);
        prop_assert!(is_bisimulation(&a, &p));
        let brute = brute_force_bisimilarity(&a);
        prop_assert_eq!(p.blocks(), brute.blocks());
        let seq = refinement_sequence(&a);
        prop_assert_eq!(seq.last().unwrap().blocks(), p.blocks());
        for w in seq.windows(2) {
            prop_assert!(w[1].refines(&w[0]));
        }
    }

    #[test]
    fn sampled_and_synthesized_schedulers_are_admissible(seed in any::<u64>(), strict in any::<bool>()) {
        let (a, spec) = hidden_pair(&mut rng(seed), false);
        let ctx = SchedContext::new(&a, ObservationMap::new(mode(strict), spec.observable.clone()));
        let h = a.num_states();
        let xi = sample_admissible(&ctx, h, seed);
        prop_assert!(is_admissible(&ctx, &xi));
        prop_assert_eq!(&xi, &sample_admissible(&ctx, h, seed));
        let syn = synthesize_admissible(&a, &spec.observable);
        prop_assert!(is_admissible(&ctx, &syn));
        let target = unfold(&ctx, &syn, Horizon::Bounded(h)).unwrap().fpa;
        let found = enumerate_admissible(&ctx, h, Guard::default())
            .map(Result::unwrap)
            .any(|t| unfold(&ctx, &t, Horizon::Bounded(h)).unwrap().fpa == target);
        prop_assert!(found, "the synthesized scheduler is among the enumerated ones");
    }

    #[test]
    fn closure_agrees_with_enumeration(seed in any::<u64>(), strict in any::<bool>(), same in any::<bool>()) {
        let (a, spec) = hidden_pair(&mut rng(seed), same);
        let obs = ObservationMap::new(mode(strict), spec.observable.clone());
        let h = a.num_states();
        let e = check_pa(&a, &spec, &obs, &Strategy::Enumerate { horizon: h }, Guard::default()).unwrap();
        let c = check_pa(&a, &spec, &obs, &Strategy::Closure { horizon: h }, Guard::default()).unwrap();
        prop_assert_eq!(e.status.is_anonymous(), c.status.is_anonymous(), "{} vs {}", e.coverage, c.coverage);
    }

    #[test]
    fn parser_never_panics(text in "(format 1\n)?[a-z0-9{}();:,/>|?!#\\[\\] \n-]{0,160}") {
        let _ = parse_model(&text);
    }

    #[test]
    fn automata_round_trip_through_the_format(seed in any::<u64>(), cyclic in any::<bool>()) {
        let labels =
            [x("a"), ActionLabel::input("c"), ActionLabel::output("c"), ActionLabel::tau(), ActionLabel::marker("p1")];
        let a = random_pa(&mut rng(seed), 6, &labels, !cyclic);
        let bundle = ModelBundle { automata: vec![AutomatonDef::from_automaton("A", &a)], ..ModelBundle::default() };
        let text = print_model(&bundle);
        let back = parse_model(&text).unwrap();
        prop_assert_eq!(&back, &bundle);
        let built = back.automata[0].build().unwrap();
        prop_assert!(built == a || find_isomorphism(&built, &a).is_some());
        prop_assert_eq!(built.actions(), a.actions());
    }
}

