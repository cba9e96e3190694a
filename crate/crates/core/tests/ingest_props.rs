mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use hoi_core::event::NounId;
use hoi_core::event::VerbId;
use hoi_core::ingest::{parse_events, parse_statistics, render_events, render_statistics, StatisticsBundle};

use common::{random_events, random_ontology, random_stats, rng};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn statistics_survive_a_file_round_trip(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let ont = random_ontology(&mut rng);
        let bins = rng.gen_range(1..=12);
        let random = random_stats(&mut rng, ont.num_verbs(), ont.num_nouns(), bins);
        prop_assert_eq!(&parse_statistics(&render_statistics(&random, &ont), &ont).unwrap(), &random);
        let n = rng.gen_range(1..50);
        let built = StatisticsBundle::build(&random_events(&mut rng, &ont, n), &ont, bins).unwrap();
        prop_assert_eq!(&parse_statistics(&render_statistics(&built, &ont), &ont).unwrap(), &built);
    }

    #[test]
    fn smoothed_statistics_are_positive_and_order_free(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let ont = random_ontology(&mut rng);
        let bins = rng.gen_range(1..=12);
        let n = rng.gen_range(1..80);
        let mut events = random_events(&mut rng, &ont, n);
        let stats = StatisticsBundle::build(&events, &ont, bins).unwrap();
        for v in 0..ont.num_verbs() {
            let v = VerbId(v);
            prop_assert!(stats.verb_onset_prior(v).iter().all(|&p| p > 0.0));
            prop_assert!(stats.no_noun_rate(v) > 0.0);
            for n in 0..ont.num_nouns() {
                prop_assert!(stats.cooccurrence(v, NounId(n)) > 0.0);
            }
        }
        for n in 0..ont.num_nouns() {
            prop_assert!(stats.noun_onset_prior(NounId(n)).iter().all(|&p| p > 0.0));
        }
        prop_assert_eq!(&StatisticsBundle::build(&events, &ont, bins).unwrap(), &stats);
        events.shuffle(&mut rng);
        prop_assert_eq!(&StatisticsBundle::build(&events, &ont, bins).unwrap(), &stats);
    }

    #[test]
    fn events_survive_a_file_round_trip(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let ont = random_ontology(&mut rng);
        let n = rng.gen_range(0..30);
        let events = random_events(&mut rng, &ont, n);
        prop_assert_eq!(parse_events(&render_events(&events, &ont), &ont).unwrap(), events);
    }
}
