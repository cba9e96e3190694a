mod common;

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use hoi_core::completion::{
    assemble_representation, complete, decode, first_pass, scr_refine, CompletionConfig, Cues, Example,
    ReferenceAdapter, ScrWeights,
};
use hoi_core::config::EngineConfig;
use hoi_core::engine::{dims_for, Engine};
use hoi_core::event::{check_validity, EventState, Field, NounValue, PartialEvent, Provenance};
use hoi_core::synth::{demo_ontology, generate, Corpus, SynthConfig};

use common::*;

struct Fixture {
    corpus: Corpus,
    engine: Engine,
    examples: Vec<Example>,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let ont = demo_ontology();
        let corpus = generate(&SynthConfig { events_per_hand: 6, ..SynthConfig::default() }, &ont);
        let dims = dims_for(&ont, &corpus.clip.features);
        let engine = Engine::new(ont, corpus.stats.clone(), Arc::new(ReferenceAdapter::zeros(dims)), EngineConfig::default());
        let examples = corpus.events.iter().map(|e| engine.training_example(e, &corpus.clip).unwrap()).collect();
        Fixture { corpus, engine, examples }
    })
}

fn weights(rng: &mut impl Rng) -> ScrWeights {
    ScrWeights {
        has_noun: rng.gen_range(0.0..=1.0),
        noun: rng.gen_range(0.0..=1.0),
        verb: rng.gen_range(0.0..=1.0),
        onset: rng.gen_range(0.0..=1.0),
    }
}

/// A reference event with a random subset of fields confirmed, possibly to
/// values other than the reference ones.
fn locked_state(rng: &mut impl Rng, fx: &Fixture) -> EventState {
    let truth = fx.corpus.events.choose(rng).unwrap();
    let ont = &fx.engine.ontology;
    let mut state = EventState::new(truth.hand, truth.t_s, truth.t_e).unwrap();
    for field in [Field::Onset, Field::Verb, Field::Noun] {
        if rng.gen_bool(0.4) {
            let value = if rng.gen_bool(0.5) {
                truth.partial().get(field).unwrap()
            } else {
                random_value(rng, field, &state, ont)
            };
            if let Ok(next) = state.set_field(field, value, Provenance::human(1), ont) {
                state = next;
            }
        }
    }
    state
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decode_matches_enumeration(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let ont = random_ontology(&mut rng);
        let window = random_window(&mut rng, 50);
        let bins = rng.gen_range(1..=10);
        let stats = random_stats(&mut rng, ont.num_verbs(), ont.num_nouns(), bins);
        let post = random_posterior(&mut rng, window, ont.num_verbs(), ont.num_nouns());
        let locks = random_locks(&mut rng, window, &ont);
        match (decode(&post, &locks, &ont, &stats), brute_force_decode(&post, &locks, &ont, &stats)) {
            (Ok(h), Some((t, v, n, j))) => {
                prop_assert_eq!((h.t_o, h.verb, h.noun), (t, v, n));
                prop_assert!((h.joint_score - j).abs() <= 1e-9);
            }
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "feasibility differs: {:?} vs {:?}", a.is_ok(), b),
        }
    }

    #[test]
    fn completion_respects_locks_and_the_ontology(seed in any::<u64>()) {
        let fx = fixture();
        let mut rng = rng(seed);
        let dims = dims_for(&fx.engine.ontology, &fx.corpus.clip.features);
        let adapter = ReferenceAdapter::random(dims, 1.0, &mut rng);
        let state = locked_state(&mut rng, fx);
        let locks = state.lock_set();
        let ont = &fx.engine.ontology;
        let repr = assemble_representation(&state, None, &fx.corpus.clip.features, ont, &Cues::default()).unwrap();
        let config = CompletionConfig { scr: weights(&mut rng), feedback_passes: rng.gen_range(0..3) };
        let h = complete(&repr, &adapter, &locks, ont, &fx.engine.stats, &config).unwrap();
        prop_assert!(locks.t_o.is_none_or(|t| t == h.t_o));
        prop_assert!(locks.verb.is_none_or(|v| v == h.verb));
        prop_assert!(locks.has_noun.is_none_or(|b| b == h.noun.has_noun()));
        prop_assert!(locks.noun.is_none_or(|n| h.noun == NounValue::Noun(n)));
        let mut filled = PartialEvent::empty(state.hand());
        filled.t_s = state.t_s();
        filled.t_o = Some(h.t_o);
        filled.t_e = state.t_e();
        filled.verb = Some(h.verb);
        filled.noun = Some(h.noun);
        prop_assert!(check_validity(&filled, ont).is_valid());
    }

    #[test]
    fn feedback_never_lowers_the_joint_score(seed in any::<u64>()) {
        let fx = fixture();
        let mut rng = rng(seed);
        let dims = dims_for(&fx.engine.ontology, &fx.corpus.clip.features);
        let adapter = ReferenceAdapter::random(dims, rng.gen_range(0.1..2.0), &mut rng);
        let state = locked_state(&mut rng, fx);
        let locks = state.lock_set();
        let ont = &fx.engine.ontology;
        let repr = assemble_representation(&state, None, &fx.corpus.clip.features, ont, &Cues::default()).unwrap();
        let w = weights(&mut rng);
        let first = first_pass(&repr, &adapter, &locks, ont, &fx.engine.stats, &w).unwrap();
        let config = CompletionConfig { scr: w, feedback_passes: rng.gen_range(1..4) };
        let out = complete(&repr, &adapter, &locks, ont, &fx.engine.stats, &config).unwrap();
        prop_assert!(out.joint_score >= first.joint_score);
    }

    #[test]
    fn refinement_conserves_mass(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let nv = rng.gen_range(1..=6);
        let nn = rng.gen_range(1..=6);
        let bundle = random_bundle(&mut rng, nv, nn);
        let bins = rng.gen_range(1..=12);
        let stats = random_stats(&mut rng, nv, nn, bins);
        let refined = scr_refine(&bundle, &stats, &weights(&mut rng));
        for head in [&refined.onset[..], &refined.verb, &refined.has_noun, &refined.noun] {
            prop_assert!(head.iter().all(|&p| p >= 0.0));
            prop_assert!((head.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        let identity = scr_refine(&bundle, &stats, &ScrWeights::ZERO);
        let reference = reference_probabilities(&bundle);
        let pairs = identity.onset.iter().zip(&reference.onset)
            .chain(identity.verb.iter().zip(&reference.verb))
            .chain(identity.noun.iter().zip(&reference.noun))
            .chain(identity.has_noun.iter().zip(&reference.has_noun));
        for (a, b) in pairs {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn analytic_gradient_matches_finite_differences(seed in any::<u64>()) {
        let fx = fixture();
        let mut rng = rng(seed);
        let dims = dims_for(&fx.engine.ontology, &fx.corpus.clip.features);
        let adapter = ReferenceAdapter::random(dims, rng.gen_range(0.01..0.5), &mut rng);
        let size = rng.gen_range(1..=3);
        let batch: Vec<Example> = fx.examples.choose_multiple(&mut rng, size).cloned().collect();
        let (_, grad) = adapter.loss_and_grad(&batch).unwrap();
        let coords: Vec<usize> = (0..32).map(|_| rng.gen_range(0..grad.len())).collect();
        let numeric = finite_difference(adapter.params(), &coords, 1e-5, |p| {
            ReferenceAdapter::from_params(dims, p.to_vec()).unwrap().loss(&batch).unwrap()
        });
        let analytic: Vec<f64> = coords.iter().map(|&c| grad[c]).collect();
        prop_assert!(relative_error(&analytic, &numeric) < 1e-5);
    }
}
