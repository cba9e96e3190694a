mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use hoi_core::config::EngineConfig;
use hoi_core::controller::CalibrationStore;
use hoi_core::engine::Engine;
use hoi_core::event::{Event, Window};
use hoi_core::exec::{Executor, LogicalClock};
use hoi_core::metrics::{accuracy, match_events, run_oracle_protocol, tiou, MatchConfig};
use hoi_core::synth::{adversarial_scores, demo_ontology, generate, SynthConfig};

use common::{random_events, random_ontology, rng};

fn window() -> impl Strategy<Value = Window> {
    (0u32..200, 0u32..100).prop_map(|(s, len)| Window::new(s, s + len).unwrap())
}

/// Matched pairs by content, in a canonical order.
fn pairs(annotations: &[Event], references: &[Event], cfg: &MatchConfig) -> Vec<String> {
    let mut out: Vec<String> = match_events(annotations, references, cfg)
        .pairs
        .iter()
        .map(|p| format!("{:?} {:?} {}", annotations[p.annotation], references[p.reference], p.complete))
        .collect();
    out.sort();
    out
}

/// References plus noisy copies, so plenty of pairs clear the IoU threshold.
fn annotated(seed: u64) -> (Vec<Event>, Vec<Event>) {
    let mut rng = rng(seed);
    let ont = random_ontology(&mut rng);
    let n = rng.gen_range(0..25);
    let references = random_events(&mut rng, &ont, n);
    let mut annotations = Vec::new();
    for r in &references {
        if rng.gen_bool(0.2) {
            continue;
        }
        let mut a = r.clone();
        a.t_s = r.t_s.saturating_sub(rng.gen_range(0..4));
        a.t_e = r.t_e + rng.gen_range(0..4);
        a.t_o = rng.gen_range(a.t_s..=a.t_e);
        if rng.gen_bool(0.2) {
            a.verb = random_events(&mut rng, &ont, 1)[0].verb;
        }
        annotations.push(a);
    }
    let extra = rng.gen_range(0..5);
    annotations.extend(random_events(&mut rng, &ont, extra));
    (annotations, references)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn tiou_is_symmetric_and_bounded(a in window(), b in window()) {
        let x = tiou(a, b);
        prop_assert_eq!(x, tiou(b, a));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert_eq!(tiou(a, a), 1.0);
        prop_assert_eq!(x == 1.0, a == b);
    }

    #[test]
    fn matching_ignores_input_order(seed in any::<u64>()) {
        let cfg = MatchConfig::default();
        let (mut annotations, mut references) = annotated(seed);
        let before = pairs(&annotations, &references, &cfg);
        let mut rng = rng(seed ^ 0x5eed);
        annotations.shuffle(&mut rng);
        references.shuffle(&mut rng);
        prop_assert_eq!(pairs(&annotations, &references, &cfg), before);
    }

    #[test]
    fn matched_pairs_are_a_valid_assignment(seed in any::<u64>()) {
        let cfg = MatchConfig::default();
        let (annotations, references) = annotated(seed);
        let m = match_events(&annotations, &references, &cfg);
        let mut seen_a = std::collections::BTreeSet::new();
        let mut seen_r = std::collections::BTreeSet::new();
        for p in &m.pairs {
            prop_assert!(seen_a.insert(p.annotation) && seen_r.insert(p.reference));
            prop_assert_eq!(annotations[p.annotation].hand, references[p.reference].hand);
            prop_assert!(p.tiou >= cfg.tiou_threshold);
        }
        prop_assert_eq!(m.pairs.len() + m.unmatched_annotations.len(), annotations.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_references.len(), references.len());

        let acc = accuracy(&annotations, &references, &cfg);
        let complete = m.pairs.iter().filter(|p| p.complete).count();
        prop_assert!(complete <= acc.matched && acc.matched <= references.len().min(annotations.len()));
        for rate in [acc.verb_accuracy, acc.noun_accuracy, acc.complete_match_rate, acc.mean_tiou].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&rate));
        }
        if let (Some(c), Some(v)) = (acc.complete_match_rate, acc.verb_accuracy) {
            prop_assert!(c * references.len() as f64 <= v * acc.matched as f64 + 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn oracle_runs_repeat_exactly(seed in any::<u64>()) {
        let run = || {
            let ont = demo_ontology();
            let corpus = generate(&SynthConfig { seed, events_per_hand: 8, ..SynthConfig::default() }, &ont);
            let adapter = adversarial_scores(&corpus.events, &ont, 5).unwrap();
            let engine = Engine::new(ont, corpus.stats.clone(), Arc::new(adapter), EngineConfig::default());
            let mut exec = Executor::new("o", EngineConfig::default().hash(), Box::new(LogicalClock::default()));
            let mut store = CalibrationStore::default();
            let run = run_oracle_protocol(&engine, &corpus.clip, &corpus.events, &MatchConfig::default(), &mut exec, &mut store).unwrap();
            (run.log, run.states, store)
        };
        prop_assert_eq!(run(), run());
    }
}
