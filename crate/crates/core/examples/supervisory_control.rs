//! The supervisory controller: rank every candidate intervention for an
//! event, keep the lock- and policy-safe ones and pick the best.

use std::sync::Arc;

use hoi_core::config::EngineConfig;
use hoi_core::controller::{Authority, CalibrationStore};
use hoi_core::engine::Engine;
use hoi_core::event::EventState;
use hoi_core::synth::{demo_ontology, generate, perfect_scores, SynthConfig};

fn main() {
    let ont = demo_ontology();
    let corpus = generate(&SynthConfig::default(), &ont);
    let truth = &corpus.events[1];
    let state = EventState::new(truth.hand, truth.t_s, truth.t_e).unwrap();
    let store = CalibrationStore::default();

    for cap in [Authority::SafeLocal, Authority::HumanOnly] {
        let mut config = EngineConfig::default();
        config.controller.policy.max_authority = cap;
        let engine = Engine::new(
            ont.clone(),
            corpus.stats.clone(),
            Arc::new(perfect_scores(&corpus.events, &ont)),
            config,
        );
        let proposal = engine.propose(&state, &corpus.clip, &store).unwrap();
        println!("policy cap {cap:?}");
        let Some(selection) = proposal.selection else {
            println!("  manual completion required");
            continue;
        };
        for c in &selection.safe_set {
            let xi = &c.intervention;
            println!("  {:>7.3}  {:?} via {:?} as {:?}", c.score, xi.targets, xi.surface, xi.authority);
        }
        let chosen = &selection.chosen.intervention;
        println!("  chosen: {:?} via {:?} as {:?}", chosen.targets, chosen.surface, chosen.authority);
    }
}
