//! Lock-aware completion: decode the open fields of an event, then lock a
//! wrong verb by hand and watch the rest of the hypothesis follow it.

use std::sync::Arc;

use hoi_core::config::EngineConfig;
use hoi_core::engine::Engine;
use hoi_core::event::{EventState, Field, FieldValue, Provenance, VerbId};
use hoi_core::synth::{demo_ontology, generate, perfect_scores, SynthConfig};

fn main() {
    let ont = demo_ontology();
    let corpus = generate(&SynthConfig::default(), &ont);
    let engine = Engine::new(
        ont.clone(),
        corpus.stats.clone(),
        Arc::new(perfect_scores(&corpus.events, &ont)),
        EngineConfig::default(),
    );
    let truth = &corpus.events[0];
    println!(
        "truth: onset {} verb {} noun {:?}",
        truth.t_o,
        ont.verb_name(truth.verb),
        truth.noun.noun().map(|n| ont.noun_name(n))
    );

    let state = EventState::new(truth.hand, truth.t_s, truth.t_e).unwrap();
    let h = engine.infer(&state, &corpus.clip).unwrap().hypothesis.unwrap();
    println!(
        "open:  onset {} verb {} noun {:?} (joint {:.2})",
        h.t_o,
        ont.verb_name(h.verb),
        h.noun.noun().map(|n| ont.noun_name(n)),
        h.joint_score
    );

    let other = ont.verb_ids().find(|&v| v != truth.verb).unwrap_or(VerbId(0));
    let locked = state
        .set_field(Field::Verb, FieldValue::Verb(other), Provenance::human(1), &ont)
        .unwrap();
    match engine.infer(&locked, &corpus.clip).unwrap().hypothesis {
        Some(h) => println!(
            "locked verb {}: onset {} noun {:?}",
            ont.verb_name(h.verb),
            h.t_o,
            h.noun.noun().map(|n| ont.noun_name(n))
        ),
        None => println!("locked verb {} admits no completion", ont.verb_name(other)),
    }
}
