//! Field locks on a single event: human writes confirm and lock, machine
//! writes only suggest and bounce off locked fields, and invalid
//! verb/noun pairs are refused.

use hoi_core::event::{check_validity, EventState, Field, FieldValue, Hand, NounId, NounValue, Provenance, VerbId};
use hoi_core::synth::demo_ontology;

fn main() {
    let ont = demo_ontology();
    let state = EventState::new(Hand::Right, 10, 40).expect("valid span");

    let state = state
        .set_field(Field::Verb, FieldValue::Verb(VerbId(0)), Provenance::human(1), &ont)
        .unwrap();
    println!("verb {} is {:?}", ont.verb_name(VerbId(0)), state.status(Field::Verb));

    let refused = state.set_field(Field::Verb, FieldValue::Verb(VerbId(1)), Provenance::machine(2), &ont);
    println!("machine overwrite of a locked verb: {:?}", refused.unwrap_err());

    let state = state
        .set_field(Field::Onset, FieldValue::Frame(22), Provenance::machine(3), &ont)
        .unwrap();
    println!("machine onset is {:?}", state.status(Field::Onset));

    for n in ont.noun_ids() {
        let attempt = state.set_field(Field::Noun, FieldValue::Noun(NounValue::Noun(n)), Provenance::human(4), &ont);
        let verdict = if attempt.is_ok() { "allowed" } else { "refused" };
        println!("noun {:<8} {verdict}", ont.noun_name(n));
    }

    let done = state
        .set_field(Field::Noun, FieldValue::Noun(NounValue::Noun(NounId(0))), Provenance::human(5), &ont)
        .and_then(|s| s.confirm_field(Field::Onset, Provenance::human(6)));
    if let Ok(s) = done {
        println!("open fields: {:?}", s.open_fields().collect::<Vec<_>>());
        println!("valid: {}", check_validity(&s.partial(), &ont).is_valid());
    }
}
