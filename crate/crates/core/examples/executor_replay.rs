//! The single-writer executor: every step becomes a trace record, a
//! silent write that touches a locked field is rolled back, and replaying
//! the log rebuilds the same states.

use hoi_core::controller::{Assignment, Authority, Intervention, Surface};
use hoi_core::event::{Field, FieldValue, Hand, Origin, VerbId};
use hoi_core::exec::{replay, AnnotatorResponse, Executor, LogicalClock};
use hoi_core::synth::demo_ontology;

fn main() {
    let ont = demo_ontology();
    let mut exec = Executor::new("example", "config", Box::new(LogicalClock::default()));
    let mut log = Vec::new();

    let (state, rec) = exec.create_event(0, Hand::Left, 5, 35).unwrap();
    log.push(rec);
    let (state, rec) = exec
        .edit(0, &state, &[Assignment { field: Field::Verb, value: FieldValue::Verb(VerbId(0)) }], Origin::Human, &ont)
        .unwrap();
    log.push(rec);

    let silent = Intervention {
        targets: vec![Field::Verb, Field::Onset],
        surface: Surface::SilentApply,
        authority: Authority::SafeLocal,
        payload: vec![
            Assignment { field: Field::Verb, value: FieldValue::Verb(VerbId(1)) },
            Assignment { field: Field::Onset, value: FieldValue::Frame(12) },
        ],
    };
    let id = exec.step();
    let (state, rec) = exec.execute(0, &state, id, &silent, None, &ont).unwrap();
    println!("silent write over the locked verb: rollback {} ({:?})", rec.rollback, rec.rollback_reason);
    log.push(rec);

    let suggest = Intervention {
        targets: vec![Field::Onset],
        surface: Surface::SuggestionCard,
        authority: Authority::HumanConfirm,
        payload: vec![Assignment { field: Field::Onset, value: FieldValue::Frame(12) }],
    };
    let id = exec.step();
    let (state, rec) = exec
        .execute(0, &state, id, &suggest, Some(AnnotatorResponse::accept(0.8)), &ont)
        .unwrap();
    println!("accepted onset: {:?} {:?}", state.t_o(), state.status(Field::Onset));
    log.push(rec);

    for r in &log {
        println!("step {} {}", r.step, serde_json::to_string(&r.action).unwrap());
    }
    let replayed = replay(&log, Some("config")).unwrap();
    println!("replay reproduces the state: {}", replayed[0] == state);
}
