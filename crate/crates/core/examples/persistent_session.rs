//! A persistent session on disk: create events, answer interventions,
//! lose the process, reopen by replaying the log and save.

use std::fs;

use hoi_core::config::EngineConfig;
use hoi_core::controller::{Assignment, Authority};
use hoi_core::exec::{AnnotatorResponse, LogicalClock};
use hoi_core::session::{layout, DataRoot, NextIntervention, Session};
use hoi_core::synth::{demo_ontology, generate, perfect_scores, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = std::env::temp_dir().join("hoi-session-example");
    let _ = fs::remove_dir_all(&tmp);
    let root = DataRoot::new(&tmp);
    let ont = demo_ontology();
    let corpus = generate(&SynthConfig { events_per_hand: 2, ..SynthConfig::default() }, &ont);
    let clip_dir = root.clip_dir("demo");
    corpus.write_to(&clip_dir)?;
    fs::write(clip_dir.join(layout::SCORES), perfect_scores(&corpus.events, &ont).render())?;

    let mut session = Session::create(&root, "demo", EngineConfig::default(), Box::new(LogicalClock::default()))?;
    let id = session.id().to_string();
    for (i, truth) in corpus.events.iter().enumerate() {
        if i == 2 {
            let before = session.view();
            drop(session);
            session = Session::open(&root, &id, Box::new(LogicalClock::default()))?;
            println!("reopened {id}: same state {}", session.view() == before);
        }
        session.create_event(truth.hand, truth.t_s, truth.t_e)?;
        loop {
            match session.next_intervention(truth.hand)? {
                NextIntervention::Done { event } => {
                    println!("event {event} done");
                    break;
                }
                NextIntervention::ManualCompletionRequired { event } => {
                    println!("event {event} needs manual completion");
                    break;
                }
                NextIntervention::Applied { intervention, delta } => {
                    println!("  applied {:?} (rollback {})", intervention.intervention.targets, delta.rollback)
                }
                NextIntervention::Ask(issued) => {
                    let xi = &issued.intervention;
                    let response = if xi.authority == Authority::HumanOnly {
                        let values = xi
                            .targets
                            .iter()
                            .map(|&field| Assignment { field, value: truth.partial().get(field).unwrap() })
                            .collect();
                        AnnotatorResponse::manual(values, 1.5)
                    } else {
                        AnnotatorResponse::accept(0.7)
                    };
                    println!("  {:?} {:?} via {:?}", xi.authority, xi.targets, xi.surface);
                    session.respond(truth.hand, issued.id, response)?;
                }
            }
        }
    }
    let summary = session.save()?;
    println!("{}", serde_json::to_string_pretty(&summary.metrics)?);
    fs::remove_dir_all(&tmp)?;
    Ok(())
}
