//! Trains the reference scoring adapter on a synthetic clip and compares
//! closed-loop sessions before and after training.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hoi_core::completion::ReferenceAdapter;
use hoi_core::config::EngineConfig;
use hoi_core::controller::CalibrationStore;
use hoi_core::engine::{dims_for, train_adapter, Engine};
use hoi_core::exec::{Executor, LogicalClock};
use hoi_core::metrics::{run_oracle_session, ManualActionModel, MatchConfig, SessionMetrics};
use hoi_core::synth::{demo_ontology, generate, Corpus, SynthConfig};

fn session(corpus: &Corpus, adapter: ReferenceAdapter) -> SessionMetrics {
    let engine = Engine::new(corpus.ontology.clone(), corpus.stats.clone(), Arc::new(adapter), EngineConfig::default());
    let mut exec = Executor::new("train", EngineConfig::default().hash(), Box::new(LogicalClock::default()));
    let run = run_oracle_session(
        &engine,
        &corpus.clip,
        &corpus.events,
        &MatchConfig::default(),
        &mut exec,
        &mut CalibrationStore::default(),
    )
    .unwrap();
    SessionMetrics::from_log(&run.log, &ManualActionModel::default())
}

fn main() {
    let ont = demo_ontology();
    let corpus = generate(&SynthConfig { events_per_hand: 8, ..SynthConfig::default() }, &ont);
    let dims = dims_for(&ont, &corpus.clip.features);
    let engine = Engine::new(ont.clone(), corpus.stats.clone(), Arc::new(ReferenceAdapter::zeros(dims)), EngineConfig::default());
    let examples: Vec<_> = corpus
        .events
        .iter()
        .map(|e| engine.training_example(e, &corpus.clip).unwrap())
        .collect();

    let initial = ReferenceAdapter::random(dims, 0.01, &mut ChaCha8Rng::seed_from_u64(0));
    let (trained, losses) = train_adapter(initial.clone(), &examples, 300, 0.3).unwrap();
    for (epoch, loss) in losses.iter().enumerate().step_by(50) {
        println!("epoch {epoch:>3} loss {loss:.4}");
    }
    println!("final loss {:.4}", trained.loss(&examples).unwrap());

    for (name, adapter) in [("untrained", initial), ("trained", trained)] {
        let m = session(&corpus, adapter);
        println!(
            "{name:<9} accepted {:>2} edited {:>2} manual-share {:.2} actions/event {:.2}",
            m.behavior.accepted,
            m.behavior.edited,
            m.behavior.human_only_share.unwrap_or(0.0),
            m.behavior.actions_per_event.unwrap_or(0.0)
        );
    }
}
