//! Sequential oracle correction with perfect and adversarial scores, and
//! the resulting accuracy and interaction metrics.

use std::sync::Arc;

use hoi_core::completion::ScoreAdapter;
use hoi_core::config::EngineConfig;
use hoi_core::controller::CalibrationStore;
use hoi_core::engine::Engine;
use hoi_core::exec::{Executor, LogicalClock};
use hoi_core::metrics::{run_oracle_protocol, ManualActionModel, MatchConfig, SessionMetrics};
use hoi_core::synth::{adversarial_scores, demo_ontology, generate, perfect_scores, SynthConfig};

fn main() {
    let ont = demo_ontology();
    let corpus = generate(&SynthConfig { seed: 11, events_per_hand: 10, ..SynthConfig::default() }, &ont);
    let adapters: [(&str, Arc<dyn ScoreAdapter>); 2] = [
        ("perfect", Arc::new(perfect_scores(&corpus.events, &ont))),
        ("adversarial", Arc::new(adversarial_scores(&corpus.events, &ont, 5).unwrap())),
    ];
    for (name, adapter) in adapters {
        let engine = Engine::new(ont.clone(), corpus.stats.clone(), adapter, EngineConfig::default());
        let mut exec = Executor::new(name, EngineConfig::default().hash(), Box::new(LogicalClock::default()));
        let cfg = MatchConfig::default();
        let run = run_oracle_protocol(&engine, &corpus.clip, &corpus.events, &cfg, &mut exec, &mut CalibrationStore::default())
            .unwrap();
        let metrics = SessionMetrics::from_log(&run.log, &ManualActionModel::default()).with_accuracy(
            &run.annotations(),
            &corpus.events,
            &cfg,
        );
        let acc = metrics.accuracy.unwrap();
        println!(
            "{name:<11} edits {:>2}/{:<2} zero-edit {:.2} complete-match {:.2} accept-rate {:.2}",
            run.edits(),
            run.events.len() * 3,
            run.zero_edit_rate().unwrap_or(0.0),
            acc.complete_match_rate.unwrap_or(0.0),
            metrics.behavior.accept_rate.unwrap_or(0.0),
        );
    }
}
