//! Interaction-behaviour metrics from a scripted log with a known mix of
//! accepts, edits, rejects, timeouts and manual entries.

use hoi_core::metrics::behavioral_metrics;
use hoi_core::synth::{demo_ontology, scripted_log, InteractionCounts};

fn pct(x: Option<f64>) -> String {
    x.map_or("n/a".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn main() {
    let counts = InteractionCounts {
        accepts: 95,
        edits: 172,
        rejects: 169,
        timeouts: 79,
        manual: 180,
    };
    let log = scripted_log(&counts, &demo_ontology()).unwrap();
    let m = behavioral_metrics(&log);
    println!("suggestions          {}", m.suggestions);
    println!("accept rate          {}", pct(m.accept_rate));
    println!("edited suggestions   {}", pct(m.rework_rate_all));
    println!("human-confirm share  {}", pct(m.human_confirm_share));
    println!("human-only share     {}", pct(m.human_only_share));
    println!("corrected accepts    {}", pct(m.correction_rate_accepted));
}
