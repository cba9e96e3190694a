//! Writes a synthetic clip to disk, loads every asset back and rebuilds the
//! statistics bundle from the reference events.

use hoi_core::ingest::{load_events, load_features, load_hand_tracks, load_ontology, load_statistics, StatisticsBundle};
use hoi_core::session::layout;
use hoi_core::synth::{demo_ontology, generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("hoi-ingest-example");
    let corpus = generate(&SynthConfig::default(), &demo_ontology());
    corpus.write_to(&dir)?;

    let ont = load_ontology(dir.join(layout::ONTOLOGY))?;
    let tracks = load_hand_tracks(dir.join(layout::TRACKS))?;
    let features = load_features(dir.join(layout::FEATURES))?;
    let events = load_events(dir.join(layout::EVENTS), &ont)?;
    let stats = load_statistics(dir.join(layout::STATISTICS), &ont)?;
    println!(
        "{} verbs, {} nouns, {} tracks, {} frames x {} features, {} events",
        ont.num_verbs(),
        ont.num_nouns(),
        tracks.len(),
        features.frame_count(),
        features.dim(),
        events.len()
    );

    let rebuilt = StatisticsBundle::build(&events, &ont, stats.bins())?;
    println!("rebuilt statistics match the stored bundle: {}", rebuilt == stats);
    for v in ont.verb_ids().take(3) {
        let hist: Vec<String> = stats.verb_onset_prior(v).iter().map(|p| format!("{p:.2}")).collect();
        println!("onset prior for {:<8} [{}]", ont.verb_name(v), hist.join(" "));
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
