//! Hand-guided onset prior on synthetic clips: the onset band selected from
//! hand motion for each reference event, or the reason it abstains.

use hoi_core::event::Window;
use hoi_core::hop::{hand_onset_prior, HopConfig, HopOutcome, SemanticPrior};
use hoi_core::synth::{demo_ontology, generate, SynthConfig};

fn main() {
    let ont = demo_ontology();
    let corpus = generate(&SynthConfig { seed: 7, ..SynthConfig::default() }, &ont);
    let cfg = HopConfig::default();
    for e in &corpus.events {
        let window = Window::new(e.t_s, e.t_e).unwrap();
        let track = corpus.clip.track(e.hand).unwrap();
        let other = corpus.clip.track(e.hand.other());
        let family = ont.phase_family(e.verb);
        let semantic = SemanticPrior {
            verb: e.verb,
            family,
            template_ratio: ont.template_ratio(family),
            confidence: 1.0,
        };
        let report = hand_onset_prior(track, other, window, &semantic, &cfg);
        match report.outcome {
            HopOutcome::Prior(p) => println!(
                "{:?} {:<8} span {:>3}..={:<3} true onset {:>3}  prior {:>3} band {:>3}..={:<3} reliability {:.2}",
                e.hand,
                ont.verb_name(e.verb),
                e.t_s,
                e.t_e,
                e.t_o,
                p.onset,
                p.band.start,
                p.band.end,
                p.reliability
            ),
            HopOutcome::Abstain { reason } => println!("{:?} {:<8} abstains: {reason:?}", e.hand, ont.verb_name(e.verb)),
        }
    }
}
