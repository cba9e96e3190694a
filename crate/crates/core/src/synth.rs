//! Seeded synthetic clips: ontology, motion traces shaped by phase family,
//! informative features, reference events, and score-file substitutes.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::completion::{CompletionError, ScoreBundle, ScoreFileAdapter};
use crate::controller::{Assignment, Authority, Intervention, Surface};
use crate::engine::Clip;
use crate::event::{
    Event, Field, FieldValue, Frame, Hand, NounId, NounValue, Ontology, Origin, PhaseFamily, VerbDef, VerbId, Window,
    DEFAULT_TEMPLATE_RATIOS,
};
use crate::exec::{AnnotatorResponse, ExecError, Executor, TraceRecord};
use crate::ingest::{
    save_features, save_ontology, save_statistics, write_events, write_hand_tracks, FeatureTable, HandTrack,
    IngestError, StatisticsBundle, DEFAULT_BINS,
};
use crate::session::layout;

/// Eight verbs over four nouns, two per phase family. Verbs of one family
/// share at least two noun slots.
pub fn demo_ontology() -> Ontology {
    let verb = |id: &str, noun_required, phase_family| VerbDef {
        id: id.into(),
        noun_required,
        phase_family,
    };
    let verbs = vec![
        verb("reach", false, PhaseFamily::Boundary),
        verb("release", false, PhaseFamily::Boundary),
        verb("grasp", true, PhaseFamily::Early),
        verb("pick", true, PhaseFamily::Early),
        verb("turn", true, PhaseFamily::Mid),
        verb("push", false, PhaseFamily::Mid),
        verb("place", true, PhaseFamily::Late),
        verb("insert", true, PhaseFamily::Late),
    ];
    let nouns = ["cup", "bolt", "lid", "knob"].map(String::from).to_vec();
    let pairs = [
        (0, 0),
        (0, 2),
        (1, 0),
        (1, 1),
        (1, 2),
        (2, 0),
        (2, 1),
        (2, 2),
        (3, 0),
        (3, 1),
        (4, 1),
        (4, 2),
        (4, 3),
        (5, 2),
        (5, 3),
        (6, 0),
        (6, 1),
        (7, 0),
        (7, 1),
        (7, 2),
    ]
    .map(|(v, n)| (VerbId(v), NounId(n)));
    Ontology::new(verbs, nouns, pairs, DEFAULT_TEMPLATE_RATIOS).expect("demo ontology is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub clip_id: String,
    pub events_per_hand: usize,
    pub min_span: Frame,
    pub max_span: Frame,
    /// Idle frames between consecutive events of one hand.
    pub gap: Frame,
    pub feature_dim: usize,
    /// Standard deviation of feature noise.
    pub feature_noise: f64,
    /// Onset jitter around the family template, in frames.
    pub onset_jitter: Frame,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            clip_id: "demo".into(),
            events_per_hand: 20,
            min_span: 24,
            max_span: 48,
            gap: 6,
            feature_dim: 12,
            feature_noise: 0.1,
            onset_jitter: 2,
        }
    }
}

/// A generated clip with its reference events and corpus statistics.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub ontology: Ontology,
    pub clip: Clip,
    pub events: Vec<Event>,
    pub stats: StatisticsBundle,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Deals items from a reshuffled deck so every item appears equally often.
struct Deck<T> {
    items: Vec<T>,
    next: usize,
}

impl<T: Copy> Deck<T> {
    fn new(items: Vec<T>) -> Self {
        let next = items.len();
        Deck { items, next }
    }

    fn draw(&mut self, rng: &mut ChaCha8Rng) -> T {
        if self.next == self.items.len() {
            self.items.shuffle(rng);
            self.next = 0;
        }
        self.next += 1;
        self.items[self.next - 1]
    }
}

/// Motion response over a span, shaped around the onset by phase family.
fn motion_profile(family: PhaseFamily, t_s: Frame, t_o: Frame, t_e: Frame, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (t_s..=t_e)
        .map(|t| {
            let d = t.abs_diff(t_o) as f64;
            let base = 0.5 + 0.08 * gaussian(rng);
            let shaped = match family {
                PhaseFamily::Boundary => base + 0.4 * (-((t - t_s) as f64) / 3.0).exp(),
                PhaseFamily::Early => base - 0.4 * (-d * d / 4.0).exp(),
                PhaseFamily::Mid => base + 0.5 * (-d * d / 4.0).exp(),
                PhaseFamily::Late if t >= t_o && t < t_o + 5 => 0.1,
                PhaseFamily::Late => base,
            };
            shaped.max(0.0)
        })
        .collect()
}

/// Generates a two-hand clip. Each hand carries `events_per_hand`
/// non-overlapping events; the idle motion between events is low. Verbs,
/// and noun slots within a verb, are dealt evenly.
pub fn generate(cfg: &SynthConfig, ontology: &Ontology) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.feature_dim;
    let mut events = Vec::new();
    let mut motion: [Vec<f64>; 2] = Default::default();
    let mut verbs = Deck::new(ontology.verb_ids().collect());
    let mut slots: Vec<Deck<NounValue>> = ontology.verb_ids().map(|v| Deck::new(noun_slots(ontology, v))).collect();
    for (h, hand) in Hand::BOTH.into_iter().enumerate() {
        let mut t: Frame = cfg.gap;
        motion[h].extend((0..cfg.gap).map(|_| 0.05));
        for _ in 0..cfg.events_per_hand {
            let verb = verbs.draw(&mut rng);
            let noun = slots[verb.0].draw(&mut rng);
            let span = rng.gen_range(cfg.min_span..=cfg.max_span);
            let (t_s, t_e) = (t, t + span);
            let family = ontology.phase_family(verb);
            let jitter = if family == PhaseFamily::Boundary {
                0
            } else {
                rng.gen_range(0..=2 * cfg.onset_jitter) as i64 - cfg.onset_jitter as i64
            };
            let template = t_s as f64 + ontology.template_ratio(family) * span as f64;
            let t_o = (template.round() as i64 + jitter).clamp(t_s as i64, t_e as i64) as Frame;
            motion[h].extend(motion_profile(family, t_s, t_o, t_e, &mut rng));
            motion[h].extend((0..cfg.gap).map(|_| 0.05));
            events.push(Event {
                hand,
                t_s,
                t_o,
                t_e,
                verb,
                noun,
            });
            t = t_e + 1 + cfg.gap;
        }
    }
    let frames = motion.iter().map(Vec::len).max().unwrap_or(0);
    for m in &mut motion {
        m.resize(frames, 0.05);
    }
    let tracks = Hand::BOTH
        .into_iter()
        .zip(&motion)
        .map(|(hand, m)| HandTrack::from_motion(hand, 0, m, 0.95))
        .collect();

    // Features: the first block marks the active verb, the next the noun,
    // then one channel that rises near each onset.
    let mut rows = vec![0f32; frames * d];
    for e in &events {
        for t in e.t_s..=e.t_e {
            let row = &mut rows[t as usize * d..(t as usize + 1) * d];
            row[e.verb.0 % d] += 1.0;
            if let NounValue::Noun(n) = e.noun {
                row[(ontology.num_verbs() + n.0) % d] += 1.0;
            }
            let near = (-(t.abs_diff(e.t_o) as f64).powi(2) / 8.0).exp();
            row[d - 1] += near as f32;
        }
    }
    for x in &mut rows {
        *x += (cfg.feature_noise * gaussian(&mut rng)) as f32;
    }
    let features = FeatureTable::new(cfg.clip_id.clone(), d, rows).expect("feature rows match dims");
    let stats = StatisticsBundle::build(&events, ontology, DEFAULT_BINS).expect("non-empty corpus");
    Corpus {
        ontology: ontology.clone(),
        clip: Clip {
            id: cfg.clip_id.clone(),
            tracks,
            features,
        },
        events,
        stats,
    }
}

impl Corpus {
    /// Writes tracks, features, ontology, statistics and reference events
    /// into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<(), IngestError> {
        std::fs::create_dir_all(dir).map_err(|source| IngestError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_hand_tracks(dir.join(layout::TRACKS), &self.clip.tracks)?;
        save_features(dir.join(layout::FEATURES), &self.clip.features)?;
        save_ontology(dir.join(layout::ONTOLOGY), &self.ontology)?;
        save_statistics(dir.join(layout::STATISTICS), &self.stats, &self.ontology)?;
        write_events(dir.join(layout::EVENTS), &self.events, &self.ontology)
    }

    pub fn spans(&self) -> Vec<(Hand, Frame, Frame)> {
        self.events.iter().map(|e| (e.hand, e.t_s, e.t_e)).collect()
    }
}

const CONFIDENT: f64 = 30.0;

fn one_hot(len: usize, hot: Option<usize>) -> Vec<f64> {
    (0..len).map(|i| if Some(i) == hot { CONFIDENT } else { 0.0 }).collect()
}

/// Scores that place all mass on the given completion.
pub fn confident_bundle(window: Window, t_o: Frame, verb: VerbId, noun: NounValue, ontology: &Ontology) -> ScoreBundle {
    let pos = window.frames().position(|t| t == t_o);
    ScoreBundle {
        window,
        mu: window.position(t_o),
        var: 1e-3,
        onset: one_hot(window.len(), pos),
        verb: one_hot(ontology.num_verbs(), Some(verb.0)),
        has_noun: if noun.has_noun() { [0.0, CONFIDENT] } else { [CONFIDENT, 0.0] },
        noun: one_hot(ontology.num_nouns(), noun.noun().map(|n| n.0)),
    }
}

/// Score file that predicts every reference event exactly.
pub fn perfect_scores(events: &[Event], ontology: &Ontology) -> ScoreFileAdapter {
    let mut adapter = ScoreFileAdapter::default();
    for e in events {
        let w = Window::new(e.t_s, e.t_e).expect("reference span");
        adapter.insert(e.hand, confident_bundle(w, e.t_o, e.verb, e.noun, ontology));
    }
    adapter
}

fn noun_slots(ontology: &Ontology, verb: VerbId) -> Vec<NounValue> {
    let mut slots: Vec<NounValue> = ontology.valid_nouns(verb).map(NounValue::Noun).collect();
    if !ontology.noun_required(verb) {
        slots.push(NounValue::NoNoun);
    }
    slots
}

/// A wrong completion for `truth`: another verb, a noun slot that differs
/// from the truth, and an onset more than `min_offset` frames from the true
/// onset. Preference goes to a noun slot the true verb also admits, then to
/// a verb of the same phase family, so the wrong values stay plausible after
/// the oracle corrects earlier fields.
pub fn adversarial_completion(truth: &Event, ontology: &Ontology, min_offset: u32) -> Option<(Frame, VerbId, NounValue)> {
    let window = Window::new(truth.t_s, truth.t_e)?;
    let true_family = ontology.phase_family(truth.verb);
    let true_slots = noun_slots(ontology, truth.verb);
    let mut best: Option<((bool, bool), VerbId, NounValue)> = None;
    for verb in ontology.verb_ids().filter(|&v| v != truth.verb) {
        for noun in noun_slots(ontology, verb).into_iter().filter(|&n| n != truth.noun) {
            let key = (true_slots.contains(&noun), ontology.phase_family(verb) == true_family);
            if best.is_none_or(|(k, _, _)| key > k) {
                best = Some((key, verb, noun));
            }
        }
    }
    let (_, verb, noun) = best?;
    let onset = window
        .frames()
        .rev()
        .chain(window.frames())
        .max_by_key(|&t| t.abs_diff(truth.t_o))
        .filter(|&t| t.abs_diff(truth.t_o) > min_offset)?;
    Some((onset, verb, noun))
}

/// Score file that confidently predicts a wrong value for every field.
pub fn adversarial_scores(events: &[Event], ontology: &Ontology, min_offset: u32) -> Result<ScoreFileAdapter, CompletionError> {
    let mut adapter = ScoreFileAdapter::default();
    for e in events {
        let w = Window::new(e.t_s, e.t_e).ok_or(CompletionError::MissingWindow)?;
        let (t_o, verb, noun) = adversarial_completion(e, ontology, min_offset)
            .ok_or_else(|| CompletionError::Format(format!("no wrong completion for span {}..={}", e.t_s, e.t_e)))?;
        let mut bundle = confident_bundle(w, t_o, verb, noun, ontology);
        if let NounValue::Noun(n) = e.noun {
            bundle.noun[n.0] = -CONFIDENT;
        }
        adapter.insert(e.hand, bundle);
    }
    Ok(adapter)
}

/// Response tallies for a scripted interaction log.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionCounts {
    pub accepts: usize,
    pub edits: usize,
    pub rejects: usize,
    pub timeouts: usize,
    /// Direct entries answering human-only queries.
    pub manual: usize,
}

/// Builds a replayable log with exactly the given responses, one event per
/// interaction, each a single-field verb suggestion or query.
pub fn scripted_log(counts: &InteractionCounts, ontology: &Ontology) -> Result<Vec<TraceRecord>, ExecError> {
    let mut exec = Executor::new("scripted", "scripted", Box::new(crate::exec::LogicalClock::default()));
    let mut log = Vec::new();
    let suggested = FieldValue::Verb(VerbId(0));
    let corrected = FieldValue::Verb(VerbId(ontology.num_verbs().saturating_sub(1)));
    let plan = [
        (counts.accepts, Some(AnnotatorResponse::accept(1.0))),
        (
            counts.edits,
            Some(AnnotatorResponse::edit(
                vec![Assignment {
                    field: Field::Verb,
                    value: corrected,
                }],
                2.0,
            )),
        ),
        (counts.rejects, Some(AnnotatorResponse::reject(1.0))),
        (counts.timeouts, Some(AnnotatorResponse::timeout(5.0))),
        (counts.manual, None),
    ];
    let mut idx = 0;
    for (n, response) in plan {
        for _ in 0..n {
            let (state, rec) = exec.create_event(idx, Hand::Left, 0, 30)?;
            log.push(rec);
            let id = exec.step();
            let (xi, response) = match &response {
                Some(r) => (
                    Intervention {
                        targets: vec![Field::Verb],
                        surface: Surface::SuggestionCard,
                        authority: Authority::HumanConfirm,
                        payload: vec![Assignment {
                            field: Field::Verb,
                            value: suggested,
                        }],
                    },
                    r.clone(),
                ),
                None => (
                    Intervention {
                        targets: vec![Field::Verb],
                        surface: Surface::ChoicePrompt,
                        authority: Authority::HumanOnly,
                        payload: Vec::new(),
                    },
                    AnnotatorResponse::manual(
                        vec![Assignment {
                            field: Field::Verb,
                            value: corrected,
                        }],
                        3.0,
                    ),
                ),
            };
            let (_, rec) = exec.execute(idx, &state, id, &xi, Some(response.by(Origin::Human)), ontology)?;
            log.push(rec);
            idx += 1;
        }
    }
    Ok(log)
}
