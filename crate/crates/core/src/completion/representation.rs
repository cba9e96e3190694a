use serde::{Deserialize, Serialize};

use crate::event::{EventState, Field, FieldStatus, Hand, NounValue, Ontology, VerbId, Window};
use crate::hop::OnsetPrior;
use crate::ingest::FeatureTable;

use super::CompletionError;

/// Extra per-frame inputs of the onset head besides the backbone row:
/// normalized position, its square, and band membership.
pub const FRAME_EXTRAS: usize = 3;

const STATUS_SLOTS: usize = 3;

/// Dimensions shared by every representation built for one ontology and
/// feature table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub verbs: usize,
    pub nouns: usize,
    pub features: usize,
}

impl Dims {
    pub fn new(ontology: &Ontology, feature_dim: usize) -> Self {
        Dims {
            verbs: ontology.num_verbs(),
            nouns: ontology.num_nouns(),
            features: feature_dim,
        }
    }

    /// Status one-hots, onset position, verb one-hot, noun one-hot with a
    /// trailing no-noun slot.
    pub fn state_len(&self) -> usize {
        Field::ALL.len() * STATUS_SLOTS + 1 + self.verbs + self.nouns + 1
    }

    fn onset_offset(&self) -> usize {
        Field::ALL.len() * STATUS_SLOTS
    }

    fn verb_offset(&self) -> usize {
        self.onset_offset() + 1
    }

    fn noun_offset(&self) -> usize {
        self.verb_offset() + self.verbs
    }

    /// Length of the event-level input vector, including the trailing bias 1.
    pub fn input_len(&self) -> usize {
        self.state_len() + self.verbs + self.nouns + 2 * self.features + 1
    }

    /// Length of one onset-head frame input (without bias).
    pub fn frame_len(&self) -> usize {
        self.features + FRAME_EXTRAS
    }
}

/// Event-local model input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRepresentation {
    pub dims: Dims,
    pub hand: Hand,
    pub window: Window,
    /// Partial-state encoding.
    pub state: Vec<f64>,
    /// Verb-prior cue, zeros when absent.
    pub verb_cue: Vec<f64>,
    /// Noun-support cue, zeros when absent.
    pub noun_cue: Vec<f64>,
    /// Mean feature over the event window.
    pub global: Vec<f64>,
    /// Mean feature over the onset band, zeros without a prior.
    pub band: Vec<f64>,
    pub band_window: Option<Window>,
    /// Per-frame onset-head inputs, one row per window frame.
    pub frames: Vec<Vec<f64>>,
}

/// Optional cue vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cues {
    pub verb: Option<Vec<f64>>,
    pub noun: Option<Vec<f64>>,
}

fn write_onehot(buf: &mut [f64], index: usize) {
    buf.iter_mut().for_each(|x| *x = 0.0);
    buf[index] = 1.0;
}

impl EventRepresentation {
    /// Event-level input vector `s ⊕ q ⊕ u ⊕ z_global ⊕ z_band ⊕ 1`.
    pub fn input(&self) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dims.input_len());
        x.extend_from_slice(&self.state);
        x.extend_from_slice(&self.verb_cue);
        x.extend_from_slice(&self.noun_cue);
        x.extend_from_slice(&self.global);
        x.extend_from_slice(&self.band);
        x.push(1.0);
        x
    }

    pub fn set_onset_slot(&mut self, t: crate::event::Frame) {
        let i = self.dims.onset_offset();
        self.state[i] = self.window.position(t);
    }

    pub fn set_verb_slot(&mut self, v: VerbId) {
        let (a, b) = (self.dims.verb_offset(), self.dims.noun_offset());
        write_onehot(&mut self.state[a..b], v.0);
    }

    pub fn set_noun_slot(&mut self, noun: NounValue) {
        let a = self.dims.noun_offset();
        let idx = noun.noun().map_or(self.dims.nouns, |n| n.0);
        write_onehot(&mut self.state[a..a + self.dims.nouns + 1], idx);
    }
}

/// Deterministic encoding of an event state, its optional onset prior and
/// the clip features.
pub fn assemble_representation(
    state: &EventState,
    prior: Option<&OnsetPrior>,
    features: &FeatureTable,
    ontology: &Ontology,
    cues: &Cues,
) -> Result<EventRepresentation, CompletionError> {
    let window = state.window().ok_or(CompletionError::MissingWindow)?;
    let dims = Dims::new(ontology, features.dim());
    let mut repr = EventRepresentation {
        dims,
        hand: state.hand(),
        window,
        state: vec![0.0; dims.state_len()],
        verb_cue: vec![0.0; dims.verbs],
        noun_cue: vec![0.0; dims.nouns],
        global: features.mean_over(window.start, window.end),
        band: vec![0.0; dims.features],
        band_window: prior.map(|p| p.band),
        frames: Vec::with_capacity(window.len()),
    };
    for field in Field::ALL {
        let status = match state.status(field) {
            FieldStatus::Empty => 0,
            FieldStatus::Suggested => 1,
            FieldStatus::Confirmed => 2,
        };
        repr.state[field.index() * STATUS_SLOTS + status] = 1.0;
    }
    if let Some(t) = state.t_o() {
        repr.set_onset_slot(t);
    }
    if let Some(v) = state.verb() {
        repr.set_verb_slot(v);
    }
    if let Some(n) = state.noun() {
        repr.set_noun_slot(n);
    }
    for (slot, cue, len) in [
        (&mut repr.verb_cue, &cues.verb, dims.verbs),
        (&mut repr.noun_cue, &cues.noun, dims.nouns),
    ] {
        if let Some(c) = cue {
            if c.len() != len {
                return Err(CompletionError::DimensionMismatch {
                    expected: len,
                    found: c.len(),
                });
            }
            slot.copy_from_slice(c);
        }
    }
    if let Some(p) = prior {
        repr.band = features.mean_over(p.band.start, p.band.end);
    }
    for t in window.frames() {
        let mut row: Vec<f64> = match features.row(t) {
            Some(r) => r.iter().map(|&x| x as f64).collect(),
            None => vec![0.0; dims.features],
        };
        let pos = window.position(t);
        let in_band = prior.is_some_and(|p| p.band.contains(t));
        row.extend_from_slice(&[pos, pos * pos, if in_band { 1.0 } else { 0.0 }]);
        repr.frames.push(row);
    }
    Ok(repr)
}
