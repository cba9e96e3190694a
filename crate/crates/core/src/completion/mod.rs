//! Event-local completion: representation, scoring adapter, refinement,
//! exact decoding and feedback re-decoding.

pub mod adapter;
pub mod decode;
pub mod representation;
pub mod scr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adapter::{Example, ReferenceAdapter, ScoreAdapter, ScoreFileAdapter, ScoreRecord, Target};
pub use decode::{decode, joint_score, DecodedHypothesis, FieldProbs};
pub use representation::{assemble_representation, Cues, Dims, EventRepresentation};
pub use scr::{scr_refine, ScrWeights};

use crate::event::{Hand, LockSet, Ontology, Window};
use crate::ingest::StatisticsBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CompletionError {
    #[error("event has no window")]
    MissingWindow,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty training batch")]
    EmptyBatch,
    #[error("locked values admit no valid completion")]
    InfeasibleLocks,
    #[error("no precomputed scores for {hand} hand window {}..={}", window.start, window.end)]
    MissingScores { hand: Hand, window: Window },
    #[error("adapter format: {0}")]
    Format(String),
}

/// Raw adapter outputs for one event window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBundle {
    pub window: Window,
    /// Onset mean as a normalized position in `[0, 1]`.
    pub mu: f64,
    /// Onset variance, strictly positive.
    pub var: f64,
    /// Per-frame onset support, one entry per window frame.
    pub onset: Vec<f64>,
    pub verb: Vec<f64>,
    /// `(no noun, has noun)`.
    pub has_noun: [f64; 2],
    pub noun: Vec<f64>,
}

impl ScoreBundle {
    /// Softmax of every head. The onset distribution is the softmax of the
    /// frame scores times the Gaussian density of each frame's normalized
    /// position, renormalized.
    pub fn probabilities(&self) -> Posterior {
        let shaped: Vec<f64> = log_softmax(&self.onset)
            .iter()
            .zip(self.window.frames())
            .map(|(l, t)| {
                let d = self.window.position(t) - self.mu;
                l - d * d / (2.0 * self.var)
            })
            .collect();
        let hn = softmax(&self.has_noun);
        Posterior {
            window: self.window,
            onset: softmax(&shaped),
            verb: softmax(&self.verb),
            has_noun: [hn[0], hn[1]],
            noun: softmax(&self.noun),
        }
    }
}

/// Per-head probability distributions after refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub window: Window,
    pub onset: Vec<f64>,
    pub verb: Vec<f64>,
    pub has_noun: [f64; 2],
    pub noun: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompletionConfig {
    pub scr: ScrWeights,
    /// Maximum number of feedback re-decoding passes.
    pub feedback_passes: u32,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            scr: ScrWeights::default(),
            feedback_passes: 1,
        }
    }
}

/// Score, refine and decode one representation.
pub fn first_pass(
    repr: &EventRepresentation,
    adapter: &dyn ScoreAdapter,
    locks: &LockSet,
    ontology: &Ontology,
    stats: &StatisticsBundle,
    weights: &ScrWeights,
) -> Result<DecodedHypothesis, CompletionError> {
    let bundle = adapter.forward(repr)?;
    decode(&scr_refine(&bundle, stats, weights), locks, ontology, stats)
}

/// Writes a hypothesis into the representation's state slots.
pub fn inject_hypothesis(repr: &EventRepresentation, hyp: &DecodedHypothesis) -> EventRepresentation {
    let mut next = repr.clone();
    next.set_onset_slot(hyp.t_o);
    next.set_verb_slot(hyp.verb);
    next.set_noun_slot(hyp.noun);
    next
}

/// Re-scores with the previous hypothesis injected into the state slots and
/// keeps the new hypothesis only when it strictly improves the joint score.
/// Runs up to `passes` rounds, stopping at the first non-improving one.
#[allow(clippy::too_many_arguments)]
pub fn feedback_redecode(
    repr: &EventRepresentation,
    adapter: &dyn ScoreAdapter,
    first: DecodedHypothesis,
    locks: &LockSet,
    ontology: &Ontology,
    stats: &StatisticsBundle,
    weights: &ScrWeights,
    passes: u32,
) -> Result<DecodedHypothesis, CompletionError> {
    let mut best = first;
    let mut current = repr.clone();
    for _ in 0..passes {
        let injected = inject_hypothesis(&current, &best);
        let second = first_pass(&injected, adapter, locks, ontology, stats, weights)?;
        if second.joint_score > best.joint_score {
            best = second;
            current = injected;
        } else {
            break;
        }
    }
    Ok(best)
}

/// Full completion: first pass plus feedback re-decoding.
pub fn complete(
    repr: &EventRepresentation,
    adapter: &dyn ScoreAdapter,
    locks: &LockSet,
    ontology: &Ontology,
    stats: &StatisticsBundle,
    config: &CompletionConfig,
) -> Result<DecodedHypothesis, CompletionError> {
    let first = first_pass(repr, adapter, locks, ontology, stats, &config.scr)?;
    feedback_redecode(repr, adapter, first, locks, ontology, stats, &config.scr, config.feedback_passes)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn log_softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        let n = xs.len() as f64;
        return vec![-n.ln(); xs.len()];
    }
    let log_sum = xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    xs.iter().map(|x| (x - m) - log_sum).collect()
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    log_softmax(xs).into_iter().map(f64::exp).collect()
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}
