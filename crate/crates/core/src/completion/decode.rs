//! Exact lock-constrained decoding of `(t_o, v, b, n)`.

use serde::{Deserialize, Serialize};

use super::{CompletionError, Posterior};
use crate::event::{Frame, LockSet, NounValue, Ontology, VerbId};
use crate::ingest::{onset_bin, StatisticsBundle};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldProbs {
    pub onset: f64,
    pub verb: f64,
    pub has_noun: f64,
    /// `p_n(n)` when the hypothesis carries a noun.
    pub noun: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodedHypothesis {
    pub t_o: Frame,
    pub verb: VerbId,
    pub noun: NounValue,
    pub joint_score: f64,
    pub probs: FieldProbs,
    pub posterior: Posterior,
}

impl DecodedHypothesis {
    pub fn has_noun(&self) -> bool {
        self.noun.has_noun()
    }
}

fn temporal_term(post: &Posterior, stats: &StatisticsBundle, v: VerbId, t: Frame) -> f64 {
    let w = post.window;
    let bin = onset_bin(w.start, t, w.end, stats.bins());
    post.onset[(t - w.start) as usize].ln() + stats.verb_onset_prior(v)[bin].ln()
}

fn noun_term(post: &Posterior, stats: &StatisticsBundle, v: VerbId, noun: NounValue) -> f64 {
    let sem = match noun {
        NounValue::NoNoun => post.has_noun[0].ln(),
        NounValue::Noun(n) => post.has_noun[1].ln() + post.noun[n.0].ln(),
    };
    sem + stats.slot_rate(v, noun).ln()
}

/// Joint score of one assignment: model log-probabilities plus the
/// structured onset–verb–noun compatibility term.
pub fn joint_score(post: &Posterior, stats: &StatisticsBundle, t_o: Frame, v: VerbId, noun: NounValue) -> f64 {
    post.verb[v.0].ln() + temporal_term(post, stats, v, t_o) + noun_term(post, stats, v, noun)
}

/// Noun options in canonical order: no noun first, then nouns by id.
pub fn noun_options(ontology: &Ontology) -> impl Iterator<Item = NounValue> + '_ {
    std::iter::once(NounValue::NoNoun).chain(ontology.noun_ids().map(NounValue::Noun))
}

fn keep_best<T: Copy>(best: &mut Option<(T, f64)>, item: T, score: f64) {
    match best {
        Some((_, s)) if !(score > *s) => {}
        _ => *best = Some((item, score)),
    }
}

/// Exact argmax of the joint score over the feasible set.
///
/// Locked variables are clamped and ontology-invalid `(v, noun)` pairs are
/// excluded. Because the score separates into a verb term, an onset term
/// that depends on the verb, and a noun term that depends on the verb, the
/// search runs in `O(|V|·(W + |N|))`. Ties resolve to the lexicographically
/// smallest `(v, t_o, b, n)`.
pub fn decode(
    post: &Posterior,
    locks: &LockSet,
    ontology: &Ontology,
    stats: &StatisticsBundle,
) -> Result<DecodedHypothesis, CompletionError> {
    let window = post.window;
    if let Some(t) = locks.t_o {
        if !window.contains(t) {
            return Err(CompletionError::InfeasibleLocks);
        }
    }
    let frames: Vec<Frame> = match locks.t_o {
        Some(t) => vec![t],
        None => window.frames().collect(),
    };
    let nouns: Vec<NounValue> = noun_options(ontology)
        .filter(|n| locks.has_noun.is_none_or(|b| b == n.has_noun()))
        .filter(|n| locks.noun.is_none_or(|m| n.noun() == Some(m)))
        .collect();

    let mut best: Option<((VerbId, Frame, NounValue), f64)> = None;
    for v in ontology.verb_ids() {
        if locks.verb.is_some_and(|lv| lv != v) {
            continue;
        }
        let mut t_best = None;
        for &t in &frames {
            keep_best(&mut t_best, t, temporal_term(post, stats, v, t));
        }
        let mut n_best = None;
        for &n in nouns.iter().filter(|&&n| ontology.admits(v, n)) {
            keep_best(&mut n_best, n, noun_term(post, stats, v, n));
        }
        if let (Some((t, _)), Some((n, _))) = (t_best, n_best) {
            keep_best(&mut best, (v, t, n), joint_score(post, stats, t, v, n));
        }
    }
    let ((verb, t_o, noun), joint_score) = best.ok_or(CompletionError::InfeasibleLocks)?;
    Ok(DecodedHypothesis {
        t_o,
        verb,
        noun,
        joint_score,
        probs: FieldProbs {
            onset: post.onset[(t_o - window.start) as usize],
            verb: post.verb[verb.0],
            has_noun: post.has_noun[noun.has_noun() as usize],
            noun: noun.noun().map(|n| post.noun[n.0]),
        },
        posterior: post.clone(),
    })
}
