//! Statistics-guided refinement: convex blending of adapter distributions
//! with corpus priors, in the order noun existence, noun, verb, onset.

use serde::{Deserialize, Serialize};

use super::{argmax, Posterior, ScoreBundle};
use crate::event::{NounId, VerbId, Window};
use crate::ingest::{onset_bin, StatisticsBundle};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScrWeights {
    pub has_noun: f64,
    pub noun: f64,
    pub verb: f64,
    pub onset: f64,
}

impl Default for ScrWeights {
    fn default() -> Self {
        ScrWeights {
            has_noun: 0.3,
            noun: 0.3,
            verb: 0.3,
            onset: 0.3,
        }
    }
}

impl ScrWeights {
    pub const ZERO: ScrWeights = ScrWeights {
        has_noun: 0.0,
        noun: 0.0,
        verb: 0.0,
        onset: 0.0,
    };
}

fn blend(w: f64, model: &[f64], prior: &[f64]) -> Vec<f64> {
    model.iter().zip(prior).map(|(m, p)| (1.0 - w) * m + w * p).collect()
}

fn normalized(xs: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let v: Vec<f64> = xs.into_iter().collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.into_iter().map(|x| x / s).collect()
    } else {
        let n = v.len().max(1) as f64;
        vec![1.0 / n; v.len()]
    }
}

/// Verb onset histogram spread over the window's frames so that each bin
/// keeps its mass, split evenly across the frames that fall into it.
pub fn resample_onset_prior(hist: &[f64], window: Window) -> Vec<f64> {
    let bins = hist.len();
    let bin_of: Vec<usize> = window
        .frames()
        .map(|t| onset_bin(window.start, t, window.end, bins))
        .collect();
    let mut counts = vec![0usize; bins];
    for &b in &bin_of {
        counts[b] += 1;
    }
    normalized(bin_of.iter().map(|&b| hist[b] / counts[b] as f64))
}

/// Prior over verbs induced by the co-occurrence column of `noun`.
pub fn verb_prior_from_noun(stats: &StatisticsBundle, noun: NounId) -> Vec<f64> {
    normalized((0..stats.num_verbs()).map(|v| stats.cooccurrence(VerbId(v), noun)))
}

pub fn scr_refine(bundle: &ScoreBundle, stats: &StatisticsBundle, weights: &ScrWeights) -> Posterior {
    let base = bundle.probabilities();
    let top_verb = VerbId(argmax(&base.verb));

    let r = stats.no_noun_rate(top_verb);
    let has_noun = blend(weights.has_noun, &base.has_noun, &[r, 1.0 - r]);
    let noun_prior = normalized(stats.cooccurrence_row(top_verb).iter().copied());
    let noun = blend(weights.noun, &base.noun, &noun_prior);

    let b = has_noun[1];
    let uniform = 1.0 / stats.num_verbs() as f64;
    let verb_prior: Vec<f64> = if noun.is_empty() {
        vec![uniform; stats.num_verbs()]
    } else {
        let col = verb_prior_from_noun(stats, NounId(argmax(&noun)));
        col.iter().map(|c| b * c + (1.0 - b) * uniform).collect()
    };
    let verb = blend(weights.verb, &base.verb, &verb_prior);

    let refined_top = VerbId(argmax(&verb));
    let onset_prior = resample_onset_prior(stats.verb_onset_prior(refined_top), bundle.window);
    let onset = blend(weights.onset, &base.onset, &onset_prior);

    Posterior {
        window: bundle.window,
        onset,
        verb,
        has_noun: [has_noun[0], has_noun[1]],
        noun,
    }
}
