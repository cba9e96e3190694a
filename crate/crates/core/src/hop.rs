//! Hand-guided onset prior.
//!
//! Turns a hand-motion trace inside an event window into a frame-level onset
//! band. The pipeline is: coarse semantic prior (verb, phase family,
//! template ratio) → template target → candidate families → score →
//! argmax → reliability → emit or abstain. The prior never writes into an
//! event state; it only conditions feature pooling downstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Frame, Ontology, PhaseFamily, VerbId, Window};
use crate::ingest::HandTrack;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateFamily {
    Boundary,
    Peak,
    Valley,
    Stab,
}

impl CandidateFamily {
    pub const ALL: [CandidateFamily; 4] = [
        CandidateFamily::Boundary,
        CandidateFamily::Peak,
        CandidateFamily::Valley,
        CandidateFamily::Stab,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HopConfig {
    pub w_phase: f64,
    pub w_prox: f64,
    pub w_motion: f64,
    pub w_support: f64,
    /// Proximity bandwidth as a fraction of the window length.
    pub beta: f64,
    pub support_cap: u32,
    /// Half-width of the neighbourhood scanned for candidate support.
    pub support_radius: u32,
    /// Minimum stable-run length in frames.
    pub stab_min_len: u32,
    /// Stability threshold as a fraction of the window's motion range.
    pub stab_eps: f64,
    /// Half-width of the local frame-support neighbourhood.
    pub neighborhood_radius: u32,
    pub band_radius: u32,
    pub min_coverage: f64,
    pub min_handedness: f64,
    pub min_reliability: f64,
    /// Reliability weights on (evidence, best score, margin, local support).
    pub reliability_weights: [f64; 4],
    /// `compat[phase family][candidate family]`.
    pub compat: [[f64; 4]; 4],
}

impl Default for HopConfig {
    fn default() -> Self {
        let off = 0.3;
        HopConfig {
            w_phase: 0.35,
            w_prox: 0.30,
            w_motion: 0.20,
            w_support: 0.15,
            beta: 0.15,
            support_cap: 5,
            support_radius: 3,
            stab_min_len: 3,
            stab_eps: 0.05,
            neighborhood_radius: 2,
            band_radius: 3,
            min_coverage: 0.5,
            min_handedness: 0.7,
            min_reliability: 0.35,
            reliability_weights: [0.25; 4],
            // columns: boundary, peak, valley, stab
            compat: [
                [1.0, off, off, off],
                [off, off, 1.0, off],
                [off, 1.0, 0.8, off],
                [off, off, off, 1.0],
            ],
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopError {
    #[error("no track data inside the window")]
    NoTrackData,
    #[error("no candidates to select from")]
    NoCandidates,
    #[error("window has no feature rows")]
    WindowEmpty,
}

/// Coarse verb hypothesis and its phase family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SemanticPrior {
    pub verb: VerbId,
    pub family: PhaseFamily,
    pub template_ratio: f64,
    pub confidence: f64,
}

impl SemanticPrior {
    /// Argmax verb (lowest id on ties) and its probability.
    pub fn from_verb_probs(probs: &[f64], ontology: &Ontology) -> Self {
        let (best, &confidence) = probs
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (i, p)| if *p > *acc.1 { (i, p) } else { acc });
        let verb = VerbId(best);
        let family = ontology.phase_family(verb);
        SemanticPrior {
            verb,
            family,
            template_ratio: ontology.template_ratio(family),
            confidence: confidence.clamp(0.0, 1.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OnsetCandidate {
    pub t: Frame,
    pub family: CandidateFamily,
    /// Phase-consistent neighbour frames.
    pub support: u32,
    /// Last frame of the stable run, for stabilization candidates.
    pub run_end: Option<Frame>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnsetPrior {
    pub onset: Frame,
    pub band: Window,
    pub reliability: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbstainReason {
    Coverage,
    Handedness,
    Reliability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum HopOutcome {
    Prior(OnsetPrior),
    Abstain { reason: AbstainReason },
}

impl HopOutcome {
    pub fn prior(&self) -> Option<OnsetPrior> {
        match self {
            HopOutcome::Prior(p) => Some(*p),
            HopOutcome::Abstain { .. } => None,
        }
    }
}

/// `t_s + round(τ·(t_e − t_s))`, clamped into the window.
pub fn template_target(window: Window, ratio: f64) -> Frame {
    let offset = (ratio.clamp(0.0, 1.0) * window.span() as f64).round() as Frame;
    window.clamp(window.start + offset)
}

/// Motion statistics of the in-window trace.
struct Trace<'a> {
    frames: &'a [crate::ingest::HandFrameState],
    min: f64,
    range: f64,
    median: f64,
    stab_threshold: f64,
}

impl<'a> Trace<'a> {
    fn new(track: &'a HandTrack, window: Window, cfg: &HopConfig) -> Option<Self> {
        let frames = track.in_window(window.start, window.end);
        if frames.is_empty() {
            return None;
        }
        let mut sorted: Vec<f64> = frames.iter().map(|f| f.motion).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let min = sorted[0];
        let range = sorted[n - 1] - min;
        Some(Trace {
            frames,
            min,
            range,
            median,
            stab_threshold: cfg.stab_eps * range,
        })
    }

    fn motion_at(&self, t: Frame) -> Option<f64> {
        self.frames
            .binary_search_by_key(&t, |f| f.t)
            .ok()
            .map(|i| self.frames[i].motion)
    }

    fn normalized(&self, t: Frame) -> Option<f64> {
        let m = self.motion_at(t)?;
        Some(if self.range > 0.0 { (m - self.min) / self.range } else { 0.0 })
    }

    fn support(&self, t: Frame, family: CandidateFamily, radius: u32) -> u32 {
        let center = self.motion_at(t);
        self.frames
            .iter()
            .filter(|f| f.t != t && f.t.abs_diff(t) <= radius)
            .filter(|f| match (family, center) {
                (CandidateFamily::Boundary, _) => true,
                (_, None) => false,
                (CandidateFamily::Peak, Some(c)) => f.motion < c,
                (CandidateFamily::Valley, Some(c)) => f.motion > c,
                (CandidateFamily::Stab, Some(c)) => (f.motion - c).abs() <= self.stab_threshold,
            })
            .count() as u32
    }
}

/// Boundary, peak, valley and stabilization-run candidates inside the window.
///
/// Peaks and valleys are strict local extrema over neighbouring track
/// frames; valleys must lie strictly below the window median. A stable run
/// is a maximal stretch of consecutive frames whose step-to-step motion
/// change stays within `stab_eps` times the window's motion range.
pub fn generate_candidates(
    track: &HandTrack,
    window: Window,
    cfg: &HopConfig,
) -> Result<Vec<OnsetCandidate>, HopError> {
    let trace = Trace::new(track, window, cfg).ok_or(HopError::NoTrackData)?;
    let frames = trace.frames;
    let mut out = Vec::new();
    let mut push = |t: Frame, family: CandidateFamily, run_end: Option<Frame>| {
        out.push(OnsetCandidate {
            t,
            family,
            support: trace.support(t, family, cfg.support_radius),
            run_end,
        });
    };
    push(window.start, CandidateFamily::Boundary, None);
    if window.end != window.start {
        push(window.end, CandidateFamily::Boundary, None);
    }
    for i in 1..frames.len().saturating_sub(1) {
        let (prev, here, next) = (frames[i - 1].motion, frames[i].motion, frames[i + 1].motion);
        if here > prev && here > next {
            push(frames[i].t, CandidateFamily::Peak, None);
        }
        if here < prev && here < next && here < trace.median {
            push(frames[i].t, CandidateFamily::Valley, None);
        }
    }
    let mut i = 0;
    while i < frames.len() {
        let mut j = i;
        while j + 1 < frames.len()
            && frames[j + 1].t == frames[j].t + 1
            && (frames[j + 1].motion - frames[j].motion).abs() <= trace.stab_threshold
        {
            j += 1;
        }
        if (j - i + 1) as u32 >= cfg.stab_min_len {
            push(frames[i].t, CandidateFamily::Stab, Some(frames[j].t));
        }
        i = j + 1;
    }
    out.sort_by_key(|c| (c.t, c.family));
    Ok(out)
}

fn motion_term(trace: &Trace<'_>, c: &OnsetCandidate) -> f64 {
    match c.family {
        CandidateFamily::Boundary => 0.5,
        CandidateFamily::Peak => trace.normalized(c.t).unwrap_or(0.5),
        CandidateFamily::Valley | CandidateFamily::Stab => 1.0 - trace.normalized(c.t).unwrap_or(0.5),
    }
}

/// Candidate score: phase compatibility, proximity to the template target,
/// local motion evidence and capped temporal support, convexly weighted.
pub fn score_candidate(
    c: &OnsetCandidate,
    prior: &SemanticPrior,
    target: Frame,
    track: &HandTrack,
    window: Window,
    cfg: &HopConfig,
) -> f64 {
    let motion = Trace::new(track, window, cfg)
        .map(|trace| motion_term(&trace, c))
        .unwrap_or(0.5);
    score_with_motion(c, prior, target, window, motion, cfg)
}

fn score_with_motion(
    c: &OnsetCandidate,
    prior: &SemanticPrior,
    target: Frame,
    window: Window,
    motion: f64,
    cfg: &HopConfig,
) -> f64 {
    let compat = cfg.compat[prior.family.index()][c.family.index()];
    let bandwidth = cfg.beta * window.len() as f64;
    let d = c.t as f64 - target as f64;
    let proximity = (-(d * d) / (2.0 * bandwidth * bandwidth)).exp();
    let cap = cfg.support_cap.max(1);
    let support = c.support.min(cap) as f64 / cap as f64;
    cfg.w_phase * compat + cfg.w_prox * proximity + cfg.w_motion * motion + cfg.w_support * support
}

/// Scores of every candidate, in input order.
pub fn score_all(
    candidates: &[OnsetCandidate],
    prior: &SemanticPrior,
    target: Frame,
    track: &HandTrack,
    window: Window,
    cfg: &HopConfig,
) -> Vec<f64> {
    let trace = Trace::new(track, window, cfg);
    candidates
        .iter()
        .map(|c| {
            let motion = trace.as_ref().map(|t| motion_term(t, c)).unwrap_or(0.5);
            score_with_motion(c, prior, target, window, motion, cfg)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub candidate: OnsetCandidate,
    pub score: f64,
    /// Best score minus the runner-up; 1.0 when there is no runner-up.
    pub margin: f64,
    /// Fraction of frames near the selected onset that carry track data.
    pub local_support: f64,
}

/// Argmax of the candidate scores. Ties go to the earlier frame, then to
/// the family order boundary < peak < valley < stab.
pub fn select_onset(
    candidates: &[OnsetCandidate],
    prior: &SemanticPrior,
    target: Frame,
    track: &HandTrack,
    window: Window,
    cfg: &HopConfig,
) -> Result<Selection, HopError> {
    if candidates.is_empty() {
        return Err(HopError::NoCandidates);
    }
    let scores = score_all(candidates, prior, target, track, window, cfg);
    let mut best = 0;
    for i in 1..candidates.len() {
        let (a, b) = (&candidates[i], &candidates[best]);
        if scores[i] > scores[best] || (scores[i] == scores[best] && (a.t, a.family) < (b.t, b.family)) {
            best = i;
        }
    }
    let runner_up = scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &s)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    let margin = if runner_up.is_finite() {
        (scores[best] - runner_up).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let chosen = candidates[best];
    let radius = cfg.neighborhood_radius;
    let lo = window.clamp(chosen.t.saturating_sub(radius));
    let hi = window.clamp(chosen.t.saturating_add(radius));
    let have = track.in_window(lo, hi).len() as f64;
    Ok(Selection {
        candidate: chosen,
        score: scores[best],
        margin,
        local_support: have / (hi - lo + 1) as f64,
    })
}

/// Convex combination of evidence, best score, margin and local support,
/// clamped to `[0, 1]`.
pub fn reliability(evidence: f64, best_score: f64, margin: f64, local_support: f64, weights: [f64; 4]) -> f64 {
    let [a, b, c, d] = weights;
    (a * evidence + b * best_score + c * margin + d * local_support).clamp(0.0, 1.0)
}

/// Mean motion of the selected hand over the sum of both hands' means; 0.5
/// when both are zero.
pub fn motion_dominance(track: &HandTrack, other: Option<&HandTrack>, window: Window) -> f64 {
    let own = track.mean_motion(window.start, window.end);
    let rest = other.map_or(0.0, |o| o.mean_motion(window.start, window.end));
    if own + rest == 0.0 {
        0.5
    } else {
        own / (own + rest)
    }
}

/// Inputs gathered before any candidate is scored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopEvidence {
    pub coverage: f64,
    pub handedness: f64,
    pub dominance: f64,
    pub semantic_confidence: f64,
}

impl HopEvidence {
    pub fn gather(track: &HandTrack, other: Option<&HandTrack>, window: Window, prior: &SemanticPrior) -> Self {
        HopEvidence {
            coverage: track.coverage(window.start, window.end),
            handedness: track.handedness_purity(window.start, window.end),
            dominance: motion_dominance(track, other, window),
            semantic_confidence: prior.confidence,
        }
    }

    pub fn aggregate(&self) -> f64 {
        (self.coverage + self.dominance + self.semantic_confidence + self.handedness) / 4.0
    }
}

/// Detailed result of one HOP run, including the reliability that decided
/// abstention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopReport {
    pub evidence: HopEvidence,
    pub target: Frame,
    pub selection: Option<Selection>,
    pub reliability: Option<f64>,
    pub outcome: HopOutcome,
}

pub fn hand_onset_prior(
    track: &HandTrack,
    other: Option<&HandTrack>,
    window: Window,
    prior: &SemanticPrior,
    cfg: &HopConfig,
) -> HopReport {
    let evidence = HopEvidence::gather(track, other, window, prior);
    let target = template_target(window, prior.template_ratio);
    let abstain = |reason, selection, reliability| HopReport {
        evidence,
        target,
        selection,
        reliability,
        outcome: HopOutcome::Abstain { reason },
    };
    if evidence.coverage < cfg.min_coverage {
        return abstain(AbstainReason::Coverage, None, None);
    }
    if evidence.handedness < cfg.min_handedness {
        return abstain(AbstainReason::Handedness, None, None);
    }
    let selection = match generate_candidates(track, window, cfg)
        .and_then(|cands| select_onset(&cands, prior, target, track, window, cfg))
    {
        Ok(s) => s,
        Err(_) => return abstain(AbstainReason::Coverage, None, None),
    };
    let kappa = reliability(
        evidence.aggregate(),
        selection.score,
        selection.margin,
        selection.local_support,
        cfg.reliability_weights,
    );
    if kappa < cfg.min_reliability {
        return abstain(AbstainReason::Reliability, Some(selection), Some(kappa));
    }
    let onset = selection.candidate.t;
    let mut lo = window.clamp(onset.saturating_sub(cfg.band_radius));
    let mut hi = window.clamp(onset.saturating_add(cfg.band_radius));
    if let Some(run_end) = selection.candidate.run_end {
        hi = hi.max(window.clamp(run_end));
        lo = lo.min(onset);
    }
    HopReport {
        evidence,
        target,
        selection: Some(selection),
        reliability: Some(kappa),
        outcome: HopOutcome::Prior(OnsetPrior {
            onset,
            band: Window { start: lo, end: hi },
            reliability: kappa,
        }),
    }
}
